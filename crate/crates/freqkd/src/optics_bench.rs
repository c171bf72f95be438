//! The Fig.-1 stations assembled from engine primitives: Bob's
//! source/AOM/interferometer kit, Alice's tap/filter/mirror kit, and
//! the exact round-trip outcome distribution for every configuration.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    attack_branches, attack_state, probe_alice, AttackLeg, EveLogEntry, EveStrategy,
};
use crate::error::{Error, Result};
use crate::mode_engine::{
    attenuate_map, coupler_map, distribution, pbs_route_map, projector_map, relabel_map,
    shift_time_map, tap_map, ClickOutcome, DetectorModel, DetectorTarget, FrequencyBin, LinearMap,
    ModeLabel, OutcomeDistribution, PathId, Polarization, PureState,
};
use crate::util::poisson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum SourceModel {
    SinglePhoton,
    #[serde(rename_all = "camelCase")]
    WeakCoherent {
        mean: f64,
    },
}

impl SourceModel {
    pub fn mean_photons(&self) -> f64 {
        match *self {
            SourceModel::SinglePhoton => 1.0,
            SourceModel::WeakCoherent { mean } => mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BobKitConfig {
    pub aom_phase: f64,
    pub arm_delay_bins: u64,
    pub source: SourceModel,
    pub det_d1: DetectorModel,
    pub det_d2: DetectorModel,
}

impl Default for BobKitConfig {
    fn default() -> Self {
        Self {
            aom_phase: 0.0,
            arm_delay_bins: 1,
            source: SourceModel::SinglePhoton,
            det_d1: DetectorModel::default(),
            det_d2: DetectorModel::default(),
        }
    }
}

impl BobKitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arm_delay_bins < 1 {
            return Err(Error::InvalidParameter("armDelayBins must be >= 1".into()));
        }
        if let SourceModel::WeakCoherent { mean } = self.source {
            if mean <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "weak coherent mean {mean} must be > 0"
                )));
            }
        }
        self.det_d1.validate()?;
        self.det_d2.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AliceKitConfig {
    pub filter_amp_transmittance: f64,
    pub tap_ratio: f64,
    pub attenuator_enabled: bool,
    pub det_d3: DetectorModel,
}

impl Default for AliceKitConfig {
    fn default() -> Self {
        Self {
            filter_amp_transmittance: 1.0,
            tap_ratio: 0.0,
            attenuator_enabled: false,
            det_d3: DetectorModel::default(),
        }
    }
}

impl AliceKitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.filter_amp_transmittance > 0.0 && self.filter_amp_transmittance <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "filterAmpTransmittance {} outside (0,1]",
                self.filter_amp_transmittance
            )));
        }
        if !(0.0..1.0).contains(&self.tap_ratio) {
            return Err(Error::InvalidParameter(format!(
                "tapRatio {} outside [0,1)",
                self.tap_ratio
            )));
        }
        self.det_d3.validate()
    }

    /// Amplitude factor the fast attenuator applies on no-filter rounds
    /// so their reflected intensity matches filtered rounds exactly:
    /// filtered rounds reflect (1/2)·t_F⁴ of the incident intensity (one
    /// of the two equal components absorbed, t_F amplitude per pass).
    pub fn attenuator_amp_factor(&self) -> f64 {
        self.filter_amp_transmittance.powi(2) * std::f64::consts::FRAC_1_SQRT_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ChannelConfig {
    pub amp_transmittance: f64,
    pub one_way_delay_bins: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            amp_transmittance: 1.0,
            one_way_delay_bins: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_transmittance > 0.0 && self.amp_transmittance <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "channel ampTransmittance {} outside (0,1]",
                self.amp_transmittance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AliceChoice {
    NoFilter,
    FilterOmega,
    FilterOmegaDelta,
}

impl AliceChoice {
    pub const ALL: [AliceChoice; 3] = [
        AliceChoice::NoFilter,
        AliceChoice::FilterOmega,
        AliceChoice::FilterOmegaDelta,
    ];

    pub fn intended_bit(&self) -> Option<u8> {
        match self {
            AliceChoice::NoFilter => None,
            AliceChoice::FilterOmega => Some(0),
            AliceChoice::FilterOmegaDelta => Some(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BobSetting {
    AomOn,
    AomOff,
}

impl BobSetting {
    pub const ALL: [BobSetting; 2] = [BobSetting::AomOn, BobSetting::AomOff];
}

/// One pulse's full classical record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub index: u64,
    pub choice: AliceChoice,
    pub setting: BobSetting,
    pub click: ClickOutcome,
    pub d3_photons: u64,
    pub emit_bin: u64,
    pub return_bin: u64,
    pub leaf: Option<u32>,
    pub intended_bit: Option<u8>,
}

fn filter_map(choice: AliceChoice, amp_transmittance: f64) -> LinearMap {
    match choice {
        AliceChoice::NoFilter => LinearMap::identity(),
        AliceChoice::FilterOmega => projector_map(FrequencyBin::Base, amp_transmittance),
        AliceChoice::FilterOmegaDelta => projector_map(FrequencyBin::Shifted, amp_transmittance),
    }
}

/// One channel traversal: attenuation plus propagation delay.
fn channel_map(ch: &ChannelConfig) -> LinearMap {
    LinearMap::compose(
        &shift_time_map(PathId::Channel, ch.one_way_delay_bins),
        &attenuate_map(PathId::Channel, ch.amp_transmittance),
    )
}

/// Emission through Bob's AOM (always driven on the outgoing pass),
/// the delay line and the PBS merge, then the channel to Alice. Output:
/// 1/√2 on (ω, t=delay, H) and 1/√2 on (ω+δ, t=delay+τ, V), scaled by
/// the channel transmittance.
pub fn forward_pass(bob: &BobKitConfig, ch: &ChannelConfig) -> PureState {
    let start = PureState::single_mode(ModeLabel::new(
        FrequencyBin::Base,
        PathId::ShortArm,
        0,
        Polarization::H,
    ));
    let aom = coupler_map(
        PathId::ShortArm,
        PathId::LongArm,
        PathId::ShortArm,
        PathId::LongArm,
        bob.aom_phase,
    );
    let delay = shift_time_map(PathId::LongArm, bob.arm_delay_bins);
    let merge_short = relabel_map(PathId::ShortArm, PathId::Channel, false);
    let merge_long = relabel_map(PathId::LongArm, PathId::Channel, true);
    let mut s = aom.apply(&start);
    s = delay.apply(&s);
    s = merge_short.apply(&s);
    s = merge_long.apply(&s);
    channel_map(ch).apply(&s)
}

/// Alice's station: tap → filter → Faraday mirror → filter → attenuator
/// → tap. Returns the reflected channel state and the photon mass
/// diverted onto the monitor across both tap passes.
pub fn alice_transform(
    s: &PureState,
    choice: AliceChoice,
    alice: &AliceKitConfig,
) -> (PureState, f64) {
    let tap = tap_map(alice.tap_ratio);
    let filter = filter_map(choice, alice.filter_amp_transmittance);
    let mirror = relabel_map(PathId::Channel, PathId::Channel, true);

    let mut state = tap.apply(s);
    let mut d3_mass = state.drain_path(PathId::MonitorPort);
    state = filter.apply(&state);
    state = mirror.apply(&state);
    state = filter.apply(&state);
    if alice.attenuator_enabled && choice == AliceChoice::NoFilter {
        state = attenuate_map(PathId::Channel, alice.attenuator_amp_factor()).apply(&state);
    }
    state = tap.apply(&state);
    d3_mass += state.drain_path(PathId::MonitorPort);
    (state, d3_mass)
}

/// PBS routing plus the AOM stage; asserts the path-indistinguishability
/// requirement (both arms in the same time bin) before recombining.
fn return_detector_state(
    s: &PureState,
    bob: &BobKitConfig,
    setting: BobSetting,
    phase_offset: f64,
) -> Result<PureState> {
    let routed = pbs_route_map(bob.arm_delay_bins).apply(s);
    let long_bins: Vec<u64> = routed
        .modes()
        .filter(|(l, _)| l.path == PathId::LongArm)
        .map(|(l, _)| l.time)
        .collect();
    let short_bins: Vec<u64> = routed
        .modes()
        .filter(|(l, _)| l.path == PathId::ShortArm)
        .map(|(l, _)| l.time)
        .collect();
    if let (Some(&lb), Some(&sb)) = (long_bins.first(), short_bins.first()) {
        if long_bins.iter().any(|&b| b != lb) || short_bins.iter().any(|&b| b != sb) || lb != sb {
            return Err(Error::TimeMisaligned {
                long_bin: lb,
                short_bin: sb,
            });
        }
    }
    let stage = match setting {
        BobSetting::AomOn => coupler_map(
            PathId::LongArm,
            PathId::ShortArm,
            PathId::Det1Port,
            PathId::Det2Port,
            bob.aom_phase + phase_offset,
        ),
        BobSetting::AomOff => LinearMap::compose(
            &relabel_map(PathId::ShortArm, PathId::Det2Port, false),
            &relabel_map(PathId::LongArm, PathId::Det1Port, false),
        ),
    };
    Ok(stage.apply(&routed))
}

fn detector_assignment() -> BTreeMap<PathId, DetectorTarget> {
    BTreeMap::from([
        (PathId::Det1Port, DetectorTarget::D1),
        (PathId::Det2Port, DetectorTarget::D2),
        (PathId::MonitorPort, DetectorTarget::D3),
        (PathId::EvePort, DetectorTarget::None),
        (PathId::Lost, DetectorTarget::None),
    ])
}

/// Exact detection distribution for a state returning on the channel.
pub fn return_pass(
    s: &PureState,
    bob: &BobKitConfig,
    setting: BobSetting,
) -> Result<OutcomeDistribution> {
    let det_state = return_detector_state(s, bob, setting, 0.0)?;
    distribution(&det_state, &detector_assignment(), &bob.det_d1, &bob.det_d2)
}

/// Exact per-photon outcome distribution for the full round trip,
/// averaged over the eavesdropper's measurement branches, with detector
/// imperfections applied once on the averaged masses. d3_expected is
/// scaled by the source's mean photon number.
pub fn round_trip_distribution(
    choice: AliceChoice,
    setting: BobSetting,
    bob: &BobKitConfig,
    alice: &AliceKitConfig,
    ch: &ChannelConfig,
    eve: &EveStrategy,
) -> Result<OutcomeDistribution> {
    round_trip_distribution_with_offset(choice, setting, bob, alice, ch, eve, 0.0)
}

/// Internal variant exposing a return-coupler phase perturbation; the
/// self-test uses a π offset to prove the canonical-table check has
/// teeth.
pub fn round_trip_distribution_with_offset(
    choice: AliceChoice,
    setting: BobSetting,
    bob: &BobKitConfig,
    alice: &AliceKitConfig,
    ch: &ChannelConfig,
    eve: &EveStrategy,
    return_phase_offset: f64,
) -> Result<OutcomeDistribution> {
    let fwd = forward_pass(bob, ch);
    let back_channel = channel_map(ch);
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    let mut d3_mass = 0.0;
    for bf in attack_branches(&fwd, eve, AttackLeg::Forward) {
        let (reflected, d3_b) = alice_transform(&bf.state, choice, alice);
        d3_mass += bf.probability * d3_b;
        let back = back_channel.apply(&reflected);
        for br in attack_branches(&back, eve, AttackLeg::Return) {
            let det_state = return_detector_state(&br.state, bob, setting, return_phase_offset)?;
            let w = bf.probability * br.probability;
            m1 += w * det_state.path_mass(PathId::Det1Port);
            m2 += w * det_state.path_mass(PathId::Det2Port);
        }
    }
    let q1 = bob.det_d1.efficiency * m1;
    let q2 = bob.det_d2.efficiency * m2;
    let q_none = (1.0 - q1 - q2).max(0.0);
    let (d1, d2) = (bob.det_d1.dark, bob.det_d2.dark);
    let p_d1 = q1 * (1.0 - d2) + q_none * d1 * (1.0 - d2);
    let p_d2 = q2 * (1.0 - d1) + q_none * d2 * (1.0 - d1);
    let p_double = q1 * d2 + q2 * d1 + q_none * d1 * d2;
    let dist = OutcomeDistribution {
        p_d1,
        p_d2,
        p_none: (1.0 - p_d1 - p_d2).max(0.0),
        p_double,
        d3_expected: bob.source.mean_photons() * d3_mass,
    };
    dist.check()?;
    Ok(dist)
}

/// Mean photon number of the pulse reflected back into the channel from
/// Alice's station, as an in-line intensity eavesdropper would see it.
pub fn reflected_mean_photons(
    choice: AliceChoice,
    bob: &BobKitConfig,
    alice: &AliceKitConfig,
    ch: &ChannelConfig,
) -> f64 {
    let fwd = forward_pass(bob, ch);
    let (reflected, _) = alice_transform(&fwd, choice, alice);
    bob.source.mean_photons() * reflected.norm_sqr()
}

/// Expected D3 count per pulse for one choice, including D3 efficiency
/// and dark counts (the bright-probe excess is not included).
pub fn expected_d3_count(
    choice: AliceChoice,
    bob: &BobKitConfig,
    alice: &AliceKitConfig,
    ch: &ChannelConfig,
) -> f64 {
    let fwd = forward_pass(bob, ch);
    let (_, d3_mass) = alice_transform(&fwd, choice, alice);
    bob.source.mean_photons() * d3_mass * alice.det_d3.efficiency + alice.det_d3.dark
}

/// Simulate one pulse: photon-number draw, per-photon propagation with
/// sampled eavesdropper branches, threshold detection with dark counts,
/// and the bright-probe monitor excess when that strategy is active.
#[allow(clippy::too_many_arguments)]
pub fn sample_pulse(
    index: u64,
    choice: AliceChoice,
    setting: BobSetting,
    bob: &BobKitConfig,
    alice: &AliceKitConfig,
    ch: &ChannelConfig,
    eve: &EveStrategy,
    rng: &mut impl Rng,
) -> Result<(PulseRecord, EveLogEntry)> {
    let mut log = EveLogEntry::default();
    let n_photons = match bob.source {
        SourceModel::SinglePhoton => 1,
        SourceModel::WeakCoherent { mean } => poisson(mean, rng),
    };
    let fwd = forward_pass(bob, ch);
    let back_channel = channel_map(ch);
    let mut c1 = 0u64;
    let mut c2 = 0u64;
    let mut c3 = 0u64;
    for _ in 0..n_photons {
        let s = attack_state(&fwd, eve, AttackLeg::Forward, rng, &mut log);
        let (reflected, d3_mass) = alice_transform(&s, choice, alice);
        let back = back_channel.apply(&reflected);
        let s2 = attack_state(&back, eve, AttackLeg::Return, rng, &mut log);
        let det_state = return_detector_state(&s2, bob, setting, 0.0)?;
        let p1 = bob.det_d1.efficiency * det_state.path_mass(PathId::Det1Port);
        let p2 = bob.det_d2.efficiency * det_state.path_mass(PathId::Det2Port);
        let p3 = alice.det_d3.efficiency * d3_mass;
        let u: f64 = rng.random();
        if u < p1 {
            c1 += 1;
        } else if u < p1 + p2 {
            c2 += 1;
        } else if u < p1 + p2 + p3 {
            c3 += 1;
        }
    }
    let fired1 = c1 > 0 || rng.random::<f64>() < bob.det_d1.dark;
    let fired2 = c2 > 0 || rng.random::<f64>() < bob.det_d2.dark;
    let click = match (fired1, fired2) {
        (true, true) => ClickOutcome::Double,
        (true, false) => ClickOutcome::D1,
        (false, true) => ClickOutcome::D2,
        (false, false) => ClickOutcome::None,
    };
    let mut d3_photons = c3 + u64::from(rng.random::<f64>() < alice.det_d3.dark);
    if let EveStrategy::StrongProbe { mean_photons } = *eve {
        let probe = probe_alice(mean_photons, choice, alice, rng);
        log.attacked = true;
        log.probe_readout = Some(probe.readout);
        d3_photons += probe.d3_extra_photons;
    }
    let emit_bin = index;
    let return_bin = emit_bin + 2 * ch.one_way_delay_bins + bob.arm_delay_bins;
    Ok((
        PulseRecord {
            index,
            choice,
            setting,
            click,
            d3_photons,
            emit_bin,
            return_bin,
            leaf: None,
            intended_bit: choice.intended_bit(),
        },
        log,
    ))
}

/// The six (choice, setting) probabilities with ideal parameters.
pub fn canonical_table() -> [(AliceChoice, BobSetting, [f64; 3]); 6] {
    [
        (AliceChoice::NoFilter, BobSetting::AomOn, [1.0, 0.0, 0.0]),
        (AliceChoice::NoFilter, BobSetting::AomOff, [0.5, 0.5, 0.0]),
        (
            AliceChoice::FilterOmega,
            BobSetting::AomOn,
            [0.25, 0.25, 0.5],
        ),
        (
            AliceChoice::FilterOmega,
            BobSetting::AomOff,
            [0.5, 0.0, 0.5],
        ),
        (
            AliceChoice::FilterOmegaDelta,
            BobSetting::AomOn,
            [0.25, 0.25, 0.5],
        ),
        (
            AliceChoice::FilterOmegaDelta,
            BobSetting::AomOff,
            [0.0, 0.5, 0.5],
        ),
    ]
}
