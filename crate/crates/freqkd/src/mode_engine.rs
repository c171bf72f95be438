//! Discrete-mode single-photon states and linear-optical transfer maps.
//!
//! A pulse is a pure state over a small set of discrete optical modes,
//! each labelled by frequency bin, spatial path, integer time bin (in
//! units of the interferometer arm delay) and polarization. Optical
//! components are sparse linear maps over these labels; detection is an
//! exact Born-rule readout followed by detector imperfections.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitude-exact comparisons throughout the engine use this slack.
pub const AMP_TOL: f64 = 1e-12;

/// Amplitudes below this magnitude are pruned after a map application.
const PRUNE_TOL: f64 = 1e-15;

/// Upper bound on simultaneously occupied modes per pulse.
pub const MAX_MODES: usize = 16;

/// The two optical frequencies the system is closed over: ω and ω + δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrequencyBin {
    Base,
    Shifted,
}

impl FrequencyBin {
    pub fn toggled(self) -> Self {
        match self {
            FrequencyBin::Base => FrequencyBin::Shifted,
            FrequencyBin::Shifted => FrequencyBin::Base,
        }
    }
}

/// Closed set of spatial paths a photon can occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PathId {
    Channel,
    ShortArm,
    LongArm,
    Det1Port,
    Det2Port,
    MonitorPort,
    EvePort,
    Lost,
}

impl PathId {
    pub const ALL: [PathId; 8] = [
        PathId::Channel,
        PathId::ShortArm,
        PathId::LongArm,
        PathId::Det1Port,
        PathId::Det2Port,
        PathId::MonitorPort,
        PathId::EvePort,
        PathId::Lost,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn flipped(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

/// Full label of one optical mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub freq: FrequencyBin,
    pub path: PathId,
    pub time: u64,
    pub pol: Polarization,
}

impl ModeLabel {
    pub fn new(freq: FrequencyBin, path: PathId, time: u64, pol: Polarization) -> Self {
        Self {
            freq,
            path,
            time,
            pol,
        }
    }

    fn class(&self) -> ModeClass {
        ModeClass {
            freq: self.freq,
            path: self.path,
            pol: self.pol,
        }
    }
}

/// Time-free part of a mode label; transfer maps are keyed on this and
/// carry an explicit time-bin shift per output term, so a map stays
/// finite while acting uniformly over all time bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeClass {
    pub freq: FrequencyBin,
    pub path: PathId,
    pub pol: Polarization,
}

/// Single-photon pure state: complex amplitude per occupied mode.
/// The norm deficit 1 - Σ|a|² is the photon-loss probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: BTreeMap<ModeLabel, Complex64>,
}

impl PureState {
    pub fn vacuum() -> Self {
        Self {
            amplitudes: BTreeMap::new(),
        }
    }

    /// State with amplitude 1 on a single mode.
    pub fn single_mode(label: ModeLabel) -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(label, Complex64::new(1.0, 0.0));
        Self { amplitudes }
    }

    pub fn from_amplitudes(pairs: impl IntoIterator<Item = (ModeLabel, Complex64)>) -> Self {
        let mut amplitudes = BTreeMap::new();
        for (label, amp) in pairs {
            *amplitudes.entry(label).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        amplitudes.retain(|_, a| a.norm() > PRUNE_TOL);
        debug_assert!(amplitudes.len() <= MAX_MODES);
        Self { amplitudes }
    }

    pub fn amplitude(&self, label: &ModeLabel) -> Complex64 {
        self.amplitudes
            .get(label)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn modes(&self) -> impl Iterator<Item = (&ModeLabel, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn is_vacuum(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Probability mass on one path.
    pub fn path_mass(&self, path: PathId) -> f64 {
        self.amplitudes
            .iter()
            .filter(|(l, _)| l.path == path)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Probability mass on one frequency bin.
    pub fn freq_mass(&self, freq: FrequencyBin) -> f64 {
        self.amplitudes
            .iter()
            .filter(|(l, _)| l.freq == freq)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Uniform rescaling of every amplitude.
    pub fn scaled(&self, factor: f64) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(l, a)| (*l, a * factor))
            .filter(|(_, a)| a.norm() > PRUNE_TOL)
            .collect();
        Self { amplitudes }
    }

    /// Drop every mode on the given path, returning the removed mass.
    pub fn drain_path(&mut self, path: PathId) -> f64 {
        let mut mass = 0.0;
        self.amplitudes.retain(|l, a| {
            if l.path == path {
                mass += a.norm_sqr();
                false
            } else {
                true
            }
        });
        mass
    }

    pub fn occupied_paths(&self) -> Vec<PathId> {
        let mut paths: Vec<PathId> = self.amplitudes.keys().map(|l| l.path).collect();
        paths.sort();
        paths.dedup();
        paths
    }
}

/// ⟨a|b⟩: conjugate-linear in `a`, linear in `b`.
pub fn overlap(a: &PureState, b: &PureState) -> Complex64 {
    a.amplitudes
        .iter()
        .map(|(l, amp_a)| amp_a.conj() * b.amplitude(l))
        .sum()
}

type MapTerm = (ModeClass, i64, Complex64);

/// Sparse linear transfer operator over mode labels. Classes with no
/// entry pass through unchanged; an entry with an empty output list
/// annihilates the class (projector stop-band).
#[derive(Debug, Clone)]
pub struct LinearMap {
    entries: BTreeMap<ModeClass, Vec<MapTerm>>,
    pub isometry: bool,
}

impl LinearMap {
    pub fn identity() -> Self {
        Self {
            entries: BTreeMap::new(),
            isometry: true,
        }
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (ModeClass, Vec<MapTerm>)>,
        isometry: bool,
    ) -> Self {
        Self {
            entries: entries.into_iter().collect(),
            isometry,
        }
    }

    fn terms_for(&self, class: ModeClass) -> Option<&[MapTerm]> {
        self.entries.get(&class).map(|v| v.as_slice())
    }

    /// apply(compose(f, g), s) == apply(f, apply(g, s)).
    pub fn compose(f: &LinearMap, g: &LinearMap) -> LinearMap {
        let mut entries: BTreeMap<ModeClass, Vec<MapTerm>> = BTreeMap::new();
        let chain = |terms_g: &[MapTerm]| -> Vec<MapTerm> {
            let mut acc: BTreeMap<(ModeClass, i64), Complex64> = BTreeMap::new();
            for &(mid, dt1, a1) in terms_g {
                match f.terms_for(mid) {
                    Some(terms_f) => {
                        for &(out, dt2, a2) in terms_f {
                            *acc.entry((out, dt1 + dt2))
                                .or_insert(Complex64::new(0.0, 0.0)) += a1 * a2;
                        }
                    }
                    None => {
                        *acc.entry((mid, dt1)).or_insert(Complex64::new(0.0, 0.0)) += a1;
                    }
                }
            }
            acc.into_iter()
                .filter(|(_, a)| a.norm() > PRUNE_TOL)
                .map(|((out, dt), a)| (out, dt, a))
                .collect()
        };
        for (&cin, terms_g) in &g.entries {
            entries.insert(cin, chain(terms_g));
        }
        for (&cin, terms_f) in &f.entries {
            entries.entry(cin).or_insert_with(|| terms_f.clone());
        }
        LinearMap {
            entries,
            isometry: f.isometry && g.isometry,
        }
    }

    pub fn apply(&self, s: &PureState) -> PureState {
        let mut out: BTreeMap<ModeLabel, Complex64> = BTreeMap::new();
        for (label, amp) in s.modes() {
            match self.terms_for(label.class()) {
                Some(terms) => {
                    for &(class, dt, a) in terms {
                        let time = label.time as i64 + dt;
                        debug_assert!(time >= 0, "map drove a time bin negative");
                        let l = ModeLabel::new(class.freq, class.path, time as u64, class.pol);
                        *out.entry(l).or_insert(Complex64::new(0.0, 0.0)) += amp * a;
                    }
                }
                None => {
                    *out.entry(*label).or_insert(Complex64::new(0.0, 0.0)) += amp;
                }
            }
        }
        out.retain(|_, a| a.norm() > PRUNE_TOL);
        debug_assert!(out.len() <= MAX_MODES, "mode count bound exceeded");
        PureState { amplitudes: out }
    }
}

/// 50/50 coupler between two spatial rails with the real-calibrated
/// matrix (1/√2)[[1, e^{iφ}],[e^{-iφ}, -1]] acting on (portA, portB)
/// occupancy. The same-rail (transmitted) leg preserves frequency; the
/// cross-rail (diffracted) leg toggles it, which keeps the engine
/// closed over {Base, Shifted} and gives the opposite Bragg order on
/// the return geometry for free.
pub fn coupler_map(
    port_a: PathId,
    port_b: PathId,
    out_a: PathId,
    out_b: PathId,
    phase: f64,
) -> LinearMap {
    assert_ne!(port_a, port_b);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let e_pos = Complex64::from_polar(s, phase);
    let e_neg = Complex64::from_polar(s, -phase);
    let diag = Complex64::new(s, 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        for pol in [Polarization::H, Polarization::V] {
            let in_a = ModeClass {
                freq,
                path: port_a,
                pol,
            };
            let in_b = ModeClass {
                freq,
                path: port_b,
                pol,
            };
            let same_a = ModeClass {
                freq,
                path: out_a,
                pol,
            };
            let same_b = ModeClass {
                freq,
                path: out_b,
                pol,
            };
            let cross_a = ModeClass {
                freq: freq.toggled(),
                path: out_a,
                pol,
            };
            let cross_b = ModeClass {
                freq: freq.toggled(),
                path: out_b,
                pol,
            };
            entries.push((in_a, vec![(same_a, 0, diag), (cross_b, 0, e_neg)]));
            entries.push((in_b, vec![(cross_a, 0, e_pos), (same_b, 0, -diag)]));
        }
    }
    LinearMap::from_entries(entries, true)
}

/// Narrow filter: pass-band frequency scaled by the amplitude
/// transmittance, the other frequency absorbed.
pub fn projector_map(keep: FrequencyBin, amp_transmittance: f64) -> LinearMap {
    assert!((0.0..=1.0).contains(&amp_transmittance));
    let t = Complex64::new(amp_transmittance, 0.0);
    let mut entries = Vec::new();
    for path in PathId::ALL {
        for pol in [Polarization::H, Polarization::V] {
            let pass = ModeClass {
                freq: keep,
                path,
                pol,
            };
            let stop = ModeClass {
                freq: keep.toggled(),
                path,
                pol,
            };
            entries.push((pass, vec![(pass, 0, t)]));
            entries.push((stop, vec![]));
        }
    }
    LinearMap::from_entries(entries, false)
}

/// Delay line: time bins on one path shifted by k.
pub fn shift_time_map(path: PathId, k: u64) -> LinearMap {
    let one = Complex64::new(1.0, 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        for pol in [Polarization::H, Polarization::V] {
            let class = ModeClass { freq, path, pol };
            entries.push((class, vec![(class, k as i64, one)]));
        }
    }
    LinearMap::from_entries(entries, true)
}

/// Path rename with optional polarization flip (Faraday mirror when
/// from == to and pol_flip is set).
pub fn relabel_map(from: PathId, to: PathId, pol_flip: bool) -> LinearMap {
    let one = Complex64::new(1.0, 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        for pol in [Polarization::H, Polarization::V] {
            let class = ModeClass {
                freq,
                path: from,
                pol,
            };
            let out_pol = if pol_flip { pol.flipped() } else { pol };
            let out = ModeClass {
                freq,
                path: to,
                pol: out_pol,
            };
            entries.push((class, vec![(out, 0, one)]));
        }
    }
    LinearMap::from_entries(entries, true)
}

/// Monitor tap: channel amplitude √(1-r) stays, √r diverted to the
/// monitor port.
pub fn tap_map(intensity_fraction: f64) -> LinearMap {
    assert!((0.0..1.0).contains(&intensity_fraction));
    let keep = Complex64::new((1.0 - intensity_fraction).sqrt(), 0.0);
    let div = Complex64::new(intensity_fraction.sqrt(), 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        for pol in [Polarization::H, Polarization::V] {
            let class = ModeClass {
                freq,
                path: PathId::Channel,
                pol,
            };
            let mon = ModeClass {
                freq,
                path: PathId::MonitorPort,
                pol,
            };
            entries.push((class, vec![(class, 0, keep), (mon, 0, div)]));
        }
    }
    LinearMap::from_entries(entries, true)
}

/// Uniform amplitude attenuation on one path.
pub fn attenuate_map(path: PathId, amp_factor: f64) -> LinearMap {
    assert!((0.0..=1.0).contains(&amp_factor));
    let f = Complex64::new(amp_factor, 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        for pol in [Polarization::H, Polarization::V] {
            let class = ModeClass { freq, path, pol };
            entries.push((class, vec![(class, 0, f)]));
        }
    }
    LinearMap::from_entries(entries, amp_factor == 1.0)
}

/// Return-pass polarizing beam splitter: the polarization controller is
/// set so V reflects into the long arm and H transmits into the short
/// arm, with the controller re-aligning both outputs to H so the arms
/// interfere at the coupler.
pub fn pbs_route_map(long_delay_bins: u64) -> LinearMap {
    let one = Complex64::new(1.0, 0.0);
    let mut entries = Vec::new();
    for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
        let v_in = ModeClass {
            freq,
            path: PathId::Channel,
            pol: Polarization::V,
        };
        let h_in = ModeClass {
            freq,
            path: PathId::Channel,
            pol: Polarization::H,
        };
        let long = ModeClass {
            freq,
            path: PathId::LongArm,
            pol: Polarization::H,
        };
        let short = ModeClass {
            freq,
            path: PathId::ShortArm,
            pol: Polarization::H,
        };
        entries.push((v_in, vec![(long, long_delay_bins as i64, one)]));
        entries.push((h_in, vec![(short, 0, one)]));
    }
    LinearMap::from_entries(entries, true)
}

/// Threshold detector with quantum efficiency and per-gate dark-click
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dark: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!(
                "detector efficiency {} outside [0,1]",
                self.efficiency
            )));
        }
        if !(0.0..1.0).contains(&self.dark) {
            return Err(Error::InvalidParameter(format!(
                "dark-click probability {} outside [0,1)",
                self.dark
            )));
        }
        Ok(())
    }
}

/// Where each occupied path is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorTarget {
    D1,
    D2,
    D3,
    None,
}

/// Exact per-gate outcome probabilities plus the expected monitor count.
/// p_d1/p_d2 are exactly-one-detector events; p_none absorbs no-click
/// and double-click (doubles are discarded in sifting), with the double
/// share reported separately for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub p_d1: f64,
    pub p_d2: f64,
    pub p_none: f64,
    pub p_double: f64,
    pub d3_expected: f64,
}

impl OutcomeDistribution {
    pub fn check(&self) -> Result<()> {
        let sum = self.p_d1 + self.p_d2 + self.p_none;
        if (sum - 1.0).abs() > AMP_TOL
            || self.p_d1 < -AMP_TOL
            || self.p_d2 < -AMP_TOL
            || self.p_none < -AMP_TOL
            || self.p_double > self.p_none + AMP_TOL
        {
            return Err(Error::InvalidParameter(format!(
                "outcome distribution not normalized: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClickOutcome {
    D1,
    D2,
    None,
    Double,
}

/// Born-rule readout with detector imperfections. The photon reaches at
/// most one detector; dark clicks are independent per detector. A
/// photon-plus-dark coincidence is a double click.
pub fn distribution(
    s: &PureState,
    assignment: &BTreeMap<PathId, DetectorTarget>,
    det_d1: &DetectorModel,
    det_d2: &DetectorModel,
) -> Result<OutcomeDistribution> {
    for path in s.occupied_paths() {
        if !assignment.contains_key(&path) {
            return Err(Error::UnassignedPath(path));
        }
    }
    let mass = |target: DetectorTarget| -> f64 {
        s.modes()
            .filter(|(l, _)| assignment.get(&l.path) == Some(&target))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    };
    let q1 = det_d1.efficiency * mass(DetectorTarget::D1);
    let q2 = det_d2.efficiency * mass(DetectorTarget::D2);
    let d3_expected = mass(DetectorTarget::D3);
    let q_none = (1.0 - q1 - q2).max(0.0);
    let (d1, d2) = (det_d1.dark, det_d2.dark);
    let p_d1 = q1 * (1.0 - d2) + q_none * d1 * (1.0 - d2);
    let p_d2 = q2 * (1.0 - d1) + q_none * d2 * (1.0 - d1);
    let p_double = q1 * d2 + q2 * d1 + q_none * d1 * d2;
    let p_none = (1.0 - p_d1 - p_d2).max(0.0);
    let dist = OutcomeDistribution {
        p_d1,
        p_d2,
        p_none,
        p_double,
        d3_expected,
    };
    dist.check()?;
    Ok(dist)
}

/// Sample one gate outcome; deterministic given the rng stream.
pub fn sample_detection(dist: &OutcomeDistribution, rng: &mut impl Rng) -> ClickOutcome {
    let u: f64 = rng.random();
    if u < dist.p_d1 {
        ClickOutcome::D1
    } else if u < dist.p_d1 + dist.p_d2 {
        ClickOutcome::D2
    } else if u < dist.p_d1 + dist.p_d2 + dist.p_double {
        ClickOutcome::Double
    } else {
        ClickOutcome::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn channel(freq: FrequencyBin, time: u64) -> ModeLabel {
        ModeLabel::new(freq, PathId::Channel, time, Polarization::H)
    }

    fn control_state() -> PureState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::from_amplitudes([
            (channel(FrequencyBin::Base, 0), Complex64::new(s, 0.0)),
            (channel(FrequencyBin::Shifted, 0), Complex64::new(s, 0.0)),
        ])
    }

    #[test]
    fn single_mode_state_is_normalized() {
        let s = PureState::single_mode(channel(FrequencyBin::Base, 0));
        assert_eq!(overlap(&s, &s), Complex64::new(1.0, 0.0));
        assert!((s.norm() - 1.0).abs() < AMP_TOL);
    }

    #[test]
    fn frequency_bins_are_orthogonal() {
        let a = PureState::single_mode(channel(FrequencyBin::Base, 0));
        let b = PureState::single_mode(channel(FrequencyBin::Shifted, 0));
        assert_eq!(overlap(&a, &b), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn control_state_overlap_is_inv_sqrt2() {
        let base = PureState::single_mode(channel(FrequencyBin::Base, 0));
        let c = control_state();
        let ov = overlap(&base, &c);
        assert!((ov.re - std::f64::consts::FRAC_1_SQRT_2).abs() < AMP_TOL);
        assert!(ov.im.abs() < AMP_TOL);
        assert!((overlap(&c, &c).re - 1.0).abs() < AMP_TOL);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = control_state();
        assert_eq!(LinearMap::identity().apply(&s), s);
    }

    #[test]
    fn compose_with_identity_is_noop() {
        let coupler = coupler_map(
            PathId::LongArm,
            PathId::ShortArm,
            PathId::Det1Port,
            PathId::Det2Port,
            0.0,
        );
        let composed = LinearMap::compose(&LinearMap::identity(), &coupler);
        let input = PureState::single_mode(ModeLabel::new(
            FrequencyBin::Base,
            PathId::LongArm,
            0,
            Polarization::H,
        ));
        assert_eq!(composed.apply(&input), coupler.apply(&input));
    }

    #[test]
    fn coupler_squares_to_identity() {
        // Hand-multiplying (1/sqrt2)[[1,1],[1,-1]] with itself gives the
        // identity; the frequency toggles cancel pairwise on each leg.
        let c = coupler_map(
            PathId::LongArm,
            PathId::ShortArm,
            PathId::LongArm,
            PathId::ShortArm,
            0.0,
        );
        let cc = LinearMap::compose(&c, &c);
        for path in [PathId::LongArm, PathId::ShortArm] {
            for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
                let input = PureState::single_mode(ModeLabel::new(freq, path, 3, Polarization::H));
                let out = cc.apply(&input);
                let diff = overlap(&input, &out);
                assert!((diff.re - 1.0).abs() < AMP_TOL && diff.im.abs() < AMP_TOL);
            }
        }
        assert!(cc.isometry);
    }

    #[test]
    fn isometry_flag_is_conjunction() {
        let iso = shift_time_map(PathId::Channel, 1);
        let proj = projector_map(FrequencyBin::Base, 1.0);
        assert!(!LinearMap::compose(&iso, &proj).isometry);
        assert!(!LinearMap::compose(&proj, &iso).isometry);
    }

    #[test]
    fn coupler_splits_equally() {
        let c = coupler_map(
            PathId::LongArm,
            PathId::ShortArm,
            PathId::Det1Port,
            PathId::Det2Port,
            0.0,
        );
        let input = PureState::single_mode(ModeLabel::new(
            FrequencyBin::Base,
            PathId::LongArm,
            0,
            Polarization::H,
        ));
        let out = c.apply(&input);
        assert!((out.path_mass(PathId::Det1Port) - 0.5).abs() < AMP_TOL);
        assert!((out.path_mass(PathId::Det2Port) - 0.5).abs() < AMP_TOL);
        assert!((out.norm() - 1.0).abs() < AMP_TOL);
    }

    #[test]
    fn coupler_calibration_is_fully_constructive() {
        // Equal in-phase amplitudes on both rails exit on the first port.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let input = PureState::from_amplitudes([
            (
                ModeLabel::new(FrequencyBin::Base, PathId::LongArm, 1, Polarization::H),
                Complex64::new(s, 0.0),
            ),
            (
                ModeLabel::new(FrequencyBin::Shifted, PathId::ShortArm, 1, Polarization::H),
                Complex64::new(s, 0.0),
            ),
        ]);
        let c = coupler_map(
            PathId::LongArm,
            PathId::ShortArm,
            PathId::Det1Port,
            PathId::Det2Port,
            0.0,
        );
        let out = c.apply(&input);
        assert!((out.path_mass(PathId::Det1Port) - 1.0).abs() < AMP_TOL);
        assert!(out.path_mass(PathId::Det2Port) < AMP_TOL);
    }

    #[test]
    fn projector_passband_and_stopband() {
        let p = projector_map(FrequencyBin::Base, 1.0);
        let base = PureState::single_mode(channel(FrequencyBin::Base, 1));
        assert_eq!(p.apply(&base), base);
        let shifted = PureState::single_mode(channel(FrequencyBin::Shifted, 1));
        assert!(p.apply(&shifted).is_vacuum());
        let half = p.apply(&control_state());
        assert!((half.norm_sqr() - 0.5).abs() < AMP_TOL);
    }

    #[test]
    fn projector_is_idempotent() {
        let p = projector_map(FrequencyBin::Shifted, 1.0);
        let s = control_state();
        assert_eq!(p.apply(&p.apply(&s)), p.apply(&s));
    }

    #[test]
    fn shift_and_relabel_behave() {
        assert_eq!(
            shift_time_map(PathId::LongArm, 0).apply(&control_state()),
            control_state()
        );
        let s = PureState::single_mode(ModeLabel::new(
            FrequencyBin::Base,
            PathId::LongArm,
            0,
            Polarization::H,
        ));
        let shifted = shift_time_map(PathId::LongArm, 1).apply(&s);
        assert_eq!(
            shifted.amplitude(&ModeLabel::new(
                FrequencyBin::Base,
                PathId::LongArm,
                1,
                Polarization::H
            )),
            Complex64::new(1.0, 0.0)
        );
        let fm = relabel_map(PathId::Channel, PathId::Channel, true);
        let c = control_state();
        assert_eq!(fm.apply(&fm.apply(&c)), c);
    }

    #[test]
    fn distribution_basic_cases() {
        let mut assignment = BTreeMap::new();
        assignment.insert(PathId::Det1Port, DetectorTarget::D1);
        assignment.insert(PathId::Det2Port, DetectorTarget::D2);
        let ideal = DetectorModel::default();

        let d1_only = PureState::single_mode(ModeLabel::new(
            FrequencyBin::Base,
            PathId::Det1Port,
            0,
            Polarization::H,
        ));
        let dist = distribution(&d1_only, &assignment, &ideal, &ideal).unwrap();
        assert!((dist.p_d1 - 1.0).abs() < AMP_TOL && dist.p_d2.abs() < AMP_TOL);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let split = PureState::from_amplitudes([
            (
                ModeLabel::new(FrequencyBin::Base, PathId::Det1Port, 0, Polarization::H),
                Complex64::new(s, 0.0),
            ),
            (
                ModeLabel::new(FrequencyBin::Shifted, PathId::Det2Port, 0, Polarization::H),
                Complex64::new(s, 0.0),
            ),
        ]);
        let dist = distribution(&split, &assignment, &ideal, &ideal).unwrap();
        assert!((dist.p_d1 - 0.5).abs() < AMP_TOL && (dist.p_d2 - 0.5).abs() < AMP_TOL);

        let dist = distribution(&PureState::vacuum(), &assignment, &ideal, &ideal).unwrap();
        assert!((dist.p_none - 1.0).abs() < AMP_TOL);
    }

    #[test]
    fn distribution_rejects_unassigned_path() {
        let assignment = BTreeMap::new();
        let s = PureState::single_mode(channel(FrequencyBin::Base, 0));
        let err = distribution(
            &s,
            &assignment,
            &DetectorModel::default(),
            &DetectorModel::default(),
        );
        assert!(matches!(err, Err(Error::UnassignedPath(PathId::Channel))));
    }

    #[test]
    fn dark_counts_mix_in() {
        let mut assignment = BTreeMap::new();
        assignment.insert(PathId::Det1Port, DetectorTarget::D1);
        assignment.insert(PathId::Det2Port, DetectorTarget::D2);
        let noisy = DetectorModel {
            efficiency: 1.0,
            dark: 0.1,
        };
        let dist = distribution(&PureState::vacuum(), &assignment, &noisy, &noisy).unwrap();
        // 1 - (1-q)(1-d) per detector, minus the coincidence.
        assert!((dist.p_d1 - 0.1 * 0.9).abs() < AMP_TOL);
        assert!((dist.p_d2 - 0.1 * 0.9).abs() < AMP_TOL);
        assert!((dist.p_double - 0.01).abs() < AMP_TOL);
        dist.check().unwrap();
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let dist = OutcomeDistribution {
            p_d1: 0.5,
            p_d2: 0.5,
            p_none: 0.0,
            p_double: 0.0,
            d3_expected: 0.0,
        };
        let run = |seed: u64| -> Vec<ClickOutcome> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..1000)
                .map(|_| sample_detection(&dist, &mut rng))
                .collect()
        };
        assert_eq!(run(7), run(7));

        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let n = 100_000usize;
        let d1 = (0..n)
            .filter(|_| sample_detection(&dist, &mut rng) == ClickOutcome::D1)
            .count() as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((d1 / n as f64 - 0.5).abs() < 4.0 * sigma);

        let certain = OutcomeDistribution {
            p_d1: 1.0,
            p_d2: 0.0,
            p_none: 0.0,
            p_double: 0.0,
            d3_expected: 0.0,
        };
        assert_eq!(sample_detection(&certain, &mut rng), ClickOutcome::D1);
    }
}
