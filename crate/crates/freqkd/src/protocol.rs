//! Session orchestration: seeded pulse loop, three-group sifting,
//! eavesdrop and intensity alarms, and sampled-disclosure QBER.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{EveLogEntry, EveStrategy};
use crate::error::{Error, Result};
use crate::mode_engine::{ClickOutcome, OutcomeDistribution};
use crate::optics_bench::{
    expected_d3_count, round_trip_distribution, sample_pulse, AliceChoice, AliceKitConfig,
    BobKitConfig, BobSetting, ChannelConfig, PulseRecord,
};
use crate::util::{sample_index, stream_rng, StreamDomain};

/// Interference alarm threshold in binomial sigmas over the dark-count
/// baseline.
pub const INTERFERENCE_SIGMA: f64 = 3.0;
/// Default D3 window length (pulses) for the intensity alarm.
pub const DEFAULT_INTENSITY_WINDOW: usize = 100;
/// Default intensity alarm threshold in Poisson sigmas.
pub const DEFAULT_INTENSITY_K: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SessionParams {
    pub num_pulses: u64,
    pub alice_choice_probs: [f64; 3],
    pub bob_on_prob: f64,
    pub bob: BobKitConfig,
    pub alice: AliceKitConfig,
    pub channel: ChannelConfig,
    pub eve: EveStrategy,
    pub seed: u64,
    pub disclosure_fraction: f64,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            num_pulses: 100_000,
            alice_choice_probs: [1.0 / 3.0; 3],
            bob_on_prob: 0.5,
            bob: BobKitConfig {
                source: crate::optics_bench::SourceModel::WeakCoherent { mean: 0.1 },
                ..BobKitConfig::default()
            },
            alice: AliceKitConfig::default(),
            channel: ChannelConfig::default(),
            eve: EveStrategy::None,
            seed: 0,
            disclosure_fraction: 0.2,
        }
    }
}

impl SessionParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_pulses < 1 {
            return Err(Error::InvalidParameter("numPulses must be >= 1".into()));
        }
        let sum: f64 = self.alice_choice_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.alice_choice_probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "aliceChoiceProbs must be non-negative and sum to 1 (got sum {sum})"
            )));
        }
        if !(0.0..=1.0).contains(&self.bob_on_prob) {
            return Err(Error::InvalidParameter(format!(
                "bobOnProb {} outside [0,1]",
                self.bob_on_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.disclosure_fraction) {
            return Err(Error::InvalidParameter(format!(
                "disclosureFraction {} outside [0,1]",
                self.disclosure_fraction
            )));
        }
        self.bob.validate()?;
        self.alice.validate()?;
        self.channel.validate()?;
        self.eve.validate().map_err(Error::InvalidParameter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub records: Vec<PulseRecord>,
    pub eve_log: Vec<EveLogEntry>,
}

/// Draw Alice's choice and Bob's setting for one pulse from the session
/// stream. Kept separate from the physics stream so either side can be
/// re-derived independently.
pub fn draw_settings(params: &SessionParams, index: u64) -> (AliceChoice, BobSetting) {
    let mut rng = stream_rng(params.seed, StreamDomain::Session, index);
    let choice = AliceChoice::ALL[sample_index(&params.alice_choice_probs, &mut rng)];
    let setting = if rng.random::<f64>() < params.bob_on_prob {
        BobSetting::AomOn
    } else {
        BobSetting::AomOff
    };
    (choice, setting)
}

pub fn run_session(params: &SessionParams) -> Result<Transcript> {
    params.validate()?;
    let mut records = Vec::with_capacity(params.num_pulses as usize);
    let mut eve_log = Vec::with_capacity(params.num_pulses as usize);
    for index in 0..params.num_pulses {
        let (choice, setting) = draw_settings(params, index);
        let mut rng = stream_rng(params.seed, StreamDomain::Pulse, index);
        let (record, log) = sample_pulse(
            index,
            choice,
            setting,
            &params.bob,
            &params.alice,
            &params.channel,
            &params.eve,
            &mut rng,
        )?;
        records.push(record);
        eve_log.push(log);
    }
    Ok(Transcript { records, eve_log })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftResult {
    pub key_alice: Vec<u8>,
    pub key_bob: Vec<u8>,
    pub group1_d1: u64,
    pub group1_d2: u64,
    pub group3_count: u64,
    pub no_click_count: u64,
    pub no_filter_off_count: u64,
    pub double_click_count: u64,
}

impl SiftResult {
    pub fn group1_total(&self) -> u64 {
        self.group1_d1 + self.group1_d2
    }

    pub fn key_len(&self) -> u64 {
        self.key_alice.len() as u64
    }

    /// Every record lands in exactly one bucket.
    pub fn total_accounted(&self) -> u64 {
        self.group1_total()
            + self.key_len()
            + self.group3_count
            + self.no_click_count
            + self.no_filter_off_count
            + self.double_click_count
    }
}

/// Bob's decoded key bit for a group-2 record.
pub fn decoded_bit(record: &PulseRecord) -> Option<u8> {
    if record.choice == AliceChoice::NoFilter || record.setting != BobSetting::AomOff {
        return None;
    }
    match record.click {
        ClickOutcome::D1 => Some(0),
        ClickOutcome::D2 => Some(1),
        _ => None,
    }
}

/// Three-group sifting: discard no-clicks and doubles, tally the
/// control group (no filter + AOM on), extract key bits from filter +
/// AOM off, discard filter + AOM on and no-filter + AOM off.
pub fn sift(records: &[PulseRecord]) -> SiftResult {
    let mut out = SiftResult::default();
    for record in records {
        match record.click {
            ClickOutcome::None => {
                out.no_click_count += 1;
                continue;
            }
            ClickOutcome::Double => {
                out.double_click_count += 1;
                continue;
            }
            _ => {}
        }
        match (record.choice, record.setting) {
            (AliceChoice::NoFilter, BobSetting::AomOn) => match record.click {
                ClickOutcome::D1 => out.group1_d1 += 1,
                ClickOutcome::D2 => out.group1_d2 += 1,
                _ => unreachable!(),
            },
            (AliceChoice::NoFilter, BobSetting::AomOff) => out.no_filter_off_count += 1,
            (_, BobSetting::AomOn) => out.group3_count += 1,
            (_, BobSetting::AomOff) => {
                let bob = decoded_bit(record).expect("clicked group-2 record decodes");
                out.key_bob.push(bob);
                out.key_alice
                    .push(record.intended_bit.expect("filter round carries a bit"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceAlarm {
    pub alarm: bool,
    /// No group-1 clicks (or a baseline with no click mass): no verdict.
    pub indeterminate: bool,
    pub d2_fraction: f64,
    pub expected_fraction: f64,
    pub group1_clicks: u64,
}

/// Group-1 D2 clicks tested against the dark-count-expected fraction at
/// INTERFERENCE_SIGMA binomial sigmas. `baseline` is the no-Eve oracle
/// distribution for (no filter, AOM on) under the session's detector
/// models.
pub fn interference_alarm(s: &SiftResult, baseline: &OutcomeDistribution) -> InterferenceAlarm {
    let n = s.group1_total();
    let click_mass = baseline.p_d1 + baseline.p_d2;
    if n == 0 || click_mass <= 0.0 {
        return InterferenceAlarm {
            alarm: false,
            indeterminate: true,
            d2_fraction: 0.0,
            expected_fraction: 0.0,
            group1_clicks: n,
        };
    }
    let expected = baseline.p_d2 / click_mass;
    let threshold =
        n as f64 * expected + INTERFERENCE_SIGMA * (n as f64 * expected * (1.0 - expected)).sqrt();
    InterferenceAlarm {
        alarm: s.group1_d2 as f64 > threshold,
        indeterminate: false,
        d2_fraction: s.group1_d2 as f64 / n as f64,
        expected_fraction: expected,
        group1_clicks: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityAlarm {
    pub alarm: bool,
    pub baseline_per_pulse: f64,
    pub max_window_mean: f64,
    pub window: usize,
    pub sigma_k: f64,
    pub triggered_window: Option<usize>,
}

/// Windowed D3 counts tested against the analytic per-pulse baseline at
/// k Poisson sigmas. A zero baseline means the monitor is blind (r = 0)
/// and the alarm never fires.
pub fn intensity_alarm(
    records: &[PulseRecord],
    window: usize,
    sigma_k: f64,
    baseline_per_pulse: f64,
) -> IntensityAlarm {
    assert!(window >= 1);
    let mut alarm = false;
    let mut triggered_window = None;
    let mut max_window_mean: f64 = 0.0;
    for (w, chunk) in records.chunks(window).enumerate() {
        let count: u64 = chunk.iter().map(|r| r.d3_photons).sum();
        let mean = count as f64 / chunk.len() as f64;
        max_window_mean = max_window_mean.max(mean);
        if baseline_per_pulse > 0.0 {
            let lambda = baseline_per_pulse * chunk.len() as f64;
            if count as f64 > lambda + sigma_k * lambda.sqrt() && !alarm {
                alarm = true;
                triggered_window = Some(w);
            }
        }
    }
    IntensityAlarm {
        alarm,
        baseline_per_pulse,
        max_window_mean,
        window,
        sigma_k,
        triggered_window,
    }
}

/// Analytic per-pulse D3 baseline, averaged over Alice's choice
/// distribution.
pub fn expected_d3_baseline(params: &SessionParams) -> f64 {
    AliceChoice::ALL
        .iter()
        .zip(params.alice_choice_probs.iter())
        .map(|(&choice, &p)| {
            p * expected_d3_count(choice, &params.bob, &params.alice, &params.channel)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberSample {
    pub value: f64,
    pub disclosed: usize,
    /// Set when the sifted key was empty and the value is 0 by
    /// definition.
    pub empty_key: bool,
}

/// Disclose ⌈f·len⌉ random key positions, return the mismatch fraction,
/// and strip the disclosed positions from both keys.
pub fn qber_estimate(s: &mut SiftResult, fraction: f64, rng: &mut impl Rng) -> QberSample {
    let len = s.key_alice.len();
    debug_assert_eq!(len, s.key_bob.len());
    if len == 0 {
        return QberSample {
            value: 0.0,
            disclosed: 0,
            empty_key: true,
        };
    }
    let n = ((fraction * len as f64).ceil() as usize).min(len);
    if n == 0 {
        return QberSample {
            value: 0.0,
            disclosed: 0,
            empty_key: false,
        };
    }
    // Partial Fisher-Yates: the first n entries are the disclosed set.
    let mut order: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.random_range(i..len);
        order.swap(i, j);
    }
    let mut disclosed: Vec<usize> = order[..n].to_vec();
    let mismatches = disclosed
        .iter()
        .filter(|&&i| s.key_alice[i] != s.key_bob[i])
        .count();
    disclosed.sort_unstable();
    for &i in disclosed.iter().rev() {
        s.key_alice.remove(i);
        s.key_bob.remove(i);
    }
    QberSample {
        value: mismatches as f64 / n as f64,
        disclosed: n,
        empty_key: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmReport {
    pub interference: InterferenceAlarm,
    pub intensity: IntensityAlarm,
    pub qber: QberSample,
}

impl AlarmReport {
    pub fn any_alarm(&self) -> bool {
        self.interference.alarm || self.intensity.alarm
    }
}

/// Sift a transcript and evaluate both alarms plus the disclosure QBER.
/// The disclosure rng stream is keyed by (seed, leaf) so network leaves
/// disclose independently.
pub fn analyze_records(
    params: &SessionParams,
    records: &[PulseRecord],
    disclosure_index: u64,
) -> Result<(SiftResult, AlarmReport)> {
    let mut sifted = sift(records);
    let baseline = round_trip_distribution(
        AliceChoice::NoFilter,
        BobSetting::AomOn,
        &params.bob,
        &params.alice,
        &params.channel,
        &EveStrategy::None,
    )?;
    let interference = interference_alarm(&sifted, &baseline);
    let intensity = intensity_alarm(
        records,
        DEFAULT_INTENSITY_WINDOW,
        DEFAULT_INTENSITY_K,
        expected_d3_baseline(params),
    );
    let mut rng = stream_rng(params.seed, StreamDomain::Disclosure, disclosure_index);
    let qber = qber_estimate(&mut sifted, params.disclosure_fraction, &mut rng);
    Ok((
        sifted,
        AlarmReport {
            interference,
            intensity,
            qber,
        },
    ))
}
