//! Eavesdropper strategies acting on channel states, plus the bright
//! probe against Alice's filter and its monitor signature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mode_engine::{FrequencyBin, PureState};
use crate::optics_bench::{AliceChoice, AliceKitConfig};
use crate::util::poisson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackLeg {
    Forward,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AttackLocation {
    Forward,
    Return,
    Both,
}

impl AttackLocation {
    pub fn covers(self, leg: AttackLeg) -> bool {
        match self {
            AttackLocation::Both => true,
            AttackLocation::Forward => leg == AttackLeg::Forward,
            AttackLocation::Return => leg == AttackLeg::Return,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum EveStrategy {
    None,
    #[serde(rename_all = "camelCase")]
    InterceptResendFreq {
        location: AttackLocation,
        probability: f64,
    },
    #[serde(rename_all = "camelCase")]
    PassiveTap {
        reflectivity: f64,
    },
    #[serde(rename_all = "camelCase")]
    StrongProbe {
        mean_photons: f64,
    },
}

impl EveStrategy {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            EveStrategy::None => Ok(()),
            EveStrategy::InterceptResendFreq { probability, .. } => {
                if (0.0..=1.0).contains(&probability) {
                    Ok(())
                } else {
                    Err(format!("intercept probability {probability} outside [0,1]"))
                }
            }
            EveStrategy::PassiveTap { reflectivity } => {
                if (0.0..1.0).contains(&reflectivity) {
                    Ok(())
                } else {
                    Err(format!("tap reflectivity {reflectivity} outside [0,1)"))
                }
            }
            EveStrategy::StrongProbe { mean_photons } => {
                if mean_photons > 0.0 {
                    Ok(())
                } else {
                    Err(format!("probe mean photons {mean_photons} must be > 0"))
                }
            }
        }
    }
}

/// Per-pulse record of what Eve did and learned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EveLogEntry {
    pub attacked: bool,
    pub measured_freq: Option<FrequencyBin>,
    pub tapped_photons: u64,
    pub probe_readout: Option<AliceChoice>,
}

/// One branch of an attack's exact outcome decomposition.
#[derive(Debug, Clone)]
pub struct AttackBranch {
    pub probability: f64,
    pub state: PureState,
    pub measured: Option<FrequencyBin>,
}

/// Post-measurement re-emission: a fresh photon in the dominant mode of
/// the collapsed frequency, in the time bin a legitimate pulse of that
/// frequency occupies.
fn collapsed_state(s: &PureState, freq: FrequencyBin) -> PureState {
    let label = s
        .modes()
        .filter(|(l, _)| l.freq == freq)
        .max_by(|(la, a), (lb, b)| {
            a.norm_sqr()
                .partial_cmp(&b.norm_sqr())
                .unwrap()
                .then(lb.cmp(la))
        })
        .map(|(l, _)| *l)
        .expect("collapse onto unoccupied frequency");
    PureState::single_mode(label)
}

/// Exact decomposition of a strategy acting on one leg into weighted
/// output states; probabilities sum to 1. Used by the amplitude oracle.
pub fn attack_branches(s: &PureState, strategy: &EveStrategy, leg: AttackLeg) -> Vec<AttackBranch> {
    let untouched = || {
        vec![AttackBranch {
            probability: 1.0,
            state: s.clone(),
            measured: None,
        }]
    };
    match *strategy {
        EveStrategy::None | EveStrategy::StrongProbe { .. } => untouched(),
        EveStrategy::PassiveTap { reflectivity } => vec![AttackBranch {
            probability: 1.0,
            state: s.scaled((1.0 - reflectivity).sqrt()),
            measured: None,
        }],
        EveStrategy::InterceptResendFreq {
            location,
            probability,
        } => {
            if !location.covers(leg) || probability == 0.0 {
                return untouched();
            }
            let m_base = s.freq_mass(FrequencyBin::Base);
            let m_shifted = s.freq_mass(FrequencyBin::Shifted);
            let m_lost = (1.0 - m_base - m_shifted).max(0.0);
            let mut branches = Vec::new();
            if probability < 1.0 {
                branches.push(AttackBranch {
                    probability: 1.0 - probability,
                    state: s.clone(),
                    measured: None,
                });
            }
            for (freq, mass) in [
                (FrequencyBin::Base, m_base),
                (FrequencyBin::Shifted, m_shifted),
            ] {
                if mass > 0.0 {
                    branches.push(AttackBranch {
                        probability: probability * mass,
                        state: collapsed_state(s, freq),
                        measured: Some(freq),
                    });
                }
            }
            if m_lost > 0.0 {
                // Eve saw no photon and resends nothing.
                branches.push(AttackBranch {
                    probability: probability * m_lost,
                    state: PureState::vacuum(),
                    measured: None,
                });
            }
            branches
        }
    }
}

/// Sample one attack branch; fills the per-leg part of the log entry.
pub fn attack_state(
    s: &PureState,
    strategy: &EveStrategy,
    leg: AttackLeg,
    rng: &mut impl Rng,
    log: &mut EveLogEntry,
) -> PureState {
    if let EveStrategy::PassiveTap { reflectivity } = *strategy {
        let p_tap = reflectivity * s.norm_sqr();
        if p_tap > 0.0 && rng.random::<f64>() < p_tap {
            log.tapped_photons += 1;
        }
        log.attacked = true;
        return s.scaled((1.0 - reflectivity).sqrt());
    }
    let branches = attack_branches(s, strategy, leg);
    if branches.len() == 1 && branches[0].measured.is_none() {
        return branches[0].state.clone();
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for branch in &branches {
        acc += branch.probability;
        if u < acc {
            if branch.measured.is_some() {
                log.attacked = true;
                if log.measured_freq.is_none() {
                    log.measured_freq = branch.measured;
                }
            }
            return branch.state.clone();
        }
    }
    branches.last().unwrap().state.clone()
}

/// Outcome of one bright-probe injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub readout: AliceChoice,
    pub d3_extra_photons: u64,
}

/// Eve injects a bright pulse (mean photons split equally between the
/// two frequency bins), reads Alice's filter setting from the spectrum
/// of the reflection, and unavoidably dumps photons onto the monitor
/// tap.
pub fn probe_alice(
    mean_photons: f64,
    choice: AliceChoice,
    alice: &AliceKitConfig,
    rng: &mut impl Rng,
) -> ProbeResult {
    let r = alice.tap_ratio;
    let pass = (1.0 - r) * (1.0 - r);
    let t4 = alice.filter_amp_transmittance.powi(4);
    let (mean_base, mean_shifted) = match choice {
        AliceChoice::NoFilter => {
            let att = if alice.attenuator_enabled {
                t4 / 2.0
            } else {
                1.0
            };
            let m = mean_photons / 2.0 * pass * att;
            (m, m)
        }
        AliceChoice::FilterOmega => (mean_photons / 2.0 * pass * t4, 0.0),
        AliceChoice::FilterOmegaDelta => (0.0, mean_photons / 2.0 * pass * t4),
    };
    let n_base = poisson(mean_base, rng);
    let n_shifted = poisson(mean_shifted, rng);
    let readout = match (n_base > 0, n_shifted > 0) {
        (true, true) => AliceChoice::NoFilter,
        (true, false) => AliceChoice::FilterOmega,
        (false, true) => AliceChoice::FilterOmegaDelta,
        (false, false) => match rng.random_range(0..3u8) {
            0 => AliceChoice::NoFilter,
            1 => AliceChoice::FilterOmega,
            _ => AliceChoice::FilterOmegaDelta,
        },
    };
    let d3_extra_photons = poisson(r * mean_photons, rng);
    ProbeResult {
        readout,
        d3_extra_photons,
    }
}
