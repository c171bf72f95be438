//! One-to-any branch network: a passive splitter routes each single
//! photon to exactly one leaf station, and the hub identifies the
//! receiver from the round-trip arrival time.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::EveLogEntry;
use crate::error::{Error, Result};
use crate::optics_bench::{sample_pulse, AliceChoice, BobSetting, PulseRecord};
use crate::protocol::{analyze_records, AlarmReport, SessionParams, SiftResult};
use crate::util::{sample_index, stream_rng, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Leaf {
    pub id: u32,
    pub round_trip_bins: u64,
    pub splitter_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Topology {
    pub leaves: Vec<Leaf>,
    pub timing_resolution_bins: u64,
}

impl Topology {
    /// Splitter weights as a probability distribution.
    pub fn routing_probs(&self) -> Vec<f64> {
        let total: f64 = self.leaves.iter().map(|l| l.splitter_weight).sum();
        self.leaves
            .iter()
            .map(|l| l.splitter_weight / total)
            .collect()
    }
}

pub fn validate_topology(t: &Topology) -> Result<()> {
    if t.leaves.is_empty() {
        return Err(Error::EmptyTopology);
    }
    if t.timing_resolution_bins < 1 {
        return Err(Error::InvalidParameter(
            "timingResolutionBins must be >= 1".into(),
        ));
    }
    for leaf in &t.leaves {
        if leaf.splitter_weight < 0.0 || !leaf.splitter_weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "leaf {} has invalid splitter weight {}",
                leaf.id, leaf.splitter_weight
            )));
        }
    }
    if t.leaves.iter().map(|l| l.splitter_weight).sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter(
            "splitter weights sum to zero".into(),
        ));
    }
    for (i, a) in t.leaves.iter().enumerate() {
        for b in &t.leaves[i + 1..] {
            let separation = a.round_trip_bins.abs_diff(b.round_trip_bins);
            if separation < t.timing_resolution_bins {
                return Err(Error::DuplicateRange {
                    a: a.id,
                    b: b.id,
                    bins_a: a.round_trip_bins,
                    bins_b: b.round_trip_bins,
                    resolution: t.timing_resolution_bins,
                });
            }
        }
    }
    Ok(())
}

/// Sample the one leaf this photon reaches, proportional to splitter
/// weight.
pub fn route_pulse(t: &Topology, rng: &mut impl Rng) -> u32 {
    t.leaves[sample_index(&t.routing_probs(), rng)].id
}

/// Map an arrival delay to the leaf whose round trip owns the window
/// [roundTripBins, roundTripBins + resolution); validation guarantees
/// the windows are disjoint.
pub fn identify_receiver(arrival_bin: u64, t: &Topology) -> Option<u32> {
    t.leaves
        .iter()
        .find(|l| {
            arrival_bin >= l.round_trip_bins
                && arrival_bin < l.round_trip_bins + t.timing_resolution_bins
        })
        .map(|l| l.id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafSession {
    pub records: Vec<PulseRecord>,
    pub eve_log: Vec<EveLogEntry>,
    pub sift: SiftResult,
    pub alarms: AlarmReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSessionResult {
    pub per_leaf: BTreeMap<u32, LeafSession>,
    pub unidentified: Vec<PulseRecord>,
}

impl NetworkSessionResult {
    pub fn unidentified_count(&self) -> u64 {
        self.unidentified.len() as u64
    }

    /// All pulse records in emission order.
    pub fn all_records(&self) -> Vec<PulseRecord> {
        let mut records: Vec<PulseRecord> = self
            .per_leaf
            .values()
            .flat_map(|l| l.records.iter().copied())
            .chain(self.unidentified.iter().copied())
            .collect();
        records.sort_by_key(|r| r.index);
        records
    }
}

/// Run a one-to-any session: the hub hosts the single source/AOM kit,
/// each routed pulse visits one leaf's filter kit, and the hub assigns
/// the outcome to the leaf identified from the arrival time. Leaf
/// filter choices use independent rng streams keyed by (seed, leaf,
/// pulse).
pub fn run_network_session(params: &SessionParams, t: &Topology) -> Result<NetworkSessionResult> {
    params.validate()?;
    validate_topology(t)?;
    let mut per_leaf: BTreeMap<u32, (Vec<PulseRecord>, Vec<EveLogEntry>)> = t
        .leaves
        .iter()
        .map(|l| (l.id, (Vec::new(), Vec::new())))
        .collect();
    let mut unidentified = Vec::new();
    for index in 0..params.num_pulses {
        let mut session_rng = stream_rng(params.seed, StreamDomain::Session, index);
        let routed_leaf = route_pulse(t, &mut session_rng);
        let setting = if session_rng.random::<f64>() < params.bob_on_prob {
            BobSetting::AomOn
        } else {
            BobSetting::AomOff
        };
        let mut leaf_rng = stream_rng(params.seed, StreamDomain::Leaf(routed_leaf), index);
        let choice = AliceChoice::ALL[sample_index(&params.alice_choice_probs, &mut leaf_rng)];
        let mut pulse_rng = stream_rng(params.seed, StreamDomain::Pulse, index);
        let (mut record, log) = sample_pulse(
            index,
            choice,
            setting,
            &params.bob,
            &params.alice,
            &params.channel,
            &params.eve,
            &mut pulse_rng,
        )?;
        let leaf = t.leaves.iter().find(|l| l.id == routed_leaf).unwrap();
        record.leaf = Some(routed_leaf);
        record.return_bin = record.emit_bin + leaf.round_trip_bins;
        match identify_receiver(record.return_bin - record.emit_bin, t) {
            Some(id) => {
                let slot = per_leaf.get_mut(&id).unwrap();
                slot.0.push(record);
                slot.1.push(log);
            }
            None => unidentified.push(record),
        }
    }
    let mut result = BTreeMap::new();
    for (id, (records, eve_log)) in per_leaf {
        let (sift, alarms) = analyze_records(params, &records, id as u64 + 1)?;
        result.insert(
            id,
            LeafSession {
                records,
                eve_log,
                sift,
                alarms,
            },
        );
    }
    Ok(NetworkSessionResult {
        per_leaf: result,
        unidentified,
    })
}
