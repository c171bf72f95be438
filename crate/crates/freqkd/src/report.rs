//! Transcript and summary files: diff-able, seed-stable structured
//! text. The summary is fully recomputable from the transcript plus the
//! echoed configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mode_engine::ClickOutcome;
use crate::network::{NetworkSessionResult, Topology};
use crate::optics_bench::{AliceChoice, BobSetting, PulseRecord};
use crate::protocol::{decoded_bit, AlarmReport, SessionParams, SiftResult};

pub const TRANSCRIPT_HEADER: &str =
    "index,choice,setting,click,d3Count,emitBin,returnBin,leafId,intendedBit,decodedBit";

fn choice_str(c: AliceChoice) -> &'static str {
    match c {
        AliceChoice::NoFilter => "noFilter",
        AliceChoice::FilterOmega => "filterOmega",
        AliceChoice::FilterOmegaDelta => "filterOmegaDelta",
    }
}

fn setting_str(s: BobSetting) -> &'static str {
    match s {
        BobSetting::AomOn => "aomOn",
        BobSetting::AomOff => "aomOff",
    }
}

fn click_str(c: ClickOutcome) -> &'static str {
    match c {
        ClickOutcome::D1 => "D1",
        ClickOutcome::D2 => "D2",
        ClickOutcome::None => "none",
        ClickOutcome::Double => "double",
    }
}

fn opt_str<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_transcript(records: &[PulseRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 48 + 64);
    out.push_str(TRANSCRIPT_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            choice_str(r.choice),
            setting_str(r.setting),
            click_str(r.click),
            r.d3_photons,
            r.emit_bin,
            r.return_bin,
            opt_str(r.leaf),
            opt_str(r.intended_bit),
            opt_str(decoded_bit(r)),
        );
    }
    out
}

pub fn write_transcript(records: &[PulseRecord], path: &Path) -> Result<()> {
    fs::write(path, render_transcript(records))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("transcript line {line}: bad {name} value {s:?}")))
}

pub fn parse_transcript(text: &str) -> Result<Vec<PulseRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRANSCRIPT_HEADER => {}
        _ => return Err(Error::Config("transcript missing header line".into())),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Config(format!(
                "transcript line {n}: expected 10 columns"
            )));
        }
        let choice = match cols[1] {
            "noFilter" => AliceChoice::NoFilter,
            "filterOmega" => AliceChoice::FilterOmega,
            "filterOmegaDelta" => AliceChoice::FilterOmegaDelta,
            other => {
                return Err(Error::Config(format!(
                    "transcript line {n}: bad choice {other:?}"
                )))
            }
        };
        let setting = match cols[2] {
            "aomOn" => BobSetting::AomOn,
            "aomOff" => BobSetting::AomOff,
            other => {
                return Err(Error::Config(format!(
                    "transcript line {n}: bad setting {other:?}"
                )))
            }
        };
        let click = match cols[3] {
            "D1" => ClickOutcome::D1,
            "D2" => ClickOutcome::D2,
            "none" => ClickOutcome::None,
            "double" => ClickOutcome::Double,
            other => {
                return Err(Error::Config(format!(
                    "transcript line {n}: bad click {other:?}"
                )))
            }
        };
        let leaf = if cols[7].is_empty() {
            None
        } else {
            Some(parse_field(cols[7], n, "leafId")?)
        };
        let intended_bit = if cols[8].is_empty() {
            None
        } else {
            Some(parse_field(cols[8], n, "intendedBit")?)
        };
        records.push(PulseRecord {
            index: parse_field(cols[0], n, "index")?,
            choice,
            setting,
            click,
            d3_photons: parse_field(cols[4], n, "d3Count")?,
            emit_bin: parse_field(cols[5], n, "emitBin")?,
            return_bin: parse_field(cols[6], n, "returnBin")?,
            leaf,
            intended_bit,
        });
    }
    Ok(records)
}

pub fn read_transcript(path: &Path) -> Result<Vec<PulseRecord>> {
    parse_transcript(&fs::read_to_string(path)?)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_bool(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}

fn push_session_stats(
    out: &mut String,
    num_pulses: u64,
    records: &[PulseRecord],
    sift: &SiftResult,
    alarms: &AlarmReport,
    prefix: &str,
) {
    let d3_total: u64 = records.iter().map(|r| r.d3_photons).sum();
    let pulses = records.len().max(1) as f64;
    let g1 = sift.group1_total();
    let g1_frac = if g1 > 0 {
        sift.group1_d2 as f64 / g1 as f64
    } else {
        0.0
    };
    let key_len = sift.key_len() + alarms.qber.disclosed as u64;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{prefix}{k}: {v}");
    };
    kv("siftedKeyLength", key_len.to_string());
    kv("remainingKeyLength", sift.key_len().to_string());
    kv(
        "keyFractionPerPulse",
        fmt_f(key_len as f64 / num_pulses as f64),
    );
    kv("group1D1", sift.group1_d1.to_string());
    kv("group1D2", sift.group1_d2.to_string());
    kv("group1D2Fraction", fmt_f(g1_frac));
    kv("group3Count", sift.group3_count.to_string());
    kv("noClickCount", sift.no_click_count.to_string());
    kv("noFilterOffCount", sift.no_filter_off_count.to_string());
    kv("doubleClickCount", sift.double_click_count.to_string());
    kv("qberSample", fmt_f(alarms.qber.value));
    kv("qberDisclosed", alarms.qber.disclosed.to_string());
    kv("qberEmptyKey", fmt_bool(alarms.qber.empty_key).to_string());
    kv(
        "interferenceAlarm",
        fmt_bool(alarms.interference.alarm).to_string(),
    );
    kv(
        "interferenceIndeterminate",
        fmt_bool(alarms.interference.indeterminate).to_string(),
    );
    kv(
        "interferenceExpectedFraction",
        fmt_f(alarms.interference.expected_fraction),
    );
    kv(
        "intensityAlarm",
        fmt_bool(alarms.intensity.alarm).to_string(),
    );
    kv("d3TotalCount", d3_total.to_string());
    kv("d3MeanPerPulse", fmt_f(d3_total as f64 / pulses));
    kv(
        "d3BaselinePerPulse",
        fmt_f(alarms.intensity.baseline_per_pulse),
    );
    kv("d3MaxWindowMean", fmt_f(alarms.intensity.max_window_mean));
}

fn push_config_echo(out: &mut String, params: &SessionParams, topology: Option<&Topology>) {
    out.push_str("-- config --\n");
    let toml = toml::to_string(params).expect("session params serialize");
    out.push_str(&toml);
    if let Some(t) = topology {
        #[derive(serde::Serialize)]
        struct Wrap<'a> {
            topology: &'a Topology,
        }
        out.push_str(&toml::to_string(&Wrap { topology: t }).expect("topology serialize"));
    }
}

/// Summary for a one-to-one session.
pub fn render_simulate_summary(
    params: &SessionParams,
    records: &[PulseRecord],
    sift: &SiftResult,
    alarms: &AlarmReport,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: simulate");
    let _ = writeln!(out, "seed: {}", params.seed);
    let _ = writeln!(out, "numPulses: {}", params.num_pulses);
    push_session_stats(&mut out, params.num_pulses, records, sift, alarms, "");
    let _ = writeln!(out, "exitCode: {}", if alarms.any_alarm() { 2 } else { 0 });
    push_config_echo(&mut out, params, None);
    out
}

/// Summary for a branch-network session, with a per-leaf breakdown.
pub fn render_network_summary(
    params: &SessionParams,
    topology: &Topology,
    result: &NetworkSessionResult,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: network");
    let _ = writeln!(out, "seed: {}", params.seed);
    let _ = writeln!(out, "numPulses: {}", params.num_pulses);
    let _ = writeln!(out, "leaves: {}", topology.leaves.len());
    let _ = writeln!(out, "unidentifiedCount: {}", result.unidentified_count());
    let any_alarm = result.per_leaf.values().any(|l| l.alarms.any_alarm());
    let _ = writeln!(out, "anyLeafAlarm: {}", fmt_bool(any_alarm));
    for (id, leaf) in &result.per_leaf {
        let prefix = format!("leaf.{id}.");
        let _ = writeln!(out, "{prefix}pulseCount: {}", leaf.records.len());
        push_session_stats(
            &mut out,
            params.num_pulses,
            &leaf.records,
            &leaf.sift,
            &leaf.alarms,
            &prefix,
        );
    }
    let _ = writeln!(out, "exitCode: {}", if any_alarm { 2 } else { 0 });
    push_config_echo(&mut out, params, Some(topology));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics_bench::{BobKitConfig, SourceModel};
    use crate::protocol::{analyze_records, run_session};

    fn params() -> SessionParams {
        SessionParams {
            num_pulses: 400,
            seed: 99,
            bob: BobKitConfig {
                source: SourceModel::SinglePhoton,
                ..BobKitConfig::default()
            },
            ..SessionParams::default()
        }
    }

    #[test]
    fn transcript_round_trips() {
        let p = params();
        let t = run_session(&p).unwrap();
        let text = render_transcript(&t.records);
        let parsed = parse_transcript(&text).unwrap();
        assert_eq!(parsed, t.records);
        assert_eq!(render_transcript(&parsed), text);
    }

    #[test]
    fn summary_recomputable_from_transcript() {
        let p = params();
        let t = run_session(&p).unwrap();
        let (sift, alarms) = analyze_records(&p, &t.records, 0).unwrap();
        let original = render_simulate_summary(&p, &t.records, &sift, &alarms);

        let parsed = parse_transcript(&render_transcript(&t.records)).unwrap();
        let (sift2, alarms2) = analyze_records(&p, &parsed, 0).unwrap();
        let regenerated = render_simulate_summary(&p, &parsed, &sift2, &alarms2);
        assert_eq!(original, regenerated);
    }

    #[test]
    fn malformed_transcripts_rejected() {
        assert!(parse_transcript("not a header\n").is_err());
        let bad = format!("{TRANSCRIPT_HEADER}\n0,noFilter,aomOn,D1,0,0\n");
        assert!(parse_transcript(&bad).is_err());
        let bad = format!("{TRANSCRIPT_HEADER}\n0,noFilter,aomOn,D9,0,0,1,,,\n");
        assert!(parse_transcript(&bad).is_err());
    }
}
