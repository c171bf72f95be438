//! Command-line front end: `simulate`, `table`, `network`, `selftest`.
//!
//! Exit codes: 0 clean run, 2 run completed but an alarm fired, 1 error.

use std::env;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::config::{load_config, parse_eve_spec, RunConfig};
use crate::error::{Error, Result};
use crate::mode_engine::{
    coupler_map, DetectorModel, FrequencyBin, ModeLabel, PathId, Polarization, PureState,
};
use crate::network::{identify_receiver, run_network_session, Leaf, Topology};
use crate::optics_bench::{
    canonical_table, round_trip_distribution, round_trip_distribution_with_offset, AliceChoice,
    AliceKitConfig, BobKitConfig, BobSetting, ChannelConfig, SourceModel,
};
use crate::protocol::{analyze_records, run_session, SessionParams};
use crate::report::{render_network_summary, render_simulate_summary, render_transcript};
use crate::util::{stream_rng, StreamDomain};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FREQKD_OUT_DIR";

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ALARM: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "freqkd",
    about = "Simulator and protocol harness for frequency-coded plug-and-play QKD",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override the rng seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of pulses from the config.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Eavesdropper spec: none | intercept:<forward|return|both>:<p> |
    /// tap:<r> | probe:<mu>.
    #[arg(long)]
    pub eve: Option<String>,
    /// Output directory for transcript.csv and summary.txt
    /// (default: $FREQKD_OUT_DIR, else the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one point-to-point key-exchange session.
    Simulate {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the exact outcome table for all six (choice, setting)
    /// combinations.
    Table {
        /// TOML run configuration (defaults used when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a one-to-any branch-network session (config must contain a
    /// [topology] table).
    Network {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run built-in consistency checks and report PASS/FAIL per check.
    Selftest,
}

fn apply_overrides(params: &mut SessionParams, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        params.seed = seed;
    }
    if let Some(pulses) = o.pulses {
        params.num_pulses = pulses;
    }
    if let Some(spec) = &o.eve {
        params.eve = parse_eve_spec(spec)?;
    }
    Ok(())
}

fn resolve_out_dir(o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_outputs(out_dir: &Path, transcript: &str, summary: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("transcript.csv"), transcript)?;
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    Ok(())
}

pub fn cmd_simulate(config: &Path, overrides: &Overrides) -> Result<i32> {
    let RunConfig { mut session, .. } = load_config(config)?;
    apply_overrides(&mut session, overrides)?;
    let transcript = run_session(&session)?;
    let (sift, alarms) = analyze_records(&session, &transcript.records, 0)?;
    let summary = render_simulate_summary(&session, &transcript.records, &sift, &alarms);
    let out_dir = resolve_out_dir(overrides);
    write_outputs(&out_dir, &render_transcript(&transcript.records), &summary)?;
    print!("{summary}");
    Ok(if alarms.any_alarm() {
        EXIT_ALARM
    } else {
        EXIT_CLEAN
    })
}

pub fn cmd_network(config: &Path, overrides: &Overrides) -> Result<i32> {
    let RunConfig {
        mut session,
        topology,
    } = load_config(config)?;
    let topology =
        topology.ok_or_else(|| Error::Config("network mode requires a [topology] table".into()))?;
    apply_overrides(&mut session, overrides)?;
    let result = run_network_session(&session, &topology)?;
    let summary = render_network_summary(&session, &topology, &result);
    let out_dir = resolve_out_dir(overrides);
    write_outputs(
        &out_dir,
        &render_transcript(&result.all_records()),
        &summary,
    )?;
    print!("{summary}");
    let any_alarm = result.per_leaf.values().any(|l| l.alarms.any_alarm());
    Ok(if any_alarm { EXIT_ALARM } else { EXIT_CLEAN })
}

fn choice_name(c: AliceChoice) -> &'static str {
    match c {
        AliceChoice::NoFilter => "noFilter",
        AliceChoice::FilterOmega => "filterOmega",
        AliceChoice::FilterOmegaDelta => "filterOmegaDelta",
    }
}

fn setting_name(s: BobSetting) -> &'static str {
    match s {
        BobSetting::AomOn => "aomOn",
        BobSetting::AomOff => "aomOff",
    }
}

/// Exact per-photon outcome table for the configured kit, one line per
/// (choice, setting) combination.
pub fn render_table(params: &SessionParams) -> Result<String> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:<7} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "choice", "setting", "pD1", "pD2", "pNone", "pDouble", "d3Expected"
    );
    for choice in AliceChoice::ALL {
        for setting in BobSetting::ALL {
            let d = round_trip_distribution(
                choice,
                setting,
                &params.bob,
                &params.alice,
                &params.channel,
                &params.eve,
            )?;
            let _ = writeln!(
                out,
                "{:<18} {:<7} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>12.6}",
                choice_name(choice),
                setting_name(setting),
                d.p_d1,
                d.p_d2,
                d.p_none,
                d.p_double,
                d.d3_expected,
            );
        }
    }
    Ok(out)
}

pub fn cmd_table(config: Option<&Path>) -> Result<i32> {
    let session = match config {
        Some(path) => load_config(path)?.session,
        None => SessionParams::default(),
    };
    session.validate()?;
    print!("{}", render_table(&session)?);
    Ok(EXIT_CLEAN)
}

fn ideal_kit() -> (BobKitConfig, AliceKitConfig, ChannelConfig) {
    (
        BobKitConfig {
            source: SourceModel::SinglePhoton,
            ..BobKitConfig::default()
        },
        AliceKitConfig::default(),
        ChannelConfig::default(),
    )
}

fn check_canonical_table() -> std::result::Result<(), String> {
    let (bob, alice, ch) = ideal_kit();
    for (choice, setting, expect) in canonical_table() {
        let d = round_trip_distribution(
            choice,
            setting,
            &bob,
            &alice,
            &ch,
            &crate::adversary::EveStrategy::None,
        )
        .map_err(|e| e.to_string())?;
        for (got, want, name) in [
            (d.p_d1, expect[0], "pD1"),
            (d.p_d2, expect[1], "pD2"),
            (d.p_none, expect[2], "pNone"),
        ] {
            if (got - want).abs() > 1e-12 {
                return Err(format!(
                    "({:?},{:?}) {name}: got {got}, want {want}",
                    choice, setting
                ));
            }
        }
    }
    Ok(())
}

/// Inject a π phase error at the return coupler and require the
/// canonical-table check to notice; proves the check has teeth.
fn check_phase_hook() -> std::result::Result<(), String> {
    let (bob, alice, ch) = ideal_kit();
    let d = round_trip_distribution_with_offset(
        AliceChoice::NoFilter,
        BobSetting::AomOn,
        &bob,
        &alice,
        &ch,
        &crate::adversary::EveStrategy::None,
        std::f64::consts::PI,
    )
    .map_err(|e| e.to_string())?;
    if (d.p_d1 - 1.0).abs() <= 1e-12 {
        return Err("π phase offset left the table unchanged".into());
    }
    if (d.p_d2 - 1.0).abs() > 1e-12 {
        return Err(format!(
            "π phase offset should route all mass to D2, got pD2 {}",
            d.p_d2
        ));
    }
    Ok(())
}

fn check_coupler_unitarity() -> std::result::Result<(), String> {
    let mut rng = stream_rng(0xC0FFEE, StreamDomain::Session, 0);
    use rand::Rng;
    let m = coupler_map(
        PathId::ShortArm,
        PathId::LongArm,
        PathId::Det1Port,
        PathId::Det2Port,
        0.7,
    );
    for trial in 0..50 {
        let mut pairs = Vec::new();
        for freq in [FrequencyBin::Base, FrequencyBin::Shifted] {
            for path in [PathId::ShortArm, PathId::LongArm] {
                let label = ModeLabel {
                    freq,
                    path,
                    time: 0,
                    pol: Polarization::H,
                };
                let amp = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                pairs.push((label, amp));
            }
        }
        let s = PureState::from_amplitudes(pairs);
        let out = m.apply(&s);
        if (out.norm_sqr() - s.norm_sqr()).abs() > 1e-12 {
            return Err(format!(
                "trial {trial}: norm {} -> {}",
                s.norm_sqr(),
                out.norm_sqr()
            ));
        }
    }
    Ok(())
}

/// With heavy injected dark counts the outcome probabilities must still
/// partition to 1.
fn check_outcome_partition() -> std::result::Result<(), String> {
    let (mut bob, alice, ch) = ideal_kit();
    bob.det_d1 = DetectorModel {
        efficiency: 0.8,
        dark: 0.5,
    };
    bob.det_d2 = DetectorModel {
        efficiency: 0.6,
        dark: 0.5,
    };
    for choice in AliceChoice::ALL {
        for setting in BobSetting::ALL {
            let d = round_trip_distribution(
                choice,
                setting,
                &bob,
                &alice,
                &ch,
                &crate::adversary::EveStrategy::None,
            )
            .map_err(|e| e.to_string())?;
            let total = d.p_d1 + d.p_d2 + d.p_none;
            if (total - 1.0).abs() > 1e-12 {
                return Err(format!("partition sums to {total}"));
            }
            if d.p_double > d.p_d1 + d.p_d2 + 1e-12 {
                return Err(format!("doubles {} exceed click mass", d.p_double));
            }
        }
    }
    Ok(())
}

fn check_network_bijection() -> std::result::Result<(), String> {
    let topology = Topology {
        leaves: (0..8)
            .map(|i| Leaf {
                id: i,
                round_trip_bins: 10 + 7 * i as u64,
                splitter_weight: 1.0,
            })
            .collect(),
        timing_resolution_bins: 7,
    };
    crate::network::validate_topology(&topology).map_err(|e| e.to_string())?;
    for leaf in &topology.leaves {
        for offset in 0..topology.timing_resolution_bins {
            let got = identify_receiver(leaf.round_trip_bins + offset, &topology);
            if got != Some(leaf.id) {
                return Err(format!(
                    "arrival {} identified as {:?}, want leaf {}",
                    leaf.round_trip_bins + offset,
                    got,
                    leaf.id
                ));
            }
        }
    }
    if identify_receiver(9, &topology).is_some() {
        return Err("arrival before the first window was identified".into());
    }
    Ok(())
}

type Check = fn() -> std::result::Result<(), String>;

pub fn cmd_selftest() -> Result<i32> {
    let checks: [(&str, Check); 5] = [
        ("canonical-table", check_canonical_table),
        ("phase-error-detected", check_phase_hook),
        ("coupler-unitarity", check_coupler_unitarity),
        ("outcome-partition", check_outcome_partition),
        ("network-identification", check_network_bijection),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failures == 0 {
        println!("selftest: all {} checks passed", checks.len());
        Ok(EXIT_CLEAN)
    } else {
        Err(Error::InvalidParameter(format!(
            "selftest: {failures} check(s) failed"
        )))
    }
}

/// Dispatch a parsed command, returning the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { config, overrides } => cmd_simulate(&config, &overrides),
        Command::Table { config } => cmd_table(config.as_deref()),
        Command::Network { config, overrides } => cmd_network(&config, &overrides),
        Command::Selftest => cmd_selftest(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_checks_all_pass() {
        assert!(check_canonical_table().is_ok());
        assert!(check_phase_hook().is_ok());
        assert!(check_coupler_unitarity().is_ok());
        assert!(check_outcome_partition().is_ok());
        assert!(check_network_bijection().is_ok());
    }

    #[test]
    fn table_matches_canonical_rows() {
        let params = SessionParams {
            bob: BobKitConfig {
                source: SourceModel::SinglePhoton,
                ..BobKitConfig::default()
            },
            ..SessionParams::default()
        };
        let text = render_table(&params).unwrap();
        assert!(text.contains("noFilter"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut params = SessionParams::default();
        let o = Overrides {
            seed: Some(5),
            pulses: Some(123),
            eve: Some("tap:0.1".into()),
            out: None,
        };
        apply_overrides(&mut params, &o).unwrap();
        assert_eq!(params.seed, 5);
        assert_eq!(params.num_pulses, 123);
        assert!(matches!(
            params.eve,
            crate::adversary::EveStrategy::PassiveTap { reflectivity } if reflectivity == 0.1
        ));
    }
}
