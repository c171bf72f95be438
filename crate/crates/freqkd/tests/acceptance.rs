//! End-to-end acceptance suite: one test per criterion, each printing a
//! single PASS line when it holds (run with `--nocapture` to see them).

use freqkd::adversary::{AttackLocation, EveStrategy};
use freqkd::network::{run_network_session, Leaf, Topology};
use freqkd::optics_bench::{
    canonical_table, reflected_mean_photons, round_trip_distribution, AliceChoice, AliceKitConfig,
    BobKitConfig, BobSetting, ChannelConfig, SourceModel,
};
use freqkd::protocol::{analyze_records, run_session, SessionParams};
use freqkd::report::{render_simulate_summary, render_transcript};
use freqkd::util::{poisson, stream_rng, StreamDomain};

fn ideal_params(num_pulses: u64, seed: u64) -> SessionParams {
    SessionParams {
        num_pulses,
        seed,
        bob: BobKitConfig {
            source: SourceModel::SinglePhoton,
            ..BobKitConfig::default()
        },
        ..SessionParams::default()
    }
}

fn forced(params: SessionParams, choice: AliceChoice, setting: BobSetting) -> SessionParams {
    let mut probs = [0.0; 3];
    probs[AliceChoice::ALL.iter().position(|&c| c == choice).unwrap()] = 1.0;
    SessionParams {
        alice_choice_probs: probs,
        bob_on_prob: if setting == BobSetting::AomOn {
            1.0
        } else {
            0.0
        },
        ..params
    }
}

#[test]
fn criterion_1_canonical_outcome_table() {
    let start = std::time::Instant::now();
    let p = ideal_params(1, 0);
    for (choice, setting, expect) in canonical_table() {
        let d = round_trip_distribution(
            choice,
            setting,
            &p.bob,
            &p.alice,
            &p.channel,
            &EveStrategy::None,
        )
        .unwrap();
        assert!(
            (d.p_d1 - expect[0]).abs() <= 1e-12,
            "{choice:?} {setting:?} pD1 {}",
            d.p_d1
        );
        assert!(
            (d.p_d2 - expect[1]).abs() <= 1e-12,
            "{choice:?} {setting:?} pD2 {}",
            d.p_d2
        );
        assert!(
            (d.p_none - expect[2]).abs() <= 1e-12,
            "{choice:?} {setting:?} pNone {}",
            d.p_none
        );
    }
    assert!(
        start.elapsed().as_secs_f64() < 1.0,
        "table took {:?}",
        start.elapsed()
    );
    println!("PASS criterion 1: canonical outcome table exact to 1e-12 for all six rows");
}

#[test]
fn criterion_2_monte_carlo_agreement() {
    let start = std::time::Instant::now();
    let n = 100_000u64;
    for (row, (choice, setting, expect)) in canonical_table().into_iter().enumerate() {
        let p = forced(ideal_params(n, 20 + row as u64), choice, setting);
        let t = run_session(&p).unwrap();
        let mut counts = [0u64; 3]; // D1, D2, none
        for r in &t.records {
            match r.click {
                freqkd::mode_engine::ClickOutcome::D1 => counts[0] += 1,
                freqkd::mode_engine::ClickOutcome::D2 => counts[1] += 1,
                freqkd::mode_engine::ClickOutcome::None => counts[2] += 1,
                freqkd::mode_engine::ClickOutcome::Double => {
                    panic!("double click with an ideal single-photon source")
                }
            }
        }
        for (got, want) in counts.iter().zip(expect) {
            let sigma = (n as f64 * want * (1.0 - want)).sqrt();
            let diff = (*got as f64 - n as f64 * want).abs();
            assert!(
                diff <= 4.0 * sigma,
                "{choice:?} {setting:?}: count {got} vs expected {} (4σ = {})",
                n as f64 * want,
                4.0 * sigma
            );
        }
    }
    assert!(
        start.elapsed().as_secs_f64() < 10.0,
        "took {:?}",
        start.elapsed()
    );
    println!("PASS criterion 2: 10^5-pulse Monte Carlo within 4 sigma of the table, all rows");
}

#[test]
fn criterion_3_clean_run_security() {
    let n = 100_000u64;
    let p = ideal_params(n, 31);
    let t = run_session(&p).unwrap();
    let (sift, alarms) = analyze_records(&p, &t.records, 0).unwrap();
    assert_eq!(sift.group1_d2, 0, "ideal run produced group-1 D2 clicks");
    assert!(!alarms.qber.empty_key);
    assert_eq!(alarms.qber.value, 0.0, "ideal run has nonzero QBER");
    let sifted = sift.key_len() + alarms.qber.disclosed as u64;
    let mean = n as f64 / 6.0;
    let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
    assert!(
        (sifted as f64 - mean).abs() <= 4.0 * sigma,
        "sifted key {sifted} vs expected {mean} (4σ = {})",
        4.0 * sigma
    );
    println!("PASS criterion 3: clean run has zero D2, zero QBER, key fraction ~ 1/6");
}

#[test]
fn criterion_4_eavesdropper_detection() {
    let n = 100_000u64;
    let p = SessionParams {
        eve: EveStrategy::InterceptResendFreq {
            location: AttackLocation::Return,
            probability: 1.0,
        },
        ..ideal_params(n, 41)
    };
    let t = run_session(&p).unwrap();
    let (sift, alarms) = analyze_records(&p, &t.records, 0).unwrap();
    let g1 = sift.group1_total();
    assert!(g1 >= 16_000, "only {g1} group-1 clicks");
    let frac = sift.group1_d2 as f64 / g1 as f64;
    assert!((frac - 0.50).abs() <= 0.02, "group-1 D2 fraction {frac}");
    assert!(alarms.interference.alarm, "interference alarm did not fire");
    assert_eq!(
        sift.key_alice, sift.key_bob,
        "group-2 keys differ under frequency intercept"
    );
    assert_eq!(
        alarms.qber.value, 0.0,
        "group-2 QBER should be exactly zero"
    );
    println!(
        "PASS criterion 4: full intercept-resend gives D2 fraction {frac:.4}, alarm fires, key QBER 0"
    );
}

#[test]
fn criterion_5_weak_pulse_statistics() {
    let n = 100_000u64;
    let p = forced(
        SessionParams {
            num_pulses: n,
            seed: 51,
            bob: BobKitConfig {
                source: SourceModel::WeakCoherent { mean: 0.1 },
                ..BobKitConfig::default()
            },
            ..SessionParams::default()
        },
        AliceChoice::NoFilter,
        BobSetting::AomOn,
    );
    let t = run_session(&p).unwrap();
    let clicks = t
        .records
        .iter()
        .filter(|r| r.click != freqkd::mode_engine::ClickOutcome::None)
        .count() as f64;
    let want = 1.0 - (-0.1f64).exp();
    let sigma = (n as f64 * want * (1.0 - want)).sqrt();
    assert!(
        (clicks - n as f64 * want).abs() <= 4.0 * sigma,
        "clicks {clicks} vs expected {} (4σ = {})",
        n as f64 * want,
        4.0 * sigma
    );
    println!(
        "PASS criterion 5: weak pulses (mu = 0.1) click at rate {:.4} ~ 1 - e^-0.1 = {want:.4}",
        clicks / n as f64
    );
}

/// Sampled photon counts an in-line intensity eavesdropper collects from
/// the reflected pulses of one round type.
fn reflected_samples(n: u64, mean: f64, seed_index: u64) -> (f64, f64, u64) {
    let mut rng = stream_rng(0x615, StreamDomain::Pulse, seed_index);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let c = poisson(mean, &mut rng) as f64;
        sum += c;
        sum_sq += c * c;
    }
    (sum, sum_sq, n)
}

fn two_sample_z(a: (f64, f64, u64), b: (f64, f64, u64)) -> f64 {
    let (ma, va, na) = (
        a.0 / a.2 as f64,
        a.1 / a.2 as f64 - (a.0 / a.2 as f64).powi(2),
        a.2,
    );
    let (mb, vb, nb) = (
        b.0 / b.2 as f64,
        b.1 / b.2 as f64 - (b.0 / b.2 as f64).powi(2),
        b.2,
    );
    (ma - mb).abs() / (va / na as f64 + vb / nb as f64).sqrt()
}

#[test]
fn criterion_6_intensity_side_channel_and_countermeasure() {
    let bob = BobKitConfig {
        source: SourceModel::WeakCoherent { mean: 0.1 },
        ..BobKitConfig::default()
    };
    let ch = ChannelConfig::default();
    let t_f = 0.5f64; // t_F^2 = 0.25

    // Attenuator off: no-filter rounds reflect brighter pulses. The
    // filter is crossed twice in amplitude (t_F^4 in intensity) and
    // absorbs one of the two equal spectral components, so the analytic
    // ratio is 2/t_F^4 = 32, comfortably past the two-pass factor 16.
    let off = AliceKitConfig {
        filter_amp_transmittance: t_f,
        attenuator_enabled: false,
        ..AliceKitConfig::default()
    };
    let bright = reflected_mean_photons(AliceChoice::NoFilter, &bob, &off, &ch);
    let dim = reflected_mean_photons(AliceChoice::FilterOmega, &bob, &off, &ch);
    let ratio = bright / dim;
    assert!(
        ratio >= 16.0,
        "intensity ratio {ratio} below the two-pass factor"
    );
    assert!(
        (ratio - 32.0).abs() <= 1e-9,
        "analytic ratio {ratio}, expected 32"
    );

    // 10^4 pulses, one third no-filter: 5 sigma two-sample mean test
    // must detect the difference.
    let n_bright = 3_333u64;
    let n_dim = 6_667u64;
    let z_off = two_sample_z(
        reflected_samples(n_bright, bright, 0),
        reflected_samples(n_dim, dim, 1),
    );
    assert!(z_off > 5.0, "side channel not detected: z = {z_off}");

    // Attenuator on: analytic means equal to 1e-12 and the same test
    // stays quiet at 3 sigma.
    let on = AliceKitConfig {
        attenuator_enabled: true,
        ..off
    };
    let bright_on = reflected_mean_photons(AliceChoice::NoFilter, &bob, &on, &ch);
    let dim_on = reflected_mean_photons(AliceChoice::FilterOmega, &bob, &on, &ch);
    assert!(
        (bright_on - dim_on).abs() <= 1e-12,
        "attenuated means differ: {bright_on} vs {dim_on}"
    );
    let z_on = two_sample_z(
        reflected_samples(n_bright, bright_on, 2),
        reflected_samples(n_dim, dim_on, 3),
    );
    assert!(
        z_on < 3.0,
        "attenuated pulses still distinguishable: z = {z_on}"
    );
    println!(
        "PASS criterion 6: intensity leak ratio {ratio:.1} detected at z = {z_off:.1}; attenuator equalizes (z = {z_on:.2})"
    );
}

#[test]
fn criterion_7_strong_probe_alarm() {
    let base = SessionParams {
        alice: AliceKitConfig {
            tap_ratio: 0.5,
            ..AliceKitConfig::default()
        },
        ..SessionParams::default()
    };

    let mut probe_alarms = 0;
    for seed in 0..100 {
        let p = SessionParams {
            num_pulses: 300,
            seed: 700 + seed,
            eve: EveStrategy::StrongProbe {
                mean_photons: 100.0,
            },
            ..base
        };
        let t = run_session(&p).unwrap();
        let (_, alarms) = analyze_records(&p, &t.records, 0).unwrap();
        probe_alarms += u32::from(alarms.intensity.alarm);
    }
    assert!(
        probe_alarms >= 99,
        "probe alarm fired in only {probe_alarms}/100 runs"
    );

    let mut false_alarms = 0;
    for seed in 0..100 {
        let p = SessionParams {
            num_pulses: 2_000,
            seed: 900 + seed,
            ..base
        };
        let t = run_session(&p).unwrap();
        let (_, alarms) = analyze_records(&p, &t.records, 0).unwrap();
        false_alarms += u32::from(alarms.intensity.alarm);
    }
    assert!(
        false_alarms <= 1,
        "{false_alarms}/100 clean runs raised the intensity alarm"
    );
    println!(
        "PASS criterion 7: strong probe alarm in {probe_alarms}/100 probed runs, {false_alarms}/100 clean"
    );
}

#[test]
fn criterion_8_network() {
    let topology = Topology {
        leaves: (0..8)
            .map(|i| Leaf {
                id: i,
                round_trip_bins: 10 + 10 * i as u64,
                splitter_weight: 1.0,
            })
            .collect(),
        timing_resolution_bins: 5,
    };
    let n = 480_000u64;
    let p = ideal_params(n, 81);
    let result = run_network_session(&p, &topology).unwrap();
    assert_eq!(result.unidentified_count(), 0);
    assert_eq!(result.per_leaf.len(), 8);
    // Per leaf: 1/8 routing x 2/3 filter rounds x 1/2 AOM off x 1/2
    // click probability = 1/48 of all pulses ~ 10^4.
    let key_p = 1.0 / 48.0;
    let sigma = (n as f64 * key_p * (1.0 - key_p)).sqrt();
    for (id, leaf) in &result.per_leaf {
        let sifted = leaf.sift.key_len() + leaf.alarms.qber.disclosed as u64;
        assert!(
            (sifted as f64 - 10_000.0).abs() <= 4.0 * sigma,
            "leaf {id} key length {sifted} (4σ = {})",
            4.0 * sigma
        );
        assert_eq!(
            leaf.sift.key_alice, leaf.sift.key_bob,
            "leaf {id} keys disagree"
        );
        assert!(!leaf.alarms.any_alarm(), "leaf {id} false alarm");
    }

    let attacked = SessionParams {
        eve: EveStrategy::InterceptResendFreq {
            location: AttackLocation::Return,
            probability: 1.0,
        },
        ..ideal_params(120_000, 82)
    };
    let attacked_result = run_network_session(&attacked, &topology).unwrap();
    for (id, leaf) in &attacked_result.per_leaf {
        assert!(
            leaf.alarms.interference.alarm,
            "leaf {id} missed the trunk intercept"
        );
    }
    println!(
        "PASS criterion 8: 8-leaf network, 0 unidentified, per-leaf keys ~10^4 and bitwise equal; trunk intercept fires all 8 alarms"
    );
}

#[test]
fn criterion_9_determinism() {
    let p = SessionParams {
        num_pulses: 20_000,
        seed: 91,
        eve: EveStrategy::InterceptResendFreq {
            location: AttackLocation::Both,
            probability: 0.3,
        },
        ..SessionParams::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let t = run_session(&p).unwrap();
        let (sift, alarms) = analyze_records(&p, &t.records, 0).unwrap();
        let transcript_path = dir.path().join(format!("transcript_{run}.csv"));
        let summary_path = dir.path().join(format!("summary_{run}.txt"));
        std::fs::write(&transcript_path, render_transcript(&t.records)).unwrap();
        std::fs::write(
            &summary_path,
            render_simulate_summary(&p, &t.records, &sift, &alarms),
        )
        .unwrap();
        files.push((
            std::fs::read(&transcript_path).unwrap(),
            std::fs::read(&summary_path).unwrap(),
        ));
    }
    assert_eq!(
        files[0].0, files[1].0,
        "transcript files differ between identical runs"
    );
    assert_eq!(
        files[0].1, files[1].1,
        "summary files differ between identical runs"
    );
    println!(
        "PASS criterion 9: identical config and seed give byte-identical transcript and summary"
    );
}
