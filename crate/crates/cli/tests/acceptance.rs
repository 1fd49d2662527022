//! Acceptance suite. Each test prints one `acceptance N: PASS|FAIL` line.
//!
//! Run with `cargo test -p hdrrdps-cli --test acceptance -- --nocapture`.

use std::process::Command;
use std::time::Instant;

use hdrrdps::bounds::{
    error_lower_bound, rate_monitor, rate_no_monitor, threshold, AttackSplit, ProtocolParams,
};
use hdrrdps::channel::{default_loss_grid, packet_yield, qber, rate_curve, NoiseModel};
use hdrrdps::math::{shannon_d, zeta_d, WeightVector};
use hdrrdps::oracle::{random_attack, verify, SubsetIndex};
use hdrrdps::sim::{run, sift_check, wilson_interval, Packet, Z_99};
use hdrrdps_cli::trial_diag_bias;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(l: u32, d: u32) -> ProtocolParams {
    ProtocolParams::new(l, d).unwrap()
}

fn report(n: u32, title: &str, failures: &[String], detail: String) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("acceptance {n}: {verdict} {title} ({detail})");
    for f in failures.iter().take(10) {
        println!("  {f}");
    }
    assert!(
        failures.is_empty(),
        "acceptance {n} failed: {} violation(s)",
        failures.len()
    );
}

#[test]
fn criterion_1_attack_bounds_hold_for_random_attacks() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;
    for (l, d) in [(3, 2), (4, 2), (4, 3), (5, 3)] {
        for seed in 0..1000u64 {
            let attack = random_attack(l as usize, seed, trial_diag_bias(seed)).unwrap();
            let r = verify(&attack, p(l, d), 1e-9).unwrap();
            checked += 1;
            if !r.pass {
                failures.push(format!("L={l} d={d} seed={seed}: {}", r.csv_row()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 300.0 {
        failures.push(format!("runtime {secs:.1}s over the 300s budget"));
    }
    report(
        1,
        "collective-attack bound verification",
        &failures,
        format!("{checked} attacks, {secs:.1}s"),
    );
}

#[test]
fn criterion_2_qubit_error_bound_reduction() {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for l in 3..=64u32 {
        for i in 0..=40 {
            let x1 = i as f64 / 40.0;
            let split = AttackSplit::from_x1(x1).unwrap();
            let (x1, x2) = (split.x1(), split.x2());
            let expect = 0.5 * ((l as f64 - 2.0) / (l as f64 - 1.0)) * x2 / (x1 + x2);
            let got = error_lower_bound(p(l, 2), split);
            worst = worst.max((got - expect).abs());
            if got != expect {
                failures.push(format!("L={l} x1={x1}: {got} vs {expect}"));
            }
        }
    }
    report(
        2,
        "d=2 reduction",
        &failures,
        format!("max |diff| {worst:e}"),
    );
}

#[test]
fn criterion_3_null_error_rates() {
    let mut failures = Vec::new();
    for d in 2..64u32 {
        let log_d = (d as f64).log2();
        let mut prev: Option<f64> = None;
        for l in d + 1..=64 {
            let m = rate_monitor(p(l, d), 0.0).unwrap().rate_bits;
            if m != log_d {
                failures.push(format!("L={l} d={d}: monitored rate {m} != log2 d"));
            }
            let r = rate_no_monitor(p(l, d), 0.0, 1e-12).unwrap().rate_bits;
            if !(r > 0.0 && r < log_d) {
                failures.push(format!(
                    "L={l} d={d}: unmonitored rate {r} outside (0, log2 d)"
                ));
            }
            if let Some(q) = prev {
                if r < q - 1e-9 {
                    failures.push(format!("L={l} d={d}: unmonitored rate fell {q} -> {r}"));
                }
            }
            prev = Some(r);
        }
    }
    report(3, "null-error rates", &failures, "2 <= d < L <= 64".into());
}

#[test]
fn criterion_4_threshold_shape() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_refine = 0.0f64;
    for d in 2..=4u32 {
        let mut prev: Option<(f64, f64)> = None;
        for l in d + 1..=64 {
            let off = threshold(p(l, d), false, 1e-9).value;
            let on = threshold(p(l, d), true, 1e-9).value;
            if on < off {
                failures.push(format!("L={l} d={d}: monitored {on} < unmonitored {off}"));
            }
            if let Some((po, pn)) = prev {
                if off <= po || on <= pn {
                    failures.push(format!(
                        "L={l} d={d}: no increase ({po} -> {off}, {pn} -> {on})"
                    ));
                }
            }
            prev = Some((off, on));
            for (m, fine) in [(false, off), (true, on)] {
                let coarse = threshold(p(l, d), m, 1e-6).value;
                worst_refine = worst_refine.max((coarse - fine).abs());
                if (coarse - fine).abs() > 2e-6 {
                    failures.push(format!("L={l} d={d} monitored={m}: {coarse} vs {fine}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 120.0 {
        failures.push(format!("runtime {secs:.1}s over the 120s budget"));
    }
    report(
        4,
        "threshold shape",
        &failures,
        format!("refinement drift {worst_refine:e}, {secs:.1}s"),
    );
}

/// Fraction of all phase tuples on one subset that sift, by enumeration.
fn enumerated_sift_probability(d: u32) -> f64 {
    let subset = SubsetIndex::new((1..=d).collect(), d + 1).unwrap();
    let total = d.pow(d);
    let kept = (0..total)
        .filter(|&code| {
            let mut phases: Vec<u32> = (0..d).map(|i| code / d.pow(i) % d).collect();
            phases.push(0);
            sift_check(&Packet::new(phases, d).unwrap(), &subset).is_some()
        })
        .count();
    kept as f64 / total as f64
}

#[test]
fn criterion_5_monte_carlo_matches_closed_form() {
    let start = Instant::now();
    let rounds = 1_000_000u64;
    let seed = 20_240_601u64;
    let mut failures = Vec::new();
    for (l, d) in [(8u32, 3u32), (16, 4)] {
        for loss in [0.0, 10.0, 20.0] {
            let noise = NoiseModel::new(loss, 1e-4, 0.05).unwrap();
            let stats = run(p(l, d), &noise, rounds, seed).unwrap();
            let y = packet_yield(p(l, d), &noise);
            let e = qber(p(l, d), &noise).unwrap();
            let (ylo, yhi) = wilson_interval(stats.detected, rounds, Z_99);
            let (elo, ehi) = wilson_interval(stats.errors, stats.sifted, Z_99);
            if !(ylo..=yhi).contains(&y) {
                failures.push(format!(
                    "L={l} d={d} loss={loss}: Y={y} outside [{ylo}, {yhi}]"
                ));
            }
            if !(elo..=ehi).contains(&e) {
                failures.push(format!(
                    "L={l} d={d} loss={loss}: E={e} outside [{elo}, {ehi}]"
                ));
            }
        }
        let noiseless = run(p(l, d), &NoiseModel::noiseless(), rounds, seed).unwrap();
        let expect = enumerated_sift_probability(d);
        if (expect - (d as f64).powi(2 - d as i32)).abs() > 1e-15 {
            failures.push(format!(
                "d={d}: enumeration {expect} disagrees with d^(2-d)"
            ));
        }
        let sigma = (expect * (1.0 - expect) / noiseless.detected as f64).sqrt();
        if (noiseless.sift_rate - expect).abs() > 4.0 * sigma {
            failures.push(format!(
                "L={l} d={d}: sift rate {} vs {expect} (sigma {sigma})",
                noiseless.sift_rate
            ));
        }
        if noiseless.errors != 0 {
            failures.push(format!(
                "L={l} d={d}: {} errors on a noiseless channel",
                noiseless.errors
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 180.0 {
        failures.push(format!("runtime {secs:.1}s over the 180s budget"));
    }
    report(
        5,
        "Monte Carlo vs closed form",
        &failures,
        format!("seed {seed}, {secs:.1}s"),
    );
}

#[test]
fn criterion_6_rate_vs_loss_shape() {
    let mut failures = Vec::new();
    let noise = NoiseModel::new(0.0, 1e-4, 0.05).unwrap();
    let grid = default_loss_grid();
    let at_zero: Vec<f64> = (2..=4)
        .map(|d| rate_curve(p(16, d), &noise, &[0.0], true).unwrap()[0].rate_per_sifted)
        .collect();
    if !(at_zero[0] < at_zero[1] && at_zero[1] < at_zero[2]) {
        failures.push(format!("rates at 0 dB not increasing in d: {at_zero:?}"));
    }
    for d in 2..=4 {
        for monitored in [false, true] {
            let curve = rate_curve(p(16, d), &noise, &grid, monitored).unwrap();
            for w in curve.windows(2) {
                if w[1].rate_per_sifted > w[0].rate_per_sifted
                    || w[1].rate_per_packet > w[0].rate_per_packet
                {
                    failures.push(format!(
                        "d={d} monitored={monitored}: rises at {} dB",
                        w[1].loss_db
                    ));
                }
            }
            if !curve.iter().any(|pt| pt.rate_per_sifted == 0.0) {
                failures.push(format!(
                    "d={d} monitored={monitored}: never reaches 0 by 60 dB"
                ));
            }
        }
    }
    report(
        6,
        "rate-vs-loss shape",
        &failures,
        format!("0 dB rates d=2..4 {at_zero:?}"),
    );
}

#[test]
fn criterion_7_math_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let zeta = |v: &[f64]| zeta_d(&WeightVector::new(v.to_vec()).unwrap());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    for _ in 0..2000 {
        let n = rng.random_range(2..=10);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let a = rng.random::<f64>() * 100.0;
        let t = rng.random::<f64>();

        let scaled: Vec<f64> = w.iter().map(|x| a * x).collect();
        if !close(zeta(&scaled), a * zeta(&w)) {
            failures.push(format!("homogeneity: {w:?} a={a}"));
        }

        let eq = vec![a; n];
        if !close(zeta(&eq), n as f64 * a * (n as f64).log2()) {
            failures.push(format!("equal weights: a={a} n={n}"));
        }

        let mix: Vec<f64> = w
            .iter()
            .zip(&v)
            .map(|(x, y)| t * x + (1.0 - t) * y)
            .collect();
        if zeta(&mix) < t * zeta(&w) + (1.0 - t) * zeta(&v) - 1e-9 {
            failures.push(format!("concavity: {w:?} {v:?} t={t}"));
        }

        let d = rng.random_range(2..=32u32);
        let e = rng.random::<f64>() * (d - 1) as f64 / d as f64;
        let h = shannon_d(e, d).unwrap();
        if !(-1e-9..=(d as f64).log2() + 1e-9).contains(&h) {
            failures.push(format!("shannon range: e={e} d={d} h={h}"));
        }
    }
    report(
        7,
        "math-kernel identities",
        &failures,
        "2000 random draws".into(),
    );
}

fn cli_output(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_hdrrdps"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}",
        out.status
    );
    out.stdout
}

#[test]
fn criterion_8_cli_output_is_deterministic() {
    let commands: [&[&str]; 3] = [
        &[
            "simulate", "--L", "8,16", "--d", "3,4", "--loss", "0,10", "--pd", "1e-4", "--e-mis",
            "0.05", "--rounds", "200000", "--seed", "11",
        ],
        &[
            "simulate",
            "--L",
            "6",
            "--d",
            "3",
            "--rounds",
            "2000",
            "--seed",
            "5",
            "--pd",
            "0.01",
            "--dump-rounds",
        ],
        &[
            "verify-bound",
            "--L",
            "4,5",
            "--d",
            "2,3",
            "--trials",
            "100",
            "--seed",
            "3",
        ],
    ];
    let mut failures = Vec::new();
    for args in commands {
        let reference = cli_output(args, "1");
        for threads in ["1", "2", "8"] {
            if cli_output(args, threads) != reference {
                failures.push(format!("{} differs with {threads} threads", args.join(" ")));
            }
        }
    }
    report(
        8,
        "deterministic CLI output",
        &failures,
        "3 commands x 1/2/8 threads".into(),
    );
}
