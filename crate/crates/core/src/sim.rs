//! Monte Carlo simulation of honest protocol rounds.
//!
//! Each round draws Alice's phase packet and Bob's subset, lets the photon
//! reach the subset with probability `(d/L)·η`, samples Bob's Fourier-basis
//! outcome, applies mode mismatch and dark counts, and keeps single-click
//! rounds. Every round owns its own ChaCha stream (`set_stream(round)`), so
//! results do not depend on how rounds are spread across threads.

use std::f64::consts::TAU;

use nalgebra::Complex;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::ProtocolParams;
use crate::channel::NoiseModel;
use crate::csv::fmt_num;
use crate::error::{Error, Result};
use crate::oracle::SubsetIndex;

/// Phase indices `k_j ∈ {0, …, d−1}` of Alice's `L` modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    d: u32,
    phases: Vec<u32>,
}

impl Packet {
    pub fn new(phases: Vec<u32>, d: u32) -> Result<Self> {
        if d < 2 || phases.iter().any(|&k| k >= d) {
            return Err(Error::Domain(format!(
                "phases {phases:?} must lie in [0, {d})"
            )));
        }
        Ok(Self { d, phases })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn phases(&self) -> &[u32] {
        &self.phases
    }

    /// Phase index of mode `j` (1-based).
    pub fn phase(&self, j: u32) -> u32 {
        self.phases[j as usize - 1]
    }
}

pub fn prepare_packet<R: Rng + ?Sized>(params: ProtocolParams, rng: &mut R) -> Packet {
    let d = params.d();
    Packet {
        d,
        phases: (0..params.l()).map(|_| rng.random_range(0..d)).collect(),
    }
}

/// Uniformly random `d`-subset of the `L` modes.
pub fn choose_subset<R: Rng + ?Sized>(params: ProtocolParams, rng: &mut R) -> SubsetIndex {
    let mut picked: Vec<u32> = index::sample(rng, params.l() as usize, params.d() as usize)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    picked.sort_unstable();
    SubsetIndex::from_sorted(picked)
}

/// Born-rule outcome distribution of Bob's Fourier-basis measurement on the
/// packet restricted to `subset`.
pub fn mub_probabilities(packet: &Packet, subset: &SubsetIndex) -> Vec<f64> {
    let d = subset.d();
    (0..d)
        .map(|q| {
            let amp: Complex<f64> = subset
                .modes()
                .iter()
                .enumerate()
                .map(|(n, &j)| {
                    let k = (packet.phase(j) as usize + d * d - q * n % d) % d;
                    Complex::from_polar(1.0, TAU * k as f64 / d as f64)
                })
                .sum();
            amp.norm_sqr() / (d * d) as f64
        })
        .collect()
}

/// The outcome `m` if the packet's phases on `subset` follow
/// `k_{j_n} = c + m·n (mod d)`, i.e. Bob receives a basis element.
pub fn sift_check(packet: &Packet, subset: &SubsetIndex) -> Option<u32> {
    let d = packet.d;
    let k: Vec<u32> = subset.modes().iter().map(|&j| packet.phase(j)).collect();
    let m = (k[1] + d - k[0]) % d;
    k.iter()
        .enumerate()
        .all(|(n, &kn)| kn == (k[0] + m * n as u32) % d)
        .then_some(m)
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub detected: bool,
    /// Detected, but only through a dark count.
    pub dark_triggered: bool,
    pub subset: SubsetIndex,
    /// Bob's signal outcome; `None` when no photon click was registered.
    pub m_measured: Option<u32>,
    pub m_expected: Option<u32>,
    pub sifted: bool,
    pub erroneous: bool,
}

impl RoundOutcome {
    pub const CSV_HEADER: &'static str =
        "round,detected,dark,J,m_expected,m_measured,sifted,erroneous";

    pub fn csv_row(&self, round: u64) -> String {
        let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        let subset: Vec<String> = self.subset.modes().iter().map(u32::to_string).collect();
        format!(
            "{round},{},{},{},{},{},{},{}",
            self.detected,
            self.dark_triggered,
            subset.join("-"),
            opt(self.m_expected),
            opt(self.m_measured),
            self.sifted,
            self.erroneous
        )
    }
}

fn round_rng(seed: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    rng
}

/// Simulates round number `round` of the run seeded with `seed`.
pub fn simulate_round(
    params: ProtocolParams,
    noise: &NoiseModel,
    seed: u64,
    round: u64,
) -> RoundOutcome {
    let mut rng = round_rng(seed, round);
    let d = params.d();
    let packet = prepare_packet(params, &mut rng);
    let subset = choose_subset(params, &mut rng);

    let arrive = d as f64 / params.l() as f64 * noise.eta();
    let photon_bin = (rng.random::<f64>() < arrive).then(|| {
        let probs = mub_probabilities(&packet, &subset);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut bin = d - 1;
        for (q, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                bin = q as u32;
                break;
            }
        }
        if rng.random::<f64>() < noise.e_mis() {
            // uniformly random wrong outcome
            bin = (bin + 1 + rng.random_range(0..d - 1)) % d;
        }
        bin
    });

    let mut bins = vec![false; d as usize];
    let mut dark_any = false;
    for b in bins.iter_mut() {
        if rng.random::<f64>() < noise.p_d() {
            *b = true;
            dark_any = true;
        }
    }
    if let Some(b) = photon_bin {
        bins[b as usize] = true;
    }
    let detected = bins.iter().filter(|&&b| b).count() == 1;
    let dark_triggered = detected && photon_bin.is_none() && dark_any;

    let m_expected = sift_check(&packet, &subset);
    let m_measured = if detected { photon_bin } else { None };
    let sifted = detected && m_expected.is_some();
    let erroneous = sifted && (dark_triggered || m_measured != m_expected);

    RoundOutcome {
        detected,
        dark_triggered,
        subset,
        m_measured,
        m_expected,
        sifted,
        erroneous,
    }
}

/// Tallies of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStats {
    pub rounds: u64,
    pub detected: u64,
    pub sifted: u64,
    pub errors: u64,
    /// `sifted / detected`.
    pub sift_rate: f64,
    /// `errors / sifted`.
    pub qber: f64,
    /// 95% Wilson interval on the qber.
    pub wilson_ci: (f64, f64),
}

impl SimStats {
    pub const CSV_HEADER: &'static str =
        "rounds,detected,sifted,errors,sift_rate,qber,qber_ci_low,qber_ci_high";

    fn from_counts(rounds: u64, detected: u64, sifted: u64, errors: u64) -> Self {
        let ratio = |a: u64, b: u64| if b > 0 { a as f64 / b as f64 } else { 0.0 };
        Self {
            rounds,
            detected,
            sifted,
            errors,
            sift_rate: ratio(sifted, detected),
            qber: ratio(errors, sifted),
            wilson_ci: wilson_interval(errors, sifted, Z_95),
        }
    }

    pub fn detection_fraction(&self) -> f64 {
        self.detected as f64 / self.rounds as f64
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.rounds,
            self.detected,
            self.sifted,
            self.errors,
            fmt_num(self.sift_rate),
            fmt_num(self.qber),
            fmt_num(self.wilson_ci.0),
            fmt_num(self.wilson_ci.1)
        )
    }
}

pub const Z_95: f64 = 1.959963984540054;
pub const Z_99: f64 = 2.5758293035489004;

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

const CHUNK: u64 = 4096;

/// Runs `rounds` independent rounds and tallies them.
pub fn run(params: ProtocolParams, noise: &NoiseModel, rounds: u64, seed: u64) -> Result<SimStats> {
    if rounds == 0 {
        return Err(Error::Domain("at least one round is required".into()));
    }
    let chunks = rounds.div_ceil(CHUNK);
    let (detected, sifted, errors) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = (0u64, 0u64, 0u64);
            for r in c * CHUNK..((c + 1) * CHUNK).min(rounds) {
                let o = simulate_round(params, noise, seed, r);
                t.0 += o.detected as u64;
                t.1 += o.sifted as u64;
                t.2 += o.erroneous as u64;
            }
            t
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(SimStats::from_counts(rounds, detected, sifted, errors))
}

/// Calls `sink` with every round in order, then returns the tallies.
pub fn run_with_rounds(
    params: ProtocolParams,
    noise: &NoiseModel,
    rounds: u64,
    seed: u64,
    mut sink: impl FnMut(u64, &RoundOutcome) -> Result<()>,
) -> Result<SimStats> {
    if rounds == 0 {
        return Err(Error::Domain("at least one round is required".into()));
    }
    let mut t = (0u64, 0u64, 0u64);
    for r in 0..rounds {
        let o = simulate_round(params, noise, seed, r);
        t.0 += o.detected as u64;
        t.1 += o.sifted as u64;
        t.2 += o.erroneous as u64;
        sink(r, &o)?;
    }
    Ok(SimStats::from_counts(rounds, t.0, t.1, t.2))
}
