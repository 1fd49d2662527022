//! Explicit collective attacks on small instances.
//!
//! Eve's unitary acts as `U|j⟩|e₀₀⟩ = Σ_ℓ c_{jℓ} |ℓ⟩|e_{jℓ}⟩` with
//! orthonormal ancillas `|e_{jℓ}⟩` and real non-negative `c_{jℓ}`. For every
//! subset `J` Bob can pick, this module builds Eve's conditional ancilla
//! states, computes her Holevo information by diagonalization and the
//! induced error rate, and averages both over subsets weighted by yield.
//! [`verify`] then compares the averages against the closed-form bounds in
//! [`crate::bounds`].
//!
//! Mode labels are 1-based throughout, matching `j ∈ {1, …, L}`.

use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{error_lower_bound, iae_bound, AttackSplit, ProtocolParams};
use crate::error::{Error, Result};
use crate::math::{pairwise_sum, xlog2x, zeta_unchecked};

type C64 = Complex<f64>;

const ROW_NORM_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = 1e-14;

/// Largest instance [`verify`] accepts.
pub const VERIFY_MAX_L: u32 = 8;
pub const VERIFY_MAX_D: u32 = 4;

/// Coefficients `c_{jℓ}` of a collective attack: non-negative, unit rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackMatrix {
    l: usize,
    c: Vec<f64>,
}

impl AttackMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let l = rows.len();
        if rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidAttack("matrix must be square".into()));
        }
        Self::from_row_major(l, rows.into_iter().flatten().collect())
    }

    pub fn from_row_major(l: usize, c: Vec<f64>) -> Result<Self> {
        if l == 0 || c.len() != l * l {
            return Err(Error::InvalidAttack(format!(
                "expected {l}x{l} coefficients, got {}",
                c.len()
            )));
        }
        if let Some(bad) = c.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidAttack(format!(
                "coefficients must be finite and non-negative, got {bad}"
            )));
        }
        for (j, row) in c.chunks(l).enumerate() {
            let norm2: f64 = row.iter().map(|x| x * x).sum();
            if (norm2 - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::InvalidAttack(format!(
                    "row {} has squared norm {norm2}, expected 1",
                    j + 1
                )));
            }
        }
        Ok(Self { l, c })
    }

    pub fn identity(l: usize) -> Self {
        let mut c = vec![0.0; l * l];
        for i in 0..l {
            c[i * l + i] = 1.0;
        }
        Self { l, c }
    }

    /// Every mode spread evenly over all modes, `c_{jℓ} = 1/√L`.
    pub fn uniform(l: usize) -> Self {
        Self {
            l,
            c: vec![1.0 / (l as f64).sqrt(); l * l],
        }
    }

    /// Mode `j` is sent to mode `image[j-1]` (both 1-based).
    pub fn permutation(image: &[u32]) -> Result<Self> {
        let l = image.len();
        let mut seen = vec![false; l];
        let mut c = vec![0.0; l * l];
        for (j, &target) in image.iter().enumerate() {
            let t = target as usize;
            if t == 0 || t > l || seen[t - 1] {
                return Err(Error::InvalidAttack(format!(
                    "{image:?} is not a permutation"
                )));
            }
            seen[t - 1] = true;
            c[j * l + (t - 1)] = 1.0;
        }
        Ok(Self { l, c })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// `c_{jℓ}`, 1-based.
    pub fn coeff(&self, j: u32, ell: u32) -> f64 {
        self.c[(j as usize - 1) * self.l + ell as usize - 1]
    }

    fn sq(&self, j: u32, ell: u32) -> f64 {
        let v = self.coeff(j, ell);
        v * v
    }

    /// Relabels modes: the returned attack has `c'_{σ(i)σ(j)} = c_{ij}`.
    pub fn relabel(&self, sigma: &[u32]) -> Result<Self> {
        if sigma.len() != self.l {
            return Err(Error::InvalidAttack("relabeling has wrong length".into()));
        }
        Self::permutation(sigma)?;
        let l = self.l;
        let mut c = vec![0.0; l * l];
        for i in 0..l {
            for j in 0..l {
                let (si, sj) = (sigma[i] as usize - 1, sigma[j] as usize - 1);
                c[si * l + sj] = self.c[i * l + j];
            }
        }
        Ok(Self { l, c })
    }
}

/// Seeded random attack. `diag_bias` is the squared weight each row keeps on
/// its diagonal; the rest is spread over a random subset of the other modes.
/// `diag_bias = 1` gives the identity.
pub fn random_attack(l: usize, seed: u64, diag_bias: f64) -> Result<AttackMatrix> {
    if l < 3 {
        return Err(Error::InvalidAttack(format!(
            "random attacks need L >= 3, got {l}"
        )));
    }
    if !(0.0..=1.0).contains(&diag_bias) {
        return Err(Error::Domain(format!(
            "diag_bias {diag_bias} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0.0; l * l];
    for j in 0..l {
        let mut weights: Vec<f64> = (0..l)
            .map(|ell| {
                if ell == j {
                    return 0.0;
                }
                // some rows concentrate on a few targets
                let keep = rng.random::<f64>() >= 0.3;
                let u: f64 = 1.0 - rng.random::<f64>();
                if keep {
                    -u.ln()
                } else {
                    0.0
                }
            })
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            let target = (j + 1 + rng.random_range(0..l - 1)) % l;
            weights[target] = 1.0;
        }
        let total: f64 = weights.iter().sum();
        let row = &mut c[j * l..(j + 1) * l];
        for (ell, w) in weights.iter().enumerate() {
            let mass = if ell == j {
                diag_bias
            } else {
                (1.0 - diag_bias) * w / total
            };
            row[ell] = mass.sqrt();
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    AttackMatrix::from_row_major(l, c)
}

/// Bob's subset `j₀ < j₁ < … < j_{d−1}` of modes, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetIndex(Vec<u32>);

impl SubsetIndex {
    pub fn new(indices: Vec<u32>, l: u32) -> Result<Self> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = indices.iter().all(|&j| (1..=l).contains(&j));
        if indices.is_empty() || !increasing || !in_range {
            return Err(Error::Domain(format!(
                "subset {indices:?} must be strictly increasing within [1, {l}]"
            )));
        }
        Ok(Self(indices))
    }

    pub(crate) fn from_sorted(indices: Vec<u32>) -> Self {
        Self(indices)
    }

    pub fn modes(&self) -> &[u32] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, j: u32) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

/// All `C(L, d)` subsets in lexicographic order.
pub fn subsets(l: u32, d: u32) -> Vec<SubsetIndex> {
    let (l, d) = (l as usize, d as usize);
    let mut out = Vec::new();
    if d == 0 || d > l {
        return out;
    }
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        out.push(SubsetIndex(idx.iter().map(|&i| i as u32 + 1).collect()));
        let Some(pos) = (0..d).rev().find(|&i| idx[i] != i + l - d) else {
            return out;
        };
        idx[pos] += 1;
        for i in pos + 1..d {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

/// Unnormalized Hermitian operator on the ancilla labels `(j, ℓ)` that carry
/// nonzero amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNormalizedDensity {
    pub matrix: DMatrix<C64>,
    pub basis: Vec<(u32, u32)>,
}

impl NonNormalizedDensity {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Von Neumann entropy (bits) of the state after normalizing the trace.
    pub fn normalized_entropy(&self) -> f64 {
        let tr = self.trace();
        self.eigenvalues()
            .into_iter()
            .map(|v| v / tr)
            .filter(|&v| v > EIGEN_FLOOR)
            .map(|v| -xlog2x(v))
            .sum()
    }
}

fn check_subset(attack: &AttackMatrix, subset: &SubsetIndex) -> Result<()> {
    if subset
        .modes()
        .last()
        .is_some_and(|&j| j as usize > attack.l)
        || subset.d() < 2
    {
        return Err(Error::Domain(format!(
            "subset {:?} is not valid for L = {}",
            subset.modes(),
            attack.l
        )));
    }
    Ok(())
}

fn ancilla_basis(attack: &AttackMatrix, subset: &SubsetIndex) -> Vec<(u32, u32)> {
    let l = attack.l as u32;
    let mut basis = Vec::new();
    for &jn in subset.modes() {
        for &jp in subset.modes() {
            if attack.coeff(jp, jn) != 0.0 {
                basis.push((jp, jn));
            }
        }
    }
    for &jn in subset.modes() {
        for ell in (1..=l).filter(|&e| !subset.contains(e)) {
            if attack.coeff(ell, jn) != 0.0 {
                basis.push((ell, jn));
            }
        }
    }
    basis
}

/// Eve's ancilla state when Alice's phases on `subset` encode `m`, after
/// averaging over the phases of every mode outside the subset.
pub fn rho_m(attack: &AttackMatrix, subset: &SubsetIndex, m: u32) -> Result<NonNormalizedDensity> {
    check_subset(attack, subset)?;
    let d = subset.d();
    if m as usize >= d {
        return Err(Error::Domain(format!("outcome {m} outside [0, {}]", d - 1)));
    }
    let basis = ancilla_basis(attack, subset);
    let pos = |label: (u32, u32)| basis.iter().position(|&b| b == label);
    let dim = basis.len();
    let mut matrix = DMatrix::<C64>::zeros(dim, dim);

    for &jn in subset.modes() {
        // Σ_p e^{i2πmp/d} c_{j_p j_n} |e_{j_p j_n}⟩
        let mut v = vec![C64::new(0.0, 0.0); dim];
        for (p, &jp) in subset.modes().iter().enumerate() {
            if let Some(i) = pos((jp, jn)) {
                let phase = TAU * (m as usize * p) as f64 / d as f64;
                v[i] = C64::from_polar(attack.coeff(jp, jn), phase);
            }
        }
        for a in 0..dim {
            for b in 0..dim {
                matrix[(a, b)] += v[a] * v[b].conj();
            }
        }
        for ell in (1..=attack.l as u32).filter(|&e| !subset.contains(e)) {
            if let Some(i) = pos((ell, jn)) {
                matrix[(i, i)] += C64::new(attack.sq(ell, jn), 0.0);
            }
        }
    }
    Ok(NonNormalizedDensity { matrix, basis })
}

/// Probability weight of Bob's photon landing in `subset`, `Σ_ℓ Σ_n c²_{ℓ j_n}`.
pub fn subset_yield(attack: &AttackMatrix, subset: &SubsetIndex) -> f64 {
    let l = attack.l as u32;
    subset
        .modes()
        .iter()
        .map(|&jn| (1..=l).map(|ell| attack.sq(ell, jn)).sum::<f64>())
        .sum()
}

fn nonzero_yield(attack: &AttackMatrix, subset: &SubsetIndex) -> Result<f64> {
    let q = subset_yield(attack, subset);
    if q > 0.0 {
        Ok(q)
    } else {
        Err(Error::UndefinedSubset(subset.modes().to_vec()))
    }
}

/// Holevo information of Eve's ensemble `{ρ_m / Q}` with uniform priors,
/// from the spectra of the explicit density matrices.
pub fn holevo_subset(attack: &AttackMatrix, subset: &SubsetIndex) -> Result<f64> {
    check_subset(attack, subset)?;
    nonzero_yield(attack, subset)?;
    let d = subset.d();
    let states = (0..d as u32)
        .map(|m| rho_m(attack, subset, m))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = states[0].clone();
    for s in &states[1..] {
        mean.matrix += &s.matrix;
    }
    mean.matrix /= C64::new(d as f64, 0.0);
    let conditional = states.iter().map(|s| s.normalized_entropy()).sum::<f64>() / d as f64;
    Ok((mean.normalized_entropy() - conditional).max(0.0))
}

/// `(1/Q) Σ_m ζ(c²_{j₀ j_m}, …, c²_{j_{d−1} j_m})`, the closed form of
/// [`holevo_subset`] for orthonormal ancillas.
pub fn holevo_closed_form(attack: &AttackMatrix, subset: &SubsetIndex) -> Result<f64> {
    check_subset(attack, subset)?;
    let q = nonzero_yield(attack, subset)?;
    let total: f64 = subset
        .modes()
        .iter()
        .map(|&jm| {
            let column: Vec<f64> = subset.modes().iter().map(|&jp| attack.sq(jp, jm)).collect();
            zeta_unchecked(&column)
        })
        .sum();
    Ok(total / q)
}

/// Error rate on `subset` from the closed form that sums `c²_{j_r j_n}` over
/// all pairs `(r, n)`, diagonal included.
pub fn error_subset(attack: &AttackMatrix, subset: &SubsetIndex) -> Result<f64> {
    check_subset(attack, subset)?;
    let q = nonzero_yield(attack, subset)?;
    let l = attack.l as u32;
    let d = subset.d() as f64;
    let inside: f64 = subset
        .modes()
        .iter()
        .flat_map(|&jn| subset.modes().iter().map(move |&jr| (jr, jn)))
        .map(|(jr, jn)| attack.sq(jr, jn))
        .sum();
    let outside: f64 = subset
        .modes()
        .iter()
        .flat_map(|&jn| {
            (1..=l)
                .filter(|&e| !subset.contains(e))
                .map(move |e| (e, jn))
        })
        .map(|(e, jn)| attack.sq(e, jn))
        .sum();
    Ok(((d - 1.0) / d) * (inside + outside) / q)
}

/// Which ancilla states are distinct in the Born-rule error oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AncillaModel {
    /// Every `|e_{jℓ}⟩` is orthogonal to every other, as in the attack model
    /// used for the bounds.
    #[default]
    Orthonormal,
    /// The diagonal branches `|e_{jj}⟩` all coincide with one shared state;
    /// off-diagonal ancillas stay orthonormal. The identity attack is then
    /// the trivial channel.
    SharedDiagonal,
}

const BORN_MAX_CONFIGS: usize = 1 << 16;

/// Error rate on `subset` computed from Bob's outcome probabilities.
///
/// Alice's phases on the subset encode `m` (`k_{j_n} = m·n`); every other
/// mode carries an independent uniform phase. The error is the yield-weighted
/// probability that Bob's Fourier-basis outcome differs from `m`, averaged
/// exactly over `m` and every off-subset phase assignment.
pub fn error_subset_born(
    attack: &AttackMatrix,
    subset: &SubsetIndex,
    model: AncillaModel,
) -> Result<f64> {
    check_subset(attack, subset)?;
    nonzero_yield(attack, subset)?;
    let (wrong, total) = born_tallies(attack, subset, model)?;
    Ok(wrong / total)
}

fn born_tallies(
    attack: &AttackMatrix,
    subset: &SubsetIndex,
    model: AncillaModel,
) -> Result<(f64, f64)> {
    let l = attack.l;
    let d = subset.d();
    let outside: Vec<u32> = (1..=l as u32).filter(|&e| !subset.contains(e)).collect();
    let configs = d
        .checked_pow(outside.len() as u32)
        .filter(|&n| n <= BORN_MAX_CONFIGS)
        .ok_or_else(|| Error::SizeCap(format!("{d}^{} phase configurations", outside.len())))?;

    // ancilla label (ℓ, j) → index; label 0 is the shared diagonal state
    let label = |ell: u32, j: u32| -> usize {
        match model {
            AncillaModel::SharedDiagonal if ell == j => 0,
            _ => 1 + (ell as usize - 1) * l + j as usize - 1,
        }
    };
    let ancilla_dim = 1 + l * l;
    let omega = |k: usize| C64::from_polar(1.0, TAU * (k % d) as f64 / d as f64);

    let mut phases = vec![0usize; l + 1];
    let mut wrong = 0.0;
    let mut total = 0.0;
    let mut ancilla = vec![vec![C64::new(0.0, 0.0); ancilla_dim]; d];
    for m in 0..d {
        for (n, &jn) in subset.modes().iter().enumerate() {
            phases[jn as usize] = m * n;
        }
        for config in 0..configs {
            let mut rest = config;
            for &e in &outside {
                phases[e as usize] = rest % d;
                rest /= d;
            }
            // ancilla vector attached to Bob's mode j_n
            for (n, &jn) in subset.modes().iter().enumerate() {
                let a = &mut ancilla[n];
                a.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for ell in 1..=l as u32 {
                    let c = attack.coeff(ell, jn);
                    if c != 0.0 {
                        a[label(ell, jn)] += omega(phases[ell as usize]) * c;
                    }
                }
            }
            // ⟨φ_q| projects with amplitudes e^{−i2πqn/d}/√d
            for q in 0..d {
                let norm2: f64 = (0..ancilla_dim)
                    .map(|k| {
                        let amp: C64 = (0..d).map(|n| omega(d - (q * n) % d) * ancilla[n][k]).sum();
                        amp.norm_sqr()
                    })
                    .sum();
                let prob = norm2 / d as f64;
                total += prob;
                if q != m {
                    wrong += prob;
                }
            }
        }
    }
    Ok((wrong, total))
}

/// Yield-weighted average over all subsets of `per_subset`, summed in the
/// fixed lexicographic order.
fn weighted_average(
    attack: &AttackMatrix,
    params: ProtocolParams,
    per_subset: impl Fn(&SubsetIndex) -> Result<f64> + Sync,
) -> Result<f64> {
    check_params(attack, params)?;
    let all = subsets(params.l(), params.d());
    let terms: Vec<(f64, f64)> = all
        .par_iter()
        .map(|s| {
            let q = subset_yield(attack, s);
            if q > 0.0 {
                per_subset(s).map(|v| (q * v, q))
            } else {
                Ok((0.0, 0.0))
            }
        })
        .collect::<Result<_>>()?;
    let weighted: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let yields: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let q_total = pairwise_sum(&yields);
    if q_total <= 0.0 {
        return Err(Error::ZeroYield);
    }
    Ok(pairwise_sum(&weighted) / q_total)
}

fn check_params(attack: &AttackMatrix, params: ProtocolParams) -> Result<()> {
    if attack.l != params.l() as usize {
        return Err(Error::InvalidAttack(format!(
            "attack has L = {} but parameters have L = {}",
            attack.l,
            params.l()
        )));
    }
    Ok(())
}

/// Eve's information on the raw key: `Σ_J Q^J χ^J / Σ_J Q^J`.
pub fn overall_iae(attack: &AttackMatrix, params: ProtocolParams) -> Result<f64> {
    weighted_average(attack, params, |s| holevo_subset(attack, s))
}

/// Yield-weighted average of [`error_subset`].
pub fn overall_error(attack: &AttackMatrix, params: ProtocolParams) -> Result<f64> {
    weighted_average(attack, params, |s| error_subset(attack, s))
}

/// Yield-weighted average of [`error_subset_born`].
pub fn overall_error_born(
    attack: &AttackMatrix,
    params: ProtocolParams,
    model: AncillaModel,
) -> Result<f64> {
    weighted_average(attack, params, |s| error_subset_born(attack, s, model))
}

/// Normalized diagonal and off-diagonal weight of the attack.
pub fn xsplit(attack: &AttackMatrix) -> AttackSplit {
    let l = attack.l;
    let diag: f64 = (0..l).map(|i| attack.c[i * l + i].powi(2)).sum();
    let all: f64 = attack.c.iter().map(|x| x * x).sum();
    let x1 = diag / l as f64;
    let x2 = (all - diag) / l as f64;
    AttackSplit::new(x1, x2).expect("unit rows give x1 + x2 = 1")
}

/// Exact oracle values next to their analytic bounds for one attack.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub seed: Option<u64>,
    pub l: u32,
    pub d: u32,
    pub x1: f64,
    pub x2: f64,
    pub iae_numeric: f64,
    pub iae_bound: f64,
    pub err_numeric: f64,
    pub err_bound: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub const CSV_HEADER: &'static str =
        "seed,L,d,x1,x2,iae_numeric,iae_bound,err_numeric,err_bound,pass";

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn csv_row(&self) -> String {
        use crate::csv::fmt_num;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.l,
            self.d,
            fmt_num(self.x1),
            fmt_num(self.x2),
            fmt_num(self.iae_numeric),
            fmt_num(self.iae_bound),
            fmt_num(self.err_numeric),
            fmt_num(self.err_bound),
            self.pass
        )
    }
}

/// Checks `overall_iae ≤ iae_bound(xsplit) + tol` and
/// `overall_error ≥ error_lower_bound(xsplit) − tol`.
pub fn verify(
    attack: &AttackMatrix,
    params: ProtocolParams,
    tol: f64,
) -> Result<VerificationReport> {
    if params.l() > VERIFY_MAX_L || params.d() > VERIFY_MAX_D {
        return Err(Error::SizeCap(format!(
            "verification supports L <= {VERIFY_MAX_L} and d <= {VERIFY_MAX_D}, got L={}, d={}",
            params.l(),
            params.d()
        )));
    }
    let split = xsplit(attack);
    let iae_numeric = overall_iae(attack, params)?;
    let err_numeric = overall_error(attack, params)?;
    let iae_b = iae_bound(params, split);
    let err_b = error_lower_bound(params, split);
    Ok(VerificationReport {
        seed: None,
        l: params.l(),
        d: params.d(),
        x1: split.x1(),
        x2: split.x2(),
        iae_numeric,
        iae_bound: iae_b,
        err_numeric,
        err_bound: err_b,
        pass: iae_numeric <= iae_b + tol && err_numeric >= err_b - tol,
    })
}
