//! Analytic security quantities: Eve's information bound, the error-rate
//! constraint on the attack split, key rates with and without disturbance
//! monitoring, and their zero crossings.

use crate::error::{Error, Result};
use crate::math::{binom, shannon_d, shannon_d_unchecked, zeta_unchecked};

/// Largest supported Hilbert-space size; keeps every binomial exact.
pub const MAX_L: u32 = 128;

/// Number of modes `L` and encoding dimension `d`, with `2 ≤ d < L ≤ 128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProtocolParams {
    l: u32,
    d: u32,
}

impl ProtocolParams {
    pub fn new(l: u32, d: u32) -> Result<Self> {
        let reason = if d < 2 {
            "encoding dimension must be at least 2"
        } else if d >= l {
            "encoding dimension must be smaller than L"
        } else if l > MAX_L {
            "L is capped at 128"
        } else {
            return Ok(Self { l, d });
        };
        Err(Error::InvalidParams { l, d, reason })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Upper end of the error-entropy domain, `(d−1)/d`.
    pub fn max_error(&self) -> f64 {
        (self.d - 1) as f64 / self.d as f64
    }

    /// Largest error rate compatible with a non-negative diagonal weight,
    /// `((d−1)/d)·((L−d)/(L−1))`.
    pub fn monitored_error_cap(&self) -> f64 {
        self.max_error() * (self.l - self.d) as f64 / (self.l - 1) as f64
    }

    /// Fraction of uniformly random phase packets that survive sifting,
    /// `d^(2−d)`.
    pub fn sift_probability(&self) -> f64 {
        (self.d as f64).powi(2 - self.d as i32)
    }

    /// `(C(L−1, d−1), C(L−2, d−2))`.
    pub fn binomials(&self) -> (u128, u128) {
        let l = self.l as u64;
        let d = self.d as u64;
        // L ≤ 128 keeps both inside u128
        let c1 = binom(l - 1, d - 1).expect("L <= 128");
        let c2 = binom(l - 2, d - 2).expect("L <= 128");
        (c1, c2)
    }
}

/// Diagonal (`x1`) and off-diagonal (`x2`) share of Eve's attack weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSplit {
    x1: f64,
    x2: f64,
}

impl AttackSplit {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if !(x1 >= 0.0 && x2 >= 0.0) || (x1 + x2 - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "attack split must be non-negative and sum to 1, got ({x1}, {x2})"
            )));
        }
        Ok(Self { x1, x2 })
    }

    pub fn from_x1(x1: f64) -> Result<Self> {
        Self::new(x1, 1.0 - x1)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }
}

/// How the off-diagonal attack weight enters the ζ bound.
///
/// Collecting the per-subset ζ terms puts `C(L−2, d−2)·x2` of off-diagonal
/// weight in total across the `d−1` off-diagonal slots. `Symmetrized` spreads
/// it evenly (`C(L−2, d−2)·x2/(d−1)` per slot), which keeps the bound within
/// `[0, log₂ d]`. `AsPrinted` places the full `C(L−2, d−2)·x2` in every slot;
/// it is a looser upper bound for `d ≥ 3` and can exceed `log₂ d`. The two
/// agree at `d = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundForm {
    #[default]
    Symmetrized,
    AsPrinted,
}

/// Secret key rate at one error rate, in bits per sifted detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    pub params: ProtocolParams,
    pub error_rate: f64,
    /// Unclamped; negative means no key.
    pub rate_bits: f64,
    pub iae_bits: f64,
    pub x1_used: f64,
    pub monitored: bool,
}

/// Bound on Alice–Eve mutual information for a given attack split.
pub fn iae_bound(params: ProtocolParams, split: AttackSplit) -> f64 {
    iae_bound_with(params, split, BoundForm::default())
}

pub fn iae_bound_with(params: ProtocolParams, split: AttackSplit, form: BoundForm) -> f64 {
    let (c1, c2) = params.binomials();
    let d = params.d as usize;
    // ζ is 1-homogeneous: divide every slot by C(L−1, d−1) up front so the
    // arguments stay O(1) even when the binomials are ~1e37.
    let off_ratio = c2 as f64 / c1 as f64;
    let off = match form {
        BoundForm::Symmetrized => off_ratio * split.x2 / (d - 1) as f64,
        BoundForm::AsPrinted => off_ratio * split.x2,
    };
    let mut slots = vec![off; d];
    slots[0] = split.x1;
    zeta_unchecked(&slots) / (split.x1 + split.x2)
}

/// Maximizer of [`iae_bound`] over the attack split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IaeMaximum {
    pub x1_star: f64,
    pub value: f64,
}

const GRID_POINTS: usize = 1001;

pub fn max_iae(params: ProtocolParams, tol: f64) -> IaeMaximum {
    max_iae_with(params, tol, BoundForm::default())
}

/// Coarse grid over `x1 ∈ [0, 1]`, then golden-section refinement of the
/// bracket around the best grid point. The objective is concave in `x1`.
pub fn max_iae_with(params: ProtocolParams, tol: f64, form: BoundForm) -> IaeMaximum {
    let f = |x1: f64| iae_bound_with(params, split_at(x1), form);
    let step = 1.0 / (GRID_POINTS - 1) as f64;

    let (best_i, best_v) = (0..GRID_POINTS).map(|i| (i, f(i as f64 * step))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
    );

    let lo = best_i.saturating_sub(1) as f64 * step;
    let hi = ((best_i + 1).min(GRID_POINTS - 1) as f64 * step).min(1.0);
    let (x_gs, v_gs) = golden_section_max(f, lo, hi, tol.max(f64::EPSILON));

    if v_gs >= best_v {
        IaeMaximum {
            x1_star: x_gs,
            value: v_gs,
        }
    } else {
        IaeMaximum {
            x1_star: best_i as f64 * step,
            value: best_v,
        }
    }
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn split_at(x1: f64) -> AttackSplit {
    let x1 = x1.clamp(0.0, 1.0);
    AttackSplit { x1, x2: 1.0 - x1 }
}

/// Minimum error rate an attack split must cause,
/// `((d−1)/d)·((L−d)/(L−1))·(x2/(x1+x2))`.
pub fn error_lower_bound(params: ProtocolParams, split: AttackSplit) -> f64 {
    params.monitored_error_cap() * split.x2 / (split.x1 + split.x2)
}

/// Smallest diagonal weight compatible with an observed error rate.
pub fn x1_from_error(params: ProtocolParams, e: f64) -> Result<f64> {
    let cap = params.monitored_error_cap();
    if !(0.0..=cap).contains(&e) {
        return Err(Error::Domain(format!(
            "error rate {e} outside [0, {cap}], the monitored cap for L={}, d={}",
            params.l, params.d
        )));
    }
    let d = params.d as f64;
    let l = params.l as f64;
    Ok((1.0 - e * (d / (d - 1.0)) * (l - 1.0) / (l - d)).clamp(0.0, 1.0))
}

pub fn rate_no_monitor(params: ProtocolParams, e: f64, tol: f64) -> Result<KeyRateResult> {
    rate_no_monitor_with(params, e, tol, BoundForm::default())
}

/// `log₂ d − h(E) − max I_AE`; needs no knowledge of how the error arose.
pub fn rate_no_monitor_with(
    params: ProtocolParams,
    e: f64,
    tol: f64,
    form: BoundForm,
) -> Result<KeyRateResult> {
    let h = shannon_d(e, params.d)?;
    let worst = max_iae_with(params, tol, form);
    Ok(KeyRateResult {
        params,
        error_rate: e,
        rate_bits: log2_d(params) - h - worst.value,
        iae_bits: worst.value,
        x1_used: worst.x1_star,
        monitored: false,
    })
}

pub fn rate_monitor(params: ProtocolParams, e: f64) -> Result<KeyRateResult> {
    rate_monitor_with(params, e, BoundForm::default())
}

/// `log₂ d − h(E) − I_AE(x1(E), 1 − x1(E))`, with `x1(E)` from
/// [`x1_from_error`].
pub fn rate_monitor_with(params: ProtocolParams, e: f64, form: BoundForm) -> Result<KeyRateResult> {
    let x1 = x1_from_error(params, e)?;
    let iae = iae_bound_with(params, split_at(x1), form);
    let h = shannon_d_unchecked(e, params.d);
    Ok(KeyRateResult {
        params,
        error_rate: e,
        rate_bits: log2_d(params) - h - iae,
        iae_bits: iae,
        x1_used: x1,
        monitored: true,
    })
}

fn log2_d(params: ProtocolParams) -> f64 {
    (params.d as f64).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdStatus {
    /// The rate changes sign inside the error-rate domain.
    Crossing,
    /// No positive rate even at `E = 0`; the threshold is reported as 0.
    NoKeyAtZero,
    /// The rate is still positive at the end of the domain; the threshold is
    /// the domain end.
    DomainLimited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub status: ThresholdStatus,
}

pub fn threshold(params: ProtocolParams, monitored: bool, tol: f64) -> Threshold {
    threshold_with(params, monitored, tol, BoundForm::default())
}

/// Largest error rate with a positive key rate, found by bisection to
/// absolute tolerance `tol`.
///
/// The search interval is `[0, (d−1)/d]` without monitoring and
/// `[0, ((d−1)/d)·((L−d)/(L−1))]` with it.
pub fn threshold_with(
    params: ProtocolParams,
    monitored: bool,
    tol: f64,
    form: BoundForm,
) -> Threshold {
    let rate: Box<dyn Fn(f64) -> f64> = if monitored {
        Box::new(move |e| {
            rate_monitor_with(params, e, form)
                .map(|r| r.rate_bits)
                .unwrap_or(f64::NEG_INFINITY)
        })
    } else {
        let worst = max_iae_with(params, tol, form).value;
        let log_d = log2_d(params);
        let d = params.d;
        Box::new(move |e| log_d - shannon_d_unchecked(e, d) - worst)
    };
    let end = if monitored {
        params.monitored_error_cap()
    } else {
        params.max_error()
    };

    if rate(0.0) <= 0.0 {
        return Threshold {
            value: 0.0,
            status: ThresholdStatus::NoKeyAtZero,
        };
    }
    if rate(end) > 0.0 {
        return Threshold {
            value: end,
            status: ThresholdStatus::DomainLimited,
        };
    }
    let (mut lo, mut hi) = (0.0f64, end);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Threshold {
        value: 0.5 * (lo + hi),
        status: ThresholdStatus::Crossing,
    }
}
