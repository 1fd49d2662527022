//! Lossy channel and threshold-detector model, and key rate versus loss.

use std::collections::BTreeMap;
use std::path::Path;

use crate::bounds::{max_iae_with, rate_monitor_with, BoundForm, ProtocolParams};
use crate::csv::fmt_num;
use crate::error::{Error, Result};
use crate::math::shannon_d_unchecked;

/// Channel loss, per-detector dark-count probability and mode mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    loss_db: f64,
    p_d: f64,
    e_mis: f64,
}

impl NoiseModel {
    pub fn new(loss_db: f64, p_d: f64, e_mis: f64) -> Result<Self> {
        if !(loss_db >= 0.0 && loss_db.is_finite()) {
            return Err(Error::Domain(format!(
                "loss must be a finite value >= 0 dB, got {loss_db}"
            )));
        }
        if !(0.0..1.0).contains(&p_d) {
            return Err(Error::Domain(format!(
                "dark-count probability {p_d} outside [0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&e_mis) {
            return Err(Error::Domain(format!(
                "mode mismatch {e_mis} outside [0, 1)"
            )));
        }
        Ok(Self {
            loss_db,
            p_d,
            e_mis,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            loss_db: 0.0,
            p_d: 0.0,
            e_mis: 0.0,
        }
    }

    pub fn with_loss(self, loss_db: f64) -> Result<Self> {
        Self::new(loss_db, self.p_d, self.e_mis)
    }

    pub fn with_e_mis(self, e_mis: f64) -> Result<Self> {
        Self::new(self.loss_db, self.p_d, e_mis)
    }

    pub fn loss_db(&self) -> f64 {
        self.loss_db
    }

    pub fn p_d(&self) -> f64 {
        self.p_d
    }

    pub fn e_mis(&self) -> f64 {
        self.e_mis
    }

    pub fn eta(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

/// `η = 10^(−loss/10)`.
pub fn transmission(loss_db: f64) -> Result<f64> {
    if loss_db.is_nan() || loss_db < 0.0 {
        return Err(Error::Domain(format!(
            "loss must be >= 0 dB, got {loss_db}"
        )));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Signal and dark-count contributions to a single-click detection, both
/// carrying the `(1−p_d)^(d−1)` factor for the silent detectors.
fn click_terms(params: ProtocolParams, noise: &NoiseModel) -> (f64, f64, f64) {
    let d = params.d() as f64;
    let arrive = d / params.l() as f64 * noise.eta();
    let silent = (1.0 - noise.p_d).powi(params.d() as i32 - 1);
    let signal = silent * arrive;
    let dark = silent * (1.0 - arrive) * d * noise.p_d;
    (signal, dark, silent)
}

/// Probability that a sent packet yields exactly one click at Bob,
/// `(1−p_d)^(d−1)·((d/L)η + (1−(d/L)η)·d·p_d)`.
pub fn packet_yield(params: ProtocolParams, noise: &NoiseModel) -> f64 {
    let (signal, dark, _) = click_terms(params, noise);
    signal + dark
}

/// Error rate among detections. Every dark-count click counts as an error.
pub fn qber(params: ProtocolParams, noise: &NoiseModel) -> Result<f64> {
    let (signal, dark, _) = click_terms(params, noise);
    let y = signal + dark;
    if y.is_nan() || y <= 0.0 {
        return Err(Error::Domain("zero yield: error rate undefined".into()));
    }
    Ok((signal * noise.e_mis + dark) / y)
}

/// One point of a key-rate-versus-loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub loss_db: f64,
    pub eta: f64,
    pub y: f64,
    pub e: f64,
    /// Secret bits per sifted detection, clamped at 0.
    pub rate_per_sifted: f64,
    /// Secret bits per sent packet, `d^(2−d)·Y·rate_per_sifted`.
    pub rate_per_packet: f64,
    pub monitored: bool,
    /// The error rate fell outside the domain of the selected rate formula.
    pub domain_overrun: bool,
}

impl RatePoint {
    pub const CSV_HEADER: &'static str =
        "loss_db,eta,Y,E,rate_per_sifted,rate_per_packet,monitored,domain_overrun";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_num(self.loss_db),
            fmt_num(self.eta),
            fmt_num(self.y),
            fmt_num(self.e),
            fmt_num(self.rate_per_sifted),
            fmt_num(self.rate_per_packet),
            self.monitored,
            self.domain_overrun
        )
    }
}

const CURVE_TOL: f64 = 1e-9;

pub fn rate_curve(
    params: ProtocolParams,
    noise_base: &NoiseModel,
    loss_grid: &[f64],
    monitored: bool,
) -> Result<Vec<RatePoint>> {
    rate_curve_with(
        params,
        noise_base,
        loss_grid,
        monitored,
        BoundForm::default(),
    )
}

/// Key rate at every loss in `loss_grid`, keeping the dark-count and
/// mismatch settings of `noise_base`.
pub fn rate_curve_with(
    params: ProtocolParams,
    noise_base: &NoiseModel,
    loss_grid: &[f64],
    monitored: bool,
    form: BoundForm,
) -> Result<Vec<RatePoint>> {
    let worst = (!monitored).then(|| max_iae_with(params, CURVE_TOL, form).value);
    let log_d = (params.d() as f64).log2();
    loss_grid
        .iter()
        .map(|&loss| {
            let noise = noise_base.with_loss(loss)?;
            let y = packet_yield(params, &noise);
            let e = qber(params, &noise)?;
            let raw = match worst {
                Some(iae) if e <= params.max_error() => {
                    Some(log_d - shannon_d_unchecked(e, params.d()) - iae)
                }
                Some(_) => None,
                None => rate_monitor_with(params, e, form).ok().map(|r| r.rate_bits),
            };
            let rate = raw.unwrap_or(0.0).max(0.0);
            Ok(RatePoint {
                loss_db: loss,
                eta: noise.eta(),
                y,
                e,
                rate_per_sifted: rate,
                rate_per_packet: params.sift_probability() * y * rate,
                monitored,
                domain_overrun: raw.is_none(),
            })
        })
        .collect()
}

/// Inclusive grid `start, start+step, …, stop`.
pub fn loss_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || stop.is_nan() || stop < start || start < 0.0 {
        return Err(Error::Domain(format!(
            "bad loss grid {start}:{stop}:{step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// 0 to 60 dB in 0.5 dB steps.
pub fn default_loss_grid() -> Vec<f64> {
    loss_grid(0.0, 60.0, 0.5).expect("valid grid")
}

/// Measured mode mismatch per `(L, d)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmisTable {
    rows: BTreeMap<(u32, u32), f64>,
}

impl EmisTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `L,d,e_mis` CSV. A header line is optional, `#` starts a
    /// comment line and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = BTreeMap::new();
        let mut seen_data = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !seen_data && fields == ["L", "d", "e_mis"] {
                seen_data = true;
                continue;
            }
            seen_data = true;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let [l, d, e] = fields[..] else {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            };
            let l: u32 = l.parse().map_err(|_| err(format!("bad L '{l}'")))?;
            let d: u32 = d.parse().map_err(|_| err(format!("bad d '{d}'")))?;
            let e: f64 = e.parse().map_err(|_| err(format!("bad e_mis '{e}'")))?;
            ProtocolParams::new(l, d).map_err(|x| err(x.to_string()))?;
            if !(0.0..1.0).contains(&e) {
                return Err(err(format!("e_mis {e} outside [0, 1)")));
            }
            if rows.insert((l, d), e).is_some() {
                return Err(err(format!("duplicate entry for L={l}, d={d}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn get(&self, params: ProtocolParams) -> Result<f64> {
        self.rows
            .get(&(params.l(), params.d()))
            .copied()
            .ok_or(Error::MissingEntry {
                l: params.l(),
                d: params.d(),
            })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.rows.iter().map(|(k, v)| (*k, *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::threshold;

    fn p(l: u32, d: u32) -> ProtocolParams {
        ProtocolParams::new(l, d).unwrap()
    }

    fn fig5() -> NoiseModel {
        NoiseModel::new(0.0, 1e-4, 0.05).unwrap()
    }

    #[test]
    fn transmission_values() {
        assert_eq!(transmission(0.0).unwrap(), 1.0);
        assert!((transmission(10.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((transmission(30.0).unwrap() - 0.001).abs() < 1e-17);
        assert!(transmission(-1.0).is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::new(-1.0, 0.0, 0.0).is_err());
        assert!(NoiseModel::new(0.0, 1.0, 0.0).is_err());
        assert!(NoiseModel::new(0.0, 0.0, 1.2).is_err());
    }

    #[test]
    fn yield_values() {
        let y = packet_yield(p(8, 2), &NoiseModel::noiseless());
        assert_eq!(y, 0.25);
        // L=16, d=4, p_d=1e-4, no loss: 0.25·0.9999³ + 0.9999³·0.75·4e-4
        let noise = NoiseModel::new(0.0, 1e-4, 0.0).unwrap();
        let s = 0.9999f64.powi(3);
        let expect = s * 0.25 + s * 0.75 * 4e-4;
        assert!((packet_yield(p(16, 4), &noise) - expect).abs() < 1e-15);
        assert!((expect - 0.2502249175).abs() < 1e-10);
        // deep loss approaches the dark-count floor
        let far = NoiseModel::new(400.0, 1e-4, 0.0).unwrap();
        assert!((packet_yield(p(16, 4), &far) - s * 4e-4).abs() < 1e-15);
    }

    #[test]
    fn qber_values() {
        let noise = NoiseModel::new(7.0, 0.0, 0.05).unwrap();
        assert!((qber(p(16, 4), &noise).unwrap() - 0.05).abs() < 1e-15);
        let far = NoiseModel::new(400.0, 1e-4, 0.05).unwrap();
        assert!((qber(p(16, 4), &far).unwrap() - 1.0).abs() < 1e-12);
        let dark_only = NoiseModel::new(0.0, 1e-4, 0.0).unwrap();
        let e = qber(p(16, 4), &dark_only).unwrap();
        assert!((e - 0.75 * 4e-4 / (0.25 + 0.75 * 4e-4)).abs() < 1e-15);
        let dead = NoiseModel::new(f64::MAX, 0.0, 0.0).unwrap();
        assert!(qber(p(16, 4), &dead).is_err());
    }

    #[test]
    fn qber_times_yield_expands() {
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let d = 2 + (next() * 6.0) as u32;
            let l = d + 1 + (next() * 40.0) as u32;
            let noise = NoiseModel::new(next() * 60.0, next() * 1e-3, next() * 0.2).unwrap();
            let params = p(l, d);
            let eta = noise.eta();
            let df = d as f64;
            let ey = (1.0 - noise.p_d()).powi(d as i32 - 1)
                * (df / l as f64 * eta * noise.e_mis()
                    + (1.0 - df / l as f64 * eta) * df * noise.p_d());
            let lhs = qber(params, &noise).unwrap() * packet_yield(params, &noise);
            assert!((lhs - ey).abs() <= 1e-12 * ey.max(1e-300));
        }
    }

    #[test]
    fn monotone_in_loss() {
        for (l, d) in [(4, 2), (8, 3), (16, 4), (32, 8)] {
            let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
            for loss in default_loss_grid() {
                let noise = fig5().with_loss(loss).unwrap();
                let y = packet_yield(p(l, d), &noise);
                let e = qber(p(l, d), &noise).unwrap();
                assert!(y <= prev.0 && e >= prev.1);
                prev = (y, e);
            }
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(default_loss_grid().len(), 121);
        assert_eq!(
            loss_grid(0.0, 1.0, 0.3).unwrap(),
            vec![0.0, 0.3, 0.6, 0.8999999999999999]
        );
        assert!(loss_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn higher_dimension_wins_at_low_loss() {
        let at_zero = |d| rate_curve(p(16, d), &fig5(), &[0.0], true).unwrap()[0].rate_per_sifted;
        assert!(at_zero(4) > at_zero(3));
        assert!(at_zero(3) > at_zero(2));
    }

    #[test]
    fn curves_non_increasing_and_vanish() {
        for (l, d) in [(4, 2), (8, 2), (8, 3), (16, 2), (16, 4), (32, 4), (64, 8)] {
            for monitored in [false, true] {
                let curve = rate_curve(p(l, d), &fig5(), &default_loss_grid(), monitored).unwrap();
                for w in curve.windows(2) {
                    assert!(w[1].rate_per_packet <= w[0].rate_per_packet);
                    assert!(w[1].rate_per_sifted <= w[0].rate_per_sifted);
                }
                assert_eq!(curve.last().unwrap().rate_per_packet, 0.0);
                for pt in &curve {
                    if pt.rate_per_sifted <= 0.0 {
                        assert_eq!(pt.rate_per_packet, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_monitored_curve_starts_at_log_d() {
        for d in [2, 3, 4] {
            let pt = rate_curve(p(16, d), &NoiseModel::noiseless(), &[0.0], true).unwrap()[0];
            assert_eq!(pt.rate_per_sifted, (d as f64).log2());
            assert!(!pt.domain_overrun);
        }
    }

    #[test]
    fn overrun_is_flagged() {
        let far = rate_curve(p(8, 3), &fig5(), &[60.0], true).unwrap()[0];
        assert!(far.domain_overrun);
        assert_eq!(far.rate_per_packet, 0.0);
        let e = far.e;
        assert!(e > p(8, 3).monitored_error_cap());
        assert!(threshold(p(8, 3), true, 1e-9).value < e);
    }

    #[test]
    fn emis_table_parsing() {
        let t =
            EmisTable::parse("# measured\nL,d,e_mis\n8,2,0.03\n8,4,0.07\n\n16,4,0.1\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get(p(8, 2)).unwrap(), 0.03);
        assert!(matches!(
            t.get(p(16, 2)),
            Err(Error::MissingEntry { l: 16, d: 2 })
        ));
        assert_eq!(
            EmisTable::parse("8,2,0.03").unwrap().get(p(8, 2)).unwrap(),
            0.03
        );
    }

    #[test]
    fn emis_table_errors_name_the_line() {
        let dup = EmisTable::parse("L,d,e_mis\n8,2,0.03\n8,2,0.04\n").unwrap_err();
        assert_eq!(
            dup,
            Error::Parse {
                line: 3,
                message: "duplicate entry for L=8, d=2".into()
            }
        );
        let range = EmisTable::parse("L,d,e_mis\n8,2,1.2\n").unwrap_err();
        assert!(matches!(range, Error::Parse { line: 2, .. }));
        assert!(matches!(
            EmisTable::parse("8,8,0.1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            EmisTable::parse("8,2"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            EmisTable::parse("x,2,0.1"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
