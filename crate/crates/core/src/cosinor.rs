//! Single-component cosinor: least-squares fit of
//! `y = M + β·cos(ωt) + γ·sin(ωt)` with a fixed period.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::circular;
use crate::error::{Error, Result};
use crate::ingest::MinuteSeries;

pub const DAY_PERIOD_MINUTES: f64 = 1440.0;
pub const DEGENERATE_AMPLITUDE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosinorFit {
    pub mesor: f64,
    pub amplitude: f64,
    /// Local clock minute of the fitted maximum; `None` when the amplitude
    /// is below [`DEGENERATE_AMPLITUDE`].
    pub acrophase_mod: Option<f64>,
    pub residual_sse: f64,
    pub n_points: usize,
    /// Raw cosine and sine coefficients.
    pub beta: f64,
    pub gamma: f64,
}

impl CosinorFit {
    pub fn predict(&self, clock_minute: f64, period: f64) -> f64 {
        let w = TAU / period;
        self.mesor + self.beta * (w * clock_minute).cos() + self.gamma * (w * clock_minute).sin()
    }
}

/// Fits `(t, y)` pairs where `t` is in minutes from a reference instant whose
/// clock minute is `origin_clock_minute`. `None` when fewer than three
/// distinct phases are present or the design is rank deficient.
pub fn cosinor_fit_points(points: &[(f64, f64)], period: f64, origin_clock_minute: f64) -> Option<CosinorFit> {
    let n = points.len();
    let w = TAU / period;
    let phases: BTreeSet<u64> = points
        .iter()
        .map(|&(t, _)| (t.rem_euclid(period) * 1e6).round() as u64)
        .collect();
    if phases.len() < 3 {
        return None;
    }

    let x = DMatrix::from_fn(n, 3, |i, j| {
        let t = points[i].0.rem_euclid(period);
        match j {
            0 => 1.0,
            1 => (w * t).cos(),
            _ => (w * t).sin(),
        }
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));

    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..3).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..3).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return None;
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, 3).into_owned();
    let coef = r.solve_upper_triangular(&rhs)?;

    let resid = &y - &x * &coef;
    let (mesor, beta, gamma) = (coef[0], coef[1], coef[2]);
    let amplitude = beta.hypot(gamma);
    let acrophase_mod = (amplitude >= DEGENERATE_AMPLITUDE)
        .then(|| circular::wrap_minutes(origin_clock_minute + gamma.atan2(beta) / w));
    Some(CosinorFit {
        mesor,
        amplitude,
        acrophase_mod,
        residual_sse: resid.norm_squared(),
        n_points: n,
        beta,
        gamma,
    })
}

/// Fits the present minutes of `hr` in `[from, to)` with a 24-hour period.
/// Time is measured from `from`, so acrophase is a local clock minute.
pub fn cosinor_fit(hr: &MinuteSeries, from: i64, to: i64) -> Option<CosinorFit> {
    let points: Vec<(f64, f64)> = hr
        .present()
        .filter(|&(m, _)| m >= from && m < to)
        .map(|(m, v)| ((m - from) as f64, v))
        .collect();
    let origin = from.rem_euclid(DAY_PERIOD_MINUTES as i64) as f64;
    cosinor_fit_points(&points, DAY_PERIOD_MINUTES, origin)
}

/// Signed circular difference `a − b` of two acrophases, in `(−720, 720]`.
pub fn acrophase_delta_minutes(a: &CosinorFit, b: &CosinorFit) -> Result<f64> {
    match (a.acrophase_mod, b.acrophase_mod) {
        (Some(x), Some(y)) => Ok(circular::signed_diff(x, y)),
        _ => Err(Error::Degenerate("acrophase undefined for a zero-amplitude fit".into())),
    }
}
