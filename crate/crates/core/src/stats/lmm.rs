//! Random-intercept linear mixed model fitted by maximum likelihood.
//!
//! `y = Xβ + u_g + ε`, `u_g ~ N(0, σ_u²)`, `ε ~ N(0, σ_e²)`. For a fixed
//! ratio `λ = σ_u²/σ_e²` the marginal covariance of group `g` is
//! `σ_e²(I + λ11ᵀ)`, whose inverse and determinant are closed-form:
//!
//! ```text
//! (I + λ11ᵀ)⁻¹ = I − λ/(1+λn_g) · 11ᵀ,    det = 1 + λn_g
//! ```
//!
//! so `β̂(λ)` and `σ̂_e²(λ)` profile out and only a 1-D search over `λ`
//! remains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const LAMBDA_MAX: f64 = 1e6;
pub const LAMBDA_TOL: f64 = 1e-9;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct LmmFit {
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub sigma_u2: f64,
    pub sigma_e2: f64,
    pub lambda: f64,
    pub loglik: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Identifies the rows the model was fitted on, for LRT pairing.
    pub row_key: u64,
}

impl LmmFit {
    pub fn coef(&self, term: &str) -> Option<(f64, f64)> {
        let i = self.terms.iter().position(|t| t == term)?;
        Some((self.beta[i], self.se[i]))
    }
}

/// Sufficient statistics shared by every `λ` evaluation.
pub struct Profiler<'a> {
    y: &'a [f64],
    x: &'a DMatrix<f64>,
    group_of: Vec<usize>,
    sizes: Vec<f64>,
    /// Group means of `[X | y]`, one row per group.
    means: DMatrix<f64>,
    /// Pooled within-group centred cross-products of `[X | y]`.
    within: DMatrix<f64>,
}

pub struct Profile {
    pub lambda: f64,
    pub beta: DVector<f64>,
    pub sigma_e2: f64,
    pub loglik: f64,
    /// `XᵀV⁻¹X` with `V = I + λZZᵀ`.
    pub info: DMatrix<f64>,
}

impl<'a> Profiler<'a> {
    pub fn new(y: &'a [f64], x: &'a DMatrix<f64>, groups: &[usize]) -> Result<Self> {
        let n = y.len();
        let p = x.ncols();
        if x.nrows() != n || groups.len() != n {
            return Err(Error::Design("y, X and groups differ in length".into()));
        }
        if n <= p + 2 {
            return Err(Error::Design(format!("{n} observations are too few for {p} fixed effects")));
        }
        let mut ids: Vec<usize> = groups.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let group_of: Vec<usize> = groups
            .iter()
            .map(|g| ids.binary_search(g).expect("id present"))
            .collect();
        let g = ids.len();

        let mut sizes = vec![0.0; g];
        let mut means = DMatrix::zeros(g, p + 1);
        for (i, &k) in group_of.iter().enumerate() {
            sizes[k] += 1.0;
            for j in 0..p {
                means[(k, j)] += x[(i, j)];
            }
            means[(k, p)] += y[i];
        }
        for k in 0..g {
            for j in 0..=p {
                means[(k, j)] /= sizes[k];
            }
        }
        let mut within = DMatrix::zeros(p + 1, p + 1);
        let mut row = vec![0.0; p + 1];
        for (i, &k) in group_of.iter().enumerate() {
            for j in 0..p {
                row[j] = x[(i, j)] - means[(k, j)];
            }
            row[p] = y[i] - means[(k, p)];
            for a in 0..=p {
                if row[a] == 0.0 {
                    continue;
                }
                for b in a..=p {
                    within[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                within[(a, b)] = within[(b, a)];
            }
        }
        Ok(Profiler {
            y,
            x,
            group_of,
            sizes,
            means,
            within,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    /// Profiled ML log-likelihood and the estimates that attain it at `λ`.
    pub fn profile(&self, lambda: f64) -> Result<Profile> {
        let n = self.y.len();
        let p = self.x.ncols();

        // XᵀV⁻¹[X|y] = within + Σ_g n_g/(1+λn_g) · m_g m_gᵀ.
        let mut z = self.within.clone();
        for (k, &ng) in self.sizes.iter().enumerate() {
            let a = ng / (1.0 + lambda * ng);
            let m = self.means.row(k);
            for r in 0..=p {
                let mr = a * m[r];
                for c in 0..=p {
                    z[(r, c)] += mr * m[c];
                }
            }
        }
        let info = z.view((0, 0), (p, p)).into_owned();
        let rhs = z.view((0, p), (p, 1)).column(0).into_owned();
        let chol = info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Design("XᵀV⁻¹X is not positive definite".into()))?;
        let beta = chol.solve(&rhs);

        // rᵀV⁻¹r from the residuals directly: Σ_g [Σ(r − r̄_g)² + n_g/(1+λn_g)·r̄_g²].
        let g = self.sizes.len();
        let mut sum = vec![0.0; g];
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                let fitted: f64 = (0..p).map(|j| self.x[(i, j)] * beta[j]).sum();
                let r = self.y[i] - fitted;
                sum[self.group_of[i]] += r;
                r
            })
            .collect();
        let mut rss = 0.0;
        for (i, r) in resid.iter().enumerate() {
            let k = self.group_of[i];
            let d = r - sum[k] / self.sizes[k];
            rss += d * d;
        }
        let mut logdet = 0.0;
        for (k, &ng) in self.sizes.iter().enumerate() {
            let mean = sum[k] / ng;
            rss += ng / (1.0 + lambda * ng) * mean * mean;
            logdet += (1.0 + lambda * ng).ln();
        }
        let nf = n as f64;
        let sigma_e2 = rss / nf;
        let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + sigma_e2.ln() + 1.0) - 0.5 * logdet;
        Ok(Profile {
            lambda,
            beta,
            sigma_e2,
            loglik,
            info,
        })
    }
}

/// Profiled ML log-likelihood at a given variance ratio.
pub fn profiled_loglik(y: &[f64], x: &DMatrix<f64>, groups: &[usize], lambda: f64) -> Result<f64> {
    Ok(Profiler::new(y, x, groups)?.profile(lambda)?.loglik)
}

struct Brent {
    x: f64,
    fx: f64,
    iterations: usize,
    converged: bool,
}

/// Brent's parabolic/golden-section search for the maximum of `f` on
/// `[a, b]`.
fn brent_max(mut a: f64, mut b: f64, f: &mut dyn FnMut(f64) -> f64) -> Brent {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    const REL: f64 = 1e-10;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for it in 0..MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = REL * x.abs() + LAMBDA_TOL / 2.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Brent {
                x,
                fx,
                iterations: it,
                converged: true,
            };
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            // Maximizing: the parabola through (v, w, x) uses -f.
            p = -p;
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu >= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu >= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu >= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Brent {
        x,
        fx,
        iterations: MAX_ITER,
        converged: false,
    }
}

fn lambda_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-16..=12).map(|e| 10f64.powf(e as f64 / 2.0)))
        .collect()
}

/// Maximum-likelihood fit. Groups are arbitrary integer labels.
pub fn fit_lmm_ml(y: &[f64], x: &DMatrix<f64>, groups: &[usize]) -> Result<LmmFit> {
    let prof = Profiler::new(y, x, groups)?;
    let singletons = prof.sizes.iter().all(|&n| n == 1.0);

    let (best, iterations, converged) = if singletons {
        // σ_u is not identifiable apart from σ_e; the boundary is the answer.
        (prof.profile(0.0)?, 0, true)
    } else {
        let grid = lambda_grid();
        let mut values = Vec::with_capacity(grid.len());
        for &l in &grid {
            values.push(prof.profile(l)?.loglik);
        }
        let k = values
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > values[best] { i } else { best });
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];

        let mut failure = None;
        let mut objective = |l: f64| match prof.profile(l) {
            Ok(p) => p.loglik,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        };
        let found = brent_max(lo, hi, &mut objective);
        if let Some(e) = failure {
            return Err(e);
        }
        // Boundary candidates compete with the interior optimum; ties keep
        // the smaller λ.
        let mut pick = (found.x, found.fx);
        for cand in [lo, hi] {
            let v = prof.profile(cand)?.loglik;
            if v > pick.1 || (v == pick.1 && cand < pick.0) {
                pick = (cand, v);
            }
        }
        let at_upper = pick.0 >= LAMBDA_MAX;
        (prof.profile(pick.0)?, found.iterations, found.converged && !at_upper)
    };

    let cov = best
        .info
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Design("information matrix is singular".into()))?;
    let se = (0..x.ncols())
        .map(|j| (best.sigma_e2 * cov[(j, j)]).max(0.0).sqrt())
        .collect();
    if !best.loglik.is_finite() || best.sigma_e2 <= 0.0 {
        return Err(Error::Degenerate("residual variance is zero".into()));
    }
    Ok(LmmFit {
        terms: (0..x.ncols()).map(|j| format!("x{j}")).collect(),
        beta: best.beta.iter().copied().collect(),
        se,
        sigma_u2: best.lambda * best.sigma_e2,
        sigma_e2: best.sigma_e2,
        lambda: best.lambda,
        loglik: best.loglik,
        n_obs: y.len(),
        n_groups: prof.n_groups(),
        converged,
        iterations,
        row_key: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Dense Gaussian log-density with covariance σ²(I + λZZᵀ), β and σ²
    /// profiled by generalized least squares on the full matrices.
    pub(crate) fn dense_loglik(y: &[f64], x: &DMatrix<f64>, groups: &[usize], lambda: f64) -> (f64, DVector<f64>) {
        let n = y.len();
        let v = DMatrix::from_fn(n, n, |i, j| {
            let same = if groups[i] == groups[j] { lambda } else { 0.0 };
            same + if i == j { 1.0 } else { 0.0 }
        });
        let vinv = v.clone().try_inverse().unwrap();
        let yv = DVector::from_column_slice(y);
        let xtv = x.transpose() * &vinv;
        let beta = (&xtv * x).try_inverse().unwrap() * (&xtv * &yv);
        let r = &yv - x * &beta;
        let sigma2 = (r.transpose() * &vinv * &r)[(0, 0)] / n as f64;
        let cov = v * sigma2;
        let chol = cov.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = (r.transpose() * cov.try_inverse().unwrap() * &r)[(0, 0)];
        let ll = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
        (ll, beta)
    }

    fn random_instance(rng: &mut ChaCha8Rng, groups: usize, per: usize, p: usize) -> (Vec<f64>, DMatrix<f64>, Vec<usize>) {
        let mut g = Vec::new();
        let mut rows = Vec::new();
        let noise = Normal::new(0.0, 1.0).unwrap();
        for k in 0..groups {
            let u = noise.sample(rng) * 1.5;
            let n = rng.random_range(1..=per);
            for _ in 0..n {
                g.push(k * 7 + 3);
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| noise.sample(rng)));
                rows.push((r, u));
            }
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i].0[j]);
        let y = rows
            .iter()
            .map(|(r, u)| r.iter().enumerate().map(|(j, v)| v * (j as f64 - 1.0)).sum::<f64>() + u + noise.sample(rng))
            .collect();
        (y, x, g)
    }

    #[test]
    fn profiled_equals_dense_at_probe_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (y, x, g) = random_instance(&mut rng, 6, 6, 3);
            if y.len() <= 5 {
                continue;
            }
            for &l in &[0.0, 0.01, 0.3, 1.0, 7.5, 100.0] {
                let (dense, beta_d) = dense_loglik(&y, &x, &g, l);
                let prof = Profiler::new(&y, &x, &g).unwrap().profile(l).unwrap();
                assert!((prof.loglik - dense).abs() < 1e-6, "λ={l}: {} vs {dense}", prof.loglik);
                for j in 0..x.ncols() {
                    assert!((prof.beta[j] - beta_d[j]).abs() <= 1e-8 * beta_d[j].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_random_effect_recovers_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let (n, p) = (200, 3);
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { noise.sample(&mut rng) });
        let groups: Vec<usize> = (0..n).map(|i| i / 5).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 + 0.5 * x[(i, 1)] - x[(i, 2)] + noise.sample(&mut rng)).collect();
        let fit = fit_lmm_ml(&y, &x, &groups).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * (x.transpose() * DVector::from_vec(y.clone()));
        assert!(fit.lambda < 0.05, "λ = {}", fit.lambda);
        // With λ̂ near zero the GLS estimate is near OLS; at λ̂ = 0 exactly equal.
        let at_zero = Profiler::new(&y, &x, &groups).unwrap().profile(0.0).unwrap();
        for j in 0..p {
            assert!((at_zero.beta[j] - ols[j]).abs() <= 1e-10 * ols[j].abs().max(1.0));
        }
        assert!(fit.converged);
    }

    #[test]
    fn singleton_groups_pin_lambda_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { noise.sample(&mut rng) });
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 3.0 * x[(i, 1)] + noise.sample(&mut rng)).collect();
        let groups: Vec<usize> = (0..n).collect();
        let fit = fit_lmm_ml(&y, &x, &groups).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * (x.transpose() * DVector::from_vec(y));
        assert_eq!(fit.lambda, 0.0);
        for j in 0..2 {
            assert!((fit.beta[j] - ols[j]).abs() <= 1e-8 * ols[j].abs());
        }
    }

    #[test]
    fn optimum_beats_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (y, x, g) = random_instance(&mut rng, 10, 8, 3);
        let fit = fit_lmm_ml(&y, &x, &g).unwrap();
        let prof = Profiler::new(&y, &x, &g).unwrap();
        for f in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
            let l = fit.lambda * f;
            assert!(prof.profile(l).unwrap().loglik <= fit.loglik + 1e-9);
        }
        assert!(fit.sigma_u2 >= 0.0 && fit.sigma_e2 > 0.0);
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = DMatrix::from_element(4, 2, 1.0);
        assert!(fit_lmm_ml(&[1.0, 2.0, 3.0, 4.0], &x, &[0, 0, 1, 1]).is_err());
    }
}
