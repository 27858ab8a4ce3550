//! Wald tests, likelihood-ratio tests, Benjamini-Hochberg adjustment and
//! the model-selection cascade.

use crate::error::{Error, Result};
use crate::stats::lmm::LmmFit;
use crate::stats::special::{chi2_sf, normal_two_sided_p};

/// Negative likelihood-ratio statistics smaller than this are treated as
/// optimizer noise.
pub const LRT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    /// `None` when the standard error is zero.
    pub z: Option<f64>,
    pub p: Option<f64>,
}

pub fn wald_tests(fit: &LmmFit) -> Vec<WaldTest> {
    fit.terms
        .iter()
        .zip(fit.beta.iter().zip(&fit.se))
        .map(|(term, (&estimate, &se))| {
            let z = (se > 0.0).then(|| estimate / se);
            WaldTest {
                term: term.clone(),
                estimate,
                se,
                z,
                p: z.map(normal_two_sided_p),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtResult {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

pub fn lrt(small: &LmmFit, big: &LmmFit) -> Result<LrtResult> {
    if let Some(t) = small.terms.iter().find(|t| !big.terms.contains(t)) {
        return Err(Error::NotNested(format!("term `{t}` missing from the larger model")));
    }
    if small.row_key != big.row_key || small.n_obs != big.n_obs {
        return Err(Error::RowMismatch);
    }
    let df = big.terms.len() - small.terms.len();
    let raw = 2.0 * (big.loglik - small.loglik);
    if raw < -LRT_SLACK {
        log::warn!("likelihood-ratio statistic {raw:e} is negative beyond slack");
    }
    let stat = raw.max(0.0);
    let p = if df == 0 || stat == 0.0 { 1.0 } else { chi2_sf(stat, df as f64) };
    Ok(LrtResult { stat, df, p })
}

/// Benjamini-Hochberg step-up adjustment over the whole slice, returned in
/// input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // (m/rank)·p rather than m·p/rank: the factor is ≥ 1 after rounding, so
        // the result never falls below p.
        running = running.min(m as f64 / (rank + 1) as f64 * p[i]);
        adjusted[i] = running;
    }
    adjusted
}

/// Like [`bh_adjust`], over the present entries only.
pub fn bh_adjust_sparse(p: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = p.iter().flatten().copied().collect();
    let mut adj = bh_adjust(&present).into_iter();
    p.iter().map(|v| v.and_then(|_| adj.next())).collect()
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Model 3 if the 2→3 test is significant, else Model 2 if 1→2 is, else
/// Model 1. Both p values are expected to be adjusted already.
pub fn select_model(feature: &str, p12: Option<f64>, p23: Option<f64>, alpha: f64) -> Result<u8> {
    let (Some(p12), Some(p23)) = (p12, p23) else {
        return Err(Error::MissingLrt(feature.into()));
    };
    Ok(if p23 < alpha {
        3
    } else if p12 < alpha {
        2
    } else {
        1
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(terms: &[&str], loglik: f64) -> LmmFit {
        LmmFit {
            terms: terms.iter().map(|s| s.to_string()).collect(),
            beta: vec![0.0; terms.len()],
            se: vec![1.0; terms.len()],
            sigma_u2: 1.0,
            sigma_e2: 1.0,
            lambda: 1.0,
            loglik,
            n_obs: 50,
            n_groups: 5,
            converged: true,
            iterations: 3,
            row_key: 9,
        }
    }

    #[test]
    fn wald() {
        let mut f = fit(&["a", "b", "c"], 0.0);
        f.beta = vec![0.0, -3.0, 3.0];
        f.se = vec![1.0, 1.0, 0.0];
        let w = wald_tests(&f);
        assert_eq!(w[0].p, Some(1.0));
        assert_eq!(w[1].z, Some(-3.0));
        assert!((w[1].p.unwrap() - 0.002699796063260207).abs() < 1e-12);
        assert_eq!(w[2].p, None);
    }

    #[test]
    fn lrt_cases() {
        let a = fit(&["i", "x"], -100.0);
        let r = lrt(&a, &a).unwrap();
        assert_eq!((r.stat, r.df, r.p), (0.0, 0, 1.0));

        let b = fit(&["i", "x", "s1", "s2", "s3"], -100.0 + 7.815 / 2.0);
        let r = lrt(&a, &b).unwrap();
        assert_eq!(r.df, 3);
        assert!((r.p - 0.050).abs() < 5e-4);

        let c = fit(&["i", "x", "s1", "s2", "s3"], -100.25);
        let r = lrt(&a, &c).unwrap();
        assert_eq!(r.stat, 0.0);

        assert!(matches!(lrt(&b, &a), Err(Error::NotNested(_))));
        let mut d = b.clone();
        d.row_key = 10;
        assert!(matches!(lrt(&a, &d), Err(Error::RowMismatch)));
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.01, 0.02, 0.04, 0.05]), vec![0.04, 0.04, 0.05, 0.05]);
        assert_eq!(bh_adjust(&[0.3]), vec![0.3]);
        assert_eq!(bh_adjust(&[0.2; 5]), vec![0.2; 5]);
        assert_eq!(bh_adjust(&[0.05, 0.01, 0.04, 0.02]), vec![0.05, 0.04, 0.05, 0.04]);
        assert_eq!(bh_adjust(&[]), Vec::<f64>::new());
        assert_eq!(bh_adjust_sparse(&[Some(0.02), None, Some(0.01)]), vec![Some(0.02), None, Some(0.02)]);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn cascade() {
        assert_eq!(select_model("f", Some(0.001), Some(0.0001), 0.05).unwrap(), 3);
        assert_eq!(select_model("f", Some(0.001), Some(0.40), 0.05).unwrap(), 2);
        assert_eq!(select_model("f", Some(0.60), Some(0.70), 0.05).unwrap(), 1);
        assert!(matches!(select_model("f", None, Some(0.1), 0.05), Err(Error::MissingLrt(_))));
    }

    proptest! {
        #[test]
        fn bh_monotone_dominating_bounded(p in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let adj = bh_adjust(&p);
            for i in 0..p.len() {
                prop_assert!(adj[i] >= p[i] && adj[i] <= 1.0);
                for j in 0..p.len() {
                    if p[i] <= p[j] {
                        prop_assert!(adj[i] <= adj[j]);
                    }
                }
            }
        }
    }
}
