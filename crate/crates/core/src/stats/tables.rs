//! Runs every (subset, feature, model) fit and assembles the coefficient and
//! likelihood-ratio tables.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{format_number, Feature, FeatureTable};
use crate::stats::design::{build_design, Design, ModelSpec, Subset};
use crate::stats::inference::{bh_adjust_sparse, lrt, select_model, stars, wald_tests, LrtResult};
use crate::stats::lmm::{fit_lmm_ml, LmmFit};

pub const ALPHA: f64 = 0.05;
pub const MODEL_IDS: [u8; 3] = [1, 2, 3];

/// Builds the design for `spec` and fits it.
pub fn fit_spec(table: &FeatureTable, spec: ModelSpec, sites: &[String]) -> Result<(Design, LmmFit)> {
    let design = build_design(table, spec, sites)?;
    let mut fit = fit_lmm_ml(&design.y, &design.x, &design.groups)?;
    fit.terms = design.terms.clone();
    fit.row_key = design.row_key;
    Ok((design, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefRow {
    pub feature: Feature,
    pub subset: Subset,
    pub model_id: u8,
    pub term: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_adj: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrtRow {
    pub feature: Feature,
    pub subset: Subset,
    /// `"1v2"` or `"2v3"`.
    pub comparison: &'static str,
    pub result: Option<LrtResult>,
    pub p_adj: Option<f64>,
    pub selected_model: Option<u8>,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct FitTables {
    pub fits: BTreeMap<ModelSpec, std::result::Result<LmmFit, String>>,
    pub coefficients: Vec<CoefRow>,
    pub lrts: Vec<LrtRow>,
}

impl FitTables {
    pub fn selected_model(&self, feature: Feature, subset: Subset) -> Option<u8> {
        self.lrts
            .iter()
            .find(|r| r.feature == feature && r.subset == subset)
            .and_then(|r| r.selected_model)
    }
}

fn status_of(fit: &LmmFit) -> String {
    if fit.converged { "ok" } else { "not_converged" }.to_string()
}

/// Fits all twelve features under the three models for each subset.
/// Unfittable features are reported in the tables rather than failing the
/// run; an empty subset is an error.
pub fn fit_all(table: &FeatureTable, sites: &[String], subsets: &[Subset]) -> Result<FitTables> {
    for &s in subsets {
        if !table.rows.iter().any(|r| s.contains(r)) {
            return Err(Error::EmptySubset(s.as_str().into()));
        }
    }
    let specs: Vec<ModelSpec> = subsets
        .iter()
        .flat_map(|&subset| {
            Feature::ALL.into_iter().flat_map(move |response| {
                MODEL_IDS.into_iter().map(move |model_id| ModelSpec {
                    response,
                    model_id,
                    subset,
                })
            })
        })
        .collect();
    let results: Vec<std::result::Result<LmmFit, String>> = specs
        .par_iter()
        .map(|&spec| {
            fit_spec(table, spec, sites).map(|(_, f)| f).map_err(|e| {
                log::warn!("{} {} model {}: {e}", spec.response, spec.subset, spec.model_id);
                e.to_string()
            })
        })
        .collect();
    let fits: BTreeMap<ModelSpec, _> = specs.iter().copied().zip(results).collect();

    // Coefficients, with BH families keyed by (subset, model, term).
    let mut coefficients = Vec::new();
    for &spec in &specs {
        match &fits[&spec] {
            Ok(fit) => {
                for w in wald_tests(fit) {
                    coefficients.push(CoefRow {
                        feature: spec.response,
                        subset: spec.subset,
                        model_id: spec.model_id,
                        term: w.term,
                        estimate: Some(w.estimate),
                        se: Some(w.se),
                        z: w.z,
                        p_raw: w.p,
                        p_adj: None,
                        status: status_of(fit),
                    });
                }
            }
            Err(msg) => coefficients.push(CoefRow {
                feature: spec.response,
                subset: spec.subset,
                model_id: spec.model_id,
                term: String::new(),
                estimate: None,
                se: None,
                z: None,
                p_raw: None,
                p_adj: None,
                status: msg.clone(),
            }),
        }
    }
    let mut families: BTreeMap<(Subset, u8, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in coefficients.iter().enumerate() {
        if !r.term.is_empty() {
            families.entry((r.subset, r.model_id, r.term.clone())).or_default().push(i);
        }
    }
    for idx in families.values() {
        let raw: Vec<Option<f64>> = idx.iter().map(|&i| coefficients[i].p_raw).collect();
        for (&i, adj) in idx.iter().zip(bh_adjust_sparse(&raw)) {
            coefficients[i].p_adj = adj;
        }
    }

    // Likelihood-ratio tests, BH per (subset, comparison) across features.
    let mut lrts = Vec::new();
    for &subset in subsets {
        for feature in Feature::ALL {
            let get = |m: u8| {
                &fits[&ModelSpec {
                    response: feature,
                    model_id: m,
                    subset,
                }]
            };
            for (comparison, small, big) in [("1v2", 1, 2), ("2v3", 2, 3)] {
                let (result, status) = match (get(small), get(big)) {
                    (Ok(a), Ok(b)) => match lrt(a, b) {
                        Ok(r) => (Some(r), "ok".to_string()),
                        Err(e) => (None, e.to_string()),
                    },
                    (Err(e), _) | (_, Err(e)) => (None, e.clone()),
                };
                lrts.push(LrtRow {
                    feature,
                    subset,
                    comparison,
                    result,
                    p_adj: None,
                    selected_model: None,
                    status,
                });
            }
        }
    }
    for &subset in subsets {
        for comparison in ["1v2", "2v3"] {
            let idx: Vec<usize> = (0..lrts.len())
                .filter(|&i| lrts[i].subset == subset && lrts[i].comparison == comparison)
                .collect();
            let raw: Vec<Option<f64>> = idx.iter().map(|&i| lrts[i].result.map(|r| r.p)).collect();
            for (&i, adj) in idx.iter().zip(bh_adjust_sparse(&raw)) {
                lrts[i].p_adj = adj;
            }
        }
    }
    for pair in lrts.chunks_mut(2) {
        let chosen = select_model(pair[0].feature.column(), pair[0].p_adj, pair[1].p_adj, ALPHA).ok();
        pair[0].selected_model = chosen;
        pair[1].selected_model = chosen;
    }

    Ok(FitTables {
        fits,
        coefficients,
        lrts,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn write_model_fits_csv<W: Write>(writer: W, rows: &[CoefRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "feature", "subset", "model_id", "term", "estimate", "se", "z", "p_raw", "p_adj", "stars", "status",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.column().to_string(),
            r.subset.as_str().to_string(),
            r.model_id.to_string(),
            r.term.clone(),
            opt(r.estimate),
            opt(r.se),
            opt(r.z),
            opt(r.p_raw),
            opt(r.p_adj),
            r.p_adj.map(stars).unwrap_or("").to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("model_fits.csv", e))?;
    Ok(())
}

pub fn write_lrt_csv<W: Write>(writer: W, rows: &[LrtRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "feature", "subset", "comparison", "stat", "df", "p_raw", "p_adj", "selected_model", "status",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.column().to_string(),
            r.subset.as_str().to_string(),
            r.comparison.to_string(),
            opt(r.result.map(|x| x.stat)),
            r.result.map(|x| x.df.to_string()).unwrap_or_default(),
            opt(r.result.map(|x| x.p)),
            opt(r.p_adj),
            r.selected_model.map(|m| m.to_string()).unwrap_or_default(),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("lrt.csv", e))?;
    Ok(())
}
