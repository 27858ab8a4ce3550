//! Model specifications and design matrices.
//!
//! Column order is fixed:
//!
//! ```text
//! intercept, phq8,
//! spring, summer, autumn,                      (models 2 and 3)
//! phq8:spring, phq8:summer, phq8:autumn,       (model 3)
//! age_c, female, site_<s> for each non-reference site, employed, lockdown
//! ```
//!
//! Winter, male/other, the first configured site, not employed and no
//! lockdown are the reference levels. Age is centred at the mean of the rows
//! in the fit.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureRow, FeatureTable};
use crate::ingest::Gender;
use crate::windowing::Season;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    PreCovid,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::PreCovid => "pre_covid",
        }
    }

    pub fn contains(self, row: &FeatureRow) -> bool {
        match self {
            Subset::All => true,
            Subset::PreCovid => row.pre_covid,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelSpec {
    pub response: Feature,
    /// 1: PHQ-8 and covariates; 2: adds season; 3: adds PHQ-8 × season.
    pub model_id: u8,
    pub subset: Subset,
}

pub const SEASON_TERMS: [&str; 3] = ["spring", "summer", "autumn"];
pub const INTERACTION_TERMS: [&str; 3] = ["phq8:spring", "phq8:summer", "phq8:autumn"];

#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<String>,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    /// Dense participant index per row.
    pub groups: Vec<usize>,
    pub n_groups: usize,
    /// Rows in the subset whose response was unavailable.
    pub dropped_unavailable: usize,
    /// Covariate columns removed because they were constant over the rows.
    pub dropped_constant: Vec<String>,
    pub row_key: u64,
}

fn season_dummy(s: Season) -> [f64; 3] {
    match s {
        Season::Winter => [0.0, 0.0, 0.0],
        Season::Spring => [1.0, 0.0, 0.0],
        Season::Summer => [0.0, 1.0, 0.0],
        Season::Autumn => [0.0, 0.0, 1.0],
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Modified Gram-Schmidt rank check; names the first column that is a
/// linear combination of the ones before it.
pub fn check_rank(terms: &[String], x: &DMatrix<f64>) -> Result<()> {
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for (j, name) in terms.iter().enumerate() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= 1e-9 * norm {
            return Err(Error::Collinear { column: name.clone() });
        }
        basis.push(v / rest);
    }
    Ok(())
}

pub fn build_design(table: &FeatureTable, spec: ModelSpec, sites: &[String]) -> Result<Design> {
    let in_subset: Vec<&FeatureRow> = table.rows.iter().filter(|r| spec.subset.contains(r)).collect();
    if in_subset.is_empty() {
        return Err(Error::EmptySubset(spec.subset.as_str().into()));
    }
    let rows: Vec<&FeatureRow> = in_subset
        .iter()
        .copied()
        .filter(|r| r.value(spec.response).is_some())
        .collect();
    let dropped_unavailable = in_subset.len() - rows.len();
    if rows.is_empty() {
        return Err(Error::Design(format!("no available values of {}", spec.response)));
    }
    let y: Vec<f64> = rows.iter().map(|r| r.value(spec.response).unwrap()).collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Degenerate(format!("constant response {}", spec.response)));
    }

    let mean_age = rows.iter().map(|r| r.age_years as f64).sum::<f64>() / rows.len() as f64;
    let mut columns: Vec<(String, Vec<f64>)> = vec![
        ("intercept".into(), vec![1.0; rows.len()]),
        ("phq8".into(), rows.iter().map(|r| r.score as f64).collect()),
    ];
    if spec.model_id >= 2 {
        for (k, name) in SEASON_TERMS.iter().enumerate() {
            columns.push((name.to_string(), rows.iter().map(|r| season_dummy(r.season)[k]).collect()));
        }
    }
    if spec.model_id >= 3 {
        for (k, name) in INTERACTION_TERMS.iter().enumerate() {
            columns.push((
                name.to_string(),
                rows.iter().map(|r| r.score as f64 * season_dummy(r.season)[k]).collect(),
            ));
        }
    }
    let mut covariates: Vec<(String, Vec<f64>)> = vec![
        ("age_c".into(), rows.iter().map(|r| r.age_years as f64 - mean_age).collect()),
        ("female".into(), rows.iter().map(|r| flag(r.gender == Gender::Female)).collect()),
    ];
    for site in sites.iter().skip(1) {
        covariates.push((format!("site_{site}"), rows.iter().map(|r| flag(&r.site == site)).collect()));
    }
    covariates.push(("employed".into(), rows.iter().map(|r| flag(r.employed)).collect()));
    covariates.push(("lockdown".into(), rows.iter().map(|r| flag(r.lockdown)).collect()));

    let mut dropped_constant = Vec::new();
    for (name, col) in covariates {
        if col.iter().all(|&v| v == col[0]) {
            log::info!("{} {} model {}: dropping constant column {name}", spec.response, spec.subset, spec.model_id);
            dropped_constant.push(name);
        } else {
            columns.push((name, col));
        }
    }

    let n = rows.len();
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j].1[i]);
    let terms: Vec<String> = columns.into_iter().map(|c| c.0).collect();
    check_rank(&terms, &x)?;

    let mut ids = BTreeMap::new();
    for r in &rows {
        let next = ids.len();
        ids.entry(r.participant_id.as_str()).or_insert(next);
    }
    let groups = rows.iter().map(|r| ids[r.participant_id.as_str()]).collect();

    let mut h = DefaultHasher::new();
    for r in &rows {
        r.participant_id.hash(&mut h);
        r.phq_time.utc_epoch_seconds.hash(&mut h);
    }

    Ok(Design {
        terms,
        y,
        x,
        groups,
        n_groups: ids.len(),
        dropped_unavailable,
        dropped_constant,
        row_key: h.finish(),
    })
}
