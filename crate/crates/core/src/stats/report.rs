//! Seasonal profiles: per-participant z-normalized features averaged by
//! calendar month.

use std::collections::BTreeMap;
use std::io::Write;

use crate::circular;
use crate::error::{Error, Result};
use crate::features::{format_number, Feature, FeatureRow, FeatureTable};

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub feature: Feature,
    pub month: u32,
    pub mean_z: f64,
    /// Sample SD; `None` for a single value.
    pub sd_z: Option<f64>,
    pub n: usize,
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt()))
}

/// Z-scores of one participant's values; circular features are first
/// unwrapped as signed deviations from the participant's circular mean.
/// `None` with fewer than two values or zero variance.
pub fn normalize_participant(values: &[f64], circular_feature: bool) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let linear: Vec<f64> = if circular_feature {
        let centre = circular::mean_minutes(values.iter().copied())?;
        values.iter().map(|&v| circular::signed_diff(v, centre)).collect()
    } else {
        values.to_vec()
    };
    let (mean, sd) = mean_sd(&linear);
    let sd = sd?;
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return None;
    }
    Some(linear.iter().map(|v| (v - mean) / sd).collect())
}

pub fn seasonal_profile_report(table: &FeatureTable) -> Result<Vec<ProfileRow>> {
    let mut by_participant: BTreeMap<&str, Vec<&FeatureRow>> = BTreeMap::new();
    for r in &table.rows {
        by_participant.entry(r.participant_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for feature in Feature::ALL {
        let mut by_month: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for rows in by_participant.values() {
            let present: Vec<(u32, f64)> = rows.iter().filter_map(|r| r.value(feature).map(|v| (r.month(), v))).collect();
            let values: Vec<f64> = present.iter().map(|p| p.1).collect();
            let Some(z) = normalize_participant(&values, feature.is_circular()) else {
                continue;
            };
            for ((month, _), z) in present.iter().zip(z) {
                by_month.entry(*month).or_default().push(z);
            }
        }
        for (month, zs) in by_month {
            let (mean_z, sd_z) = mean_sd(&zs);
            out.push(ProfileRow {
                feature,
                month,
                mean_z,
                sd_z,
                n: zs.len(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NothingToNormalize);
    }
    Ok(out)
}

pub fn write_profile_csv<W: Write>(writer: W, rows: &[ProfileRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "month", "mean_z", "sd_z", "n"])?;
    for r in rows {
        w.write_record([
            r.feature.column().to_string(),
            r.month.to_string(),
            format_number(r.mean_z),
            r.sd_z.map(format_number).unwrap_or_default(),
            r.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("seasonal_profile.csv", e))?;
    Ok(())
}
