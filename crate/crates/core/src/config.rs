//! Analysis configuration, read from a TOML file.
//!
//! ```toml
//! sites = ["london", "barcelona", "amsterdam"]
//! pre_covid_cutoff = "2020-03-01"
//!
//! [inclusion]
//! qualifying_days_min = 8
//! coverage_min = 0.8          # strict: a day needs more than this fraction
//!
//! [dst]                       # per-site clock-change dates
//! london = ["2019-03-31", "2019-10-27"]
//!
//! [lockdown]                  # per-site inclusive date ranges
//! london = [["2020-03-23", "2020-06-15"]]
//!
//! [features]
//! bin_minutes = 60
//! l5m10_mode = "profile"      # or "per-day"
//! sleep_gap_minutes = 60
//! sleep_source = "main"       # or "all"
//! daily_step_days = "qualifying"  # or "all"
//! interp_max_gap_minutes = 120
//! ```
//!
//! Omitting the `[dst]` table disables the clock-change exclusion with a
//! warning.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sites: Vec<String>,
    #[serde(default = "default_cutoff")]
    pub pre_covid_cutoff: NaiveDate,
    #[serde(default)]
    pub inclusion: Inclusion,
    /// `None` when the table is absent, which is distinct from an empty table.
    #[serde(default)]
    pub dst: Option<BTreeMap<String, Vec<NaiveDate>>>,
    #[serde(default)]
    pub lockdown: BTreeMap<String, Vec<[NaiveDate; 2]>>,
    #[serde(default)]
    pub features: FeatureOptions,
}

fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inclusion {
    pub qualifying_days_min: usize,
    pub coverage_min: f64,
}

impl Default for Inclusion {
    fn default() -> Self {
        Inclusion {
            qualifying_days_min: 8,
            coverage_min: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L5M10Mode {
    Profile,
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SleepSource {
    Main,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DailyStepDays {
    Qualifying,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureOptions {
    pub bin_minutes: u32,
    pub l5m10_mode: L5M10Mode,
    pub sleep_gap_minutes: u32,
    pub sleep_source: SleepSource,
    pub daily_step_days: DailyStepDays,
    pub interp_max_gap_minutes: u32,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            bin_minutes: 60,
            l5m10_mode: L5M10Mode::Profile,
            sleep_gap_minutes: 60,
            sleep_source: SleepSource::Main,
            daily_step_days: DailyStepDays::Qualifying,
            interp_max_gap_minutes: 120,
        }
    }
}

impl Config {
    pub fn with_sites<I, S>(sites: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Config {
            sites: sites.into_iter().map(Into::into).collect(),
            pre_covid_cutoff: default_cutoff(),
            inclusion: Inclusion::default(),
            dst: Some(BTreeMap::new()),
            lockdown: BTreeMap::new(),
            features: FeatureOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::Config("`sites` must list at least one site".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sites {
            if !seen.insert(s) {
                return Err(Error::Config(format!("duplicate site `{s}`")));
            }
        }
        let bin = self.features.bin_minutes;
        if bin == 0 || 1440 % bin != 0 {
            return Err(Error::Config(format!(
                "bin_minutes = {bin} does not divide 1440"
            )));
        }
        if !(0.0..1.0).contains(&self.inclusion.coverage_min) {
            return Err(Error::Config("coverage_min must lie in [0, 1)".into()));
        }
        if self.inclusion.qualifying_days_min > 14 {
            return Err(Error::Config("qualifying_days_min cannot exceed 14".into()));
        }
        let check_site = |s: &String| {
            if self.sites.contains(s) {
                Ok(())
            } else {
                Err(Error::UnknownSite(s.clone()))
            }
        };
        if let Some(dst) = &self.dst {
            dst.keys().try_for_each(check_site)?;
        }
        self.lockdown.keys().try_for_each(check_site)?;
        for (site, ranges) in &self.lockdown {
            for [a, b] in ranges {
                if b < a {
                    return Err(Error::Config(format!(
                        "lockdown range for `{site}` ends before it starts ({a} > {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn site_index(&self, site: &str) -> Option<usize> {
        self.sites.iter().position(|s| s == site)
    }
}
