//! The per-window feature table (`features.csv`): twelve rhythm features
//! plus the questionnaire score and covariates used by the models.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Gender;
use crate::time::{month_of, LocalStamp};
use crate::windowing::Season;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    SleepDuration,
    SleepVariability,
    SleepOnset,
    SleepOffset,
    DailyStep,
    StepIv,
    StepIs,
    L5Onset,
    M10Onset,
    HrMesor,
    HrAmplitude,
    HrAcrophase,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::SleepDuration,
        Feature::SleepVariability,
        Feature::SleepOnset,
        Feature::SleepOffset,
        Feature::DailyStep,
        Feature::StepIv,
        Feature::StepIs,
        Feature::L5Onset,
        Feature::M10Onset,
        Feature::HrMesor,
        Feature::HrAmplitude,
        Feature::HrAcrophase,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Feature::SleepDuration => "sleep_duration_min",
            Feature::SleepVariability => "sleep_variability_min",
            Feature::SleepOnset => "sleep_onset_mod",
            Feature::SleepOffset => "sleep_offset_mod",
            Feature::DailyStep => "daily_step",
            Feature::StepIv => "step_iv",
            Feature::StepIs => "step_is",
            Feature::L5Onset => "l5_onset_mod",
            Feature::M10Onset => "m10_onset_mod",
            Feature::HrMesor => "hr_mesor_bpm",
            Feature::HrAmplitude => "hr_amplitude_bpm",
            Feature::HrAcrophase => "hr_acrophase_mod",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Feature::ALL.into_iter().find(|f| f.column() == s)
    }

    /// Clock-time features live on a 1440-minute circle.
    pub fn is_circular(self) -> bool {
        matches!(
            self,
            Feature::SleepOnset | Feature::SleepOffset | Feature::L5Onset | Feature::M10Onset | Feature::HrAcrophase
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub participant_id: String,
    pub phq_time: LocalStamp,
    pub score: u8,
    pub season: Season,
    pub lockdown: bool,
    pub pre_covid: bool,
    pub age_years: u32,
    pub gender: Gender,
    pub site: String,
    pub employed: bool,
    pub values: [Option<f64>; 12],
}

impl FeatureRow {
    pub fn value(&self, f: Feature) -> Option<f64> {
        self.values[f.index()]
    }

    /// Calendar month of the questionnaire completion, local time.
    pub fn month(&self) -> u32 {
        month_of(self.phq_time.local_date())
    }
}

/// Shortest round-trip rendering, switching to exponent form for very small
/// or very large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

const COVARIATE_COLUMNS: [&str; 10] = [
    "participant_id",
    "phq_time",
    "score",
    "season",
    "lockdown",
    "pre_covid",
    "age_years",
    "gender",
    "site",
    "employed",
];

pub fn header() -> Vec<&'static str> {
    COVARIATE_COLUMNS
        .iter()
        .copied()
        .chain(Feature::ALL.iter().map(|f| f.column()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

impl FeatureTable {
    /// Orders rows by participant then completion instant.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.participant_id.as_str(), a.phq_time.utc_epoch_seconds)
                .cmp(&(b.participant_id.as_str(), b.phq_time.utc_epoch_seconds))
        });
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.participant_id.clone(),
                r.phq_time.to_iso(),
                r.score.to_string(),
                r.season.as_str().to_string(),
                r.lockdown.to_string(),
                r.pre_covid.to_string(),
                r.age_years.to_string(),
                r.gender.as_str().to_string(),
                r.site.clone(),
                r.employed.to_string(),
            ];
            rec.extend(r.values.iter().map(|v| v.map(format_number).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("features.csv", e))?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(reader: R, name: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let expected = header();
        if found != expected {
            return Err(Error::Header {
                path: name.to_path_buf(),
                expected: expected.join(","),
                found: found.join(","),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |what: &str| Error::Config(format!("{}: line {line}: invalid {what}", name.display()));
            let field = |k: usize| rec.get(k).unwrap_or("").trim();
            let mut values = [None; 12];
            for (j, v) in values.iter_mut().enumerate() {
                let s = field(10 + j);
                if !s.is_empty() {
                    let x: f64 = s.parse().map_err(|_| bad(Feature::ALL[j].column()))?;
                    if !x.is_finite() {
                        return Err(bad(Feature::ALL[j].column()));
                    }
                    *v = Some(x);
                }
            }
            rows.push(FeatureRow {
                participant_id: field(0).to_string(),
                phq_time: LocalStamp::parse_iso(field(1)).ok_or_else(|| bad("phq_time"))?,
                score: field(2).parse().map_err(|_| bad("score"))?,
                season: Season::parse(field(3)).ok_or_else(|| bad("season"))?,
                lockdown: parse_bool(field(4)).ok_or_else(|| bad("lockdown"))?,
                pre_covid: parse_bool(field(5)).ok_or_else(|| bad("pre_covid"))?,
                age_years: field(6).parse().map_err(|_| bad("age_years"))?,
                gender: Gender::parse(field(7)).ok_or_else(|| bad("gender"))?,
                site: field(8).to_string(),
                employed: parse_bool(field(9)).ok_or_else(|| bad("employed"))?,
                values,
            });
        }
        Ok(FeatureTable { rows })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pid: &str, utc: i64, score: u8, season: Season) -> FeatureRow {
        FeatureRow {
            participant_id: pid.into(),
            phq_time: LocalStamp::new(utc, 60).unwrap(),
            score,
            season,
            lockdown: false,
            pre_covid: true,
            age_years: 44,
            gender: Gender::Other,
            site: "nl".into(),
            employed: false,
            values: [Some(0.1), None, Some(1439.5), Some(420.0), Some(8123.25), Some(0.7), Some(0.3), None, Some(600.0), Some(68.5), Some(6.25), Some(900.0)],
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = FeatureTable {
            rows: vec![row("a", 1_560_000_000, 3, Season::Summer), row("b", 1_570_000_000, 24, Season::Autumn)],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = FeatureTable::read_csv(&buf[..], Path::new("f.csv")).unwrap();
        assert_eq!(back, t);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("participant_id,phq_time,score,season,"));
        assert!(text.lines().nth(1).unwrap().contains(",0.1,,1439.5,"));
    }

    #[test]
    fn bad_header_rejected() {
        let err = FeatureTable::read_csv("a,b\n".as_bytes(), Path::new("f.csv")).unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
    }

    #[test]
    fn feature_names() {
        assert_eq!(Feature::ALL.len(), 12);
        assert_eq!(Feature::parse("hr_acrophase_mod"), Some(Feature::HrAcrophase));
        assert_eq!(Feature::ALL.iter().filter(|f| f.is_circular()).count(), 5);
        for (i, f) in Feature::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
        }
    }
}
