//! Input parsing and minute alignment.
//!
//! Five CSV schemas are accepted (see [`SchemaKind`]). Every data row is
//! validated independently; bad rows land in a rejection report instead of
//! failing the whole file, unless more than half of the rows are bad.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::LocalStamp;

pub const HR_MIN_BPM: f64 = 20.0;
pub const HR_MAX_BPM: f64 = 250.0;
pub const PHQ_MAX: u8 = 24;
pub const AGE_RANGE: std::ops::RangeInclusive<u32> = 16..=120;
pub const EPOCH_SECONDS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaKind {
    Participants,
    Phq8,
    Sleep,
    Steps,
    Hr,
}

impl SchemaKind {
    pub const ALL: [SchemaKind; 5] = [
        SchemaKind::Participants,
        SchemaKind::Phq8,
        SchemaKind::Sleep,
        SchemaKind::Steps,
        SchemaKind::Hr,
    ];

    pub fn header(self) -> &'static [&'static str] {
        match self {
            SchemaKind::Participants => &["participant_id", "age_years", "gender", "site", "employed"],
            SchemaKind::Phq8 => &["participant_id", "utc_epoch_seconds", "local_offset_minutes", "score"],
            SchemaKind::Sleep => &["participant_id", "utc_epoch_seconds", "local_offset_minutes", "stage"],
            SchemaKind::Steps => &["participant_id", "utc_epoch_seconds", "local_offset_minutes", "steps"],
            SchemaKind::Hr => &["participant_id", "utc_epoch_seconds", "local_offset_minutes", "bpm"],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            SchemaKind::Participants => "participants.csv",
            SchemaKind::Phq8 => "phq8.csv",
            SchemaKind::Sleep => "sleep.csv",
            SchemaKind::Steps => "steps.csv",
            SchemaKind::Hr => "hr.csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" => Some(Gender::Female),
            "male" => Some(Gender::Male),
            "other" => Some(Gender::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SleepStage {
    Awake,
    Light,
    Deep,
    Rem,
}

impl SleepStage {
    pub fn as_str(self) -> &'static str {
        match self {
            SleepStage::Awake => "awake",
            SleepStage::Light => "light",
            SleepStage::Deep => "deep",
            SleepStage::Rem => "rem",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awake" | "wake" => Some(SleepStage::Awake),
            "light" => Some(SleepStage::Light),
            "deep" => Some(SleepStage::Deep),
            "rem" => Some(SleepStage::Rem),
            _ => None,
        }
    }

    pub fn is_asleep(self) -> bool {
        self != SleepStage::Awake
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub age_years: u32,
    pub gender: Gender,
    pub site: String,
    pub employed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhqRecord {
    pub participant_id: String,
    pub completion: LocalStamp,
    pub score: u8,
}

/// One 30-second sleep-stage label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SleepEpoch {
    pub participant_id: String,
    pub stamp: LocalStamp,
    pub stage: SleepStage,
}

impl SleepEpoch {
    pub fn end(&self) -> LocalStamp {
        self.stamp.plus_seconds(EPOCH_SECONDS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub participant_id: String,
    pub stamp: LocalStamp,
    pub steps: f64,
    /// Line in the source file, 0 when generated in memory.
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawHrSample {
    pub participant_id: String,
    pub stamp: LocalStamp,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rejection {
    pub file: String,
    pub row: u64,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.row, self.reason)
    }
}

/// Row validation context. Participant rows are checked against the
/// configured site list when one is given.
#[derive(Debug, Clone, Default)]
pub struct ParseContext<'a> {
    pub sites: Option<&'a [String]>,
}

pub trait StreamRecord: Sized {
    const KIND: SchemaKind;

    fn from_row(row: &csv::StringRecord, line: u64, ctx: &ParseContext<'_>) -> Result<Self, String>;

    fn to_row(&self) -> Vec<String>;

    fn sort_key(&self) -> (&str, i64);
}

fn field(row: &csv::StringRecord, i: usize) -> Result<&str, String> {
    row.get(i).map(str::trim).ok_or_else(|| "missing field".to_string())
}

fn stamp_fields(row: &csv::StringRecord) -> Result<LocalStamp, String> {
    let utc: i64 = field(row, 1)?
        .parse()
        .map_err(|_| "malformed utc_epoch_seconds".to_string())?;
    let offset: i32 = field(row, 2)?
        .parse()
        .map_err(|_| "malformed local_offset_minutes".to_string())?;
    LocalStamp::new(utc, offset).ok_or_else(|| "offset out of range".to_string())
}

fn participant_field(row: &csv::StringRecord) -> Result<String, String> {
    let id = field(row, 0)?;
    if id.is_empty() {
        return Err("empty participant_id".into());
    }
    Ok(id.to_string())
}

fn finite(s: &str, name: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("malformed {name}")),
    }
}

impl StreamRecord for ParticipantProfile {
    const KIND: SchemaKind = SchemaKind::Participants;

    fn from_row(row: &csv::StringRecord, _line: u64, ctx: &ParseContext<'_>) -> Result<Self, String> {
        let participant_id = participant_field(row)?;
        let age_years: u32 = field(row, 1)?
            .parse()
            .map_err(|_| "malformed age_years".to_string())?;
        if !AGE_RANGE.contains(&age_years) {
            return Err("age out of range".into());
        }
        let gender = Gender::parse(field(row, 2)?).ok_or_else(|| "unknown gender".to_string())?;
        let site = field(row, 3)?.to_string();
        if let Some(sites) = ctx.sites {
            if !sites.contains(&site) {
                return Err(format!("unknown site {site}"));
            }
        }
        let employed = match field(row, 4)?.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            _ => return Err("malformed employed".into()),
        };
        Ok(ParticipantProfile {
            participant_id,
            age_years,
            gender,
            site,
            employed,
        })
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.participant_id.clone(),
            self.age_years.to_string(),
            self.gender.as_str().to_string(),
            self.site.clone(),
            self.employed.to_string(),
        ]
    }

    fn sort_key(&self) -> (&str, i64) {
        (&self.participant_id, 0)
    }
}

impl StreamRecord for PhqRecord {
    const KIND: SchemaKind = SchemaKind::Phq8;

    fn from_row(row: &csv::StringRecord, _line: u64, _ctx: &ParseContext<'_>) -> Result<Self, String> {
        let participant_id = participant_field(row)?;
        let completion = stamp_fields(row)?;
        let score: i64 = field(row, 3)?
            .parse()
            .map_err(|_| "malformed score".to_string())?;
        if !(0..=i64::from(PHQ_MAX)).contains(&score) {
            return Err("score out of range".into());
        }
        Ok(PhqRecord {
            participant_id,
            completion,
            score: score as u8,
        })
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.participant_id.clone(),
            self.completion.utc_epoch_seconds.to_string(),
            self.completion.local_offset_minutes.to_string(),
            self.score.to_string(),
        ]
    }

    fn sort_key(&self) -> (&str, i64) {
        (&self.participant_id, self.completion.utc_epoch_seconds)
    }
}

impl StreamRecord for SleepEpoch {
    const KIND: SchemaKind = SchemaKind::Sleep;

    fn from_row(row: &csv::StringRecord, _line: u64, _ctx: &ParseContext<'_>) -> Result<Self, String> {
        let participant_id = participant_field(row)?;
        let stamp = stamp_fields(row)?;
        let stage = SleepStage::parse(field(row, 3)?).ok_or_else(|| "unknown stage".to_string())?;
        Ok(SleepEpoch {
            participant_id,
            stamp,
            stage,
        })
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.participant_id.clone(),
            self.stamp.utc_epoch_seconds.to_string(),
            self.stamp.local_offset_minutes.to_string(),
            self.stage.as_str().to_string(),
        ]
    }

    fn sort_key(&self) -> (&str, i64) {
        (&self.participant_id, self.stamp.utc_epoch_seconds)
    }
}

impl StreamRecord for StepRow {
    const KIND: SchemaKind = SchemaKind::Steps;

    fn from_row(row: &csv::StringRecord, line: u64, _ctx: &ParseContext<'_>) -> Result<Self, String> {
        let participant_id = participant_field(row)?;
        let stamp = stamp_fields(row)?;
        let steps = finite(field(row, 3)?, "steps")?;
        if steps < 0.0 {
            return Err("negative steps".into());
        }
        Ok(StepRow {
            participant_id,
            stamp,
            steps,
            line,
        })
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.participant_id.clone(),
            self.stamp.utc_epoch_seconds.to_string(),
            self.stamp.local_offset_minutes.to_string(),
            self.steps.to_string(),
        ]
    }

    fn sort_key(&self) -> (&str, i64) {
        (&self.participant_id, self.stamp.utc_epoch_seconds)
    }
}

impl StreamRecord for RawHrSample {
    const KIND: SchemaKind = SchemaKind::Hr;

    fn from_row(row: &csv::StringRecord, _line: u64, _ctx: &ParseContext<'_>) -> Result<Self, String> {
        let participant_id = participant_field(row)?;
        let stamp = stamp_fields(row)?;
        let bpm = finite(field(row, 3)?, "bpm")?;
        if !(HR_MIN_BPM..=HR_MAX_BPM).contains(&bpm) {
            return Err("bpm out of range".into());
        }
        Ok(RawHrSample {
            participant_id,
            stamp,
            bpm,
        })
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.participant_id.clone(),
            self.stamp.utc_epoch_seconds.to_string(),
            self.stamp.local_offset_minutes.to_string(),
            self.bpm.to_string(),
        ]
    }

    fn sort_key(&self) -> (&str, i64) {
        (&self.participant_id, self.stamp.utc_epoch_seconds)
    }
}

/// Valid rows of one file, sorted by (participant, time), with the rows
/// that failed validation.
#[derive(Debug, Clone)]
pub struct Parsed<R> {
    pub records: Vec<R>,
    pub rejects: Vec<Rejection>,
}

pub fn parse_stream<R: StreamRecord>(path: &Path, ctx: &ParseContext<'_>) -> Result<Parsed<R>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, path, ctx)
}

/// Parses from any reader; `path` is used only for messages and the
/// rejection report.
pub fn parse_reader<R: StreamRecord, T: Read>(
    reader: T,
    path: &Path,
    ctx: &ParseContext<'_>,
) -> Result<Parsed<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = R::KIND.header();
    let header = rdr.headers().map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: format!("{other:?}"),
        },
    })?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }

    let file_label = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| R::KIND.file_name().to_string());
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0usize;
    let mut row = csv::StringRecord::new();
    let mut line = 1u64;
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                total += 1;
                line = row.position().map_or(line + 1, |p| p.line());
                let outcome = if row.len() != expected.len() {
                    Err(format!("expected {} fields, found {}", expected.len(), row.len()))
                } else {
                    R::from_row(&row, line, ctx)
                };
                match outcome {
                    Ok(r) => records.push(r),
                    Err(reason) => rejects.push(Rejection {
                        file: file_label.clone(),
                        row: line,
                        reason,
                    }),
                }
            }
            Err(e) => match e.into_kind() {
                csv::ErrorKind::Io(io) => return Err(Error::io(path, io)),
                other => {
                    total += 1;
                    line += 1;
                    rejects.push(Rejection {
                        file: file_label.clone(),
                        row: line,
                        reason: format!("unparseable row: {other:?}"),
                    });
                }
            },
        }
    }

    if total > 0 && rejects.len() * 2 > total {
        let summary = rejects
            .iter()
            .take(3)
            .map(|r| format!("row {}: {}", r.row, r.reason))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::TooManyRejects {
            path: path.to_path_buf(),
            rejected: rejects.len(),
            total,
            summary,
        });
    }

    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(Parsed { records, rejects })
}

pub fn write_stream<R: StreamRecord, W: Write>(writer: W, records: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(R::KIND.header())?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush().map_err(|e| Error::io(R::KIND.file_name(), e))?;
    Ok(())
}

pub fn write_stream_file<R: StreamRecord>(path: &Path, records: &[R]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_stream(std::io::BufWriter::new(file), records)
}

pub fn write_rejects(path: &Path, rejects: &[Rejection]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["file", "row", "reason"])?;
    for r in rejects {
        w.write_record([r.file.as_str(), &r.row.to_string(), r.reason.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Steps,
    Hr,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Steps => "steps",
            StreamKind::Hr => "hr",
        }
    }
}

/// Dense per-minute grid in local wall-clock minutes over `[start, end)`.
/// Absent minutes are MISSING, never zero.
#[derive(Debug, Clone)]
pub struct MinuteSeries {
    pub participant_id: String,
    pub kind: StreamKind,
    start: i64,
    // NaN marks MISSING; ingestion never admits non-finite values.
    values: Vec<f64>,
}

impl PartialEq for MinuteSeries {
    fn eq(&self, other: &Self) -> bool {
        self.participant_id == other.participant_id
            && self.kind == other.kind
            && self.start == other.start
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl MinuteSeries {
    pub fn empty(participant_id: impl Into<String>, kind: StreamKind) -> Self {
        MinuteSeries {
            participant_id: participant_id.into(),
            kind,
            start: 0,
            values: Vec::new(),
        }
    }

    /// Builds a series from an explicit grid; `None` entries are MISSING.
    pub fn from_values(
        participant_id: impl Into<String>,
        kind: StreamKind,
        start_minute: i64,
        values: impl IntoIterator<Item = Option<f64>>,
    ) -> Self {
        MinuteSeries {
            participant_id: participant_id.into(),
            kind,
            start: start_minute,
            values: values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn start_minute(&self) -> i64 {
        self.start
    }

    pub fn end_minute(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, minute: i64) -> Option<f64> {
        if minute < self.start {
            return None;
        }
        self.values
            .get((minute - self.start) as usize)
            .copied()
            .filter(|v| !v.is_nan())
    }

    /// Values over `[from, to)`, MISSING outside the covered span.
    pub fn slice(&self, from: i64, to: i64) -> impl Iterator<Item = Option<f64>> + '_ {
        (from..to).map(move |m| self.get(m))
    }

    /// `(minute, value)` for every present minute.
    pub fn present(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(move |(i, &v)| (self.start + i as i64, v))
    }

    pub fn present_in(&self, from: i64, to: i64) -> usize {
        let lo = from.max(self.start);
        let hi = to.min(self.end_minute());
        if hi <= lo {
            return 0;
        }
        self.values[(lo - self.start) as usize..(hi - self.start) as usize]
            .iter()
            .filter(|v| !v.is_nan())
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["participant_id", "kind", "local_minute", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let value = if v.is_nan() { String::new() } else { v.to_string() };
            w.write_record([
                self.participant_id.as_str(),
                self.kind.as_str(),
                &(self.start + i as i64).to_string(),
                &value,
            ])?;
        }
        w.flush().map_err(|e| Error::io("minute series", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut id = None;
        let mut kind = None;
        let mut start = None;
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bad = |what: &str| Error::Design(format!("minute series CSV: {what}"));
            let minute: i64 = rec[2].parse().map_err(|_| bad("malformed minute"))?;
            let k = match &rec[1] {
                "steps" => StreamKind::Steps,
                "hr" => StreamKind::Hr,
                _ => return Err(bad("unknown kind")),
            };
            let s = *start.get_or_insert(minute);
            if minute != s + values.len() as i64 {
                return Err(bad("minutes not contiguous"));
            }
            id.get_or_insert_with(|| rec[0].to_string());
            kind.get_or_insert(k);
            let v = if rec[3].is_empty() {
                f64::NAN
            } else {
                rec[3].parse().map_err(|_| bad("malformed value"))?
            };
            values.push(v);
        }
        Ok(MinuteSeries {
            participant_id: id.unwrap_or_default(),
            kind: kind.unwrap_or(StreamKind::Steps),
            start: start.unwrap_or(0),
            values,
        })
    }
}

fn group_by_participant<T>(
    rows: &[T],
    id: impl Fn(&T) -> &str,
) -> BTreeMap<&str, Vec<&T>> {
    let mut groups: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for r in rows {
        groups.entry(id(r)).or_default().push(r);
    }
    groups
}

/// Averages raw heart-rate samples into local minutes, one series per
/// participant. Minutes without samples are MISSING; there is no minimum
/// sample count.
pub fn resample_hr_to_minutes(samples: &[RawHrSample]) -> Vec<MinuteSeries> {
    group_by_participant(samples, |s| &s.participant_id)
        .into_iter()
        .map(|(pid, group)| {
            let mut acc: BTreeMap<i64, (f64, u32)> = BTreeMap::new();
            for s in group {
                let e = acc.entry(s.stamp.local_minute()).or_insert((0.0, 0));
                e.0 += s.bpm;
                e.1 += 1;
            }
            let start = *acc.keys().next().expect("non-empty group");
            let end = *acc.keys().next_back().expect("non-empty group") + 1;
            let mut values = vec![f64::NAN; (end - start) as usize];
            for (m, (sum, n)) in acc {
                values[(m - start) as usize] = sum / f64::from(n);
            }
            MinuteSeries {
                participant_id: pid.to_string(),
                kind: StreamKind::Hr,
                start,
                values,
            }
        })
        .collect()
}

/// Places step rows on a dense local-minute grid, one series per
/// participant. Duplicate minutes with equal values collapse to one;
/// conflicting duplicates are all rejected and the minute left MISSING.
pub fn densify_steps(rows: &[StepRow]) -> (Vec<MinuteSeries>, Vec<Rejection>) {
    let mut rejects = Vec::new();
    let series = group_by_participant(rows, |r| &r.participant_id)
        .into_iter()
        .map(|(pid, group)| {
            let mut by_minute: BTreeMap<i64, Vec<&StepRow>> = BTreeMap::new();
            for r in group {
                by_minute.entry(r.stamp.local_minute()).or_default().push(r);
            }
            let start = *by_minute.keys().next().expect("non-empty group");
            let end = *by_minute.keys().next_back().expect("non-empty group") + 1;
            let mut values = vec![f64::NAN; (end - start) as usize];
            for (m, rows) in by_minute {
                let first = rows[0].steps;
                if rows.iter().all(|r| r.steps == first) {
                    values[(m - start) as usize] = first;
                } else {
                    rejects.extend(rows.iter().map(|r| Rejection {
                        file: SchemaKind::Steps.file_name().to_string(),
                        row: r.line,
                        reason: "duplicate minute with conflicting values".to_string(),
                    }));
                }
            }
            MinuteSeries {
                participant_id: pid.to_string(),
                kind: StreamKind::Steps,
                start,
                values,
            }
        })
        .collect();
    (series, rejects)
}
