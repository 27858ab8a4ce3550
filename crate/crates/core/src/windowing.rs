//! Fourteen-day questionnaire windows: coverage, inclusion, clock-change
//! exclusion, and season / lockdown / pre-COVID labels.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::ingest::{MinuteSeries, ParticipantProfile, PhqRecord, Rejection, SchemaKind};
use crate::sleep::SleepEpisode;
use crate::time::{midnight_minute, MINUTES_PER_DAY};

pub const WINDOW_DAYS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Season::ALL.into_iter().find(|x| x.as_str() == s.trim())
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// EU astronomical seasons, both boundaries inclusive: spring Mar 20 to
/// Jun 20, summer Jun 21 to Sep 22, autumn Sep 23 to Dec 20, winter the rest.
pub fn season_of(date: NaiveDate) -> Season {
    let md = (date.month(), date.day());
    if ((3, 20)..=(6, 20)).contains(&md) {
        Season::Spring
    } else if ((6, 21)..=(9, 22)).contains(&md) {
        Season::Summer
    } else if ((9, 23)..=(12, 20)).contains(&md) {
        Season::Autumn
    } else {
        Season::Winter
    }
}

pub fn lockdown_flag(date: NaiveDate, site: &str, cfg: &Config) -> Result<bool> {
    if cfg.site_index(site).is_none() {
        return Err(Error::UnknownSite(site.to_string()));
    }
    Ok(cfg
        .lockdown
        .get(site)
        .is_some_and(|ranges| ranges.iter().any(|[a, b]| (*a..=*b).contains(&date))))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DayCoverage {
    pub step_fraction: f64,
    pub hr_fraction: f64,
    pub has_sleep_recording: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub days: [DayCoverage; WINDOW_DAYS],
    pub qualifying_days: usize,
}

impl CoverageStats {
    pub fn qualifying(day: &DayCoverage, coverage_min: f64) -> bool {
        day.step_fraction > coverage_min && day.hr_fraction > coverage_min && day.has_sleep_recording
    }

    pub fn is_qualifying(&self, day: usize, coverage_min: f64) -> bool {
        Self::qualifying(&self.days[day], coverage_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentWindow {
    pub phq: PhqRecord,
    pub site: String,
    /// First local day of the window.
    pub start: NaiveDate,
    /// Local completion date; the window ends at its midnight (exclusive).
    pub end: NaiveDate,
    pub coverage: CoverageStats,
    pub season: Season,
    pub lockdown: bool,
    pub pre_covid: bool,
    pub coverage_ok: bool,
    pub dst_excluded: bool,
    pub included: bool,
}

impl AssessmentWindow {
    pub fn contains_day(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }

    pub fn day(&self, i: usize) -> NaiveDate {
        self.start + chrono::Duration::days(i as i64)
    }

    pub fn start_minute(&self) -> i64 {
        midnight_minute(self.start)
    }

    pub fn end_minute(&self) -> i64 {
        midnight_minute(self.end)
    }

    pub fn exclusion_reason(&self) -> String {
        let mut reasons = Vec::new();
        if !self.coverage_ok {
            reasons.push("insufficient_coverage");
        }
        if self.dst_excluded {
            reasons.push("dst_transition");
        }
        reasons.join(";")
    }
}

/// Per-participant streams a window draws on.
#[derive(Debug, Clone, Default)]
pub struct ParticipantStreams {
    pub steps: Option<MinuteSeries>,
    pub hr: Option<MinuteSeries>,
    pub episodes: Vec<SleepEpisode>,
}

/// Fraction of each of the 14 local days with a non-MISSING minute.
pub fn day_coverage(window_start: NaiveDate, series: Option<&MinuteSeries>) -> [f64; WINDOW_DAYS] {
    let mut out = [0.0; WINDOW_DAYS];
    if let Some(s) = series {
        let base = midnight_minute(window_start);
        for (i, f) in out.iter_mut().enumerate() {
            let from = base + i as i64 * MINUTES_PER_DAY;
            *f = s.present_in(from, from + MINUTES_PER_DAY) as f64 / MINUTES_PER_DAY as f64;
        }
    }
    out
}

pub fn coverage_stats(
    window_start: NaiveDate,
    streams: Option<&ParticipantStreams>,
    coverage_min: f64,
) -> CoverageStats {
    let steps = day_coverage(window_start, streams.and_then(|s| s.steps.as_ref()));
    let hr = day_coverage(window_start, streams.and_then(|s| s.hr.as_ref()));
    let mut days = [DayCoverage::default(); WINDOW_DAYS];
    for (i, d) in days.iter_mut().enumerate() {
        let date = window_start + chrono::Duration::days(i as i64);
        *d = DayCoverage {
            step_fraction: steps[i],
            hr_fraction: hr[i],
            has_sleep_recording: streams
                .is_some_and(|s| s.episodes.iter().any(|e| e.offset.local_date() == date)),
        };
    }
    let qualifying_days = days
        .iter()
        .filter(|d| CoverageStats::qualifying(d, coverage_min))
        .count();
    CoverageStats {
        days,
        qualifying_days,
    }
}

/// One window per questionnaire. Records whose participant has no profile
/// are dropped and reported.
pub fn make_windows(
    phq: &[PhqRecord],
    profiles: &BTreeMap<String, ParticipantProfile>,
    streams: &BTreeMap<String, ParticipantStreams>,
    cfg: &Config,
) -> Result<(Vec<AssessmentWindow>, Vec<Rejection>)> {
    let mut windows = Vec::with_capacity(phq.len());
    let mut dropped = Vec::new();
    for rec in phq {
        let Some(profile) = profiles.get(&rec.participant_id) else {
            dropped.push(Rejection {
                file: SchemaKind::Phq8.file_name().to_string(),
                row: 0,
                reason: format!("no participant profile for {}", rec.participant_id),
            });
            continue;
        };
        windows.push(make_window(rec, profile, streams.get(&rec.participant_id), cfg)?);
    }
    Ok((windows, dropped))
}

pub fn make_window(
    rec: &PhqRecord,
    profile: &ParticipantProfile,
    streams: Option<&ParticipantStreams>,
    cfg: &Config,
) -> Result<AssessmentWindow> {
    let end = rec.completion.local_date();
    let start = end - chrono::Duration::days(WINDOW_DAYS as i64);
    let coverage = coverage_stats(start, streams, cfg.inclusion.coverage_min);
    let coverage_ok = coverage.qualifying_days >= cfg.inclusion.qualifying_days_min;
    Ok(AssessmentWindow {
        phq: rec.clone(),
        site: profile.site.clone(),
        start,
        end,
        season: season_of(end),
        lockdown: lockdown_flag(end, &profile.site, cfg)?,
        pre_covid: end < cfg.pre_covid_cutoff,
        coverage,
        coverage_ok,
        dst_excluded: false,
        included: coverage_ok,
    })
}

/// Marks, per participant and per clock-change date, the first window
/// completed on or after that date. Returns `false` (and changes nothing)
/// when no transition table is configured.
pub fn dst_exclude(
    windows: &mut [AssessmentWindow],
    transitions: Option<&BTreeMap<String, Vec<NaiveDate>>>,
) -> bool {
    let Some(transitions) = transitions else {
        log::warn!("no DST transition dates configured; clock-change exclusion skipped");
        return false;
    };
    let mut by_participant: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_participant.entry(w.phq.participant_id.as_str()).or_default().push(i);
    }
    let mut hits = Vec::new();
    for idx in by_participant.values() {
        let mut idx = idx.clone();
        idx.sort_by_key(|&i| windows[i].phq.completion.utc_epoch_seconds);
        let site = &windows[idx[0]].site;
        for date in transitions.get(site).into_iter().flatten() {
            if let Some(&i) = idx.iter().find(|&&i| windows[i].end >= *date) {
                hits.push(i);
            }
        }
    }
    for i in hits {
        windows[i].dst_excluded = true;
        windows[i].included = false;
    }
    true
}

/// Renders the window table; row order follows the input.
pub fn write_windows_csv<W: std::io::Write>(writer: W, windows: &[AssessmentWindow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "participant_id",
        "phq_time",
        "score",
        "season",
        "lockdown",
        "pre_covid",
        "qualifying_days",
        "included",
        "exclusion_reason",
    ])?;
    for win in windows {
        w.write_record([
            win.phq.participant_id.clone(),
            win.phq.completion.to_iso(),
            win.phq.score.to_string(),
            win.season.as_str().to_string(),
            win.lockdown.to_string(),
            win.pre_covid.to_string(),
            win.coverage.qualifying_days.to_string(),
            win.included.to_string(),
            win.exclusion_reason(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("windows.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Gender, StreamKind};
    use crate::time::LocalStamp;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn phq_on(pid: &str, d: NaiveDate) -> PhqRecord {
        let utc = crate::time::day_index(d) * 86_400 + 10 * 3600;
        PhqRecord {
            participant_id: pid.into(),
            completion: LocalStamp::new(utc, 0).unwrap(),
            score: 7,
        }
    }

    fn profile(pid: &str) -> ParticipantProfile {
        ParticipantProfile {
            participant_id: pid.into(),
            age_years: 40,
            gender: Gender::Female,
            site: "uk".into(),
            employed: true,
        }
    }

    fn cfg() -> Config {
        Config::with_sites(["uk", "es"])
    }

    fn episode_ending(d: NaiveDate) -> SleepEpisode {
        let offset = LocalStamp::new(crate::time::day_index(d) * 86_400 + 7 * 3600, 0).unwrap();
        SleepEpisode {
            participant_id: "p".into(),
            onset: offset.plus_seconds(-8 * 3600),
            offset,
            total_sleep_minutes: 480.0,
            attributed_day: d,
        }
    }

    /// Streams where day `i` of the window has `present[i]` minutes of steps
    /// and HR from midnight, plus a sleep episode when `sleep[i]`.
    fn streams(start: NaiveDate, present: &[usize], sleep: &[bool]) -> ParticipantStreams {
        let base = midnight_minute(start);
        let mut vals = Vec::new();
        for &n in present {
            vals.extend((0..1440).map(|m| (m < n).then_some(1.0)));
        }
        let steps = MinuteSeries::from_values("p", StreamKind::Steps, base, vals.clone());
        let hr = MinuteSeries::from_values("p", StreamKind::Hr, base, vals);
        let episodes = sleep
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| episode_ending(start + chrono::Duration::days(i as i64)))
            .collect();
        ParticipantStreams {
            steps: Some(steps),
            hr: Some(hr),
            episodes,
        }
    }

    #[test]
    fn season_boundaries() {
        assert_eq!(season_of(date(2018, 6, 20)), Season::Spring);
        assert_eq!(season_of(date(2018, 6, 21)), Season::Summer);
        assert_eq!(season_of(date(2019, 1, 15)), Season::Winter);
        assert_eq!(season_of(date(2019, 3, 19)), Season::Winter);
        assert_eq!(season_of(date(2019, 3, 20)), Season::Spring);
        assert_eq!(season_of(date(2019, 9, 22)), Season::Summer);
        assert_eq!(season_of(date(2019, 9, 23)), Season::Autumn);
        assert_eq!(season_of(date(2019, 12, 20)), Season::Autumn);
        assert_eq!(season_of(date(2019, 12, 21)), Season::Winter);
        assert_eq!(season_of(date(2020, 2, 29)), Season::Winter);
    }

    #[test]
    fn season_totality_over_four_years() {
        let boundaries = [(3, 20), (6, 21), (9, 23), (12, 21)];
        let mut d = date(2017, 1, 1);
        let mut prev = season_of(d);
        let mut changes = 0;
        while d < date(2021, 1, 1) {
            d = d.succ_opt().unwrap();
            let s = season_of(d);
            if s != prev {
                changes += 1;
                assert!(boundaries.contains(&(d.month(), d.day())), "change on {d}");
            }
            prev = s;
        }
        assert_eq!(changes, 16);
    }

    #[test]
    fn window_span() {
        let w = make_window(&phq_on("p", date(2019, 5, 15)), &profile("p"), None, &cfg()).unwrap();
        assert_eq!(w.start, date(2019, 5, 1));
        assert_eq!(w.end, date(2019, 5, 15));
        assert_eq!(w.end_minute() - w.start_minute(), 14 * 1440);
        assert_eq!(w.coverage.qualifying_days, 0);
        assert!(!w.included);
        assert_eq!(w.exclusion_reason(), "insufficient_coverage");
    }

    #[test]
    fn overlapping_windows_allowed() {
        let recs = vec![phq_on("p", date(2019, 5, 15)), phq_on("p", date(2019, 5, 22))];
        let profiles = BTreeMap::from([("p".to_string(), profile("p"))]);
        let (w, dropped) = make_windows(&recs, &profiles, &BTreeMap::new(), &cfg()).unwrap();
        assert_eq!(w.len(), 2);
        assert!(dropped.is_empty());
        assert!(w[1].start < w[0].end);
    }

    #[test]
    fn unknown_participant_dropped() {
        let recs = vec![phq_on("ghost", date(2019, 5, 15))];
        let (w, dropped) = make_windows(&recs, &BTreeMap::new(), &BTreeMap::new(), &cfg()).unwrap();
        assert!(w.is_empty());
        assert_eq!(dropped.len(), 1);
    }

    #[test]
    fn coverage_boundary_is_strict() {
        let start = date(2019, 5, 1);
        let mut present = vec![1440; 14];
        present[0] = 1152;
        present[1] = 1153;
        let s = streams(start, &present, &[true; 14]);
        let frac = day_coverage(start, s.steps.as_ref());
        assert_eq!(frac[0], 0.8);
        assert!((frac[1] - 1153.0 / 1440.0).abs() < 1e-15);
        let stats = coverage_stats(start, Some(&s), 0.8);
        assert!(!stats.is_qualifying(0, 0.8));
        assert!(stats.is_qualifying(1, 0.8));
        assert_eq!(stats.qualifying_days, 13);
    }

    #[test]
    fn eight_days_include_seven_exclude() {
        let start = date(2019, 5, 1);
        let rec = phq_on("p", date(2019, 5, 15));
        for (good, included) in [(8usize, true), (7, false)] {
            let present: Vec<usize> = (0..14).map(|i| if i < good { 1440 } else { 1000 }).collect();
            let s = streams(start, &present, &[true; 14]);
            let w = make_window(&rec, &profile("p"), Some(&s), &cfg()).unwrap();
            assert_eq!(w.coverage.qualifying_days, good);
            assert_eq!(w.included, included);
        }
    }

    #[test]
    fn sleep_required_for_qualifying_day() {
        let start = date(2019, 5, 1);
        let sleep: Vec<bool> = (0..14).map(|i| i % 2 == 0).collect();
        let s = streams(start, &[1440; 14], &sleep);
        let stats = coverage_stats(start, Some(&s), 0.8);
        assert_eq!(stats.qualifying_days, 7);
    }

    #[test]
    fn dst_first_window_after_switch() {
        let profiles = BTreeMap::from([("p".to_string(), profile("p"))]);
        let recs = vec![phq_on("p", date(2019, 4, 2)), phq_on("p", date(2019, 4, 16))];
        let (mut w, _) = make_windows(&recs, &profiles, &BTreeMap::new(), &cfg()).unwrap();
        let t = BTreeMap::from([("uk".to_string(), vec![date(2019, 3, 31)])]);
        assert!(dst_exclude(&mut w, Some(&t)));
        assert!(w[0].dst_excluded);
        assert!(!w[1].dst_excluded);
        assert_eq!(w[0].exclusion_reason(), "insufficient_coverage;dst_transition");
    }

    #[test]
    fn dst_on_transition_date_and_none_configured() {
        let profiles = BTreeMap::from([("p".to_string(), profile("p"))]);
        let recs = vec![phq_on("p", date(2019, 3, 31))];
        let (mut w, _) = make_windows(&recs, &profiles, &BTreeMap::new(), &cfg()).unwrap();
        let t = BTreeMap::from([("uk".to_string(), vec![date(2019, 3, 31)])]);
        dst_exclude(&mut w, Some(&t));
        assert!(w[0].dst_excluded);

        let (mut w, _) = make_windows(&recs, &profiles, &BTreeMap::new(), &cfg()).unwrap();
        let none = BTreeMap::from([("uk".to_string(), vec![date(2018, 10, 28)])]);
        dst_exclude(&mut w, Some(&BTreeMap::new()));
        assert!(!w[0].dst_excluded);
        dst_exclude(&mut w, Some(&none));
        assert!(w[0].dst_excluded, "first window after an earlier switch");
        let (mut w, _) = make_windows(&recs, &profiles, &BTreeMap::new(), &cfg()).unwrap();
        assert!(!dst_exclude(&mut w, None));
        assert!(!w[0].dst_excluded);
    }

    #[test]
    fn lockdown_ranges() {
        let mut c = cfg();
        c.lockdown.insert("uk".into(), vec![[date(2020, 3, 23), date(2020, 6, 15)]]);
        assert!(lockdown_flag(date(2020, 4, 1), "uk", &c).unwrap());
        assert!(lockdown_flag(date(2020, 6, 15), "uk", &c).unwrap());
        assert!(!lockdown_flag(date(2019, 4, 1), "uk", &c).unwrap());
        assert!(!lockdown_flag(date(2020, 4, 1), "es", &c).unwrap());
        assert!(!lockdown_flag(date(2020, 4, 1), "uk", &cfg()).unwrap());
        assert!(matches!(lockdown_flag(date(2020, 4, 1), "fr", &c), Err(Error::UnknownSite(s)) if s == "fr"));
    }

    #[test]
    fn pre_covid_cutoff() {
        let before = make_window(&phq_on("p", date(2020, 2, 29)), &profile("p"), None, &cfg()).unwrap();
        let on = make_window(&phq_on("p", date(2020, 3, 1)), &profile("p"), None, &cfg()).unwrap();
        assert!(before.pre_covid);
        assert!(!on.pre_covid);
    }

    proptest::proptest! {
        #[test]
        fn adding_minutes_never_drops_inclusion(
            present in proptest::collection::vec(0usize..=1440, 14),
            sleep in proptest::collection::vec(proptest::bool::ANY, 14),
            extra in proptest::collection::vec(0usize..=600, 14),
        ) {
            let start = date(2019, 5, 1);
            let rec = phq_on("p", date(2019, 5, 15));
            let before = make_window(&rec, &profile("p"), Some(&streams(start, &present, &sleep)), &cfg()).unwrap();
            let more: Vec<usize> = present.iter().zip(&extra).map(|(a, b)| (a + b).min(1440)).collect();
            let after = make_window(&rec, &profile("p"), Some(&streams(start, &more, &sleep)), &cfg()).unwrap();
            proptest::prop_assert!(after.coverage.qualifying_days >= before.coverage.qualifying_days);
            proptest::prop_assert!(!before.included || after.included);
        }
    }
}
