//! Raw inputs to feature table: ingest, windowing and the three extractors,
//! run per participant.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::activity::{activity_features, ActivityOptions};
use crate::config::{Config, SleepSource};
use crate::cosinor::cosinor_fit;
use crate::error::Result;
use crate::features::{Feature, FeatureRow, FeatureTable};
use crate::ingest::{
    densify_steps, parse_stream, resample_hr_to_minutes, ParseContext, ParticipantProfile, PhqRecord, RawHrSample,
    Rejection, SchemaKind, SleepEpoch, StepRow, StreamRecord,
};
use crate::sleep::{build_episodes, main_sleep_per_day, sleep_features, SleepEpisode};
use crate::synth::ParticipantRaw;
use crate::windowing::{dst_exclude, make_window, AssessmentWindow, ParticipantStreams, Season};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPaths {
    pub participants: PathBuf,
    pub phq8: PathBuf,
    pub sleep: PathBuf,
    pub steps: PathBuf,
    pub hr: PathBuf,
}

impl InputPaths {
    /// The five files under their standard names in `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            participants: dir.join(SchemaKind::Participants.file_name()),
            phq8: dir.join(SchemaKind::Phq8.file_name()),
            sleep: dir.join(SchemaKind::Sleep.file_name()),
            steps: dir.join(SchemaKind::Steps.file_name()),
            hr: dir.join(SchemaKind::Hr.file_name()),
        }
    }

    pub fn all(&self) -> [(SchemaKind, &Path); 5] {
        [
            (SchemaKind::Participants, &self.participants),
            (SchemaKind::Phq8, &self.phq8),
            (SchemaKind::Sleep, &self.sleep),
            (SchemaKind::Steps, &self.steps),
            (SchemaKind::Hr, &self.hr),
        ]
    }
}

/// All five input streams, each sorted by participant then time.
#[derive(Debug, Clone, Default)]
pub struct RawInputs {
    pub participants: Vec<ParticipantProfile>,
    pub phq: Vec<PhqRecord>,
    pub sleep: Vec<SleepEpoch>,
    pub steps: Vec<StepRow>,
    pub hr: Vec<RawHrSample>,
    pub rejects: Vec<Rejection>,
}

fn sort_records<R: StreamRecord>(v: &mut [R]) {
    v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

impl RawInputs {
    pub fn load(paths: &InputPaths, cfg: &Config) -> Result<Self> {
        let ctx = ParseContext {
            sites: Some(&cfg.sites),
        };
        let participants = parse_stream::<ParticipantProfile>(&paths.participants, &ctx)?;
        let phq = parse_stream::<PhqRecord>(&paths.phq8, &ctx)?;
        let sleep = parse_stream::<SleepEpoch>(&paths.sleep, &ctx)?;
        let steps = parse_stream::<StepRow>(&paths.steps, &ctx)?;
        let hr = parse_stream::<RawHrSample>(&paths.hr, &ctx)?;
        let mut rejects = participants.rejects;
        rejects.extend(phq.rejects);
        rejects.extend(sleep.rejects);
        rejects.extend(steps.rejects);
        rejects.extend(hr.rejects);
        Ok(RawInputs {
            participants: participants.records,
            phq: phq.records,
            sleep: sleep.records,
            steps: steps.records,
            hr: hr.records,
            rejects,
        })
    }

    pub fn from_participants(parts: Vec<ParticipantRaw>) -> Self {
        let mut out = RawInputs::default();
        for p in parts {
            out.participants.extend(p.profile);
            out.phq.extend(p.phq);
            out.sleep.extend(p.sleep);
            out.steps.extend(p.steps);
            out.hr.extend(p.hr);
        }
        sort_records(&mut out.participants);
        sort_records(&mut out.phq);
        sort_records(&mut out.sleep);
        sort_records(&mut out.steps);
        sort_records(&mut out.hr);
        out
    }
}

/// Splits a slice sorted by participant into per-participant runs.
fn runs<T>(rows: &[T], id: impl Fn(&T) -> &str) -> BTreeMap<&str, &[T]> {
    let mut out = BTreeMap::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || id(&rows[i]) != id(&rows[start]) {
            if i > start {
                out.insert(id(&rows[start]), &rows[start..i]);
            }
            start = i;
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    /// Every window, included or not.
    pub windows: Vec<AssessmentWindow>,
    /// One row per included window.
    pub features: FeatureTable,
    pub rejects: Vec<Rejection>,
}

/// Feature row for one window; unavailable features are `None`.
pub fn window_features(
    window: &AssessmentWindow,
    profile: &ParticipantProfile,
    streams: &ParticipantStreams,
    sleeps: &[SleepEpisode],
    cfg: &Config,
) -> FeatureRow {
    let opts = ActivityOptions {
        bin_minutes: cfg.features.bin_minutes,
        mode: cfg.features.l5m10_mode,
        daily_step_days: cfg.features.daily_step_days,
        coverage_min: cfg.inclusion.coverage_min,
        interp_max_gap: cfg.features.interp_max_gap_minutes as usize,
    };
    let mut values = [None; 12];
    let mut set = |f: Feature, v: Option<f64>| values[f.index()] = v;

    if let Some(s) = sleep_features(window, sleeps) {
        set(Feature::SleepDuration, Some(s.duration_mean));
        set(Feature::SleepVariability, s.variability);
        set(Feature::SleepOnset, Some(s.onset_mean));
        set(Feature::SleepOffset, Some(s.offset_mean));
    }
    let act = activity_features(window, streams.steps.as_ref(), &opts);
    set(Feature::DailyStep, act.daily_step);
    set(Feature::StepIv, act.iv.map(|f| f.value));
    set(Feature::StepIs, act.is);
    if let Some(o) = act.onsets.filter(|o| !o.degenerate) {
        set(Feature::L5Onset, Some(o.l5_onset));
        set(Feature::M10Onset, Some(o.m10_onset));
    }
    if let Some(fit) = streams
        .hr
        .as_ref()
        .and_then(|hr| cosinor_fit(hr, window.start_minute(), window.end_minute()))
    {
        set(Feature::HrMesor, Some(fit.mesor));
        set(Feature::HrAmplitude, Some(fit.amplitude));
        set(Feature::HrAcrophase, fit.acrophase_mod);
    }

    FeatureRow {
        participant_id: profile.participant_id.clone(),
        phq_time: window.phq.completion,
        score: window.phq.score,
        season: window.season,
        lockdown: window.lockdown,
        pre_covid: window.pre_covid,
        age_years: profile.age_years,
        gender: profile.gender,
        site: profile.site.clone(),
        employed: profile.employed,
        values,
    }
}

/// Windows, feature rows and stream rejections for one participant.
pub fn extract_participant(
    profile: &ParticipantProfile,
    phq: &[PhqRecord],
    sleep: &[SleepEpoch],
    steps: &[StepRow],
    hr: &[RawHrSample],
    cfg: &Config,
) -> Result<(Vec<AssessmentWindow>, Vec<FeatureRow>, Vec<Rejection>)> {
    let (step_series, rejects) = densify_steps(steps);
    let episodes = build_episodes(sleep, cfg.features.sleep_gap_minutes);
    let sleeps = match cfg.features.sleep_source {
        SleepSource::Main => main_sleep_per_day(&episodes),
        SleepSource::All => episodes.clone(),
    };
    let streams = ParticipantStreams {
        steps: step_series.into_iter().next(),
        hr: resample_hr_to_minutes(hr).into_iter().next(),
        episodes,
    };
    let mut windows = phq
        .iter()
        .map(|rec| make_window(rec, profile, Some(&streams), cfg))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dst) = &cfg.dst {
        dst_exclude(&mut windows, Some(dst));
    }
    let rows = windows
        .iter()
        .filter(|w| w.included)
        .map(|w| window_features(w, profile, &streams, &sleeps, cfg))
        .collect();
    Ok((windows, rows, rejects))
}

/// Runs extraction over every participant with a profile, in parallel on
/// the current rayon pool. Output order is by participant id then time
/// regardless of scheduling.
pub fn extract(inputs: &RawInputs, cfg: &Config) -> Result<Extraction> {
    if cfg.dst.is_none() {
        log::warn!("no DST transition dates configured; clock-change exclusion skipped");
    }
    let phq = runs(&inputs.phq, |r| &r.participant_id);
    let sleep = runs(&inputs.sleep, |r| &r.participant_id);
    let steps = runs(&inputs.steps, |r| &r.participant_id);
    let hr = runs(&inputs.hr, |r| &r.participant_id);

    let mut rejects = inputs.rejects.clone();
    let profiles: BTreeMap<&str, &ParticipantProfile> =
        inputs.participants.iter().map(|p| (p.participant_id.as_str(), p)).collect();
    for (pid, recs) in &phq {
        if !profiles.contains_key(pid) {
            rejects.extend(recs.iter().map(|_| Rejection {
                file: SchemaKind::Phq8.file_name().to_string(),
                row: 0,
                reason: format!("no participant profile for {pid}"),
            }));
        }
    }

    let per: Vec<_> = profiles
        .par_iter()
        .map(|(pid, profile)| {
            extract_participant(
                profile,
                get_slice(&phq, pid),
                get_slice(&sleep, pid),
                get_slice(&steps, pid),
                get_slice(&hr, pid),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Extraction {
        rejects,
        ..Default::default()
    };
    for (windows, rows, rej) in per {
        out.windows.extend(windows);
        out.features.rows.extend(rows);
        out.rejects.extend(rej);
    }
    Ok(out)
}

fn get_slice<'a, T>(m: &BTreeMap<&str, &'a [T]>, pid: &str) -> &'a [T] {
    m.get(pid).copied().unwrap_or(&[])
}

/// Cohort counts in the layout of a descriptive "Table 1".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortSummary {
    pub participants: usize,
    pub windows: usize,
    pub included: usize,
    pub insufficient_coverage: usize,
    pub dst_excluded: usize,
    pub by_season: [usize; 4],
    pub pre_covid: usize,
    pub lockdown: usize,
}

impl CohortSummary {
    pub fn of(windows: &[AssessmentWindow]) -> Self {
        let included: Vec<&AssessmentWindow> = windows.iter().filter(|w| w.included).collect();
        let mut people: Vec<&str> = included.iter().map(|w| w.phq.participant_id.as_str()).collect();
        people.dedup();
        let mut by_season = [0; 4];
        for w in &included {
            by_season[Season::ALL.iter().position(|s| *s == w.season).expect("season")] += 1;
        }
        CohortSummary {
            participants: people.len(),
            windows: windows.len(),
            included: included.len(),
            insufficient_coverage: windows.iter().filter(|w| !w.coverage_ok).count(),
            dst_excluded: windows.iter().filter(|w| w.dst_excluded).count(),
            by_season,
            pre_covid: included.iter().filter(|w| w.pre_covid).count(),
            lockdown: included.iter().filter(|w| w.lockdown).count(),
        }
    }
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |n: usize| {
            if self.included == 0 {
                0.0
            } else {
                100.0 * n as f64 / self.included as f64
            }
        };
        writeln!(f, "Participants, n                 {}", self.participants)?;
        writeln!(f, "Windows, n                      {}", self.windows)?;
        writeln!(f, "  included                      {}", self.included)?;
        writeln!(f, "  excluded, insufficient data   {}", self.insufficient_coverage)?;
        writeln!(f, "  excluded, clock change        {}", self.dst_excluded)?;
        for (s, n) in Season::ALL.iter().zip(self.by_season) {
            let name = s.as_str();
            let label = format!("Records in {}{}, n (%)", name[..1].to_uppercase(), &name[1..]);
            writeln!(f, "{label:<32}{n} ({:.1})", pct(n))?;
        }
        writeln!(f, "Records before COVID, n (%)     {} ({:.1})", self.pre_covid, pct(self.pre_covid))?;
        write!(f, "Records in lockdown, n (%)      {} ({:.1})", self.lockdown, pct(self.lockdown))
    }
}
