//! Synthetic cohorts at two levels: raw sensor streams with planted
//! circadian structure, and feature panels drawn directly from the mixed
//! model.
//!
//! Every random draw comes from a ChaCha stream keyed on
//! `(seed, participant, day, stream)`, so output does not depend on
//! generation order and dropout at different rates uses the same uniforms.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::circular;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureRow, FeatureTable};
use crate::ingest::{
    Gender, ParticipantProfile, PhqRecord, RawHrSample, SchemaKind, SleepEpoch, SleepStage, StepRow, StreamRecord,
    EPOCH_SECONDS, PHQ_MAX,
};
use crate::stats::design::{INTERACTION_TERMS, SEASON_TERMS};
use crate::time::{day_index, midnight_minute, LocalStamp, MINUTES_PER_DAY};
use crate::windowing::{lockdown_flag, season_of, Season, WINDOW_DAYS};

/// Circadian template parameters. Also used for per-season and per-PHQ
/// deltas and for standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawParams {
    /// Clock minute of falling asleep.
    pub sleep_onset: f64,
    /// Minutes asleep per night.
    pub sleep_duration: f64,
    /// Mean steps per awake minute.
    pub step_active_rate: f64,
    /// Mean steps per minute during the sleep period.
    pub step_rest_rate: f64,
    pub hr_mesor: f64,
    pub hr_amplitude: f64,
    /// Clock minute of the heart-rate peak.
    pub hr_acrophase: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        RawParams::ZERO
    }
}

impl RawParams {
    pub const ZERO: RawParams = RawParams {
        sleep_onset: 0.0,
        sleep_duration: 0.0,
        step_active_rate: 0.0,
        step_rest_rate: 0.0,
        hr_mesor: 0.0,
        hr_amplitude: 0.0,
        hr_acrophase: 0.0,
    };

    fn as_array(&self) -> [f64; 7] {
        [
            self.sleep_onset,
            self.sleep_duration,
            self.step_active_rate,
            self.step_rest_rate,
            self.hr_mesor,
            self.hr_amplitude,
            self.hr_acrophase,
        ]
    }

    fn from_array(a: [f64; 7]) -> Self {
        RawParams {
            sleep_onset: a[0],
            sleep_duration: a[1],
            step_active_rate: a[2],
            step_rest_rate: a[3],
            hr_mesor: a[4],
            hr_amplitude: a[5],
            hr_acrophase: a[6],
        }
    }

    fn plus_scaled(&self, other: &RawParams, k: f64) -> RawParams {
        let (a, b) = (self.as_array(), other.as_array());
        RawParams::from_array(std::array::from_fn(|i| a[i] + k * b[i]))
    }

    /// Adds independent normal jitter with the given per-parameter SDs.
    fn jittered(&self, sd: &RawParams, rng: &mut ChaCha8Rng) -> RawParams {
        let (a, s) = (self.as_array(), sd.as_array());
        RawParams::from_array(std::array::from_fn(|i| a[i] + s[i] * standard_normal(rng)))
    }

    /// Keeps rates, durations and amplitudes physically meaningful and clock
    /// times on the circle.
    fn clamped(&self) -> RawParams {
        RawParams {
            sleep_onset: circular::wrap_minutes(self.sleep_onset),
            sleep_duration: self.sleep_duration.clamp(60.0, 900.0),
            step_active_rate: self.step_active_rate.max(0.0),
            step_rest_rate: self.step_rest_rate.max(0.0),
            hr_mesor: self.hr_mesor.clamp(35.0, 150.0),
            hr_amplitude: self.hr_amplitude.max(0.0),
            hr_acrophase: circular::wrap_minutes(self.hr_acrophase),
        }
    }

    fn validate_sd(&self, what: &str) -> Result<()> {
        if self.as_array().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{what}: standard deviations must be finite and non-negative")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateOptions {
    pub age_mean: f64,
    pub age_sd: f64,
    pub female_rate: f64,
    pub employed_rate: f64,
    pub phq_mean: f64,
    pub phq_participant_sd: f64,
    pub phq_window_sd: f64,
}

impl Default for CovariateOptions {
    fn default() -> Self {
        CovariateOptions {
            age_mean: 45.0,
            age_sd: 12.0,
            female_rate: 0.6,
            employed_rate: 0.55,
            phq_mean: 9.0,
            phq_participant_sd: 4.0,
            phq_window_sd: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Missingness {
    /// Probability that a steps or heart-rate minute is dropped.
    pub minute_dropout: f64,
    /// Probability that a whole day (all streams) is dropped.
    pub day_dropout: f64,
}

impl Default for Missingness {
    fn default() -> Self {
        Missingness {
            minute_dropout: 0.05,
            day_dropout: 0.05,
        }
    }
}

/// Within-day variation, used only when `noise` is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DayNoise {
    pub sleep_onset_sd: f64,
    pub sleep_duration_sd: f64,
    /// Fraction of epochs inside an episode scored awake.
    pub awake_fraction: f64,
    pub hr_noise_sd: f64,
}

impl Default for DayNoise {
    fn default() -> Self {
        DayNoise {
            sleep_onset_sd: 20.0,
            sleep_duration_sd: 30.0,
            awake_fraction: 0.05,
            hr_noise_sd: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawOptions {
    pub template: RawParams,
    pub participant_sd: RawParams,
    pub window_sd: RawParams,
    /// Additive deltas by season name; winter is the reference.
    pub season: BTreeMap<String, RawParams>,
    /// Additive deltas per PHQ-8 point.
    pub phq_effect: RawParams,
    pub day: DayNoise,
}

impl Default for RawOptions {
    fn default() -> Self {
        let season = BTreeMap::from([(
            "summer".to_string(),
            RawParams {
                hr_acrophase: 68.0,
                sleep_duration: -15.0,
                step_active_rate: 1.0,
                ..RawParams::ZERO
            },
        )]);
        RawOptions {
            template: RawParams {
                sleep_onset: 1380.0,
                sleep_duration: 450.0,
                step_active_rate: 12.0,
                step_rest_rate: 0.5,
                hr_mesor: 70.0,
                hr_amplitude: 8.0,
                hr_acrophase: 900.0,
            },
            participant_sd: RawParams {
                sleep_onset: 30.0,
                sleep_duration: 30.0,
                step_active_rate: 2.0,
                step_rest_rate: 0.1,
                hr_mesor: 5.0,
                hr_amplitude: 1.5,
                hr_acrophase: 30.0,
            },
            window_sd: RawParams {
                sleep_onset: 10.0,
                sleep_duration: 10.0,
                step_active_rate: 1.0,
                step_rest_rate: 0.0,
                hr_mesor: 1.5,
                hr_amplitude: 0.5,
                hr_acrophase: 10.0,
            },
            season,
            phq_effect: RawParams {
                sleep_duration: 2.0,
                step_active_rate: -0.1,
                ..RawParams::ZERO
            },
            day: DayNoise::default(),
        }
    }
}

/// Planted model for one feature of the feature-level panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelFeature {
    pub feature: String,
    /// Coefficients by design term name; absent terms are zero.
    #[serde(default)]
    pub beta: BTreeMap<String, f64>,
    pub sigma_u: f64,
    pub sigma_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelOptions {
    pub features: Vec<PanelFeature>,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            features: vec![PanelFeature {
                feature: Feature::DailyStep.column().into(),
                beta: BTreeMap::from([("intercept".to_string(), 8000.0), ("phq8".to_string(), -90.0)]),
                sigma_u: 1500.0,
                sigma_e: 2000.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub windows_per_participant: usize,
    /// Completion date of the first participant's first questionnaire.
    pub first_completion: NaiveDate,
    /// Participants' first completion dates are spread evenly over this
    /// many days.
    pub stagger_days: u32,
    pub sites: Vec<String>,
    pub utc_offset_minutes: i32,
    /// When false, all measurement noise is off: no day-level jitter, no
    /// awake epochs, expected step counts, exact heart rate.
    pub noise: bool,
    pub covariates: CovariateOptions,
    pub missingness: Missingness,
    pub raw: RawOptions,
    pub panel: PanelOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            n_participants: 20,
            windows_per_participant: 10,
            first_completion: NaiveDate::from_ymd_opt(2019, 1, 14).expect("valid date"),
            stagger_days: 365,
            sites: vec!["uk".into(), "nl".into(), "es".into()],
            utc_offset_minutes: 0,
            noise: true,
            covariates: CovariateOptions::default(),
            missingness: Missingness::default(),
            raw: RawOptions::default(),
            panel: PanelOptions::default(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("synth config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.missingness;
        for (name, v) in [("minute_dropout", m.minute_dropout), ("day_dropout", m.day_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        let c = &self.covariates;
        for (name, v) in [("female_rate", c.female_rate), ("employed_rate", c.employed_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        for (name, v) in [
            ("age_sd", c.age_sd),
            ("phq_participant_sd", c.phq_participant_sd),
            ("phq_window_sd", c.phq_window_sd),
            ("sleep_onset_sd", self.raw.day.sleep_onset_sd),
            ("sleep_duration_sd", self.raw.day.sleep_duration_sd),
            ("hr_noise_sd", self.raw.day.hr_noise_sd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(0.0..0.5).contains(&self.raw.day.awake_fraction) {
            return Err(Error::Config("awake_fraction must be in [0, 0.5)".into()));
        }
        self.raw.participant_sd.validate_sd("participant_sd")?;
        self.raw.window_sd.validate_sd("window_sd")?;
        for s in self.raw.season.keys() {
            if Season::parse(s).is_none() {
                return Err(Error::Config(format!("unknown season `{s}`")));
            }
        }
        self.pipeline_config().validate()?;
        let terms = self.panel_terms();
        for pf in &self.panel.features {
            if Feature::parse(&pf.feature).is_none() {
                return Err(Error::Config(format!("unknown feature `{}`", pf.feature)));
            }
            if !(pf.sigma_u >= 0.0 && pf.sigma_e >= 0.0) {
                return Err(Error::Config(format!("{}: variances must be non-negative", pf.feature)));
            }
            if let Some(t) = pf.beta.keys().find(|t| !terms.contains(t)) {
                return Err(Error::Config(format!("{}: unknown term `{t}`", pf.feature)));
            }
        }
        Ok(())
    }

    /// The pipeline configuration matching this cohort: same sites, no
    /// clock changes, no lockdowns.
    pub fn pipeline_config(&self) -> Config {
        Config::with_sites(self.sites.clone())
    }

    /// Term names accepted in panel coefficient tables, in design order.
    pub fn panel_terms(&self) -> Vec<String> {
        let mut t: Vec<String> = vec!["intercept".into(), "phq8".into()];
        t.extend(SEASON_TERMS.iter().map(|s| s.to_string()));
        t.extend(INTERACTION_TERMS.iter().map(|s| s.to_string()));
        t.extend(["age_c".to_string(), "female".to_string()]);
        t.extend(self.sites.iter().skip(1).map(|s| format!("site_{s}")));
        t.extend(["employed".to_string(), "lockdown".to_string()]);
        t
    }

    pub fn participant_id(&self, i: usize) -> String {
        format!("p{:03}", i + 1)
    }

    /// Completion dates of participant `i`'s questionnaires. Windows tile
    /// the calendar: each one starts where the previous ended.
    pub fn completion_dates(&self, i: usize) -> Vec<NaiveDate> {
        let n = self.n_participants.max(1) as u64;
        let first = self.first_completion + chrono::Days::new(i as u64 * u64::from(self.stagger_days) / n);
        (0..self.windows_per_participant)
            .map(|w| first + chrono::Days::new((w * WINDOW_DAYS) as u64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Participant = 1,
    Window = 2,
    SleepDay = 3,
    StepsDay = 4,
    HrDay = 5,
    DropDay = 6,
    DropSteps = 7,
    DropHr = 8,
    PanelIntercept = 9,
    PanelResidual = 10,
}

fn keyed_rng(seed: u64, participant: usize, day: i64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(participant as u64).to_le_bytes());
    key[16..24].copy_from_slice(&day.to_le_bytes());
    key[24..32].copy_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub participant_id: String,
    pub completion_date: NaiveDate,
    pub season: Season,
    pub score: u8,
    /// Parameters in force on every day of the window.
    pub params: RawParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub n_participants: usize,
    pub windows_per_participant: usize,
    pub noise: bool,
    pub terms: Vec<String>,
    /// Planted coefficients of the feature-level panel, by feature.
    pub panel: BTreeMap<String, PanelFeature>,
    pub raw_template: RawParams,
    pub raw_season_deltas: BTreeMap<String, RawParams>,
    pub raw_phq_effect: RawParams,
    pub windows: Vec<WindowTruth>,
}

impl Truth {
    fn new(cfg: &SynthConfig) -> Self {
        Truth {
            seed: cfg.seed,
            n_participants: cfg.n_participants,
            windows_per_participant: cfg.windows_per_participant,
            noise: cfg.noise,
            terms: cfg.panel_terms(),
            panel: BTreeMap::new(),
            raw_template: cfg.raw.template,
            raw_season_deltas: cfg.raw.season.clone(),
            raw_phq_effect: cfg.raw.phq_effect,
            windows: Vec::new(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Participant-level draws shared by both generation levels.
#[derive(Debug, Clone)]
pub struct PlannedParticipant {
    pub profile: ParticipantProfile,
    pub phq: Vec<PhqRecord>,
    pub windows: Vec<WindowTruth>,
}

fn completion_stamp(date: NaiveDate, offset: i32) -> LocalStamp {
    LocalStamp::from_local_seconds(midnight_minute(date) * 60 + 10 * 3600, offset)
}

pub fn plan_participant(cfg: &SynthConfig, i: usize) -> PlannedParticipant {
    let mut rng = keyed_rng(cfg.seed, i, 0, Stream::Participant);
    let c = &cfg.covariates;
    let age = (c.age_mean + c.age_sd * standard_normal(&mut rng)).round().clamp(18.0, 90.0) as u32;
    let gender = if rng.random::<f64>() < c.female_rate {
        Gender::Female
    } else {
        Gender::Male
    };
    let employed = rng.random::<f64>() < c.employed_rate;
    let phq_base = c.phq_mean + c.phq_participant_sd * standard_normal(&mut rng);
    let own = cfg.raw.template.jittered(&cfg.raw.participant_sd, &mut rng);

    let id = cfg.participant_id(i);
    let profile = ParticipantProfile {
        participant_id: id.clone(),
        age_years: age,
        gender,
        site: cfg.sites[i % cfg.sites.len()].clone(),
        employed,
    };
    let mut phq = Vec::new();
    let mut windows = Vec::new();
    for (w, date) in cfg.completion_dates(i).into_iter().enumerate() {
        let mut wr = keyed_rng(cfg.seed, i, w as i64, Stream::Window);
        let score = (phq_base + c.phq_window_sd * standard_normal(&mut wr))
            .round()
            .clamp(0.0, f64::from(PHQ_MAX)) as u8;
        let season = season_of(date);
        let mut params = own;
        if let Some(delta) = cfg.raw.season.get(season.as_str()) {
            params = params.plus_scaled(delta, 1.0);
        }
        params = params.plus_scaled(&cfg.raw.phq_effect, f64::from(score));
        if cfg.noise {
            params = params.jittered(&cfg.raw.window_sd, &mut wr);
        }
        phq.push(PhqRecord {
            participant_id: id.clone(),
            completion: completion_stamp(date, cfg.utc_offset_minutes),
            score,
        });
        windows.push(WindowTruth {
            participant_id: id.clone(),
            completion_date: date,
            season,
            score,
            params: params.clamped(),
        });
    }
    PlannedParticipant { profile, phq, windows }
}

/// Raw input records for one participant, in the ingest schemas.
#[derive(Debug, Clone, Default)]
pub struct ParticipantRaw {
    pub profile: Option<ParticipantProfile>,
    pub phq: Vec<PhqRecord>,
    pub sleep: Vec<SleepEpoch>,
    pub steps: Vec<StepRow>,
    pub hr: Vec<RawHrSample>,
}

/// Sleep interval of the night ending on `day`, in local seconds.
fn sleep_interval(cfg: &SynthConfig, i: usize, day: NaiveDate, p: &RawParams) -> (i64, i64, ChaCha8Rng) {
    let mut rng = keyed_rng(cfg.seed, i, day_index(day), Stream::SleepDay);
    let (mut onset, mut duration) = (p.sleep_onset, p.sleep_duration);
    let mut awake = 0.0;
    if cfg.noise {
        onset += cfg.raw.day.sleep_onset_sd * standard_normal(&mut rng);
        duration += cfg.raw.day.sleep_duration_sd * standard_normal(&mut rng);
        awake = cfg.raw.day.awake_fraction;
    }
    let duration = duration.clamp(60.0, 900.0);
    let rel = circular::signed_diff(onset, 0.0);
    let start = midnight_minute(day) * 60 + (rel * 2.0).round() as i64 * 30;
    let epochs = (duration / (1.0 - awake) * 2.0).round() as i64;
    (start, start + epochs * EPOCH_SECONDS, rng)
}

/// Generates the raw streams of participant `i`.
pub fn generate_participant_raw(cfg: &SynthConfig, plan: &PlannedParticipant, i: usize) -> ParticipantRaw {
    let mut out = ParticipantRaw {
        profile: Some(plan.profile.clone()),
        phq: plan.phq.clone(),
        ..Default::default()
    };
    if plan.windows.is_empty() {
        return out;
    }
    let id = &plan.profile.participant_id;
    let offset = cfg.utc_offset_minutes;
    let first_day = plan.windows[0].completion_date - chrono::Days::new(WINDOW_DAYS as u64);
    let last_day = plan.windows.last().expect("non-empty").completion_date;
    let n_days = (last_day - first_day).num_days() as usize;
    let params_of = |d: usize| &plan.windows[(d / WINDOW_DAYS).min(plan.windows.len() - 1)].params;
    let day_of = |d: usize| first_day + chrono::Days::new(d as u64);
    let dropped = |d: usize| {
        let mut r = keyed_rng(cfg.seed, i, day_index(day_of(d)), Stream::DropDay);
        r.random::<f64>() < cfg.missingness.day_dropout
    };

    // Nights end on days 0..=n_days; the last one only shapes the final evening.
    let nights: Vec<(i64, i64, ChaCha8Rng)> = (0..=n_days).map(|d| sleep_interval(cfg, i, day_of(d), params_of(d))).collect();
    for (d, (start, end, rng)) in nights.iter().enumerate().take(n_days) {
        if dropped(d) {
            continue;
        }
        let mut rng = rng.clone();
        let n = (end - start) / EPOCH_SECONDS;
        for k in 0..n {
            let edge = k == 0 || k == n - 1;
            let stage = if !edge && cfg.noise && rng.random::<f64>() < cfg.raw.day.awake_fraction {
                SleepStage::Awake
            } else {
                [SleepStage::Light, SleepStage::Deep, SleepStage::Light, SleepStage::Rem][(k / 60 % 4) as usize]
            };
            out.sleep.push(SleepEpoch {
                participant_id: id.clone(),
                stamp: LocalStamp::from_local_seconds(start + k * EPOCH_SECONDS, offset),
                stage,
            });
        }
    }

    let drop_minute = cfg.missingness.minute_dropout;
    for d in 0..n_days {
        if dropped(d) {
            continue;
        }
        let p = params_of(d);
        let day = day_of(d);
        let base = midnight_minute(day);
        let key = day_index(day);
        let mut step_rng = keyed_rng(cfg.seed, i, key, Stream::StepsDay);
        let mut hr_rng = keyed_rng(cfg.seed, i, key, Stream::HrDay);
        let mut drop_steps = keyed_rng(cfg.seed, i, key, Stream::DropSteps);
        let mut drop_hr = keyed_rng(cfg.seed, i, key, Stream::DropHr);
        let asleep = |sec: i64| nights[d..=d + 1].iter().any(|(s, e, _)| sec >= *s && sec < *e);
        let active = Poisson::new(p.step_active_rate).ok();
        let rest = Poisson::new(p.step_rest_rate).ok();
        let hr_noise = Normal::new(0.0, if cfg.noise { cfg.raw.day.hr_noise_sd } else { 0.0 }).expect("valid sd");
        for m in 0..MINUTES_PER_DAY {
            let local = base + m;
            let stamp = LocalStamp::from_local_seconds(local * 60, offset);
            let sleeping = asleep(local * 60);
            let (rate, dist) = if sleeping { (p.step_rest_rate, &rest) } else { (p.step_active_rate, &active) };
            let steps = match dist {
                Some(dist) if cfg.noise => dist.sample(&mut step_rng),
                _ => rate,
            };
            // Uniforms are drawn for every minute so dropout stays coupled across rates.
            if drop_steps.random::<f64>() >= drop_minute {
                out.steps.push(StepRow {
                    participant_id: id.clone(),
                    stamp,
                    steps,
                    line: 0,
                });
            }
            let clean = p.hr_mesor + p.hr_amplitude * (TAU * (m as f64 - p.hr_acrophase) / 1440.0).cos();
            let bpm = if cfg.noise {
                ((clean + hr_noise.sample(&mut hr_rng)) * 100.0).round() / 100.0
            } else {
                clean
            };
            if drop_hr.random::<f64>() >= drop_minute {
                out.hr.push(RawHrSample {
                    participant_id: id.clone(),
                    stamp,
                    bpm: bpm.clamp(30.0, 220.0),
                });
            }
        }
    }
    out
}

/// Raw streams of the whole cohort, held in memory. Use
/// [`write_raw_streams`] for large cohorts.
pub fn generate_raw_streams(cfg: &SynthConfig) -> (Vec<ParticipantRaw>, Truth) {
    let mut truth = Truth::new(cfg);
    let mut out = Vec::with_capacity(cfg.n_participants);
    for i in 0..cfg.n_participants {
        let plan = plan_participant(cfg, i);
        truth.windows.extend(plan.windows.iter().cloned());
        out.push(generate_participant_raw(cfg, &plan, i));
    }
    (out, truth)
}

struct CsvSink {
    path: std::path::PathBuf,
    writer: csv::Writer<std::io::BufWriter<std::fs::File>>,
}

impl CsvSink {
    fn create(dir: &Path, kind: SchemaKind) -> Result<Self> {
        let path = dir.join(kind.file_name());
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
        writer.write_record(kind.header())?;
        Ok(CsvSink { path, writer })
    }

    fn write_all<R: StreamRecord>(&mut self, records: &[R]) -> Result<()> {
        for r in records {
            self.writer.write_record(r.to_row())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes the five input CSVs, `config.toml` for the pipeline and
/// `truth.json` into `dir`, one participant at a time.
pub fn write_raw_streams(cfg: &SynthConfig, dir: &Path) -> Result<Truth> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut participants = CsvSink::create(dir, SchemaKind::Participants)?;
    let mut phq = CsvSink::create(dir, SchemaKind::Phq8)?;
    let mut sleep = CsvSink::create(dir, SchemaKind::Sleep)?;
    let mut steps = CsvSink::create(dir, SchemaKind::Steps)?;
    let mut hr = CsvSink::create(dir, SchemaKind::Hr)?;
    let mut truth = Truth::new(cfg);
    for i in 0..cfg.n_participants {
        let plan = plan_participant(cfg, i);
        truth.windows.extend(plan.windows.iter().cloned());
        let raw = generate_participant_raw(cfg, &plan, i);
        participants.write_all(std::slice::from_ref(&plan.profile))?;
        phq.write_all(&raw.phq)?;
        sleep.write_all(&raw.sleep)?;
        steps.write_all(&raw.steps)?;
        hr.write_all(&raw.hr)?;
    }
    for sink in [participants, phq, sleep, steps, hr] {
        sink.finish()?;
    }
    write_pipeline_config(cfg, dir)?;
    truth.write_json(&dir.join("truth.json"))?;
    Ok(truth)
}

fn write_pipeline_config(cfg: &SynthConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.toml");
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(cfg.pipeline_config().to_toml_string().as_bytes())
        .map_err(|e| Error::io(&path, e))
}

/// Design-term values of one panel row, in [`SynthConfig::panel_terms`]
/// order. Age is centred at the configured mean.
fn term_values(cfg: &SynthConfig, row: &FeatureRow) -> Vec<f64> {
    let score = f64::from(row.score);
    let dummy = |s: Season| if row.season == s { 1.0 } else { 0.0 };
    let seasons = [dummy(Season::Spring), dummy(Season::Summer), dummy(Season::Autumn)];
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut v = vec![1.0, score];
    v.extend(seasons);
    v.extend(seasons.map(|s| s * score));
    v.push(f64::from(row.age_years) - cfg.covariates.age_mean);
    v.push(flag(row.gender == Gender::Female));
    v.extend(cfg.sites.iter().skip(1).map(|s| flag(&row.site == s)));
    v.push(flag(row.employed));
    v.push(flag(row.lockdown));
    v
}

/// Feature-level panel: covariates as in the raw cohort, responses drawn
/// from `y = Xβ + u + ε` for each configured feature; other features are
/// left unavailable.
pub fn generate_feature_panel(cfg: &SynthConfig) -> Result<(FeatureTable, Truth)> {
    let pipeline = cfg.pipeline_config();
    let terms = cfg.panel_terms();
    let mut truth = Truth::new(cfg);
    let planted: Vec<(Feature, Vec<f64>, &PanelFeature)> = cfg
        .panel
        .features
        .iter()
        .map(|pf| {
            let f = Feature::parse(&pf.feature).ok_or_else(|| Error::Config(format!("unknown feature `{}`", pf.feature)))?;
            let beta = terms.iter().map(|t| pf.beta.get(t).copied().unwrap_or(0.0)).collect();
            Ok((f, beta, pf))
        })
        .collect::<Result<_>>()?;
    for (f, _, pf) in &planted {
        truth.panel.insert(f.column().to_string(), (*pf).clone());
    }

    let mut table = FeatureTable::default();
    for i in 0..cfg.n_participants {
        let plan = plan_participant(cfg, i);
        let mut u_rng = keyed_rng(cfg.seed, i, 0, Stream::PanelIntercept);
        let u: Vec<f64> = planted.iter().map(|(_, _, pf)| pf.sigma_u * standard_normal(&mut u_rng)).collect();
        for (w, (rec, wt)) in plan.phq.iter().zip(&plan.windows).enumerate() {
            let date = wt.completion_date;
            let mut row = FeatureRow {
                participant_id: plan.profile.participant_id.clone(),
                phq_time: rec.completion,
                score: rec.score,
                season: wt.season,
                lockdown: lockdown_flag(date, &plan.profile.site, &pipeline)?,
                pre_covid: date < pipeline.pre_covid_cutoff,
                age_years: plan.profile.age_years,
                gender: plan.profile.gender,
                site: plan.profile.site.clone(),
                employed: plan.profile.employed,
                values: [None; 12],
            };
            let x = term_values(cfg, &row);
            let mut e_rng = keyed_rng(cfg.seed, i, w as i64, Stream::PanelResidual);
            for (k, (f, beta, pf)) in planted.iter().enumerate() {
                let mean: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                let mut y = mean + u[k] + pf.sigma_e * standard_normal(&mut e_rng);
                if f.is_circular() {
                    y = circular::wrap_minutes(y);
                }
                row.values[f.index()] = Some(y);
            }
            table.rows.push(row);
        }
        truth.windows.extend(plan.windows);
    }
    Ok((table, truth))
}

/// Writes `features.csv`, `config.toml` and `truth.json` for a panel.
pub fn write_feature_panel(cfg: &SynthConfig, dir: &Path) -> Result<Truth> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (table, truth) = generate_feature_panel(cfg)?;
    table.write_file(&dir.join("features.csv"))?;
    write_pipeline_config(cfg, dir)?;
    truth.write_json(&dir.join("truth.json"))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{densify_steps, resample_hr_to_minutes};
    use crate::sleep::build_episodes;

    fn small(noise: bool) -> SynthConfig {
        SynthConfig {
            n_participants: 3,
            windows_per_participant: 2,
            noise,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = SynthConfig::default();
        let back = SynthConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(SynthConfig::from_toml_str("seed = 3\n").is_ok());
        assert!(SynthConfig::from_toml_str("[missingness]\nminute_dropout = 1.0\n").is_err());
        assert!(SynthConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn keyed_streams_are_independent_of_order() {
        let cfg = small(true);
        let a = plan_participant(&cfg, 2);
        let _ = plan_participant(&cfg, 0);
        let b = plan_participant(&cfg, 2);
        assert_eq!(a.windows, b.windows);
        let x: f64 = keyed_rng(1, 2, 3, Stream::HrDay).random();
        let y: f64 = keyed_rng(1, 2, 3, Stream::StepsDay).random();
        assert_ne!(x, y);
    }

    #[test]
    fn windows_tile_and_stagger() {
        let cfg = SynthConfig {
            n_participants: 4,
            windows_per_participant: 3,
            ..SynthConfig::default()
        };
        let d0 = cfg.completion_dates(0);
        assert_eq!((d0[1] - d0[0]).num_days(), 14);
        assert_eq!((cfg.completion_dates(2)[0] - d0[0]).num_days(), 182);
    }

    #[test]
    fn noiseless_streams_are_exact() {
        let mut cfg = small(false);
        cfg.missingness = Missingness {
            minute_dropout: 0.0,
            day_dropout: 0.0,
        };
        let plan = plan_participant(&cfg, 0);
        let raw = generate_participant_raw(&cfg, &plan, 0);
        assert_eq!(raw.hr.len(), 2 * 14 * 1440);
        assert_eq!(raw.steps.len(), 2 * 14 * 1440);
        let episodes = build_episodes(&raw.sleep, 60);
        assert_eq!(episodes.len(), 28);
        let p = plan.windows[0].params;
        for e in &episodes[..14] {
            assert_eq!(e.total_sleep_minutes, (p.sleep_duration * 2.0).round() / 2.0);
            assert!(circular::signed_diff(e.onset.clock_minutes(), p.sleep_onset).abs() <= 0.25);
        }
        let hr = resample_hr_to_minutes(&raw.hr);
        let (steps, rejects) = densify_steps(&raw.steps);
        assert!(rejects.is_empty());
        assert_eq!(hr[0].present().count(), 2 * 14 * 1440);
        assert!(steps[0].present().all(|(_, v)| v == p.step_active_rate || v == p.step_rest_rate
            || v == plan.windows[1].params.step_active_rate || v == plan.windows[1].params.step_rest_rate));
    }

    #[test]
    fn dropout_is_coupled_across_rates() {
        let mut lo = small(true);
        lo.missingness.minute_dropout = 0.1;
        lo.missingness.day_dropout = 0.1;
        let mut hi = lo.clone();
        hi.missingness.minute_dropout = 0.3;
        hi.missingness.day_dropout = 0.2;
        for i in 0..3 {
            let plan = plan_participant(&lo, i);
            let a = generate_participant_raw(&lo, &plan, i);
            let b = generate_participant_raw(&hi, &plan, i);
            let kept: std::collections::BTreeSet<i64> = a.hr.iter().map(|s| s.stamp.utc_epoch_seconds).collect();
            assert!(b.hr.iter().all(|s| kept.contains(&s.stamp.utc_epoch_seconds)));
            assert!(b.hr.len() < a.hr.len());
        }
    }

    #[test]
    fn zero_variance_panel_is_exactly_linear() {
        let mut cfg = small(true);
        cfg.panel.features[0].sigma_u = 0.0;
        cfg.panel.features[0].sigma_e = 0.0;
        let (table, truth) = generate_feature_panel(&cfg).unwrap();
        assert_eq!(table.rows.len(), 6);
        for r in &table.rows {
            let want = 8000.0 - 90.0 * f64::from(r.score);
            assert_eq!(r.value(Feature::DailyStep), Some(want));
            assert_eq!(r.value(Feature::HrMesor), None);
        }
        assert_eq!(truth.panel["daily_step"].beta["phq8"], -90.0);
    }

    #[test]
    fn unknown_panel_term_rejected() {
        let mut cfg = small(true);
        cfg.panel.features[0].beta.insert("site_fr".into(), 1.0);
        assert!(cfg.validate().is_err());
    }
}
