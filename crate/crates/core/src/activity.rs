//! Nonparametric rest-activity features of the step stream: daily steps,
//! intradaily variability, interdaily stability, and L5 / M10 onsets.

use crate::circular;
use crate::config::{DailyStepDays, L5M10Mode};
use crate::ingest::MinuteSeries;
use crate::time::{midnight_minute, MINUTES_PER_DAY};
use crate::windowing::{AssessmentWindow, WINDOW_DAYS};

const DAY: usize = MINUTES_PER_DAY as usize;
pub const L5_MINUTES: usize = 300;
pub const M10_MINUTES: usize = 600;

/// A value plus a flag for inputs where the statistic is defined by
/// convention rather than by data (constant series, all-tied windows).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub degenerate: bool,
}

/// Per-bin mean step counts over the window, day-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    pub bin_minutes: u32,
    pub values: Vec<Option<f64>>,
}

impl BinnedSeries {
    pub fn bins_per_day(&self) -> usize {
        DAY / self.bin_minutes as usize
    }

    pub fn days(&self) -> usize {
        self.values.len() / self.bins_per_day()
    }

    pub fn from_values(bin_minutes: u32, values: Vec<Option<f64>>) -> Self {
        assert!(bin_minutes > 0 && DAY.is_multiple_of(bin_minutes as usize), "bin size must divide a day");
        let s = BinnedSeries { bin_minutes, values };
        assert_eq!(s.values.len() % s.bins_per_day(), 0, "whole days only");
        s
    }

    /// Bins the 14 window days; a bin is MISSING when all its minutes are.
    pub fn from_window(window_start_minute: i64, steps: Option<&MinuteSeries>, bin_minutes: u32) -> Self {
        let bin = bin_minutes as i64;
        let n = WINDOW_DAYS * DAY / bin_minutes as usize;
        let values = (0..n)
            .map(|b| {
                let from = window_start_minute + b as i64 * bin;
                let (sum, count) = steps
                    .map(|s| {
                        s.slice(from, from + bin)
                            .flatten()
                            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1))
                    })
                    .unwrap_or((0.0, 0));
                (count > 0).then(|| sum / count as f64)
            })
            .collect();
        BinnedSeries::from_values(bin_minutes, values)
    }
}

/// Mean that returns the common value exactly when all inputs agree.
fn mean_exact(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        first
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// IV = N·Σ(xᵢ − xᵢ₋₁)² / ((N−1)·Σ(xᵢ − x̄)²) over present bins, with
/// difference terms only for adjacent present pairs. A constant series
/// returns 0 flagged degenerate. `None` with fewer than two adjacent pairs.
pub fn intradaily_variability(binned: &BinnedSeries) -> Option<Flagged> {
    let present: Vec<f64> = binned.values.iter().flatten().copied().collect();
    let pairs: Vec<(f64, f64)> = binned
        .values
        .windows(2)
        .filter_map(|w| Some((w[0]?, w[1]?)))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = present.len() as f64;
    let mean = mean_exact(&present);
    let dev: f64 = present.iter().map(|x| (x - mean).powi(2)).sum();
    let diff: f64 = pairs.iter().map(|(a, b)| (b - a).powi(2)).sum();
    if dev == 0.0 {
        return Some(Flagged {
            value: 0.0,
            degenerate: true,
        });
    }
    Some(Flagged {
        value: n * diff / ((n - 1.0) * dev),
        degenerate: false,
    })
}

/// IS = N·Σₕ(x̄ₕ − x̄)² / (p·Σᵢ(xᵢ − x̄)²). `None` with fewer than two days
/// of data or zero variance.
pub fn interdaily_stability(binned: &BinnedSeries) -> Option<f64> {
    let p = binned.bins_per_day();
    let days_with_data = binned
        .values
        .chunks(p)
        .filter(|d| d.iter().any(Option::is_some))
        .count();
    if days_with_data < 2 {
        return None;
    }
    let present: Vec<f64> = binned.values.iter().flatten().copied().collect();
    let n = present.len() as f64;
    let mean = mean_exact(&present);

    // Total sum of squares split as Σₕ [nₕ·(x̄ₕ − x̄)² + within-bin SS], so a
    // perfectly repeating profile yields exactly 1.
    let mut between = 0.0;
    let mut total = 0.0;
    let mut column = Vec::with_capacity(binned.days());
    for h in 0..p {
        column.clear();
        column.extend(binned.values.iter().skip(h).step_by(p).flatten().copied());
        if column.is_empty() {
            continue;
        }
        let mh = mean_exact(&column);
        let d2 = (mh - mean).powi(2);
        let within: f64 = column.iter().map(|x| (x - mh).powi(2)).sum();
        between += n / p as f64 * d2;
        total += column.len() as f64 * d2 + within;
    }
    if total == 0.0 {
        return None;
    }
    Some((between / total).clamp(0.0, 1.0))
}

/// Per-minute mean across the window's days, ignoring MISSING.
#[derive(Debug, Clone, PartialEq)]
pub struct DayProfile(pub Vec<Option<f64>>);

pub fn day_profile(window_start_minute: i64, days: usize, steps: Option<&MinuteSeries>) -> DayProfile {
    let mut sum = vec![0.0; DAY];
    let mut count = vec![0u32; DAY];
    if let Some(s) = steps {
        for d in 0..days {
            let base = window_start_minute + (d * DAY) as i64;
            for (m, v) in s.slice(base, base + DAY as i64).enumerate() {
                if let Some(v) = v {
                    sum[m] += v;
                    count[m] += 1;
                }
            }
        }
    }
    DayProfile(
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| (c > 0).then(|| s / f64::from(c)))
            .collect(),
    )
}

/// Fills circular MISSING runs of at most `max_gap` minutes by linear
/// interpolation between the flanking values. `None` if nothing is present.
pub fn interpolate_circular(profile: &[Option<f64>], max_gap: usize) -> Option<Vec<Option<f64>>> {
    let n = profile.len();
    let anchor = profile.iter().position(Option::is_some)?;
    let mut out = profile.to_vec();
    let mut i = 0;
    while i < n {
        let pos = (anchor + i) % n;
        if profile[pos].is_some() {
            i += 1;
            continue;
        }
        let mut len = 0;
        while len < n && profile[(pos + len) % n].is_none() {
            len += 1;
        }
        if len <= max_gap {
            let left = profile[(pos + n - 1) % n].expect("run starts after a present value");
            let right = profile[(pos + len) % n].expect("run ends before a present value");
            for k in 0..len {
                let t = (k + 1) as f64 / (len + 1) as f64;
                out[(pos + k) % n] = Some(left + t * (right - left));
            }
        }
        i += len;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestActivityOnsets {
    pub l5_onset: f64,
    pub m10_onset: f64,
    pub degenerate: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Extreme {
    Least,
    Most,
}

fn direct_sum(x: &[Option<f64>], start: usize, len: usize) -> f64 {
    let n = x.len();
    (0..len).map(|j| x[(start + j) % n].unwrap_or(0.0)).sum()
}

/// Start minute of the extreme circular window of `len` minutes, skipping
/// windows that touch a MISSING minute; ties go to the earliest start.
/// Returns the onset and whether every valid window tied.
fn extreme_window(x: &[Option<f64>], len: usize, which: Extreme) -> Option<(usize, bool)> {
    let n = x.len();
    let scale: f64 = 1.0 + x.iter().flatten().map(|v| v.abs()).sum::<f64>();
    let tol = 1e-9 * scale;

    let mut sum = direct_sum(x, 0, len);
    let mut missing = (0..len).filter(|&j| x[j % n].is_none()).count();
    let mut sliding = Vec::with_capacity(n);
    for k in 0..n {
        if missing == 0 {
            sliding.push((k, sum));
        }
        let out = x[k];
        let inc = x[(k + len) % n];
        sum += inc.unwrap_or(0.0) - out.unwrap_or(0.0);
        missing = missing + usize::from(inc.is_none()) - usize::from(out.is_none());
    }
    if sliding.is_empty() {
        return None;
    }
    let better = |a: f64, b: f64| match which {
        Extreme::Least => a < b,
        Extreme::Most => a > b,
    };
    let best = sliding
        .iter()
        .map(|&(_, s)| s)
        .fold(sliding[0].1, |acc, s| if better(s, acc) { s } else { acc });
    let lo = sliding.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
    let hi = sliding.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    let all_tied = hi - lo <= tol;

    // Sliding sums drift by rounding; re-evaluate near-optimal candidates
    // exactly so ties resolve deterministically.
    let mut winner: Option<(usize, f64)> = None;
    for &(k, s) in &sliding {
        if (s - best).abs() > tol {
            continue;
        }
        let exact = direct_sum(x, k, len);
        match winner {
            Some((_, w)) if !better(exact, w) => {}
            _ => winner = Some((k, exact)),
        }
    }
    winner.map(|(k, _)| (k, all_tied))
}

/// L5 and M10 onsets on a 1440-minute circular profile after gap filling.
pub fn l5_m10_onsets(profile: &DayProfile, max_gap: usize) -> Option<RestActivityOnsets> {
    let filled = interpolate_circular(&profile.0, max_gap)?;
    let (l5, l5_tied) = extreme_window(&filled, L5_MINUTES, Extreme::Least)?;
    let (m10, m10_tied) = extreme_window(&filled, M10_MINUTES, Extreme::Most)?;
    Some(RestActivityOnsets {
        l5_onset: l5 as f64,
        m10_onset: m10 as f64,
        degenerate: l5_tied || m10_tied,
    })
}

/// Per-day variant: onsets computed on each listed day, then averaged on
/// the clock circle.
pub fn l5_m10_onsets_per_day(
    window_start_minute: i64,
    days: &[usize],
    steps: Option<&MinuteSeries>,
    max_gap: usize,
) -> Option<RestActivityOnsets> {
    let per_day: Vec<RestActivityOnsets> = days
        .iter()
        .filter_map(|&d| {
            let base = window_start_minute + (d * DAY) as i64;
            let values: Vec<Option<f64>> = steps?.slice(base, base + DAY as i64).collect();
            l5_m10_onsets(&DayProfile(values), max_gap)
        })
        .collect();
    if per_day.is_empty() {
        return None;
    }
    Some(RestActivityOnsets {
        l5_onset: circular::mean_minutes(per_day.iter().map(|o| o.l5_onset))?,
        m10_onset: circular::mean_minutes(per_day.iter().map(|o| o.m10_onset))?,
        degenerate: per_day.iter().all(|o| o.degenerate),
    })
}

/// Mean daily total over qualifying days (or every day with data).
pub fn daily_step_mean(
    window: &AssessmentWindow,
    steps: Option<&MinuteSeries>,
    days: DailyStepDays,
    coverage_min: f64,
) -> Option<f64> {
    let steps = steps?;
    let base = midnight_minute(window.start);
    let totals: Vec<f64> = (0..WINDOW_DAYS)
        .filter(|&d| match days {
            DailyStepDays::Qualifying => window.coverage.is_qualifying(d, coverage_min),
            DailyStepDays::All => window.coverage.days[d].step_fraction > 0.0,
        })
        .map(|d| {
            let from = base + (d * DAY) as i64;
            steps.slice(from, from + DAY as i64).flatten().sum()
        })
        .collect();
    (!totals.is_empty()).then(|| totals.iter().sum::<f64>() / totals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityFeatureSet {
    pub daily_step: Option<f64>,
    pub iv: Option<Flagged>,
    pub is: Option<f64>,
    pub onsets: Option<RestActivityOnsets>,
}

pub struct ActivityOptions {
    pub bin_minutes: u32,
    pub mode: L5M10Mode,
    pub daily_step_days: DailyStepDays,
    pub coverage_min: f64,
    pub interp_max_gap: usize,
}

pub fn activity_features(
    window: &AssessmentWindow,
    steps: Option<&MinuteSeries>,
    opts: &ActivityOptions,
) -> ActivityFeatureSet {
    let start = window.start_minute();
    let binned = BinnedSeries::from_window(start, steps, opts.bin_minutes);
    let onsets = match opts.mode {
        L5M10Mode::Profile => l5_m10_onsets(&day_profile(start, WINDOW_DAYS, steps), opts.interp_max_gap),
        L5M10Mode::PerDay => {
            let days: Vec<usize> = (0..WINDOW_DAYS)
                .filter(|&d| window.coverage.is_qualifying(d, opts.coverage_min))
                .collect();
            l5_m10_onsets_per_day(start, &days, steps, opts.interp_max_gap)
        }
    };
    ActivityFeatureSet {
        daily_step: daily_step_mean(window, steps, opts.daily_step_days, opts.coverage_min),
        iv: intradaily_variability(&binned),
        is: interdaily_stability(&binned),
        onsets,
    }
}
