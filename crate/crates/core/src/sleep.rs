//! Sleep episodes from 30-second stage epochs, and the four sleep-wake
//! features of a window.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::circular;
use crate::ingest::{SleepEpoch, EPOCH_SECONDS};
use crate::time::LocalStamp;
use crate::windowing::AssessmentWindow;

#[derive(Debug, Clone, PartialEq)]
pub struct SleepEpisode {
    pub participant_id: String,
    pub onset: LocalStamp,
    pub offset: LocalStamp,
    pub total_sleep_minutes: f64,
    /// Noon-to-noon day containing the offset: day D covers offsets in
    /// `[D-1 12:00, D 12:00)`.
    pub attributed_day: NaiveDate,
}

impl SleepEpisode {
    pub fn span_minutes(&self) -> f64 {
        (self.offset.utc_epoch_seconds - self.onset.utc_epoch_seconds) as f64 / 60.0
    }
}

fn noon_to_noon_day(offset: LocalStamp) -> NaiveDate {
    offset.plus_seconds(12 * 3600).local_date()
}

/// Splits sorted epochs into episodes wherever consecutive epochs are more
/// than `gap_minutes` apart. Each episode runs from the first to the end of
/// the last non-awake epoch; blocks with no sleep produce nothing.
pub fn build_episodes(epochs: &[SleepEpoch], gap_minutes: u32) -> Vec<SleepEpisode> {
    let max_gap = i64::from(gap_minutes) * 60;
    let mut out = Vec::new();
    let mut block: Vec<&SleepEpoch> = Vec::new();

    let mut flush = |block: &mut Vec<&SleepEpoch>| {
        let first = block.iter().position(|e| e.stage.is_asleep());
        let last = block.iter().rposition(|e| e.stage.is_asleep());
        if let (Some(i), Some(j)) = (first, last) {
            let asleep = block[i..=j].iter().filter(|e| e.stage.is_asleep()).count();
            let offset = block[j].end();
            out.push(SleepEpisode {
                participant_id: block[i].participant_id.clone(),
                onset: block[i].stamp,
                offset,
                total_sleep_minutes: asleep as f64 * EPOCH_SECONDS as f64 / 60.0,
                attributed_day: noon_to_noon_day(offset),
            });
        }
        block.clear();
    };

    for e in epochs {
        if let Some(prev) = block.last() {
            let gap = e.stamp.utc_epoch_seconds - prev.end().utc_epoch_seconds;
            if prev.participant_id != e.participant_id || gap > max_gap {
                flush(&mut block);
            }
        }
        block.push(e);
    }
    flush(&mut block);
    out
}

/// Longest episode per (participant, noon-to-noon day); ties go to the
/// earlier onset.
pub fn main_sleep_per_day(episodes: &[SleepEpisode]) -> Vec<SleepEpisode> {
    let mut best: BTreeMap<(&str, NaiveDate), &SleepEpisode> = BTreeMap::new();
    for ep in episodes {
        best.entry((&ep.participant_id, ep.attributed_day))
            .and_modify(|cur| {
                let longer = ep.total_sleep_minutes > cur.total_sleep_minutes;
                let tie_earlier = ep.total_sleep_minutes == cur.total_sleep_minutes
                    && ep.onset.utc_epoch_seconds < cur.onset.utc_epoch_seconds;
                if longer || tie_earlier {
                    *cur = ep;
                }
            })
            .or_insert(ep);
    }
    best.into_values().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepFeatureSet {
    pub duration_mean: f64,
    /// Sample standard deviation; `None` with fewer than two nights.
    pub variability: Option<f64>,
    pub onset_mean: f64,
    pub offset_mean: f64,
    pub nights: usize,
}

/// Sleep features over the episodes attributed to the window's 14 days.
/// Pass main sleeps (the default) or every episode. Returns `None` when no
/// night falls in the window.
pub fn sleep_features(window: &AssessmentWindow, episodes: &[SleepEpisode]) -> Option<SleepFeatureSet> {
    let nights: Vec<&SleepEpisode> = episodes
        .iter()
        .filter(|e| e.participant_id == window.phq.participant_id && window.contains_day(e.attributed_day))
        .collect();
    sleep_features_of(&nights)
}

pub(crate) fn sleep_features_of(nights: &[&SleepEpisode]) -> Option<SleepFeatureSet> {
    if nights.is_empty() {
        return None;
    }
    let n = nights.len() as f64;
    let duration_mean = nights.iter().map(|e| e.total_sleep_minutes).sum::<f64>() / n;
    let variability = (nights.len() >= 2).then(|| {
        let ss: f64 = nights
            .iter()
            .map(|e| (e.total_sleep_minutes - duration_mean).powi(2))
            .sum();
        (ss / (n - 1.0)).sqrt()
    });
    let onset_mean = circular::mean_minutes(nights.iter().map(|e| e.onset.clock_minutes()))?;
    let offset_mean = circular::mean_minutes(nights.iter().map(|e| e.offset.clock_minutes()))?;
    Some(SleepFeatureSet {
        duration_mean,
        variability,
        onset_mean,
        offset_mean,
        nights: nights.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SleepStage;

    fn epochs(pid: &str, start_utc: i64, stages: &[SleepStage]) -> Vec<SleepEpoch> {
        stages
            .iter()
            .enumerate()
            .map(|(i, &stage)| SleepEpoch {
                participant_id: pid.into(),
                stamp: LocalStamp::new(start_utc + i as i64 * 30, 0).unwrap(),
                stage,
            })
            .collect()
    }

    fn episode(onset_utc: i64, minutes: f64) -> SleepEpisode {
        let onset = LocalStamp::new(onset_utc, 0).unwrap();
        let offset = onset.plus_seconds((minutes * 60.0) as i64);
        SleepEpisode {
            participant_id: "p".into(),
            onset,
            offset,
            total_sleep_minutes: minutes,
            attributed_day: noon_to_noon_day(offset),
        }
    }

    #[test]
    fn eight_hours_light_sleep() {
        let e = epochs("p", 0, &[SleepStage::Light; 960]);
        let eps = build_episodes(&e, 60);
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].total_sleep_minutes, 480.0);
        assert_eq!(eps[0].span_minutes(), 480.0);
    }

    #[test]
    fn three_hour_gap_splits() {
        let mut e = epochs("p", 0, &[SleepStage::Deep; 120]);
        e.extend(epochs("p", 3600 + 3 * 3600, &[SleepStage::Rem; 120]));
        assert_eq!(build_episodes(&e, 60).len(), 2);
    }

    #[test]
    fn interleaved_awake_counted_out() {
        // Every tenth epoch awake, never first or last.
        let stages: Vec<SleepStage> = (0..1000)
            .map(|i| if i % 10 == 5 { SleepStage::Awake } else { SleepStage::Light })
            .collect();
        let asleep = stages.iter().filter(|s| s.is_asleep()).count();
        let eps = build_episodes(&epochs("p", 0, &stages), 60);
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].total_sleep_minutes, asleep as f64 * 0.5);
        assert!((eps[0].total_sleep_minutes - 0.9 * eps[0].span_minutes()).abs() < 1e-12);
    }

    #[test]
    fn leading_and_trailing_awake_trimmed() {
        let mut stages = vec![SleepStage::Awake; 4];
        stages.extend([SleepStage::Light; 10]);
        stages.extend([SleepStage::Awake; 6]);
        let eps = build_episodes(&epochs("p", 0, &stages), 60);
        assert_eq!(eps[0].onset.utc_epoch_seconds, 120);
        assert_eq!(eps[0].offset.utc_epoch_seconds, 14 * 30);
        assert_eq!(eps[0].total_sleep_minutes, 5.0);
    }

    #[test]
    fn awake_only_block_is_not_an_episode() {
        assert!(build_episodes(&epochs("p", 0, &[SleepStage::Awake; 40]), 60).is_empty());
    }

    #[test]
    fn participants_never_merge() {
        let mut e = epochs("a", 0, &[SleepStage::Light; 10]);
        e.extend(epochs("b", 300, &[SleepStage::Light; 10]));
        assert_eq!(build_episodes(&e, 60).len(), 2);
    }

    #[test]
    fn noon_to_noon_attribution() {
        // 23:00 day 0 to 07:00 day 1 belongs to day 1; a nap ending 13:00
        // on day 1 belongs to day 2.
        let night = episode(23 * 3600, 480.0);
        assert_eq!(night.attributed_day, NaiveDate::from_ymd_opt(1970, 1, 2).unwrap());
        let nap = episode(86_400 + 12 * 3600, 60.0);
        assert_eq!(nap.attributed_day, NaiveDate::from_ymd_opt(1970, 1, 3).unwrap());
    }

    #[test]
    fn main_sleep_selection() {
        let night = episode(23 * 3600, 450.0);
        let nap = episode(86_400 + 9 * 3600, 40.0); // ends 09:40 day 1, same day as night
        let main = main_sleep_per_day(&[nap.clone(), night.clone()]);
        assert_eq!(main, vec![night]);
        assert!(main_sleep_per_day(&[]).is_empty());

        let a = episode(22 * 3600, 300.0);
        let b = episode(86_400 + 4 * 3600, 300.0);
        assert_eq!(a.attributed_day, b.attributed_day);
        assert_eq!(main_sleep_per_day(&[b, a.clone()]), vec![a]);
    }

    #[test]
    fn feature_arithmetic() {
        let nights: Vec<SleepEpisode> = (0..14).map(|d| episode(d * 86_400 + 22 * 3600, 450.0)).collect();
        let refs: Vec<&SleepEpisode> = nights.iter().collect();
        let f = sleep_features_of(&refs).unwrap();
        assert_eq!(f.duration_mean, 450.0);
        assert_eq!(f.variability, Some(0.0));
        assert!((f.onset_mean - 1320.0).abs() < 1e-9);
        assert!((f.offset_mean - circular::wrap_minutes(1320.0 + 450.0)).abs() < 1e-9);
    }

    #[test]
    fn onset_mean_two_clusters() {
        let nights: Vec<SleepEpisode> = (0..14)
            .map(|d| {
                let hour = if d % 2 == 0 { 22 } else { 23 };
                episode(d * 86_400 + hour * 3600, 420.0)
            })
            .collect();
        let refs: Vec<&SleepEpisode> = nights.iter().collect();
        let f = sleep_features_of(&refs).unwrap();
        assert!((f.onset_mean - 1350.0).abs() < 1e-9);
    }

    #[test]
    fn single_night_has_no_variability() {
        let e = episode(0, 400.0);
        let f = sleep_features_of(&[&e]).unwrap();
        assert_eq!(f.variability, None);
        assert!(sleep_features_of(&[]).is_none());
    }

    proptest::proptest! {
        #[test]
        fn sample_sd_identity(durations in proptest::collection::vec(60.0f64..720.0, 2..20)) {
            let nights: Vec<SleepEpisode> = durations
                .iter()
                .enumerate()
                .map(|(d, &m)| episode(d as i64 * 86_400, m))
                .collect();
            let refs: Vec<&SleepEpisode> = nights.iter().collect();
            let f = sleep_features_of(&refs).unwrap();
            let mean = durations.iter().sum::<f64>() / durations.len() as f64;
            let ss: f64 = durations.iter().map(|d| (d - mean).powi(2)).sum();
            let lhs = f.variability.unwrap().powi(2) * (durations.len() as f64 - 1.0);
            proptest::prop_assert!((lhs - ss).abs() <= 1e-9 * ss.max(1e-12));
        }

        #[test]
        fn clock_shift_equivariance(
            onsets in proptest::collection::vec(0i64..1440, 3..14),
            shift in 0i64..1440,
        ) {
            let build = |k: i64| -> Vec<SleepEpisode> {
                onsets
                    .iter()
                    .enumerate()
                    .map(|(d, &m)| episode(d as i64 * 86_400 + (m + k) * 60, 300.0 + m as f64 / 10.0))
                    .collect()
            };
            let base = build(0);
            let shifted = build(shift);
            let fa = sleep_features_of(&base.iter().collect::<Vec<_>>()).unwrap();
            let fb = sleep_features_of(&shifted.iter().collect::<Vec<_>>()).unwrap();
            proptest::prop_assert!((fa.duration_mean - fb.duration_mean).abs() < 1e-9);
            proptest::prop_assert!((fa.variability.unwrap() - fb.variability.unwrap()).abs() < 1e-9);
            // Onsets on the circle may cancel to a near-zero resultant; only
            // check equivariance when the mean direction is well defined.
            let (s, c) = onsets.iter().fold((0.0, 0.0), |(s, c), &m| {
                let t = m as f64 / 1440.0 * std::f64::consts::TAU;
                (s + t.sin(), c + t.cos())
            });
            if (s * s + c * c).sqrt() > 1e-3 {
                let d = circular::signed_diff(fb.onset_mean, fa.onset_mean);
                proptest::prop_assert!((d - circular::signed_diff(shift as f64, 0.0)).abs() < 1e-6);
            }
        }
    }
}
