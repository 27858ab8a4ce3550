//! Window construction and inclusion: coverage thresholds, the sleep
//! requirement, season, lockdown and the clock-change exclusion.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use circadia::config::Config;
use circadia::ingest::{Gender, MinuteSeries, ParticipantProfile, PhqRecord, StreamKind};
use circadia::sleep::SleepEpisode;
use circadia::time::{day_index, midnight_minute, LocalStamp};
use circadia::windowing::{dst_exclude, make_window, ParticipantStreams, WINDOW_DAYS};

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Streams with `minutes[i]` minutes of steps and HR on day `i` after
/// `start`, and a night of sleep ending each morning.
fn streams(start: NaiveDate, minutes: &[usize]) -> ParticipantStreams {
    let vals: Vec<Option<f64>> = minutes
        .iter()
        .flat_map(|&n| (0..1440).map(move |m| (m < n).then_some(60.0)))
        .collect();
    let base = midnight_minute(start);
    let episodes = (0..minutes.len() as u64)
        .map(|d| {
            let day = start + chrono::Days::new(d);
            let offset = LocalStamp::new(day_index(day) * 86_400 + 7 * 3600, 0).unwrap();
            SleepEpisode {
                participant_id: "p".into(),
                onset: offset.plus_seconds(-7 * 3600),
                offset,
                total_sleep_minutes: 400.0,
                attributed_day: day,
            }
        })
        .collect();
    ParticipantStreams {
        steps: Some(MinuteSeries::from_values("p", StreamKind::Steps, base, vals.clone())),
        hr: Some(MinuteSeries::from_values("p", StreamKind::Hr, base, vals)),
        episodes,
    }
}

fn main() {
    let cfg = Config::from_toml_str(
        r#"
        sites = ["uk"]
        [dst]
        uk = ["2020-03-29"]
        [lockdown]
        uk = [["2020-03-23", "2020-06-15"]]
        "#,
    )
    .unwrap();
    let profile = ParticipantProfile {
        participant_id: "p".into(),
        age_years: 30,
        gender: Gender::Female,
        site: "uk".into(),
        employed: false,
    };
    let phq = |d: NaiveDate| PhqRecord {
        participant_id: "p".into(),
        completion: LocalStamp::new(day_index(d) * 86_400 + 9 * 3600, 0).unwrap(),
        score: 8,
    };

    let cases = [
        ("exactly 80% every day", date(2020, 2, 10), vec![1152; WINDOW_DAYS]),
        ("eight full days", date(2020, 2, 24), [vec![1440; 8], vec![0; 6]].concat()),
        ("seven full days", date(2020, 3, 9), [vec![1440; 7], vec![0; 7]].concat()),
        ("first window after clock change", date(2020, 4, 6), vec![1440; WINDOW_DAYS]),
        ("in lockdown", date(2020, 4, 20), vec![1440; WINDOW_DAYS]),
    ];
    let mut windows = Vec::new();
    for (_, completion, minutes) in &cases {
        let start = *completion - chrono::Days::new(WINDOW_DAYS as u64);
        windows.push(make_window(&phq(*completion), &profile, Some(&streams(start, minutes)), &cfg).unwrap());
    }
    let dst: &BTreeMap<String, Vec<NaiveDate>> = cfg.dst.as_ref().unwrap();
    dst_exclude(&mut windows, Some(dst));

    for ((label, _, _), w) in cases.iter().zip(&windows) {
        println!(
            "{label:<34} {} .. {}  season={:<6} lockdown={:<5} qualifying={:>2} included={:<5} {}",
            w.start,
            w.end,
            w.season.as_str(),
            w.lockdown,
            w.coverage.qualifying_days,
            w.included,
            w.exclusion_reason()
        );
    }
}
