//! Builds sleep episodes from 30-second stage epochs, picks the main sleep
//! per day and summarises one window.

use chrono::NaiveDate;
use circadia::config::Config;
use circadia::ingest::{Gender, ParticipantProfile, PhqRecord, SleepEpoch, SleepStage};
use circadia::sleep::{build_episodes, main_sleep_per_day, sleep_features};
use circadia::time::{day_index, LocalStamp};
use circadia::windowing::make_window;

const OFFSET: i32 = 60;

fn stamp(day: NaiveDate, local_minute: i64) -> LocalStamp {
    LocalStamp::from_local_seconds(day_index(day) * 86_400 + local_minute * 60, OFFSET)
}

fn block(out: &mut Vec<SleepEpoch>, from: LocalStamp, minutes: i64, awake_every: usize) {
    for k in 0..(minutes * 2) as usize {
        let stage = match k {
            _ if awake_every > 0 && k % awake_every == 0 => SleepStage::Awake,
            _ if k % 7 < 2 => SleepStage::Deep,
            _ if k % 7 == 6 => SleepStage::Rem,
            _ => SleepStage::Light,
        };
        out.push(SleepEpoch {
            participant_id: "p001".into(),
            stamp: from.plus_seconds(k as i64 * 30),
            stage,
        });
    }
}

fn main() {
    let first = NaiveDate::from_ymd_opt(2019, 11, 1).unwrap();
    let mut epochs = Vec::new();
    for d in 0..14 {
        let evening = first + chrono::Days::new(d);
        // Bedtime wanders around 23:30; a short afternoon nap every third day.
        let bed = 1380 + (d as i64 % 4) * 15;
        block(&mut epochs, stamp(evening, bed), 420 + (d as i64 % 3) * 20, 25);
        if d % 3 == 0 {
            block(&mut epochs, stamp(evening, 900), 40, 0);
        }
    }

    epochs.sort_by_key(|e| e.stamp.utc_epoch_seconds);
    let episodes = build_episodes(&epochs, 60);
    let main = main_sleep_per_day(&episodes);
    println!("{} episodes, {} main sleeps", episodes.len(), main.len());
    for e in main.iter().take(3) {
        println!(
            "  {}  onset {}  offset {}  asleep {:.1} min",
            e.attributed_day,
            e.onset.to_iso(),
            e.offset.to_iso(),
            e.total_sleep_minutes
        );
    }

    let profile = ParticipantProfile {
        participant_id: "p001".into(),
        age_years: 52,
        gender: Gender::Male,
        site: "nl".into(),
        employed: true,
    };
    let phq = PhqRecord {
        participant_id: "p001".into(),
        completion: stamp(first + chrono::Days::new(15), 600),
        score: 11,
    };
    let window = make_window(&phq, &profile, None, &Config::with_sites(["nl"])).unwrap();
    let f = sleep_features(&window, &main).expect("nights in window");
    let hm = |m: f64| format!("{:02}:{:02}", m as i64 / 60, m.round() as i64 % 60);
    println!("window {} .. {} ({} nights)", window.start, window.end, f.nights);
    println!("  duration     {:.1} min", f.duration_mean);
    println!("  variability  {:.1} min", f.variability.unwrap_or(0.0));
    println!("  onset        {}", hm(f.onset_mean));
    println!("  offset       {}", hm(f.offset_mean));
}
