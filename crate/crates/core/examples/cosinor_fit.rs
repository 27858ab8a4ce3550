//! Fits a 24-hour cosinor to two weeks of synthetic minute-level heart rate
//! and prints mesor, amplitude and acrophase as a clock time.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use circadia::cosinor::cosinor_fit;
use circadia::ingest::{MinuteSeries, StreamKind};
use circadia::time::midnight_minute;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn clock(minute: f64) -> String {
    let m = minute.round() as i64;
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn main() {
    let start = midnight_minute(NaiveDate::from_ymd_opt(2019, 7, 1).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 4.0).unwrap();

    // Peak at 15:30, with a quarter of the minutes missing.
    let values = (0..14 * 1440).map(|m| {
        let t = (m % 1440) as f64;
        let bpm = 72.0 + 9.0 * (TAU * (t - 930.0) / 1440.0).cos() + noise.sample(&mut rng);
        (m % 4 != 0).then_some(bpm)
    });
    let hr = MinuteSeries::from_values("p001", StreamKind::Hr, start, values);
    let fit = cosinor_fit(&hr, start, start + 14 * 1440).expect("enough data");

    println!("points     {}", fit.n_points);
    println!("mesor      {:.2} bpm", fit.mesor);
    println!("amplitude  {:.2} bpm", fit.amplitude);
    println!("acrophase  {}", fit.acrophase_mod.map_or("undefined".into(), clock));
    println!("residual SD {:.2}", (fit.residual_sse / fit.n_points as f64).sqrt());
}
