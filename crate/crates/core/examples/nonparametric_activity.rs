//! Intradaily variability, interdaily stability and L5/M10 onsets for a
//! regular and a fragmented step pattern.

use circadia::activity::{interdaily_stability, intradaily_variability, l5_m10_onsets, BinnedSeries, DayProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn describe(name: &str, minutes: &[f64]) {
    let hourly: Vec<Option<f64>> = minutes
        .chunks(60)
        .map(|h| Some(h.iter().sum::<f64>() / 60.0))
        .collect();
    let binned = BinnedSeries::from_values(60, hourly);
    let iv = intradaily_variability(&binned).expect("enough bins");
    let is = interdaily_stability(&binned);

    // Average day, minute by minute.
    let days = minutes.len() / 1440;
    let profile: Vec<Option<f64>> = (0..1440)
        .map(|m| Some((0..days).map(|d| minutes[d * 1440 + m]).sum::<f64>() / days as f64))
        .collect();
    let onsets = l5_m10_onsets(&DayProfile(profile), 120).expect("full profile");

    println!("{name}");
    println!("  IV {:.3}{}", iv.value, if iv.degenerate { " (constant)" } else { "" });
    println!("  IS {}", is.map_or("undefined".into(), |v| format!("{v:.3}")));
    println!("  L5 onset  {:02}:{:02}", onsets.l5_onset as i64 / 60, onsets.l5_onset as i64 % 60);
    println!("  M10 onset {:02}:{:02}", onsets.m10_onset as i64 / 60, onsets.m10_onset as i64 % 60);
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let regular: Vec<f64> = (0..14 * 1440)
        .map(|m| {
            let t = m % 1440;
            let awake = (420..1380).contains(&t);
            if awake { rng.random_range(5.0..20.0) } else { rng.random_range(0.0..1.0) }
        })
        .collect();

    // Bed and wake times drift by up to three hours from day to day, with
    // frequent idle breaks.
    let mut fragmented = Vec::with_capacity(14 * 1440);
    for _ in 0..14 {
        let wake = rng.random_range(300..480);
        let bed = rng.random_range(1260..1440);
        for t in 0..1440 {
            let active = t >= wake && t < bed && (t / 20) % 3 != 0;
            fragmented.push(if active { rng.random_range(5.0..20.0) } else { rng.random_range(0.0..1.0) });
        }
    }

    describe("regular", &regular);
    describe("fragmented", &fragmented);
}
