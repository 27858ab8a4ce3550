//! Month-by-month profile of z-normalised features for a simulated panel
//! with a planted summer effect.

use circadia::features::Feature;
use circadia::stats::seasonal_profile_report;
use circadia::synth::{generate_feature_panel, PanelFeature, SynthConfig};

fn main() -> circadia::Result<()> {
    let mut cfg = SynthConfig {
        n_participants: 60,
        windows_per_participant: 26,
        ..SynthConfig::default()
    };
    cfg.panel.features = vec![
        PanelFeature {
            feature: "hr_acrophase_mod".into(),
            beta: [("intercept", 900.0), ("spring", 43.0), ("summer", 68.0), ("autumn", 24.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            sigma_u: 30.0,
            sigma_e: 25.0,
        },
        PanelFeature {
            feature: "sleep_duration_min".into(),
            beta: [("intercept", 430.0), ("summer", -15.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            sigma_u: 40.0,
            sigma_e: 25.0,
        },
    ];
    let (table, _) = generate_feature_panel(&cfg)?;
    let rows = seasonal_profile_report(&table)?;

    for feature in [Feature::HrAcrophase, Feature::SleepDuration] {
        println!("{}", feature.column());
        for r in rows.iter().filter(|r| r.feature == feature) {
            let bar = "#".repeat(((r.mean_z + 1.5) * 10.0).clamp(0.0, 40.0) as usize);
            println!("  {:>2}  {:+.2}  n={:<4} {bar}", r.month, r.mean_z, r.n);
        }
    }
    Ok(())
}
