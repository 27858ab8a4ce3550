//! Clock-time arithmetic on the 1440-minute circle.

use std::f64::consts::TAU;

pub const DAY_MINUTES: f64 = 1440.0;

/// Wraps into `[0, 1440)`. Values within 1e-9 of 1440 snap to 0.
pub fn wrap_minutes(m: f64) -> f64 {
    let w = m.rem_euclid(DAY_MINUTES);
    if DAY_MINUTES - w < 1e-9 {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` folded into `(-720, 720]`.
pub fn signed_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(DAY_MINUTES);
    if d > DAY_MINUTES / 2.0 {
        d - DAY_MINUTES
    } else {
        d
    }
}

/// Mean direction of clock times, via the sum of unit vectors. `None` for
/// an empty input.
pub fn mean_minutes<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for m in values {
        let theta = m / DAY_MINUTES * TAU;
        s += theta.sin();
        c += theta.cos();
        n += 1;
    }
    (n > 0).then(|| wrap_minutes(s.atan2(c) / TAU * DAY_MINUTES))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_midnight() {
        let m = mean_minutes([23.5 * 60.0, 0.5 * 60.0]).unwrap();
        assert!(signed_diff(m, 0.0).abs() < 1e-9, "{m}");
    }

    #[test]
    fn hand_computed_two_cluster_mean() {
        // Seven 22:00 and seven 23:00 vectors sum to a vector pointing at 22:30.
        let v: Vec<f64> = std::iter::repeat_n(1320.0, 7)
            .chain(std::iter::repeat_n(1380.0, 7))
            .collect();
        let m = mean_minutes(v).unwrap();
        assert!((m - 1350.0).abs() < 1e-9, "{m}");
    }

    #[test]
    fn signed_diff_range() {
        assert_eq!(signed_diff(10.0, 1430.0), 20.0);
        assert_eq!(signed_diff(900.0, 840.0), 60.0);
        assert_eq!(signed_diff(0.0, 720.0), 720.0);
        assert_eq!(signed_diff(720.0, 0.0), 720.0);
    }
}
