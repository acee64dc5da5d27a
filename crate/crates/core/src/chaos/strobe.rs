use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::record::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrobePoint {
    pub period_index: u64,
    pub x: f64,
    pub p: f64,
}

/// Strobe times `t_n = (2πn + φ)/ω` within `[max(t_skip, t0), t1]`, where
/// `φ` is a drive phase angle reduced to `[0, 2π)`.
pub fn strobe_times(omega: f64, phase: f64, t_skip: f64, t0: f64, t1: f64) -> Result<Vec<(u64, f64)>> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter("omega must be > 0".into()));
    }
    if !phase.is_finite() || !(t_skip >= 0.0) {
        return Err(Error::InvalidParameter("phase must be finite and t_skip >= 0".into()));
    }
    let phi = phase.rem_euclid(TAU);
    let lo = t_skip.max(t0);
    let tol = 1e-9 * t1.abs().max(1.0);
    let n0 = ((lo * omega - phi) / TAU - 1e-9).ceil().max(0.0) as u64;
    let mut out = Vec::new();
    let mut n = n0;
    loop {
        let t = (TAU * n as f64 + phi) / omega;
        if t > t1 + tol {
            break;
        }
        if t >= lo - tol {
            out.push((n, t.clamp(t0, t1)));
        }
        n += 1;
    }
    Ok(out)
}

/// Linear interpolation of (⟨X⟩, ⟨P⟩) (or (x, p)) to each strobe time.
pub fn stroboscopic_map(record: &TrajectoryRecord, omega: f64, phase: f64, t_skip: f64) -> Result<Vec<StrobePoint>> {
    let s = &record.samples;
    if s.len() < 2 {
        return Err(Error::InvalidParameter("record needs at least two samples".into()));
    }
    if s.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidParameter("record times must be strictly increasing".into()));
    }
    let (t0, t1) = (s[0].t, s[s.len() - 1].t);
    if t1 < t_skip {
        return Err(Error::InvalidParameter(format!(
            "record ends at {t1}, before t_skip = {t_skip}"
        )));
    }
    let times = strobe_times(omega, phase, t_skip, t0, t1)?;
    let mut out = Vec::with_capacity(times.len());
    let mut j = 0;
    for (n, t) in times {
        while j + 2 < s.len() && s[j + 1].t < t {
            j += 1;
        }
        let (a, b) = (&s[j], &s[j + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(StrobePoint {
            period_index: n,
            x: a.mean_x + u * (b.mean_x - a.mean_x),
            p: a.mean_p + u * (b.mean_p - a.mean_p),
        });
    }
    Ok(out)
}

/// Concatenates per-run maps tagged with their run index, sorted by
/// (run, period_index).
pub fn merge_strobe(runs: &[(usize, Vec<StrobePoint>)]) -> Vec<(usize, StrobePoint)> {
    let mut out: Vec<(usize, StrobePoint)> = runs
        .iter()
        .flat_map(|(r, pts)| pts.iter().map(move |p| (*r, *p)))
        .collect();
    out.sort_by_key(|(r, p)| (*r, p.period_index));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Moments;

    fn record(ts: &[f64], f: impl Fn(f64) -> (f64, f64)) -> TrajectoryRecord {
        TrajectoryRecord {
            fingerprint: None,
            seed: 0,
            samples: ts
                .iter()
                .map(|&t| {
                    let (x, p) = f(t);
                    Moments { t, mean_x: x, mean_p: p, var_x: 0.0, var_p: 0.0, cov_xp: 0.0, norm: 1.0, energy: 0.0 }
                })
                .collect(),
            raw_record: None,
            band_limited: None,
        }
    }

    fn uniform(t_end: f64, dt: f64) -> Vec<f64> {
        let n = (t_end / dt).round() as usize;
        (0..=n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn hundred_points_in_103_5() {
        let r = record(&uniform(103.5, 0.01), |_| (1.0, 2.0));
        let pts = stroboscopic_map(&r, 6.07, 0.0, 0.0).unwrap();
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|p| p.x == 1.0 && p.p == 2.0));
        assert_eq!(pts[0].period_index, 0);
        assert_eq!(pts[99].period_index, 99);
    }

    #[test]
    fn full_period_phase_shift_is_identity() {
        let r = record(&uniform(30.0, 0.01), |t| (t.sin(), (2.0 * t).cos()));
        let a = stroboscopic_map(&r, 6.07, 0.4, 3.0).unwrap();
        let b = stroboscopic_map(&r, 6.07, 0.4 + TAU, 3.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_shorter_than_skip() {
        let r = record(&uniform(5.0, 0.01), |_| (0.0, 0.0));
        assert!(stroboscopic_map(&r, 6.07, 0.0, 6.0).is_err());
    }

    #[test]
    fn times_within_half_step_of_grid() {
        let times = strobe_times(6.07, 1.0, 2.0, 0.0, 50.0).unwrap();
        let period = TAU / 6.07;
        for (n, t) in times {
            assert!(t >= 2.0);
            let expect = n as f64 * period + 1.0 / 6.07;
            assert!((t - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_converges_quadratically() {
        let f = |t: f64| ((3.0 * t).sin(), (1.7 * t).cos());
        let err = |dt: f64| {
            let r = record(&uniform(20.0, dt), f);
            stroboscopic_map(&r, 6.07, 0.3, 0.0)
                .unwrap()
                .iter()
                .map(|s| {
                    let t = (TAU * s.period_index as f64 + 0.3) / 6.07;
                    let (x, p) = f(t);
                    (s.x - x).abs().max((s.p - p).abs())
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 3.0 && ratio < 5.0, "{ratio}");
    }

    #[test]
    fn merge_sorts_by_run_then_index() {
        let p = |n| StrobePoint { period_index: n, x: n as f64, p: 0.0 };
        let merged = merge_strobe(&[(1, vec![p(0), p(1)]), (0, vec![p(3), p(2)])]);
        let keys: Vec<_> = merged.iter().map(|(r, s)| (*r, s.period_index)).collect();
        assert_eq!(keys, vec![(0, 2), (0, 3), (1, 0), (1, 1)]);
    }
}
