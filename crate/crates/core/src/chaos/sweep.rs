use crate::error::{Error, Result};
use crate::params::{MeasureParams, SystemParams};
use crate::regime::{regime_check, RecordSpec, RegimeReport, TrajStats, Verdict};

use super::lyapunov::{window_slope, LyapunovResult};

/// Flatness below this marks a curve whose linear region is compromised.
pub const FLATNESS_THRESHOLD: f64 = 0.5;

/// Ratio of the curve slope over the last third of the fit window to the
/// slope over the first third. Near 1 for a clean linear region; small when
/// the early noise-driven rise reaches into the window or the tail flattens.
pub fn flatness(result: &LyapunovResult) -> f64 {
    let (lo, hi) = result.fit_window;
    let third = (hi - lo) / 3.0;
    let taus: Vec<f64> = result.curve.iter().map(|c| c.tau).collect();
    let ys: Vec<f64> = result.curve.iter().map(|c| c.mean_ln_delta).collect();
    match (
        window_slope(&taus, &ys, lo, lo + third),
        window_slope(&taus, &ys, hi - third, hi),
    ) {
        (Some(first), Some(last)) if first > 0.0 => last / first,
        _ => f64::NAN,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub regime: RegimeReport,
    pub result: LyapunovResult,
    pub flatness: f64,
    pub flagged: bool,
}

/// Runs `estimate` once per k, after checking that localization and noise
/// conditions hold at least marginally. A record-condition violation is
/// noted in the row's regime report but does not stop the sweep.
pub fn k_sensitivity_sweep(
    k_values: &[f64],
    sys: &SystemParams,
    base: &MeasureParams,
    stats: &TrajStats,
    record: &RecordSpec,
    mut estimate: impl FnMut(&MeasureParams) -> Result<LyapunovResult>,
) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one k".into()));
    }
    let mut reports = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mp = MeasureParams { k, ..*base };
        let report = regime_check(sys, &mp, stats, record)?;
        if report.localization == Verdict::Violated || report.noise == Verdict::Violated {
            return Err(Error::InvalidParameter(format!(
                "k = {k} is outside the classical regime (localization {}, noise {})",
                report.localization, report.noise
            )));
        }
        reports.push((mp, report));
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for (mp, regime) in reports {
        let result = estimate(&mp)?;
        let flat = flatness(&result);
        rows.push(SweepRow {
            k: mp.k,
            regime,
            flagged: !(flat >= FLATNESS_THRESHOLD),
            flatness: flat,
            result,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::super::lyapunov::{lyapunov_estimate, BranchProtocol, Dynamics, Perturbation};
    use super::*;
    use crate::chaos::CurvePoint;
    use crate::rng::NoiseStream;

    fn stats() -> TrajStats {
        TrajStats { dfdx: 20.0, curvature_ratio: 1.0, action: 10.0 }
    }

    fn record() -> RecordSpec {
        RecordSpec { window: 0.01, tolerance: 0.01 }
    }

    fn curve(f: impl Fn(f64) -> f64) -> LyapunovResult {
        LyapunovResult {
            lambda: 0.0,
            stderr: 0.0,
            pooled_lambda: 0.0,
            per_fiducial: vec![],
            fiducial_curves: vec![],
            curve: (0..=160)
                .map(|j| {
                    let tau = j as f64 * 0.05;
                    CurvePoint { tau, mean_ln_delta: f(tau), stderr: 0.0 }
                })
                .collect(),
            fit_window: (1.0, 6.0),
            n_samples: 1,
            warnings: vec![],
        }
    }

    #[test]
    fn flatness_of_straight_and_bent_curves() {
        assert!((flatness(&curve(|t| 0.6 * t)) - 1.0).abs() < 1e-9);
        let bent = curve(|t| 0.6 * t + 8.0 * (1.0 - (-t / 2.0).exp()));
        assert!(flatness(&bent) < FLATNESS_THRESHOLD);
    }

    struct Grow(f64);
    impl Dynamics for Grow {
        type State = (f64, f64);
        fn dt(&self) -> f64 {
            0.01
        }
        fn prepare(&self, x: f64, p: f64) -> Result<(f64, f64)> {
            Ok((x, p))
        }
        fn advance(&self, s: &mut (f64, f64), n: usize, _: &mut NoiseStream) -> Result<()> {
            let g = (self.0 * 0.01 * n as f64).exp();
            *s = (s.0 * g, s.1 * g);
            Ok(())
        }
        fn observe(&self, s: &(f64, f64)) -> Result<(f64, f64)> {
            Ok(*s)
        }
        fn displace(&self, s: &(f64, f64), dx: f64, dp: f64) -> Result<(f64, f64)> {
            Ok((s.0 + dx, s.1 + dp))
        }
    }

    fn proto() -> BranchProtocol {
        BranchProtocol {
            n_fiducial: 2,
            start: (0.0, 0.0),
            n_branch_points: 1,
            perturbation: Perturbation::InitialOffset(1e-6),
            ..Default::default()
        }
    }

    #[test]
    fn single_k_matches_direct_estimate() {
        let sys = SystemParams::default();
        let base = MeasureParams::default();
        let direct = lyapunov_estimate(&Grow(0.5), &proto(), (1.0, 6.0), 4).unwrap();
        let rows = k_sensitivity_sweep(&[1e5], &sys, &base, &stats(), &record(), |_| {
            lyapunov_estimate(&Grow(0.5), &proto(), (1.0, 6.0), 4)
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].result, direct);
        assert!(!rows[0].flagged);
    }

    #[test]
    fn out_of_regime_k_rejected() {
        let sys = SystemParams::default();
        let base = MeasureParams::default();
        let r = k_sensitivity_sweep(&[1e5, 1e13], &sys, &base, &stats(), &record(), |_| unreachable!());
        assert!(r.is_err());
        assert!(k_sensitivity_sweep(&[], &sys, &base, &stats(), &record(), |_| unreachable!()).is_err());
    }
}
