//! Classical-regime inequalities for continuous position measurement:
//!
//! * localization: `8ηk ≫ (∂²F/F)·√(∂F/2m)` at unstable points,
//! * low noise:    `2|∂F|/(ηs) ≪ ħk ≪ |∂F| s/4`,
//! * record:       `8ηk > 1/(Δt Δx²)`,
//!
//! with `s = S/ħ` the typical action in units of ħ.

use std::fmt;

use crate::classical::{advance_classical, ClassicalState, NoiseSpec};
use crate::error::{Error, Result};
use crate::params::{MeasureParams, SystemParams};
use crate::rng::NoiseStream;

/// Ratio a `≫`/`≪` inequality needs to count as satisfied.
pub const STRONG_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Violated,
    Marginal,
    Satisfied,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Violated => "violated",
            Verdict::Marginal => "marginal",
            Verdict::Satisfied => "satisfied",
        })
    }
}

fn strong(ratio: f64) -> Verdict {
    if ratio >= STRONG_RATIO {
        Verdict::Satisfied
    } else if ratio >= 1.0 {
        Verdict::Marginal
    } else {
        Verdict::Violated
    }
}

/// Trajectory-typical quantities entering the inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajStats {
    /// Typical |∂ₓF|.
    pub dfdx: f64,
    /// Typical |∂ₓ²F / F| at unstable points (∂ₓF > 0).
    pub curvature_ratio: f64,
    /// Typical action S (not divided by ħ).
    pub action: f64,
}

/// Averaging window and allowed position error of the band-limited record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordSpec {
    pub window: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub loc_lhs: f64,
    pub loc_rhs: f64,
    pub localization: Verdict,
    pub noise_lo: f64,
    pub noise_mid: f64,
    pub noise_hi: f64,
    pub noise: Verdict,
    pub record_lhs: f64,
    pub record_rhs: f64,
    pub record: Verdict,
    /// Typical action in units of ħ.
    pub s: f64,
    /// Smallest k meeting the record condition, `1/(8η Δt Δx²)`.
    pub k_min_record: f64,
}

impl RegimeReport {
    pub fn all_satisfied(&self) -> bool {
        self.localization == Verdict::Satisfied
            && self.noise == Verdict::Satisfied
            && self.record == Verdict::Satisfied
    }

    pub fn loc_ratio(&self) -> f64 {
        if self.loc_rhs == 0.0 {
            f64::INFINITY
        } else {
            self.loc_lhs / self.loc_rhs
        }
    }
}

pub fn regime_check(
    sys: &SystemParams,
    mp: &MeasureParams,
    stats: &TrajStats,
    record: &RecordSpec,
) -> Result<RegimeReport> {
    sys.validate()?;
    mp.validate()?;
    let positive = [
        ("action", stats.action),
        ("record window", record.window),
        ("record tolerance", record.tolerance),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be > 0")));
        }
    }
    if !(stats.dfdx >= 0.0 && stats.dfdx.is_finite()) {
        return Err(Error::InvalidParameter("|dF/dx| must be >= 0".into()));
    }
    if !(stats.curvature_ratio >= 0.0 && stats.curvature_ratio.is_finite()) {
        return Err(Error::InvalidParameter("curvature ratio must be >= 0".into()));
    }
    let (eta, k, hbar) = (mp.eta, mp.k, mp.hbar);

    let loc_lhs = 8.0 * eta * k;
    let loc_rhs = stats.curvature_ratio * (stats.dfdx / (2.0 * sys.m)).sqrt();
    let localization = if loc_rhs == 0.0 {
        Verdict::Satisfied
    } else {
        strong(loc_lhs / loc_rhs)
    };

    let s = stats.action / hbar;
    let noise_lo = 2.0 * stats.dfdx / (eta * s);
    let noise_mid = hbar * k;
    let noise_hi = stats.dfdx * s / 4.0;
    let lower = if noise_lo == 0.0 {
        if noise_mid > 0.0 { Verdict::Satisfied } else { Verdict::Violated }
    } else {
        strong(noise_mid / noise_lo)
    };
    let upper = if noise_mid == 0.0 {
        Verdict::Satisfied
    } else {
        strong(noise_hi / noise_mid)
    };
    let noise = lower.min(upper);

    let record_lhs = 8.0 * eta * k;
    let record_rhs = 1.0 / (record.window * record.tolerance * record.tolerance);
    let record_verdict = if record_lhs > record_rhs {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };

    Ok(RegimeReport {
        loc_lhs,
        loc_rhs,
        localization,
        noise_lo,
        noise_mid,
        noise_hi,
        noise,
        record_lhs,
        record_rhs,
        record: record_verdict,
        s,
        k_min_record: 1.0 / (8.0 * eta * record.window) / (record.tolerance * record.tolerance),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trajectory statistics from a noiseless classical run of `periods` drive
/// periods starting at `start`:
///
/// * `dfdx`: median |∂ₓF| along the path,
/// * `curvature_ratio`: median |∂ₓ²F/F| over samples with ∂ₓF > 0,
/// * `action`: mean over drive periods of |∫ p dx| accumulated in one period.
pub fn estimate_traj_stats(sys: &SystemParams, start: (f64, f64), periods: usize, dt: f64) -> Result<TrajStats> {
    sys.validate()?;
    if periods == 0 || !(dt > 0.0) {
        return Err(Error::InvalidParameter("need periods >= 1 and dt > 0".into()));
    }
    let period = if sys.lambda == 0.0 { 1.0 } else { sys.drive_period() };
    let steps_per = (period / dt).round().max(1.0) as usize;
    let dt = period / steps_per as f64;
    let mut s = ClassicalState::new(start.0, start.1);
    let mut noise = NoiseStream::new(0, &[]);
    let mut grads = Vec::with_capacity(periods * steps_per);
    let mut curv = Vec::new();
    let mut actions = Vec::with_capacity(periods);
    for _ in 0..periods {
        let mut action = 0.0;
        for _ in 0..steps_per {
            let prev = s;
            advance_classical(&mut s, 1, dt, sys, &NoiseSpec::NONE, &mut noise)?;
            action += 0.5 * (prev.p + s.p) * (s.x - prev.x);
            let g = sys.force_gradient(s.x);
            grads.push(g.abs());
            if g > 0.0 {
                let f = sys.force(s.x, s.t);
                if f != 0.0 {
                    curv.push((sys.force_curvature(s.x) / f).abs());
                }
            }
        }
        actions.push(action.abs());
    }
    Ok(TrajStats {
        dfdx: median(grads),
        curvature_ratio: median(curv),
        action: actions.iter().sum::<f64>() / actions.len() as f64,
    })
}
