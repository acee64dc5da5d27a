//! Second-order (Gaussian) closure of the conditioned moment hierarchy,
//! used to calibrate the classical comparison noise.
//!
//! Along a path with local force gradient `F' = ∂ₓF(⟨X⟩)`:
//!
//! ```text
//! dV_x/dt = 2C/m − 8ηk V_x²
//! dC/dt   = V_p/m + F' V_x − 8ηk V_x C
//! dV_p/dt = 2F' C + 2ħ²k − 8ηk C²
//! ```

use crate::classical::NoiseSpec;
use crate::error::{Error, Result};
use crate::params::{MeasureParams, SystemParams};
use crate::quantum::free_steady_state;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance {
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

fn rates(c: &Covariance, dfdx: f64, m: f64, mp: &MeasureParams) -> Covariance {
    let g = 8.0 * mp.eta * mp.k;
    Covariance {
        var_x: 2.0 * c.cov_xp / m - g * c.var_x * c.var_x,
        cov_xp: c.var_p / m + dfdx * c.var_x - g * c.var_x * c.cov_xp,
        var_p: 2.0 * dfdx * c.cov_xp + 2.0 * mp.hbar * mp.hbar * mp.k - g * c.cov_xp * c.cov_xp,
    }
}

/// Mean steady-state position variance along the noiseless classical path
/// from `start`, averaged over the second half of `duration`.
pub fn calibrate_var_x(
    sys: &SystemParams,
    mp: &MeasureParams,
    start: (f64, f64),
    duration: f64,
    dt: f64,
) -> Result<f64> {
    let (vx, vp, c) = free_steady_state(sys.m, mp)
        .ok_or_else(|| Error::InvalidParameter("calibration needs k > 0".into()))?;
    if !(duration > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter("duration and dt must be > 0".into()));
    }
    let steps = (duration / dt).round() as usize;
    let mut cov = Covariance { var_x: vx, var_p: vp, cov_xp: c };
    let (mut x, mut p, mut t) = (start.0, start.1, 0.0);
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..steps {
        // centroid: midpoint-drive leapfrog; covariances: RK4 with F' frozen
        // over the step at the midpoint position
        let t_mid = t + 0.5 * dt;
        let ph = p + 0.5 * dt * sys.force(x, t_mid);
        let x_mid = x + 0.5 * dt * ph / sys.m;
        let x_new = x + dt * ph / sys.m;
        let p_new = ph + 0.5 * dt * sys.force(x_new, t_mid);
        let g = sys.force_gradient(x_mid);
        let add = |a: &Covariance, b: &Covariance, h: f64| Covariance {
            var_x: a.var_x + h * b.var_x,
            var_p: a.var_p + h * b.var_p,
            cov_xp: a.cov_xp + h * b.cov_xp,
        };
        let k1 = rates(&cov, g, sys.m, mp);
        let k2 = rates(&add(&cov, &k1, 0.5 * dt), g, sys.m, mp);
        let k3 = rates(&add(&cov, &k2, 0.5 * dt), g, sys.m, mp);
        let k4 = rates(&add(&cov, &k3, dt), g, sys.m, mp);
        cov = Covariance {
            var_x: cov.var_x + dt / 6.0 * (k1.var_x + 2.0 * k2.var_x + 2.0 * k3.var_x + k4.var_x),
            var_p: cov.var_p + dt / 6.0 * (k1.var_p + 2.0 * k2.var_p + 2.0 * k3.var_p + k4.var_p),
            cov_xp: cov.cov_xp + dt / 6.0 * (k1.cov_xp + 2.0 * k2.cov_xp + 2.0 * k3.cov_xp + k4.cov_xp),
        };
        x = x_new;
        p = p_new;
        t += dt;
        if !(cov.var_x.is_finite() && cov.var_x > 0.0) {
            return Err(Error::Diverged(t));
        }
        if i >= steps / 2 {
            acc += cov.var_x;
            count += 1;
        }
    }
    Ok(acc / count.max(1) as f64)
}

impl NoiseSpec {
    /// Classical noise matched to the conditioned centroid fluctuations of the
    /// measured quantum system: `σ_p = ħ√(2k)` and `σ_x = √(8k) V̄_x`.
    pub fn matched(mp: &MeasureParams, mean_var_x: f64) -> Self {
        Self {
            sigma_x: (8.0 * mp.k).sqrt() * mean_var_x,
            sigma_p: mp.hbar * (2.0 * mp.k).sqrt(),
        }
    }

    /// [`NoiseSpec::matched`] with `V̄_x` from [`calibrate_var_x`] along the
    /// path from `start` (40 time units, dt = 1e-3).
    pub fn calibrated(sys: &SystemParams, mp: &MeasureParams, start: (f64, f64)) -> Result<Self> {
        let vx = calibrate_var_x(sys, mp, start, 40.0, 1e-3)?;
        Ok(Self::matched(mp, vx))
    }
}
