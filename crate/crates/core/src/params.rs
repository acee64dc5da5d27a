//! Hamiltonian and measurement constants for the driven double well
//! `H = P²/2m + B X⁴ − A X² + Λ X cos(ωt)` under continuous position
//! measurement.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub m: f64,
    /// Quartic coefficient.
    pub b: f64,
    /// Quadratic coefficient (enters with a minus sign).
    pub a: f64,
    /// Drive amplitude Λ.
    pub lambda: f64,
    /// Drive angular frequency ω.
    pub omega: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            b: 0.5,
            a: 10.0,
            lambda: 10.0,
            omega: 6.07,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.b, self.a, self.lambda, self.omega];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("system parameters must be finite".into()));
        }
        if self.m <= 0.0 {
            return Err(Error::InvalidParameter("m must be > 0".into()));
        }
        if self.b < 0.0 {
            return Err(Error::InvalidParameter("B must be >= 0".into()));
        }
        if self.lambda != 0.0 && self.omega <= 0.0 {
            return Err(Error::InvalidParameter("omega must be > 0 when Lambda != 0".into()));
        }
        Ok(())
    }

    pub fn drive_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    /// Time-independent part `B x⁴ − A x²`.
    #[inline]
    pub fn static_potential(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.b * x2 * x2 - self.a * x2
    }

    #[inline]
    pub fn drive(&self, t: f64) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * (self.omega * t).cos()
        }
    }

    #[inline]
    pub fn potential(&self, x: f64, t: f64) -> f64 {
        self.static_potential(x) + x * self.drive(t)
    }

    #[inline]
    pub fn force(&self, x: f64, t: f64) -> f64 {
        -4.0 * self.b * x * x * x + 2.0 * self.a * x - self.drive(t)
    }

    /// ∂ₓF
    #[inline]
    pub fn force_gradient(&self, x: f64) -> f64 {
        -12.0 * self.b * x * x + 2.0 * self.a
    }

    /// ∂ₓ²F
    #[inline]
    pub fn force_curvature(&self, x: f64) -> f64 {
        -24.0 * self.b * x
    }

    /// Largest |x| at which the static potential minus the full drive
    /// envelope is still below `energy`. Bisection on the outer branch.
    pub fn turning_point(&self, energy: f64) -> f64 {
        let envelope = |x: f64| self.static_potential(x) - self.lambda.abs() * x;
        if self.b == 0.0 && self.a <= 0.0 {
            // pure harmonic well (or free particle)
            if self.a < 0.0 {
                return ((energy + self.lambda.abs().powi(2) / (4.0 * -self.a)).max(0.0) / -self.a).sqrt();
            }
            return f64::INFINITY;
        }
        if self.b == 0.0 {
            return f64::INFINITY;
        }
        let mut hi = 1.0;
        while envelope(hi) < energy {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if envelope(mid) < energy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

pub fn potential(x: f64, t: f64, p: &SystemParams) -> f64 {
    p.potential(x, t)
}

pub fn force(x: f64, t: f64, p: &SystemParams) -> f64 {
    p.force(x, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureParams {
    pub hbar: f64,
    /// Measurement strength.
    pub k: f64,
    /// Detector efficiency. Only scales the record noise and the regime
    /// inequalities; the state is always evolved with the pure-state update.
    pub eta: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            hbar: 1e-5,
            k: 1e5,
            eta: 1.0,
        }
    }
}

impl MeasureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidParameter("hbar must be > 0".into()));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidParameter("k must be >= 0".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter("eta out of (0,1]".into()));
        }
        Ok(())
    }
}
