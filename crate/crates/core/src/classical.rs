//! Classical driven double well with optional additive white noise.

use crate::error::{Error, Result};
use crate::grid::Moments;
use crate::params::SystemParams;
use crate::quantum::steps_for;
use crate::record::TrajectoryRecord;
use crate::rng::{role, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub x: f64,
    pub p: f64,
    pub t: f64,
}

impl ClassicalState {
    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p, t: 0.0 }
    }

    pub fn energy(&self, sys: &SystemParams) -> f64 {
        self.p * self.p / (2.0 * sys.m) + sys.potential(self.x, self.t)
    }

    pub fn as_moments(&self, sys: &SystemParams) -> Moments {
        Moments {
            t: self.t,
            mean_x: self.x,
            mean_p: self.p,
            var_x: 0.0,
            var_p: 0.0,
            cov_xp: 0.0,
            norm: 1.0,
            energy: self.energy(sys),
        }
    }
}

/// Additive white-noise amplitudes (per √time).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub sigma_x: f64,
    pub sigma_p: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sigma_x: 0.0,
        sigma_p: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x >= 0.0 && self.sigma_p >= 0.0) {
            return Err(Error::InvalidParameter("noise amplitudes must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_x == 0.0 && self.sigma_p == 0.0
    }
}

/// Kick-drift-kick leapfrog with the drive frozen at the midpoint of the
/// drift, followed by additive noise `σ_x dW₁`, `σ_p dW₂`. `dw` is
/// `(dW₁, dW₂)`, each with variance `dt`.
#[inline]
pub fn classical_step(
    s: &ClassicalState,
    dt: f64,
    sys: &SystemParams,
    ns: &NoiseSpec,
    dw: (f64, f64),
) -> ClassicalState {
    let t_mid = s.t + 0.5 * dt;
    let mut p = s.p + 0.5 * dt * sys.force(s.x, t_mid);
    let mut x = s.x + dt * p / sys.m;
    p += 0.5 * dt * sys.force(x, t_mid);
    x += ns.sigma_x * dw.0;
    p += ns.sigma_p * dw.1;
    ClassicalState { x, p, t: s.t + dt }
}

/// Advance in place, drawing noise only when an amplitude is nonzero.
pub fn advance_classical(
    s: &mut ClassicalState,
    steps: usize,
    dt: f64,
    sys: &SystemParams,
    ns: &NoiseSpec,
    noise: &mut NoiseStream,
) -> Result<()> {
    let noisy = !ns.is_zero();
    for _ in 0..steps {
        let dw = if noisy {
            (noise.wiener(dt), noise.wiener(dt))
        } else {
            (0.0, 0.0)
        };
        *s = classical_step(s, dt, sys, ns, dw);
    }
    if !(s.x.is_finite() && s.p.is_finite()) || s.x.abs() > 1e6 {
        return Err(Error::Diverged(s.t));
    }
    Ok(())
}

pub fn run_classical_trajectory(
    init: &ClassicalState,
    t_end: f64,
    dt: f64,
    sys: &SystemParams,
    ns: &NoiseSpec,
    seed: u64,
    sample_every: usize,
) -> Result<TrajectoryRecord> {
    let mut noise = NoiseStream::new(seed, &[0, role::MAIN]);
    run_classical_with(init, t_end, dt, sys, ns, seed, sample_every, &mut noise)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_classical_with(
    init: &ClassicalState,
    t_end: f64,
    dt: f64,
    sys: &SystemParams,
    ns: &NoiseSpec,
    seed: u64,
    sample_every: usize,
    noise: &mut NoiseStream,
) -> Result<TrajectoryRecord> {
    sys.validate()?;
    ns.validate()?;
    if sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be >= 1".into()));
    }
    let steps = steps_for(t_end, dt)?;
    let mut s = *init;
    let mut samples = Vec::with_capacity(steps / sample_every + 1);
    samples.push(s.as_moments(sys));
    let mut done = 0;
    while done < steps {
        let chunk = sample_every.min(steps - done);
        advance_classical(&mut s, chunk, dt, sys, ns, noise)?;
        done += chunk;
        if done % sample_every == 0 {
            samples.push(s.as_moments(sys));
        }
    }
    Ok(TrajectoryRecord {
        fingerprint: None,
        seed,
        samples,
        raw_record: None,
        band_limited: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_drive() -> SystemParams {
        SystemParams { lambda: 0.0, ..Default::default() }
    }

    #[test]
    fn origin_is_fixed_point_without_drive() {
        let mut s = ClassicalState::new(0.0, 0.0);
        for _ in 0..1000 {
            s = classical_step(&s, 0.01, &no_drive(), &NoiseSpec::NONE, (0.0, 0.0));
        }
        assert_eq!((s.x, s.p), (0.0, 0.0));
    }

    #[test]
    fn harmonic_energy_has_no_secular_drift() {
        // V = 5x², period 2π/√10
        let sys = SystemParams { b: 0.0, a: -5.0, lambda: 0.0, ..Default::default() };
        let period = 2.0 * std::f64::consts::PI / 10f64.sqrt();
        let dt = period / 200.0;
        let mut s = ClassicalState::new(1.0, 0.0);
        let e0 = s.energy(&sys);
        let mut early = 0.0f64;
        let mut late = 0.0f64;
        let steps = 200 * 1000;
        for i in 0..steps {
            s = classical_step(&s, dt, &sys, &NoiseSpec::NONE, (0.0, 0.0));
            let err = (s.energy(&sys) - e0).abs();
            if i < 2000 {
                early = early.max(err);
            } else if i >= steps - 2000 {
                late = late.max(err);
            }
        }
        assert!(early < 1e-3 * e0);
        assert!(late < 1.05 * early + 1e-12, "{early} {late}");
    }

    #[test]
    fn reversible() {
        let sys = SystemParams::default();
        let s0 = ClassicalState { x: -3.0, p: 8.0, t: 0.37 };
        let s1 = classical_step(&s0, 0.01, &sys, &NoiseSpec::NONE, (0.0, 0.0));
        let s2 = classical_step(&s1, -0.01, &sys, &NoiseSpec::NONE, (0.0, 0.0));
        assert!((s2.x - s0.x).abs() < 1e-12 && (s2.p - s0.p).abs() < 1e-12);
        assert!((s2.t - s0.t).abs() < 1e-15);
    }

    #[test]
    fn bounded_motion_at_reference_parameters() {
        let sys = SystemParams::default();
        let rec = run_classical_trajectory(&ClassicalState::new(-3.0, 8.0), 200.0, 1e-3, &sys, &NoiseSpec::NONE, 0, 100)
            .unwrap();
        assert!(rec.samples.iter().all(|m| m.mean_x.abs() < 10.0));
    }

    #[test]
    fn determinism_and_seed_independence() {
        let sys = SystemParams::default();
        let init = ClassicalState::new(-3.0, 8.0);
        let ns = NoiseSpec { sigma_x: 0.01, sigma_p: 0.01 };
        let a = run_classical_trajectory(&init, 5.0, 1e-3, &sys, &ns, 4, 10).unwrap();
        let b = run_classical_trajectory(&init, 5.0, 1e-3, &sys, &ns, 4, 10).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = run_classical_trajectory(&init, 5.0, 1e-3, &sys, &ns, 5, 10).unwrap();
        assert_ne!(a.samples, c.samples);
        let z1 = run_classical_trajectory(&init, 5.0, 1e-3, &sys, &NoiseSpec::NONE, 4, 10).unwrap();
        let z2 = run_classical_trajectory(&init, 5.0, 1e-3, &sys, &NoiseSpec::NONE, 99, 10).unwrap();
        assert_eq!(z1.samples, z2.samples);
    }

    /// Free particle with momentum noise: d⟨E⟩/dt = σ_p²/2m.
    #[test]
    fn momentum_noise_heats_at_expected_rate() {
        let sys = SystemParams { b: 0.0, a: 0.0, lambda: 0.0, m: 2.0, omega: 1.0 };
        let ns = NoiseSpec { sigma_x: 0.0, sigma_p: 0.3 };
        let (dt, steps, n) = (0.01, 500, 2000);
        let t = dt * steps as f64;
        let mut mean_e = 0.0;
        for i in 0..n {
            let mut noise = NoiseStream::new(17, &[i as u64]);
            let mut s = ClassicalState::new(0.0, 0.0);
            advance_classical(&mut s, steps, dt, &sys, &ns, &mut noise).unwrap();
            mean_e += s.energy(&sys) / n as f64;
        }
        let expect = ns.sigma_p * ns.sigma_p / (2.0 * sys.m) * t;
        assert!((mean_e / expect - 1.0).abs() < 0.1, "{mean_e} vs {expect}");
    }

    /// Halving dt moves stroboscopic points by O(dt²).
    #[test]
    fn strobe_points_converge_second_order() {
        let sys = SystemParams::default();
        let period = sys.drive_period();
        let run = |steps_per_period: usize| {
            let dt = period / steps_per_period as f64;
            let mut s = ClassicalState::new(-3.0, 8.0);
            let mut noise = NoiseStream::new(0, &[0]);
            advance_classical(&mut s, 2 * steps_per_period, dt, &sys, &NoiseSpec::NONE, &mut noise).unwrap();
            s
        };
        let a = run(500);
        let b = run(1000);
        let c = run(2000);
        let d1 = (a.x - b.x).hypot(a.p - b.p);
        let d2 = (b.x - c.x).hypot(b.p - c.p);
        let ratio = d1 / d2;
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn divergence_is_reported() {
        let sys = SystemParams { b: 0.0, a: 10.0, lambda: 0.0, ..Default::default() };
        let mut s = ClassicalState::new(1.0, 0.0);
        let mut noise = NoiseStream::new(0, &[0]);
        let r = advance_classical(&mut s, 100_000, 0.01, &sys, &NoiseSpec::NONE, &mut noise);
        assert!(matches!(r, Err(Error::Diverged(_))));
    }
}
