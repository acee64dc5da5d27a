//! Split-operator propagation of the conditioned wavefunction under
//! continuous position measurement.
//!
//! One step is a full Strang unitary step followed by a single diffuse
//! projection with the whole step's Wiener increment:
//!
//! ```text
//! ψ ← e^{−iT dt/2ħ} e^{−iV(t+dt/2) dt/ħ} e^{−iT dt/2ħ} ψ
//! ψ ← exp(−2k dt (x−⟨X⟩)² + √(2k) dW (x−⟨X⟩)) ψ,  then normalize
//! ```
//!
//! The measurement exponent is the expanded form of
//! `−2k dt (x − ⟨X⟩ − ξ)²` with `ξ = dW/(√(8k) dt)`; the `ξ²` term does not
//! depend on `x` and disappears in the normalization.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Moments, WaveState, DEFAULT_LEAK_THRESHOLD, EDGE_FRACTION};
use crate::params::{MeasureParams, SystemParams};
use crate::record::{RawRecord, TrajectoryRecord};
use crate::rng::{role, NoiseStream};

/// Tolerance on the input norm accepted by [`measurement_update`].
const NORM_TOLERANCE: f64 = 1e-8;

/// Per-step diagnostics of the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    /// ⟨X⟩ of the state the measurement acted on.
    pub mean_x: f64,
    pub dw: f64,
    /// `⟨X⟩ + dW/(√(8ηk) dt)`; `None` when `k = 0`.
    pub record: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Moments of the state after the step.
    pub moments: Moments,
    pub dw: f64,
    pub record: Option<f64>,
}

/// Step-size heuristics. All values are upper bounds on `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtBounds {
    /// `0.02/ω`
    pub drive: f64,
    /// `0.1 m dx²/(ħπ²)`: kinetic phase over the full grid bandwidth.
    pub kinetic_grid: f64,
    /// Kinetic phase over the band actually occupied (±6σ_p) by the state.
    pub kinetic_occupied: f64,
    /// `0.1/(k V_x)`
    pub measurement: f64,
    /// The static-force kick per step must stay well inside the momentum
    /// window `±πħ/dx`.
    pub window: f64,
}

impl DtBounds {
    /// `var_x`/`var_p` are the expected state variances and `x_reach` the
    /// largest |x| the state is expected to visit.
    pub fn compute(
        sys: &SystemParams,
        meas: &MeasureParams,
        grid: &Grid,
        var_x: f64,
        var_p: f64,
        x_reach: f64,
    ) -> Self {
        let dx = grid.dx();
        let hbar = meas.hbar;
        let drive = if sys.lambda == 0.0 { f64::INFINITY } else { 0.02 / sys.omega };
        let kinetic_grid = 0.1 * sys.m * dx * dx / (hbar * PI * PI);
        let kinetic_occupied = if var_p > 0.0 {
            0.1 * sys.m * hbar / (36.0 * var_p)
        } else {
            f64::INFINITY
        };
        let measurement = if meas.k > 0.0 && var_x > 0.0 {
            0.1 / (meas.k * var_x)
        } else {
            f64::INFINITY
        };
        let reach = x_reach.min(grid.x_max().abs().max(grid.x_min().abs()));
        let f_max = (0..=400)
            .map(|i| {
                let x = reach * i as f64 / 400.0;
                (-4.0 * sys.b * x * x * x + 2.0 * sys.a * x).abs()
            })
            .fold(0.0, f64::max);
        let window = if f_max > 0.0 {
            0.5 * PI * hbar / (dx * f_max)
        } else {
            f64::INFINITY
        };
        Self {
            drive,
            kinetic_grid,
            kinetic_occupied,
            measurement,
            window,
        }
    }

    /// Minimum of the bounds that govern accuracy for a tracked momentum
    /// window (`kinetic_grid` is reported but not binding).
    pub fn recommended(&self) -> f64 {
        self.drive
            .min(self.kinetic_occupied)
            .min(self.measurement)
            .min(self.window)
    }
}

/// Steady-state Gaussian variances of a freely moving, continuously observed
/// particle: `V_x = √(ħ/(8km))`, `C = ħ/2`, `V_p = ħ√(2kmħ)`.
pub fn free_steady_state(m: f64, meas: &MeasureParams) -> Option<(f64, f64, f64)> {
    if meas.k <= 0.0 {
        return None;
    }
    let hbar = meas.hbar;
    let vx = (hbar / (8.0 * meas.k * m)).sqrt();
    let vp = hbar * (2.0 * meas.k * m * hbar).sqrt();
    Some((vx, vp, 0.5 * hbar))
}

struct Tables {
    /// exp(−i (Bx⁴ − Ax²) dt/ħ)
    static_phase: Vec<Complex64>,
    /// ħ k_j
    momenta: Vec<f64>,
}

/// Reusable stepping machinery for one `(grid, params, dt)` combination.
/// Cloning is cheap apart from the scratch buffer.
#[derive(Clone)]
pub struct Propagator {
    grid: Grid,
    sys: SystemParams,
    meas: MeasureParams,
    dt: f64,
    tables: Arc<Tables>,
    scratch: Vec<Complex64>,
    leak_threshold: f64,
}

impl Propagator {
    pub fn new(grid: &Grid, sys: SystemParams, meas: MeasureParams, dt: f64) -> Result<Self> {
        sys.validate()?;
        meas.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        let hbar = meas.hbar;
        let static_phase = (0..grid.n())
            .map(|i| Complex64::from_polar(1.0, -sys.static_potential(grid.x(i)) * dt / hbar))
            .collect();
        let momenta = (0..grid.n()).map(|j| hbar * grid.wavenumber(j)).collect();
        Ok(Self {
            grid: grid.clone(),
            sys,
            meas,
            dt,
            tables: Arc::new(Tables {
                static_phase,
                momenta,
            }),
            scratch: Vec::new(),
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
        })
    }

    pub fn with_leak_threshold(mut self, threshold: f64) -> Self {
        self.leak_threshold = threshold;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn system(&self) -> &SystemParams {
        &self.sys
    }
    pub fn measure_params(&self) -> &MeasureParams {
        &self.meas
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check_state(&self, state: &WaveState) -> Result<()> {
        if state.grid() != &self.grid {
            return Err(Error::InvalidParameter("state grid does not match propagator".into()));
        }
        if state.hbar() != self.meas.hbar {
            return Err(Error::InvalidParameter("state hbar does not match propagator".into()));
        }
        Ok(())
    }

    fn kinetic_half(&self, spec: &mut [Complex64], p_frame: f64) {
        let c = -self.dt / (4.0 * self.sys.m * self.meas.hbar);
        for (z, &q) in spec.iter_mut().zip(self.tables.momenta.iter()) {
            let p = p_frame + q;
            *z *= Complex64::from_polar(1.0, c * p * p);
        }
    }

    /// Re-centre the momentum window on the state (k-space, whole lattice
    /// steps) and guard against spectral content at the window edge.
    fn recenter(&self, spec: &mut [Complex64], p_frame: &mut f64, t: f64) -> Result<()> {
        let n = spec.len();
        let mut w = 0.0;
        let mut sq = 0.0;
        for (z, &q) in spec.iter().zip(self.tables.momenta.iter()) {
            let p = z.norm_sqr();
            w += p;
            sq += q * p;
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let dq = self.meas.hbar * self.grid.dk();
        let shift = (sq / w / dq).round() as i64;
        if shift != 0 {
            let s = shift.rem_euclid(n as i64) as usize;
            spec.rotate_left(s);
            *p_frame += shift as f64 * dq;
        }
        // highest |k| live around n/2
        let e = ((EDGE_FRACTION * n as f64).ceil() as usize).max(1);
        let edge: f64 = spec[n / 2 - e..n / 2 + e].iter().map(|z| z.norm_sqr()).sum();
        if edge / w >= self.leak_threshold {
            return Err(Error::Leaked {
                region: "momentum-window",
                t,
                edge_mass: edge / w,
            });
        }
        Ok(())
    }

    /// Full Strang unitary step `e^{−iT dt/2ħ} e^{−iV(t+dt/2)dt/ħ} e^{−iT dt/2ħ}`.
    pub fn unitary_step(&mut self, state: &mut WaveState) -> Result<()> {
        self.check_state(state)?;
        let t_mid = state.t + 0.5 * self.dt;
        let t = state.t;
        let mut scratch = std::mem::take(&mut self.scratch);
        {
            let (grid, amps, p_frame) = state.parts_mut();
            grid.forward(amps, &mut scratch);
            self.kinetic_half(amps, *p_frame);
            grid.inverse(amps, &mut scratch);
            for (z, ph) in amps.iter_mut().zip(self.tables.static_phase.iter()) {
                *z *= ph;
            }
            // Λ x cos(ωt) is linear in x: an exact momentum kick
            *p_frame -= self.sys.drive(t_mid) * self.dt;
            grid.forward(amps, &mut scratch);
            let r = self.recenter(amps, p_frame, t);
            if let Err(e) = r {
                self.scratch = scratch;
                return Err(e);
            }
            self.kinetic_half(amps, *p_frame);
            grid.inverse(amps, &mut scratch);
        }
        self.scratch = scratch;
        state.t += self.dt;
        state.check_leak(self.leak_threshold)
    }

    /// Diffuse projection with increment `dw`, followed by normalization.
    pub fn measure(&self, state: &mut WaveState, dw: f64) -> Result<MeasurementOutcome> {
        measurement_update(state, self.dt, dw, &self.meas)
    }

    /// Unitary step, then measurement with `dW = √dt · normal`.
    pub fn step(&mut self, state: &mut WaveState, normal: f64) -> Result<MeasurementOutcome> {
        self.unitary_step(state)?;
        let dw = self.dt.sqrt() * normal;
        self.measure(state, dw)
    }

    pub fn sse_step(&mut self, state: &mut WaveState, normal: f64) -> Result<StepOutcome> {
        let out = self.step(state, normal)?;
        let moments = state.moments_with_threshold(&self.sys, self.leak_threshold)?;
        Ok(StepOutcome {
            moments,
            dw: out.dw,
            record: out.record,
        })
    }

    /// Advance `steps` steps drawing from `noise`; returns the last outcome.
    pub fn advance(
        &mut self,
        state: &mut WaveState,
        steps: usize,
        noise: &mut NoiseStream,
    ) -> Result<Option<MeasurementOutcome>> {
        let mut last = None;
        for _ in 0..steps {
            let normal = if self.meas.k > 0.0 { noise.normal() } else { 0.0 };
            last = Some(self.step(state, normal)?);
        }
        Ok(last)
    }
}

/// Applies the Strang unitary step to a copy of `state`.
pub fn unitary_step(
    state: &WaveState,
    dt: f64,
    sys: &SystemParams,
    meas: &MeasureParams,
) -> Result<WaveState> {
    let mut p = Propagator::new(state.grid(), *sys, *meas, dt)?;
    let mut s = state.clone();
    p.unitary_step(&mut s)?;
    Ok(s)
}

/// Multiplies the amplitudes by `exp(exponent(x − ⟨X⟩))` and normalizes.
/// Returns ⟨X⟩ of the input state.
fn reweight(state: &mut WaveState, exponent: impl Fn(f64) -> f64) -> Result<f64> {
    let dx = state.grid().dx();
    let (mut w, mut sx) = (0.0, 0.0);
    {
        let g = state.grid();
        for (i, z) in state.frame_amplitudes().iter().enumerate() {
            let p = z.norm_sqr();
            w += p;
            sx += g.x(i) * p;
        }
    }
    let norm = w * dx;
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Unnormalized(norm));
    }
    let mean = sx / w;
    let g = state.grid().clone();
    let mut w_new = 0.0;
    for (i, z) in state.frame_amplitudes_mut().iter_mut().enumerate() {
        *z *= exponent(g.x(i) - mean).exp();
        w_new += z.norm_sqr();
    }
    if !(w_new > 0.0) || !w_new.is_finite() {
        return Err(Error::ZeroNorm);
    }
    state.scale(1.0 / (w_new * dx).sqrt());
    Ok(mean)
}

/// Diffuse position projection for one step of length `dt` with Wiener
/// increment `dw`, in place. The state must be normalized on entry and is
/// normalized on exit.
pub fn measurement_update(
    state: &mut WaveState,
    dt: f64,
    dw: f64,
    meas: &MeasureParams,
) -> Result<MeasurementOutcome> {
    if meas.k > 0.0 && !(meas.eta > 0.0) {
        return Err(Error::InvalidParameter("k > 0 with eta = 0: record undefined".into()));
    }
    if meas.k == 0.0 {
        let (mean_x, _) = state.means()?;
        let n = state.norm();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(n));
        }
        return Ok(MeasurementOutcome {
            mean_x,
            dw,
            record: None,
        });
    }
    let quad = -2.0 * meas.k * dt;
    let lin = (2.0 * meas.k).sqrt() * dw;
    let mean_x = reweight(state, |u| quad * u * u + lin * u)?;
    let record = mean_x + dw / ((8.0 * meas.eta * meas.k).sqrt() * dt);
    Ok(MeasurementOutcome {
        mean_x,
        dw,
        record: Some(record),
    })
}

/// One stochastic step; `normal` is a standard normal draw.
pub fn sse_step(
    state: &mut WaveState,
    dt: f64,
    normal: f64,
    sys: &SystemParams,
    meas: &MeasureParams,
) -> Result<StepOutcome> {
    let mut p = Propagator::new(state.grid(), *sys, *meas, dt)?;
    p.sse_step(state, normal)
}

/// Runs one conditioned trajectory from `init` for a duration `t_end`,
/// sampling moments every `sample_every` steps (including t = 0). The noise
/// is the `(seed, [0, MAIN])` substream.
pub fn run_quantum_trajectory(
    init: &WaveState,
    t_end: f64,
    dt: f64,
    sys: &SystemParams,
    meas: &MeasureParams,
    seed: u64,
    sample_every: usize,
) -> Result<TrajectoryRecord> {
    let mut noise = NoiseStream::new(seed, &[0, role::MAIN]);
    let mut prop = Propagator::new(init.grid(), *sys, *meas, dt)?;
    run_quantum_with(&mut prop, init, t_end, sample_every, seed, &mut noise)
}

pub fn steps_for(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter("duration must be > 0".into()));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || ((n * dt) - t_end).abs() > 1e-6 * dt.max(t_end * 1e-9) + 1e-9 * t_end {
        return Err(Error::InvalidParameter(format!(
            "duration {t_end} is not an integer number of steps of {dt}"
        )));
    }
    Ok(n as usize)
}

pub(crate) fn run_quantum_with(
    prop: &mut Propagator,
    init: &WaveState,
    t_end: f64,
    sample_every: usize,
    seed: u64,
    noise: &mut NoiseStream,
) -> Result<TrajectoryRecord> {
    if sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be >= 1".into()));
    }
    let dt = prop.dt();
    let steps = steps_for(t_end, dt)?;
    let sys = *prop.system();
    let mut state = init.clone();
    state.normalize()?;
    let mut samples = Vec::with_capacity(steps / sample_every + 1);
    samples.push(state.moments(&sys)?);
    let record_on = prop.measure_params().k > 0.0;
    let mut raw = RawRecord::new(state.t, dt);
    for i in 1..=steps {
        let normal = if record_on { noise.normal() } else { 0.0 };
        let out = prop.step(&mut state, normal)?;
        if let Some(y) = out.record {
            raw.push(y, out.mean_x);
        }
        if i % sample_every == 0 {
            samples.push(state.moments(&sys)?);
        }
    }
    Ok(TrajectoryRecord {
        fingerprint: None,
        seed,
        samples,
        raw_record: record_on.then_some(raw),
        band_limited: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_gaussian, make_grid};

    fn free() -> SystemParams {
        SystemParams {
            m: 1.0,
            b: 0.0,
            a: 0.0,
            lambda: 0.0,
            omega: 1.0,
        }
    }

    fn meas(hbar: f64, k: f64) -> MeasureParams {
        MeasureParams { hbar, k, eta: 1.0 }
    }

    #[test]
    fn unitary_step_preserves_norm_and_advances_time() {
        let g = make_grid(-10.0, 10.0, 1024).unwrap();
        let s = init_gaussian(&g, -3.0, 2.0, 0.3, 0.1).unwrap();
        let out = unitary_step(&s, 0.01, &SystemParams::default(), &meas(0.1, 0.0)).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
        assert!((out.t - 0.01).abs() < 1e-15);
    }

    /// Free Gaussian spreading: V_x(t) = V_x(0) + V_p(0) t²/m² when C_xp(0) = 0.
    #[test]
    fn free_gaussian_spreading() {
        let g = make_grid(-20.0, 20.0, 2048).unwrap();
        let hbar = 0.2;
        let s0 = init_gaussian(&g, 0.0, 0.5, 0.3, hbar).unwrap();
        let m0 = s0.moments(&free()).unwrap();
        let mut p = Propagator::new(&g, free(), meas(hbar, 0.0), 0.01).unwrap();
        let mut s = s0.clone();
        for _ in 0..300 {
            p.unitary_step(&mut s).unwrap();
        }
        let m = s.moments(&free()).unwrap();
        let t = 3.0;
        let expect = m0.var_x + m0.var_p * t * t;
        assert!((m.var_x / expect - 1.0).abs() < 5e-3, "{} vs {}", m.var_x, expect);
        assert!((m.mean_x - 0.5 * t).abs() < 1e-8);
    }

    #[test]
    fn reversible_without_drive() {
        let g = make_grid(-10.0, 10.0, 512).unwrap();
        let sys = SystemParams { lambda: 0.0, ..Default::default() };
        let s0 = init_gaussian(&g, -2.5, 1.0, 0.3, 0.1).unwrap();
        let mut fwd = Propagator::new(&g, sys, meas(0.1, 0.0), 0.01).unwrap();
        let mut s = s0.clone();
        fwd.unitary_step(&mut s).unwrap();
        // a negative step: same operators with −dt
        let mut back = Propagator::new(&g, sys, meas(0.1, 0.0), 0.01).unwrap();
        back.dt = -0.01;
        back.tables = Arc::new(Tables {
            static_phase: (0..g.n())
                .map(|i| Complex64::from_polar(1.0, sys.static_potential(g.x(i)) * 0.01 / 0.1))
                .collect(),
            momenta: back.tables.momenta.clone(),
        });
        back.unitary_step(&mut s).unwrap();
        let a = s0.amplitudes();
        let b = s.amplitudes();
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn zero_strength_measurement_is_identity() {
        let g = make_grid(-10.0, 10.0, 512).unwrap();
        let mut s = init_gaussian(&g, 1.0, 0.0, 0.4, 0.1).unwrap();
        let before = s.clone();
        let out = measurement_update(&mut s, 0.01, 0.3, &meas(0.1, 0.0)).unwrap();
        assert!(out.record.is_none());
        assert_eq!(s.frame_amplitudes(), before.frame_amplitudes());
    }

    /// dW = 0 on a Gaussian of variance σ²: V_x → σ²/(1 + 8k dt σ²).
    #[test]
    fn measurement_contracts_gaussian_variance() {
        let g = make_grid(-10.0, 10.0, 4096).unwrap();
        let sigma = 0.5;
        for &(k, dt) in &[(1.0, 0.01), (10.0, 0.01), (100.0, 0.001)] {
            let mut s = init_gaussian(&g, 0.7, 0.0, sigma, 0.1).unwrap();
            measurement_update(&mut s, dt, 0.0, &meas(0.1, k)).unwrap();
            let m = s.moments(&free()).unwrap();
            let expect = sigma * sigma / (1.0 + 8.0 * k * dt * sigma * sigma);
            assert!((m.var_x / expect - 1.0).abs() < 1e-3);
        }
    }

    /// Exact single-step centroid shift for a Gaussian of variance V:
    /// ⟨X⟩ → ⟨X⟩ + √(8k) V dW/(1 + 8k dt V).
    #[test]
    fn measurement_shifts_gaussian_centroid() {
        let g = make_grid(-10.0, 10.0, 4096).unwrap();
        let sigma = 0.3;
        let v = sigma * sigma;
        let (k, dt) = (5.0, 0.01);
        for &dw in &[-0.2, -0.05, 0.0, 0.1, 0.25] {
            let mut s = init_gaussian(&g, -1.0, 0.0, sigma, 0.1).unwrap();
            measurement_update(&mut s, dt, dw, &meas(0.1, k)).unwrap();
            let m = s.moments(&free()).unwrap();
            let expect = -1.0 + (8.0 * k).sqrt() * v * dw / (1.0 + 8.0 * k * dt * v);
            assert!((m.mean_x - expect).abs() < 1e-9, "{dw}: {} vs {expect}", m.mean_x);
        }
    }

    #[test]
    fn measurement_never_widens_without_noise() {
        let g = make_grid(-10.0, 10.0, 1024).unwrap();
        let mut s = WaveState::from_fn(g, 0.2, 0.0, |x| {
            Complex64::new((-(x - 1.0).powi(2)).exp() + 0.7 * (-(x + 2.0).powi(2) * 3.0).exp(), 0.0)
        })
        .unwrap();
        s.normalize().unwrap();
        let mut v = s.moments(&free()).unwrap().var_x;
        for _ in 0..20 {
            measurement_update(&mut s, 0.01, 0.0, &meas(0.2, 3.0)).unwrap();
            let nv = s.moments(&free()).unwrap().var_x;
            assert!(nv <= v + 1e-14);
            v = nv;
        }
    }

    #[test]
    fn constant_exponent_offset_is_absorbed() {
        let g = make_grid(-10.0, 10.0, 1024).unwrap();
        let s0 = init_gaussian(&g, 0.3, 1.0, 0.4, 0.1).unwrap();
        let (k, dt, dw) = (4.0, 0.01, 0.07);
        let f = |u: f64| -2.0 * k * dt * u * u + (2.0 * k).sqrt() * dw * u;
        let mut a = s0.clone();
        let mut b = s0.clone();
        reweight(&mut a, f).unwrap();
        // the dropped ξ² term, and an arbitrary constant
        let xi = dw / ((8.0 * k).sqrt() * dt);
        reweight(&mut b, |u| f(u) - 2.0 * k * dt * xi * xi + 3.5).unwrap();
        for (x, y) in a.frame_amplitudes().iter().zip(b.frame_amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn literal_diffuse_projection_matches_expanded_form() {
        let g = make_grid(-10.0, 10.0, 1024).unwrap();
        let s0 = init_gaussian(&g, 0.3, 1.0, 0.4, 0.1).unwrap();
        let (k, dt, dw) = (4.0f64, 0.01, 0.07);
        let xi = dw / ((8.0 * k).sqrt() * dt);
        let mut a = s0.clone();
        measurement_update(&mut a, dt, dw, &meas(0.1, k)).unwrap();
        let mut b = s0.clone();
        reweight(&mut b, |u| -2.0 * k * dt * (u - xi) * (u - xi)).unwrap();
        for (x, y) in a.frame_amplitudes().iter().zip(b.frame_amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn measurement_rejects_unnormalized_input() {
        let g = make_grid(-10.0, 10.0, 512).unwrap();
        let mut s = init_gaussian(&g, 0.0, 0.0, 0.4, 0.1).unwrap();
        s.scale(1.5);
        assert!(matches!(
            measurement_update(&mut s, 0.01, 0.0, &meas(0.1, 1.0)),
            Err(Error::Unnormalized(_))
        ));
    }

    #[test]
    fn record_sample_formula() {
        let g = make_grid(-10.0, 10.0, 512).unwrap();
        let mut s = init_gaussian(&g, 0.5, 0.0, 0.4, 0.1).unwrap();
        let mp = MeasureParams { hbar: 0.1, k: 2.0, eta: 0.5 };
        let out = measurement_update(&mut s, 0.01, 0.03, &mp).unwrap();
        let y = out.record.unwrap();
        assert!((out.mean_x - 0.5).abs() < 1e-10);
        assert!((y - (0.5 + 0.03 / ((8.0f64 * 0.5 * 2.0).sqrt() * 0.01))).abs() < 1e-9);
    }

    #[test]
    fn norm_after_every_step() {
        let g = make_grid(-10.0, 10.0, 2048).unwrap();
        let init = init_gaussian(&g, -3.0, 8.0, 0.2, 0.05).unwrap();
        let mut p = Propagator::new(&g, SystemParams::default(), meas(0.05, 20.0), 1e-3).unwrap();
        let mut noise = NoiseStream::new(3, &[0]);
        let mut s = init;
        for _ in 0..200 {
            let out = p.sse_step(&mut s, noise.normal()).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-12);
            assert!(out.record.unwrap().is_finite());
        }
    }

    #[test]
    fn momentum_window_follows_fast_packet() {
        // ħ small enough that p = 8 is far outside the bare grid bandwidth
        let g = make_grid(-8.0, 4.0, 4096).unwrap();
        let hbar = 1e-3;
        assert!(8.0 > hbar * PI / g.dx());
        let sys = SystemParams::default();
        let init = init_gaussian(&g, -3.0, 8.0, 0.04, hbar).unwrap();
        let rec = run_quantum_trajectory(&init, 0.5, 1e-3, &sys, &meas(hbar, 50.0), 1, 50).unwrap();
        // centroid should follow Newton's equations closely for a narrow packet
        let mut x = -3.0;
        let mut pm = 8.0;
        let dt = 1e-4;
        for i in 0..5000 {
            let t = i as f64 * dt;
            pm += 0.5 * dt * sys.force(x, t + 0.5 * dt);
            x += dt * pm;
            pm += 0.5 * dt * sys.force(x, t + 0.5 * dt);
        }
        let last = rec.samples.last().unwrap();
        assert!((last.mean_x - x).abs() < 0.05, "{} vs {x}", last.mean_x);
        assert!((last.mean_p - pm).abs() < 0.3, "{} vs {pm}", last.mean_p);
    }

    #[test]
    fn same_seed_same_record() {
        let g = make_grid(-10.0, 10.0, 1024).unwrap();
        let init = init_gaussian(&g, -3.0, 8.0, 0.25, 0.05).unwrap();
        let sys = SystemParams::default();
        let a = run_quantum_trajectory(&init, 0.2, 1e-3, &sys, &meas(0.05, 20.0), 9, 10).unwrap();
        let b = run_quantum_trajectory(&init, 0.2, 1e-3, &sys, &meas(0.05, 20.0), 9, 10).unwrap();
        assert_eq!(a.samples, b.samples);
        let (ra, rb) = (a.raw_record.unwrap(), b.raw_record.unwrap());
        assert!(ra.y.iter().zip(&rb.y).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = run_quantum_trajectory(&init, 0.2, 1e-3, &sys, &meas(0.05, 20.0), 10, 10).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn leak_aborts_with_time() {
        let g = make_grid(-4.0, 4.0, 256).unwrap();
        let init = init_gaussian(&g, 2.0, 6.0, 0.2, 0.1).unwrap();
        let sys = free();
        let err = run_quantum_trajectory(&init, 2.0, 1e-3, &sys, &meas(0.1, 0.0), 0, 10).unwrap_err();
        match err {
            Error::Leaked { t, .. } => assert!(t > 0.0 && t < 2.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn dt_bounds_report() {
        let g = make_grid(-10.0, 10.0, 1 << 17).unwrap();
        let mp = MeasureParams::default();
        let (vx, vp, _) = free_steady_state(1.0, &mp).unwrap();
        let b = DtBounds::compute(&SystemParams::default(), &mp, &g, vx, vp, 5.0);
        assert!((b.drive - 0.02 / 6.07).abs() < 1e-15);
        let dx = g.dx();
        assert!((b.kinetic_grid - 0.1 * dx * dx / (1e-5 * PI * PI)).abs() < 1e-18);
        assert!((b.measurement - 0.1 / (1e5 * vx)).abs() < 1e-12);
        assert!(b.recommended() <= b.drive && b.recommended() <= b.window);
        assert!(b.recommended() > b.kinetic_grid);
    }
}
