//! Periodic position grid, conditioned wavefunction and spectral moments.
//!
//! A [`WaveState`] stores its amplitudes in a frame co-moving in momentum:
//!
//! ```text
//! ψ(x) = exp(i p_frame (x − x_min) / ħ) · φ(x)
//! ```
//!
//! `φ` lives on the grid and only has to resolve the momentum *spread* of the
//! state, while `p_frame` carries its bulk momentum. Momentum kicks that are
//! linear in `x` (the drive term, [`WaveState::kick`]) are exact updates of
//! `p_frame`, and the propagator re-centres the window on the state by whole
//! lattice steps, which is a pure relabelling of Fourier coefficients. With
//! `p_frame = 0` this is the ordinary split-operator representation.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Fraction of grid points (at each end) that counts as "edge".
pub const EDGE_FRACTION: f64 = 0.02;
pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-10;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[x_min, x_max)` with `n` points.
#[derive(Clone)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("n", &self.n)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.x_min == other.x_min && self.x_max == other.x_max && self.n == other.n
    }
}

pub fn make_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid> {
    Grid::new(x_min, x_max, n)
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "degenerate interval [{x_min}, {x_max}]"
            )));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {n} must be a power of two >= 16"
            )));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / n as f64,
            plans: Arc::new(plans),
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Spacing of the wavenumber lattice, 2π/(n dx).
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length()
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Signed FFT index of slot `j` (negative frequencies in the upper half).
    #[inline]
    pub fn freq_index(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    #[inline]
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.freq_index(j) as f64 * self.dk()
    }

    /// k_j = 2πj/(n dx) in standard FFT ordering.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    pub fn edge_points(&self) -> usize {
        ((EDGE_FRACTION * self.n as f64).ceil() as usize).max(1)
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let need = self.plans.forward.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        self.plans.forward.process_with_scratch(buf, &mut scratch[..need]);
    }

    /// Inverse transform in place, including the 1/n factor.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let need = self.plans.inverse.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        self.plans.inverse.process_with_scratch(buf, &mut scratch[..need]);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }
}

/// Grid chosen by [`suggest_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSuggestion {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

/// Pick a grid with `dx ≤ expected_width / 5` whose half-width is at least
/// 1.5× the outer turning point at `energy` (drive envelope included).
pub fn suggest_grid(params: &SystemParams, energy: f64, expected_width: f64) -> Result<GridSuggestion> {
    if !(expected_width > 0.0) {
        return Err(Error::InvalidParameter("expected width must be > 0".into()));
    }
    let turn = params.turning_point(energy);
    if !turn.is_finite() {
        return Err(Error::InvalidParameter(
            "unbounded potential: no turning point at this energy".into(),
        ));
    }
    let half = 1.5 * turn.max(expected_width);
    let needed = (2.0 * half / (expected_width / 5.0)).ceil() as usize;
    let n = needed.max(16).next_power_of_two();
    Ok(GridSuggestion {
        x_min: -half,
        x_max: half,
        n,
    })
}

/// Conditioned pure state on a [`Grid`].
#[derive(Debug, Clone)]
pub struct WaveState {
    grid: Grid,
    amps: Vec<Complex64>,
    hbar: f64,
    p_frame: f64,
    pub t: f64,
}

/// Phase-space moments of a state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub t: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    /// Symmetrized covariance ⟨(XP+PX)/2⟩ − ⟨X⟩⟨P⟩.
    pub cov_xp: f64,
    pub norm: f64,
    pub energy: f64,
}

impl WaveState {
    /// Build a state from lab-frame amplitudes ψ(xᵢ).
    pub fn from_amplitudes(grid: Grid, amps: Vec<Complex64>, hbar: f64, t: f64) -> Result<Self> {
        if amps.len() != grid.n() {
            return Err(Error::InvalidParameter(format!(
                "amplitude length {} does not match grid size {}",
                amps.len(),
                grid.n()
            )));
        }
        if !(hbar > 0.0) {
            return Err(Error::InvalidParameter("hbar must be > 0".into()));
        }
        Ok(Self {
            grid,
            amps,
            hbar,
            p_frame: 0.0,
            t,
        })
    }

    pub fn from_fn(grid: Grid, hbar: f64, t: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = (0..grid.n()).map(|i| f(grid.x(i))).collect();
        Self::from_amplitudes(grid, amps, hbar, t)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    /// Bulk momentum carried by the frame.
    pub fn p_frame(&self) -> f64 {
        self.p_frame
    }

    /// Amplitudes in the momentum frame (φ).
    pub fn frame_amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn frame_amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub(crate) fn parts_mut(&mut self) -> (&Grid, &mut Vec<Complex64>, &mut f64) {
        (&self.grid, &mut self.amps, &mut self.p_frame)
    }

    /// Lab-frame amplitudes ψ(xᵢ).
    pub fn amplitudes(&self) -> Vec<Complex64> {
        if self.p_frame == 0.0 {
            return self.amps.clone();
        }
        let g = &self.grid;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let phase = self.p_frame * (g.x(i) - g.x_min()) / self.hbar;
                a * Complex64::from_polar(1.0, phase)
            })
            .collect()
    }

    /// Multiply ψ by exp(i q x/ħ) (exact, up to a global phase).
    pub fn kick(&mut self, q: f64) {
        self.p_frame += q;
    }

    /// Cyclic shift by `s` grid points towards larger x.
    pub fn shift_points(&mut self, s: isize) {
        let n = self.grid.n() as isize;
        let s = s.rem_euclid(n) as usize;
        self.amps.rotate_right(s);
    }

    /// Spectral translation by a distance `d`.
    pub fn translate(&mut self, d: f64) {
        let mut scratch = Vec::new();
        self.grid.forward(&mut self.amps, &mut scratch);
        for (j, z) in self.amps.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, -self.grid.wavenumber(j) * d);
        }
        self.grid.inverse(&mut self.amps, &mut scratch);
    }

    pub fn scale(&mut self, c: f64) {
        self.amps.iter_mut().for_each(|z| *z *= c);
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / n.sqrt();
        self.scale(s);
        Ok(())
    }

    /// Σ|ψ|²dx over the outer points at both ends, relative to the norm.
    pub fn edge_mass(&self) -> f64 {
        let e = self.grid.edge_points();
        let n = self.grid.n();
        let edge: f64 = self.amps[..e]
            .iter()
            .chain(self.amps[n - e..].iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            * self.grid.dx();
        edge / self.norm()
    }

    pub fn check_leak(&self, threshold: f64) -> Result<()> {
        let m = self.edge_mass();
        if m >= threshold || !m.is_finite() {
            return Err(Error::Leaked {
                region: "position",
                t: self.t,
                edge_mass: m,
            });
        }
        Ok(())
    }

    /// Position and momentum centroid only (one forward transform).
    pub fn means(&self) -> Result<(f64, f64)> {
        let g = &self.grid;
        let mut w = 0.0;
        let mut sx = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            let p = z.norm_sqr();
            w += p;
            sx += g.x(i) * p;
        }
        if !(w > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let mut buf = self.amps.clone();
        let mut scratch = Vec::new();
        g.forward(&mut buf, &mut scratch);
        let (mut wk, mut sq) = (0.0, 0.0);
        for (j, z) in buf.iter().enumerate() {
            let p = z.norm_sqr();
            wk += p;
            sq += g.wavenumber(j) * p;
        }
        Ok((sx / w, self.p_frame + self.hbar * sq / wk))
    }

    /// Full moment set. The state is expected to be normalized; every moment
    /// is nevertheless divided by the norm, which is reported alongside.
    pub fn moments(&self, params: &SystemParams) -> Result<Moments> {
        self.moments_with_threshold(params, DEFAULT_LEAK_THRESHOLD)
    }

    pub fn moments_with_threshold(&self, params: &SystemParams, leak_threshold: f64) -> Result<Moments> {
        self.check_leak(leak_threshold)?;
        let g = &self.grid;
        let dx = g.dx();
        let hbar = self.hbar;

        let mut w = 0.0;
        let mut sx = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            let p = z.norm_sqr();
            w += p;
            sx += g.x(i) * p;
        }
        if !(w > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let norm = w * dx;
        let mean_x = sx / w;
        let mut vx = 0.0;
        let mut pot = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            let p = z.norm_sqr();
            let x = g.x(i);
            vx += (x - mean_x) * (x - mean_x) * p;
            pot += params.potential(x, self.t) * p;
        }
        let var_x = vx / w;
        let mean_v = pot / w;

        let mut spec = self.amps.clone();
        let mut scratch = Vec::new();
        g.forward(&mut spec, &mut scratch);
        let mut wk = 0.0;
        let mut sq = 0.0;
        for (j, z) in spec.iter().enumerate() {
            let p = z.norm_sqr();
            wk += p;
            sq += hbar * g.wavenumber(j) * p;
        }
        let mean_q = sq / wk;
        let mut vq = 0.0;
        for (j, z) in spec.iter().enumerate() {
            let d = hbar * g.wavenumber(j) - mean_q;
            vq += d * d * z.norm_sqr();
        }
        let var_p = vq / wk;
        let mean_p = self.p_frame + mean_q;

        // Re⟨(X − x̄) P⟩ with P applied spectrally; the frame momentum drops out.
        for (j, z) in spec.iter_mut().enumerate() {
            *z *= hbar * g.wavenumber(j);
        }
        g.inverse(&mut spec, &mut scratch);
        let mut c = 0.0;
        for (i, (a, pa)) in self.amps.iter().zip(spec.iter()).enumerate() {
            c += (g.x(i) - mean_x) * (a.conj() * pa).re;
        }
        let cov_xp = c / w;

        let mean_p2 = var_p + mean_p * mean_p;
        Ok(Moments {
            t: self.t,
            mean_x,
            mean_p,
            var_x,
            var_p,
            cov_xp,
            norm,
            energy: mean_p2 / (2.0 * params.m) + mean_v,
        })
    }
}

/// Normalized minimum-uncertainty Gaussian
/// ψ ∝ exp(−(x−x0)²/(4σ²) + i p0 x/ħ), up to a global phase.
pub fn init_gaussian(grid: &Grid, x0: f64, p0: f64, sigma: f64, hbar: f64) -> Result<WaveState> {
    let margin = 0.1 * grid.length();
    if !(x0 >= grid.x_min() + margin && x0 <= grid.x_max() - margin) {
        return Err(Error::InvalidParameter(format!(
            "x0 = {x0} is outside the inner 80% of the grid"
        )));
    }
    if !(sigma >= 4.0 * grid.dx()) {
        return Err(Error::InvalidParameter(format!(
            "sigma = {sigma} is not resolved by dx = {}",
            grid.dx()
        )));
    }
    let inv = 1.0 / (4.0 * sigma * sigma);
    let mut s = WaveState::from_fn(grid.clone(), hbar, 0.0, |x| {
        Complex64::new((-(x - x0) * (x - x0) * inv).exp(), 0.0)
    })?;
    s.p_frame = p0;
    s.normalize()?;
    Ok(s)
}

pub fn norm(state: &WaveState) -> f64 {
    state.norm()
}

pub fn normalize(state: &WaveState) -> Result<WaveState> {
    let mut s = state.clone();
    s.normalize()?;
    Ok(s)
}

pub fn moments(state: &WaveState, params: &SystemParams) -> Result<Moments> {
    state.moments(params)
}
