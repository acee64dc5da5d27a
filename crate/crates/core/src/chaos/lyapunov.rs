use rayon::prelude::*;

use crate::classical::{advance_classical, ClassicalState, NoiseSpec};
use crate::error::{Error, Result};
use crate::grid::{init_gaussian, Grid, WaveState};
use crate::params::SystemParams;
use crate::quantum::Propagator;
use crate::record::window_samples;
use crate::rng::{role, NoiseStream};

pub const DEFAULT_FIT_WINDOW: (f64, f64) = (1.0, 6.0);

/// `√((ax−bx)² + w (ap−bp)²)`.
pub fn phase_distance(a: (f64, f64), b: (f64, f64), w: f64) -> f64 {
    let dx = a.0 - b.0;
    let dp = a.1 - b.1;
    (dx * dx + w * dp * dp).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Neighbor continues from the same state with an independent noise substream.
    NoiseRealization,
    /// Neighbor displaced by `δ0` in a random phase-space direction, same noise.
    InitialOffset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchProtocol {
    pub n_fiducial: usize,
    pub start: (f64, f64),
    /// Radius of the disc the fiducial starting points are drawn from.
    pub start_dispersion: f64,
    pub n_branch_points: usize,
    /// Branch point `b` sits at `t = (b+1)·branch_spacing`.
    pub branch_spacing: f64,
    pub track_time: f64,
    pub perturbation: Perturbation,
    /// Resolution of the ln Δ(τ) curve.
    pub sample_interval: f64,
    /// Momentum weight in [`phase_distance`].
    pub metric_weight: f64,
}

impl Default for BranchProtocol {
    fn default() -> Self {
        Self {
            n_fiducial: 10,
            start: (-3.0, 8.0),
            start_dispersion: 0.0,
            n_branch_points: 17,
            branch_spacing: 20.0,
            track_time: 8.0,
            perturbation: Perturbation::NoiseRealization,
            sample_interval: 0.05,
            metric_weight: 1.0,
        }
    }
}

impl BranchProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_fiducial == 0 {
            return Err(Error::InvalidParameter("n_fiducial must be >= 1".into()));
        }
        if self.n_branch_points == 0 {
            return Err(Error::InvalidParameter("n_branch_points must be >= 1".into()));
        }
        for (name, v) in [
            ("branch_spacing", self.branch_spacing),
            ("track_time", self.track_time),
            ("sample_interval", self.sample_interval),
            ("metric_weight", self.metric_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        if !(self.start_dispersion >= 0.0) {
            return Err(Error::InvalidParameter("start_dispersion must be >= 0".into()));
        }
        if let Perturbation::InitialOffset(d) = self.perturbation {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter("offset must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn overlapping(&self) -> bool {
        self.branch_spacing <= self.track_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub tau: f64,
    pub mean_ln_delta: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovResult {
    /// Mean of the per-fiducial slopes.
    pub lambda: f64,
    /// Standard error of the per-fiducial slopes (NaN for one fiducial).
    pub stderr: f64,
    /// Slope of the pooled mean curve.
    pub pooled_lambda: f64,
    pub per_fiducial: Vec<f64>,
    /// Branch-averaged ln Δ per fiducial, on the τ grid of `curve`.
    pub fiducial_curves: Vec<Vec<f64>>,
    pub curve: Vec<CurvePoint>,
    pub fit_window: (f64, f64),
    /// Number of (fiducial, branch) instances averaged.
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

/// A stepper the estimator can branch and co-evolve.
pub trait Dynamics: Sync {
    type State: Clone + Send + Sync;

    fn dt(&self) -> f64;
    fn prepare(&self, x: f64, p: f64) -> Result<Self::State>;
    fn advance(&self, state: &mut Self::State, steps: usize, noise: &mut NoiseStream) -> Result<()>;
    fn observe(&self, state: &Self::State) -> Result<(f64, f64)>;
    fn displace(&self, state: &Self::State, dx: f64, dp: f64) -> Result<Self::State>;
}

#[derive(Debug, Clone, Copy)]
pub struct ClassicalDynamics {
    pub sys: SystemParams,
    pub noise: NoiseSpec,
    pub dt: f64,
}

impl Dynamics for ClassicalDynamics {
    type State = ClassicalState;

    fn dt(&self) -> f64 {
        self.dt
    }

    fn prepare(&self, x: f64, p: f64) -> Result<ClassicalState> {
        self.sys.validate()?;
        self.noise.validate()?;
        Ok(ClassicalState::new(x, p))
    }

    fn advance(&self, s: &mut ClassicalState, steps: usize, noise: &mut NoiseStream) -> Result<()> {
        advance_classical(s, steps, self.dt, &self.sys, &self.noise, noise)
    }

    fn observe(&self, s: &ClassicalState) -> Result<(f64, f64)> {
        Ok((s.x, s.p))
    }

    fn displace(&self, s: &ClassicalState, dx: f64, dp: f64) -> Result<ClassicalState> {
        Ok(ClassicalState { x: s.x + dx, p: s.p + dp, t: s.t })
    }
}

/// Conditioned quantum trajectories; observations are (⟨X⟩, ⟨P⟩).
#[derive(Clone)]
pub struct QuantumDynamics {
    template: Propagator,
    sigma0: f64,
}

impl QuantumDynamics {
    pub fn new(grid: &Grid, sys: SystemParams, meas: crate::params::MeasureParams, dt: f64, sigma0: f64) -> Result<Self> {
        Ok(Self {
            template: Propagator::new(grid, sys, meas, dt)?,
            sigma0,
        })
    }
}

impl Dynamics for QuantumDynamics {
    type State = WaveState;

    fn dt(&self) -> f64 {
        self.template.dt()
    }

    fn prepare(&self, x: f64, p: f64) -> Result<WaveState> {
        init_gaussian(self.template.grid(), x, p, self.sigma0, self.template.measure_params().hbar)
    }

    fn advance(&self, s: &mut WaveState, steps: usize, noise: &mut NoiseStream) -> Result<()> {
        let mut prop = self.template.clone();
        prop.advance(s, steps, noise)?;
        Ok(())
    }

    fn observe(&self, s: &WaveState) -> Result<(f64, f64)> {
        s.means()
    }

    fn displace(&self, s: &WaveState, dx: f64, dp: f64) -> Result<WaveState> {
        let mut out = s.clone();
        out.translate(dx);
        out.kick(dp);
        Ok(out)
    }
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Least-squares slope of `ys` against `taus` restricted to `[lo, hi]`.
pub(crate) fn window_slope(taus: &[f64], ys: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let tol = 1e-9 * hi.abs().max(1.0);
    let (xs, vs): (Vec<f64>, Vec<f64>) = taus
        .iter()
        .zip(ys)
        .filter(|(t, _)| **t >= lo - tol && **t <= hi + tol)
        .map(|(t, y)| (*t, *y))
        .unzip();
    (xs.len() >= 2).then(|| ols_slope(&xs, &vs))
}

fn steps_multiple(span: f64, unit: f64, what: &str) -> Result<usize> {
    let n = (span / unit).round();
    if n < 1.0 || (n * unit - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} {span} is not a multiple of {unit}"
        )));
    }
    Ok(n as usize)
}

struct Fiducial<S> {
    /// Observations at every sample point from the first branch point on.
    obs: Vec<(f64, f64)>,
    snapshots: Vec<(S, NoiseStream)>,
}

/// Branch-and-track estimate of the maximal Lyapunov exponent.
///
/// Each fiducial runs once; at each branch point the state and its noise
/// stream are snapshotted and a neighbor is spawned, either with the
/// `(seed, [i, BRANCH, b])` noise substream or displaced by `δ0` along a
/// direction drawn from `(seed, [i, DIRECTION, b])`. ln Δ(τ) is averaged over
/// all instances and fitted by least squares over `fit_window`.
pub fn lyapunov_estimate<D: Dynamics>(
    dynamics: &D,
    proto: &BranchProtocol,
    fit_window: (f64, f64),
    seed: u64,
) -> Result<LyapunovResult> {
    proto.validate()?;
    let (lo, hi) = fit_window;
    if !(lo >= 0.0 && hi > lo && hi <= proto.track_time + 1e-12) {
        return Err(Error::Lyapunov(format!(
            "fit window [{lo}, {hi}] not inside [0, {}]",
            proto.track_time
        )));
    }
    let dt = dynamics.dt();
    let per_sample = window_samples(proto.sample_interval, dt)?;
    let n_tau = steps_multiple(proto.track_time, proto.sample_interval, "track_time")?;
    let spacing = steps_multiple(proto.branch_spacing, proto.sample_interval, "branch_spacing")?;
    let mut warnings = Vec::new();
    if proto.overlapping() {
        warnings.push(format!(
            "branch spacing {} <= track time {}: tracking windows overlap",
            proto.branch_spacing, proto.track_time
        ));
    }
    let n_b = proto.n_branch_points;
    let total_samples = (n_b - 1) * spacing + n_tau;

    let fiducials: Vec<Fiducial<D::State>> = (0..proto.n_fiducial)
        .into_par_iter()
        .map(|i| -> Result<Fiducial<D::State>> {
            let (ox, op) = NoiseStream::new(seed, &[i as u64, role::INIT]).in_disc(proto.start_dispersion);
            let mut state = dynamics.prepare(proto.start.0 + ox, proto.start.1 + op)?;
            let mut noise = NoiseStream::new(seed, &[i as u64, role::MAIN]);
            dynamics.advance(&mut state, spacing * per_sample, &mut noise)?;
            let mut obs = Vec::with_capacity(total_samples + 1);
            let mut snapshots = Vec::with_capacity(n_b);
            obs.push(dynamics.observe(&state)?);
            snapshots.push((state.clone(), noise.clone()));
            for j in 1..=total_samples {
                dynamics.advance(&mut state, per_sample, &mut noise)?;
                obs.push(dynamics.observe(&state)?);
                if j % spacing == 0 && snapshots.len() < n_b {
                    snapshots.push((state.clone(), noise.clone()));
                }
            }
            Ok(Fiducial { obs, snapshots })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..proto.n_fiducial)
        .flat_map(|i| (0..n_b).map(move |b| (i, b)))
        .collect();
    let first = match proto.perturbation {
        Perturbation::NoiseRealization => 1,
        Perturbation::InitialOffset(_) => 0,
    };
    let separations: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, b)| -> Result<Vec<f64>> {
            let fid = &fiducials[i];
            let (snap, snap_noise) = &fid.snapshots[b];
            let (mut state, mut noise) = match proto.perturbation {
                Perturbation::NoiseRealization => (
                    snap.clone(),
                    NoiseStream::new(seed, &[i as u64, role::BRANCH, b as u64]),
                ),
                Perturbation::InitialOffset(d) => {
                    let theta = std::f64::consts::TAU
                        * NoiseStream::new(seed, &[i as u64, role::DIRECTION, b as u64]).uniform();
                    let w = proto.metric_weight;
                    let s = dynamics.displace(snap, d * theta.cos(), d * theta.sin() / w.sqrt())?;
                    (s, snap_noise.clone())
                }
            };
            let base = b * spacing;
            let mut out = Vec::with_capacity(n_tau + 1);
            for j in 0..=n_tau {
                if j > 0 {
                    dynamics.advance(&mut state, per_sample, &mut noise)?;
                }
                if j >= first {
                    let here = dynamics.observe(&state)?;
                    out.push(phase_distance(here, fid.obs[base + j], proto.metric_weight));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    if separations.iter().all(|s| s.iter().all(|d| *d == 0.0)) {
        return Err(Error::Lyapunov(
            "all separations are zero: neighbor and fiducial share one noise stream".into(),
        ));
    }
    if let Some(((i, b), _)) = jobs
        .iter()
        .zip(&separations)
        .find(|(_, s)| s.iter().any(|d| !(*d > 0.0) || !d.is_finite()))
    {
        return Err(Error::Lyapunov(format!(
            "degenerate separation in fiducial {i}, branch {b}"
        )));
    }

    let taus: Vec<f64> = (first..=n_tau).map(|j| j as f64 * proto.sample_interval).collect();
    let n_inst = separations.len();
    let logs: Vec<Vec<f64>> = separations
        .iter()
        .map(|s| s.iter().map(|d| d.ln()).collect())
        .collect();
    let curve: Vec<CurvePoint> = taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| {
            let mean = logs.iter().map(|l| l[j]).sum::<f64>() / n_inst as f64;
            let stderr = if n_inst > 1 {
                let var = logs.iter().map(|l| (l[j] - mean).powi(2)).sum::<f64>() / (n_inst - 1) as f64;
                (var / n_inst as f64).sqrt()
            } else {
                f64::NAN
            };
            CurvePoint { tau, mean_ln_delta: mean, stderr }
        })
        .collect();

    let fiducial_curves: Vec<Vec<f64>> = (0..proto.n_fiducial)
        .map(|i| {
            let rows = &logs[i * n_b..(i + 1) * n_b];
            (0..taus.len())
                .map(|j| rows.iter().map(|l| l[j]).sum::<f64>() / n_b as f64)
                .collect()
        })
        .collect();
    fit(curve, fiducial_curves, fit_window, n_inst, warnings)
}

fn fit(
    curve: Vec<CurvePoint>,
    fiducial_curves: Vec<Vec<f64>>,
    fit_window: (f64, f64),
    n_samples: usize,
    warnings: Vec<String>,
) -> Result<LyapunovResult> {
    let (lo, hi) = fit_window;
    let taus: Vec<f64> = curve.iter().map(|c| c.tau).collect();
    let means: Vec<f64> = curve.iter().map(|c| c.mean_ln_delta).collect();
    let pooled = window_slope(&taus, &means, lo, hi)
        .ok_or_else(|| Error::Lyapunov("fit window holds fewer than two curve points".into()))?;
    if !(pooled > 0.0) {
        return Err(Error::Lyapunov(format!(
            "curve saturated before the fit window (slope {pooled:.3e}); shrink the window"
        )));
    }
    let per_fiducial: Vec<f64> = fiducial_curves
        .iter()
        .map(|m| window_slope(&taus, m, lo, hi).unwrap_or(f64::NAN))
        .collect();
    let nf = per_fiducial.len() as f64;
    let lambda = per_fiducial.iter().sum::<f64>() / nf;
    let stderr = if per_fiducial.len() > 1 {
        let var = per_fiducial.iter().map(|s| (s - lambda).powi(2)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        f64::NAN
    };
    Ok(LyapunovResult {
        lambda,
        stderr,
        pooled_lambda: pooled,
        per_fiducial,
        fiducial_curves,
        curve,
        fit_window,
        n_samples,
        warnings,
    })
}

impl LyapunovResult {
    /// Same data fitted over another window.
    pub fn refit(&self, fit_window: (f64, f64)) -> Result<LyapunovResult> {
        let (lo, hi) = fit_window;
        let end = self.curve.last().map_or(0.0, |c| c.tau);
        if !(lo >= 0.0 && hi > lo && hi <= end + 1e-12) {
            return Err(Error::Lyapunov(format!("fit window [{lo}, {hi}] not inside [0, {end}]")));
        }
        fit(
            self.curve.clone(),
            self.fiducial_curves.clone(),
            fit_window,
            self.n_samples,
            self.warnings.clone(),
        )
    }
}

/// Fit window that stops before the curve bends into its plateau.
///
/// The plateau level is the mean of ln Δ over the last quarter of the track;
/// the window runs from `tau_min` to the first τ at which ln Δ comes within
/// `margin` of that level. `None` when that leaves less than one time unit.
pub fn saturation_window(curve: &[CurvePoint], tau_min: f64, margin: f64) -> Option<(f64, f64)> {
    let n = curve.len();
    if n < 8 {
        return None;
    }
    let tail = &curve[n - n / 4..];
    let plateau = tail.iter().map(|c| c.mean_ln_delta).sum::<f64>() / tail.len() as f64;
    let end = curve
        .iter()
        .find(|c| c.tau >= tau_min && c.mean_ln_delta >= plateau - margin)?
        .tau;
    (end - tau_min >= 1.0).then_some((tau_min, end))
}
