//! Resolution of `auto` settings, ensemble orchestration and the per-mode
//! run recipes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chaos::{
    k_sensitivity_sweep, lyapunov_estimate, merge_strobe, stroboscopic_map, ClassicalDynamics,
    LyapunovResult, QuantumDynamics, StrobePoint, SweepRow,
};
use crate::classical::{run_classical_with, ClassicalState, NoiseSpec};
use crate::config::{render, Engine, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{init_gaussian, make_grid, Grid};
use crate::output::{self, atomic_write, Provenance};
use crate::params::MeasureParams;
use crate::quantum::{free_steady_state, run_quantum_with, DtBounds, Propagator};
use crate::record::{record_tracking_rms, TrajectoryRecord};
use crate::regime::{estimate_traj_stats, regime_check, RegimeReport};
use crate::rng::{role, NoiseStream};

/// Step used by the classical engine when `dt = auto`.
pub const CLASSICAL_DT: f64 = 1e-3;

/// Candidate steps for `dt = auto`; each divides the default sampling
/// intervals (0.01, 0.05) exactly.
const DT_LADDER: &[f64] = &[
    1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5, 5e-6, 2e-6, 1e-6,
];

fn ladder_step(bound: f64) -> f64 {
    DT_LADDER
        .iter()
        .copied()
        .find(|d| *d <= bound)
        .unwrap_or(DT_LADDER[DT_LADDER.len() - 1])
}

/// Typical packet width: the free measured steady state when `k > 0`, a
/// minimum-uncertainty width `√(ħ/2)` otherwise.
fn nominal_width(c: &RunConfig) -> f64 {
    match free_steady_state(c.system.m, &c.measure) {
        Some((vx, _, _)) => vx.sqrt(),
        None => (c.measure.hbar / 2.0).sqrt(),
    }
}

/// Expected momentum spread for a packet of width `sigma`.
fn nominal_sigma_p(c: &RunConfig, sigma: f64) -> f64 {
    let coherent = c.measure.hbar / (2.0 * sigma);
    match free_steady_state(c.system.m, &c.measure) {
        Some((_, vp, _)) => vp.sqrt().max(coherent),
        None => coherent,
    }
}

/// Phase-space point the auto-derived quantities are computed along.
fn reference_point(c: &RunConfig) -> (f64, f64) {
    match c.mode {
        Mode::Lyapunov | Mode::Sweep => c.lyapunov.protocol.start,
        _ => (c.init.x0, c.init.p0),
    }
}

fn classical_noise(c: &RunConfig, mp: &MeasureParams) -> Result<NoiseSpec> {
    if let Some(ns) = c.noise() {
        return Ok(ns);
    }
    let matched = if mp.k > 0.0 {
        NoiseSpec::calibrated(&c.system, mp, reference_point(c))?
    } else {
        NoiseSpec::NONE
    };
    Ok(NoiseSpec {
        sigma_x: c.sigma_x.unwrap_or(matched.sigma_x),
        sigma_p: c.sigma_p.unwrap_or(matched.sigma_p),
    })
}

/// Replaces every `auto` with a concrete value. Idempotent.
pub fn resolve(cfg: &RunConfig) -> Result<RunConfig> {
    crate::config::validate(cfg)?;
    cfg.system.validate()?;
    cfg.measure.validate()?;
    let mut c = cfg.clone();
    let quantum = c.mode == Mode::Quantum || (c.mode != Mode::Classical && c.engine == Engine::Quantum);

    if quantum {
        let length = c.grid.x_max - c.grid.x_min;
        let width = c.init.sigma.unwrap_or_else(|| nominal_width(&c));
        if c.grid.n.is_none() {
            let by_width = length / (width / 5.0);
            let by_window = length * 12.0 * nominal_sigma_p(&c, width) / (std::f64::consts::PI * c.measure.hbar);
            c.grid.n = Some((by_width.max(by_window).ceil() as usize).max(16).next_power_of_two());
        }
        let grid = make_grid(c.grid.x_min, c.grid.x_max, c.grid.n.unwrap_or(16))?;
        let sigma = c.init.sigma.unwrap_or_else(|| width.max(4.0 * grid.dx()));
        c.init.sigma = Some(sigma);
        if c.dt.is_none() {
            let energy = c.init.p0 * c.init.p0 / (2.0 * c.system.m) + c.system.potential(c.init.x0, 0.0);
            let reach = c.system.turning_point(energy);
            let vp = nominal_sigma_p(&c, sigma).powi(2);
            let b = DtBounds::compute(&c.system, &c.measure, &grid, sigma * sigma, vp, reach);
            c.dt = Some(ladder_step(b.recommended()));
        }
    } else {
        if c.dt.is_none() {
            c.dt = Some(CLASSICAL_DT);
        }
        if c.mode != Mode::Regime && c.mode != Mode::Sweep {
            let ns = classical_noise(&c, &c.measure)?;
            c.sigma_x = Some(ns.sigma_x);
            c.sigma_p = Some(ns.sigma_p);
        }
    }
    if matches!(c.mode, Mode::Regime | Mode::Sweep) && c.regime.stats().is_none() {
        let st = estimate_traj_stats(&c.system, reference_point(&c), 100, CLASSICAL_DT)?;
        c.regime.dfdx.get_or_insert(st.dfdx);
        c.regime.curvature.get_or_insert(st.curvature_ratio);
        c.regime.action.get_or_insert(st.action);
    }
    Ok(c)
}

/// Canonical config text embedded in every output. Execution-only settings
/// (workers, output directory) are left out so they cannot change results.
pub fn canonical_text(c: &RunConfig) -> String {
    render(c)
        .lines()
        .filter(|l| !l.starts_with("workers ") && !l.starts_with("output.dir "))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

fn dt_of(c: &RunConfig) -> f64 {
    c.dt.unwrap_or(CLASSICAL_DT)
}

fn quantum_grid(c: &RunConfig) -> Result<Grid> {
    let n = c
        .grid
        .n
        .ok_or_else(|| Error::InvalidParameter("grid.n unresolved".into()))?;
    make_grid(c.grid.x_min, c.grid.x_max, n)
}

/// Per-trajectory outcome of an ensemble; failed members keep their error.
#[derive(Debug)]
pub struct EnsembleOutput {
    pub records: Vec<Result<TrajectoryRecord>>,
    /// Merged strobe map of the successful members, sorted by (run, period).
    pub strobe: Vec<(usize, StrobePoint)>,
}

impl EnsembleOutput {
    pub fn failures(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_err())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Runs `n_traj` trajectories of the configured engine on `workers` threads.
/// Member `i` starts at the configured point displaced inside a disc of
/// radius `ensemble.start_dispersion` drawn from `(seed, [i, INIT])` and uses
/// the noise substream `(seed, [i, MAIN])`. The config must be resolved.
pub fn run_ensemble(cfg: &RunConfig, n_traj: usize, workers: usize) -> Result<EnsembleOutput> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be >= 1".into()));
    }
    let seed = cfg
        .seed
        .ok_or_else(|| Error::config(None, "ensemble runs need a seed"))?;
    let fp = output::fingerprint(&canonical_text(cfg));
    let dt = dt_of(cfg);
    let quantum = cfg.mode == Mode::Quantum || (cfg.mode != Mode::Classical && cfg.engine == Engine::Quantum);
    let template = if quantum {
        Some(Propagator::new(&quantum_grid(cfg)?, cfg.system, cfg.measure, dt)?)
    } else {
        None
    };
    let noise_spec = cfg.noise().unwrap_or(NoiseSpec::NONE);

    let one = |i: usize| -> Result<TrajectoryRecord> {
        let (ox, op) = NoiseStream::new(seed, &[i as u64, role::INIT]).in_disc(cfg.start_dispersion);
        let (x0, p0) = (cfg.init.x0 + ox, cfg.init.p0 + op);
        let mut noise = NoiseStream::new(seed, &[i as u64, role::MAIN]);
        let mut rec = match &template {
            Some(t) => {
                let mut prop = t.clone();
                let sigma = cfg
                    .init
                    .sigma
                    .ok_or_else(|| Error::InvalidParameter("init.sigma unresolved".into()))?;
                let init = init_gaussian(prop.grid(), x0, p0, sigma, cfg.measure.hbar)?;
                let mut rec = run_quantum_with(&mut prop, &init, cfg.t_end, cfg.sample_every, seed, &mut noise)?;
                rec.band_limit(cfg.record.window)?;
                rec
            }
            None => run_classical_with(
                &ClassicalState::new(x0, p0),
                cfg.t_end,
                dt,
                &cfg.system,
                &noise_spec,
                seed,
                cfg.sample_every,
                &mut noise,
            )?,
        };
        rec.fingerprint = Some(fp.clone());
        Ok(rec)
    };

    let records: Vec<Result<TrajectoryRecord>> =
        pool(workers)?.install(|| (0..n_traj).into_par_iter().map(one).collect());
    let mut maps = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Ok(rec) = r {
            if rec.duration() >= cfg.strobe_t_skip {
                maps.push((i, stroboscopic_map(rec, cfg.system.omega, cfg.strobe_phase, cfg.strobe_t_skip)?));
            }
        }
    }
    Ok(EnsembleOutput {
        records,
        strobe: merge_strobe(&maps),
    })
}

/// Lyapunov estimate for the configured engine at measurement strength `mp`.
/// The config must be resolved.
pub fn estimate_lyapunov(cfg: &RunConfig, mp: &MeasureParams) -> Result<LyapunovResult> {
    let seed = cfg
        .seed
        .ok_or_else(|| Error::config(None, "lyapunov runs need a seed"))?;
    let proto = &cfg.lyapunov.protocol;
    let fit = cfg.lyapunov.fit_window;
    match cfg.engine {
        Engine::Quantum => {
            let sigma = cfg
                .init
                .sigma
                .ok_or_else(|| Error::InvalidParameter("init.sigma unresolved".into()))?;
            let d = QuantumDynamics::new(&quantum_grid(cfg)?, cfg.system, *mp, dt_of(cfg), sigma)?;
            lyapunov_estimate(&d, proto, fit, seed)
        }
        Engine::Classical => {
            let noise = classical_noise(cfg, mp)?;
            let d = ClassicalDynamics { sys: cfg.system, noise, dt: dt_of(cfg) };
            lyapunov_estimate(&d, proto, fit, seed)
        }
    }
}

/// Result of [`run`]: the one-line summary and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub line: String,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    prov: Provenance<'a>,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        atomic_write(&path, text.as_bytes())?;
        self.files.push(path);
        Ok(())
    }
}

fn verdict_line(r: &RegimeReport) -> String {
    format!(
        "localization {} ({:.3e} vs {:.3e}), noise {} ({:.3e} < {:.3e} < {:.3e}), record {} ({:.3e} vs {:.3e}), k_min(record) = {:.6e}",
        r.localization,
        r.loc_lhs,
        r.loc_rhs,
        r.noise,
        r.noise_lo,
        r.noise_mid,
        r.noise_hi,
        r.record,
        r.record_lhs,
        r.record_rhs,
        r.k_min_record
    )
}

fn regime_text(c: &RunConfig, r: &RegimeReport) -> String {
    let st = c.regime.stats();
    let mut s = String::new();
    s.push_str("# qtl regime report\n");
    if let Some(st) = st {
        s.push_str(&format!(
            "typical |dF/dx| = {:e}\ntypical |F''/F| = {:e}\ntypical action S = {:e}\ns = S/hbar = {:e}\n",
            st.dfdx, st.curvature_ratio, st.action, r.s
        ));
    }
    s.push_str(&format!(
        "localization: 8 eta k = {:e} vs (F''/F) sqrt(F'/2m) = {:e} -> {}\n",
        r.loc_lhs, r.loc_rhs, r.localization
    ));
    s.push_str(&format!(
        "noise: 2|F'|/(eta s) = {:e} < hbar k = {:e} < |F'| s/4 = {:e} -> {}\n",
        r.noise_lo, r.noise_mid, r.noise_hi, r.noise
    ));
    s.push_str(&format!(
        "record: 8 eta k = {:e} vs 1/(dt dx^2) = {:e} -> {}\n",
        r.record_lhs, r.record_rhs, r.record
    ));
    s.push_str(&format!("k_min(record) = {:e}\n", r.k_min_record));
    s
}

/// Runs the configured mode and writes its outputs under `output.dir`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let c = resolve(cfg)?;
    let text = canonical_text(&c);
    let fp = output::fingerprint(&text);
    let dir = c.output_dir.clone();
    let mut w = Writer {
        dir: &dir,
        prov: Provenance { fingerprint: &fp, seed: c.seed, config_text: &text },
        files: Vec::new(),
    };
    w.put("resolved_config.txt", &text)?;

    let line = match c.mode {
        Mode::Quantum | Mode::Classical | Mode::Strobe => {
            let out = run_ensemble(&c, c.n_traj, c.workers)?;
            let mut max_width = 0.0f64;
            let mut rms = Vec::new();
            for (i, r) in out.records.iter().enumerate() {
                let Ok(rec) = r else { continue };
                if c.mode != Mode::Strobe {
                    w.put(&format!("trajectory_{i:03}.csv"), &output::trajectory_csv(&rec.samples, &w.prov))?;
                }
                if let Some(raw) = &rec.raw_record {
                    if c.mode != Mode::Strobe {
                        w.put(&format!("record_raw_{i:03}.csv"), &output::raw_record_csv(raw, &w.prov))?;
                    }
                    if let Some(band) = &rec.band_limited {
                        if c.mode != Mode::Strobe {
                            w.put(&format!("record_avg_{i:03}.csv"), &output::band_record_csv(band, &w.prov))?;
                        }
                    }
                    rms.push(record_tracking_rms(raw, c.record.window)?);
                }
                for m in rec.samples.iter().filter(|m| m.t >= c.strobe_t_skip) {
                    max_width = max_width.max(m.var_x.sqrt());
                }
            }
            w.put("strobe.csv", &output::strobe_csv(&out.strobe, &w.prov))?;
            let failed = out.failures();
            if !failed.is_empty() {
                let first = out
                    .records
                    .into_iter()
                    .find_map(|r| r.err())
                    .unwrap_or(Error::ZeroNorm);
                return Err(Error::Ensemble { failed, first: Box::new(first) });
            }
            match c.mode {
                Mode::Quantum => {
                    let worst = rms.iter().copied().fold(0.0, f64::max);
                    format!(
                        "quantum: {} trajectories, max sqrt(var_x) after t = {} is {:.6e}, record tracking rms {:.6e}",
                        c.n_traj, c.strobe_t_skip, max_width, worst
                    )
                }
                Mode::Classical => format!("classical: {} trajectories to t = {}", c.n_traj, c.t_end),
                _ => format!("strobe: {} points from {} runs", out.strobe.len(), c.n_traj),
            }
        }
        Mode::Lyapunov => {
            let r = pool(c.workers)?.install(|| estimate_lyapunov(&c, &c.measure))?;
            w.put("lyapunov.csv", &output::lyapunov_csv(&r, &w.prov))?;
            format!(
                "lambda = {:.4} ± {:.4} (pooled {:.4}, {} instances, fit [{}, {}])",
                r.lambda, r.stderr, r.pooled_lambda, r.n_samples, r.fit_window.0, r.fit_window.1
            )
        }
        Mode::Regime => {
            let stats = c
                .regime
                .stats()
                .ok_or_else(|| Error::InvalidParameter("regime statistics unresolved".into()))?;
            let r = regime_check(&c.system, &c.measure, &stats, &c.record)?;
            w.put("regime.txt", &regime_text(&c, &r))?;
            verdict_line(&r)
        }
        Mode::Sweep => {
            let stats = c
                .regime
                .stats()
                .ok_or_else(|| Error::InvalidParameter("regime statistics unresolved".into()))?;
            let rows: Vec<SweepRow> = pool(c.workers)?.install(|| {
                k_sensitivity_sweep(&c.k_values, &c.system, &c.measure, &stats, &c.record, |mp| {
                    estimate_lyapunov(&c, mp)
                })
            })?;
            for (i, row) in rows.iter().enumerate() {
                w.put(&format!("lyapunov_k{i:02}.csv"), &output::lyapunov_csv(&row.result, &w.prov))?;
            }
            w.put("sweep.csv", &output::sweep_csv(&rows, &w.prov))?;
            let parts: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "k={:e}: {:.4} ± {:.4}{}",
                        r.k,
                        r.result.lambda,
                        r.result.stderr,
                        if r.flagged { " (flattened)" } else { "" }
                    )
                })
                .collect();
            format!("sweep: {}", parts.join("; "))
        }
    };
    Ok(RunSummary { line, files: w.files })
}
