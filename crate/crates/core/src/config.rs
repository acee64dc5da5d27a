//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! # driven double well, reference point
//! mode = quantum
//! seed = 7
//! measure.k = 1e5
//! grid.n = auto
//! ```
//!
//! Keys are dotted; the physical parameters may also be given by their bare
//! name (`eta = 0.5`). `auto` is accepted where a value can be derived.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::chaos::{BranchProtocol, Perturbation};
use crate::classical::NoiseSpec;
use crate::error::{Error, Result};
use crate::params::{MeasureParams, SystemParams};
use crate::regime::{RecordSpec, TrajStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Quantum,
    Classical,
    Lyapunov,
    Strobe,
    Regime,
    Sweep,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Quantum,
        Mode::Classical,
        Mode::Lyapunov,
        Mode::Strobe,
        Mode::Regime,
        Mode::Sweep,
    ];

    pub fn is_stochastic(self) -> bool {
        self != Mode::Regime
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Quantum => "quantum",
            Mode::Classical => "classical",
            Mode::Lyapunov => "lyapunov",
            Mode::Strobe => "strobe",
            Mode::Regime => "regime",
            Mode::Sweep => "sweep",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (quantum|classical|lyapunov|strobe|regime|sweep)"))
    }
}

/// Which runner drives the lyapunov, strobe and sweep modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Quantum,
    Classical,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Quantum => "quantum",
            Engine::Classical => "classical",
        })
    }
}

impl FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quantum" => Ok(Engine::Quantum),
            "classical" => Ok(Engine::Classical),
            _ => Err(format!("unknown engine `{s}` (quantum|classical)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// `None` = auto.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub x0: f64,
    pub p0: f64,
    /// Initial wavepacket width; `None` = auto.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSpec {
    pub protocol: BranchProtocol,
    pub fit_window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    pub dfdx: Option<f64>,
    pub curvature: Option<f64>,
    pub action: Option<f64>,
}

impl RegimeSpec {
    pub fn stats(&self) -> Option<TrajStats> {
        Some(TrajStats {
            dfdx: self.dfdx?,
            curvature_ratio: self.curvature?,
            action: self.action?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub engine: Engine,
    pub seed: Option<u64>,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub system: SystemParams,
    pub measure: MeasureParams,
    pub sigma_x: Option<f64>,
    pub sigma_p: Option<f64>,
    pub grid: GridSpec,
    pub init: InitSpec,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub sample_every: usize,
    pub record: RecordSpec,
    pub lyapunov: LyapunovSpec,
    pub n_traj: usize,
    pub start_dispersion: f64,
    pub strobe_phase: f64,
    pub strobe_t_skip: f64,
    pub k_values: Vec<f64>,
    pub regime: RegimeSpec,
}

impl RunConfig {
    /// Defaults for every optional key.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            engine: match mode {
                Mode::Quantum => Engine::Quantum,
                _ => Engine::Classical,
            },
            seed: None,
            workers: 1,
            output_dir: PathBuf::from("out"),
            system: SystemParams::default(),
            measure: MeasureParams::default(),
            sigma_x: None,
            sigma_p: None,
            grid: GridSpec { x_min: -10.0, x_max: 10.0, n: None },
            init: InitSpec { x0: -3.0, p0: 8.0, sigma: None },
            dt: None,
            t_end: 50.0,
            sample_every: 10,
            record: RecordSpec { window: 0.01, tolerance: 0.01 },
            lyapunov: LyapunovSpec {
                protocol: BranchProtocol::default(),
                fit_window: crate::chaos::DEFAULT_FIT_WINDOW,
            },
            n_traj: 1,
            start_dispersion: 0.0,
            strobe_phase: 0.0,
            strobe_t_skip: 0.0,
            k_values: vec![2e4, 1e5, 5e5],
            regime: RegimeSpec { dfdx: None, curvature: None, action: None },
        }
    }

    /// Classical noise with explicit values, if both are set.
    pub fn noise(&self) -> Option<NoiseSpec> {
        Some(NoiseSpec {
            sigma_x: self.sigma_x?,
            sigma_p: self.sigma_p?,
        })
    }
}

const REQUIRED: &[&str] = &["mode"];

const ALIASES: &[(&str, &str)] = &[
    ("m", "system.m"),
    ("b", "system.b"),
    ("a", "system.a"),
    ("lambda", "system.lambda"),
    ("omega", "system.omega"),
    ("hbar", "measure.hbar"),
    ("k", "measure.k"),
    ("eta", "measure.eta"),
];

/// Keys in render order.
const KEYS: &[&str] = &[
    "mode",
    "engine",
    "seed",
    "workers",
    "output.dir",
    "system.m",
    "system.b",
    "system.a",
    "system.lambda",
    "system.omega",
    "measure.hbar",
    "measure.k",
    "measure.eta",
    "noise.sigma_x",
    "noise.sigma_p",
    "grid.x_min",
    "grid.x_max",
    "grid.n",
    "init.x0",
    "init.p0",
    "init.sigma",
    "dt",
    "t_end",
    "sample_every",
    "record.window",
    "record.tolerance",
    "lyapunov.n_fiducial",
    "lyapunov.start_x",
    "lyapunov.start_p",
    "lyapunov.start_dispersion",
    "lyapunov.n_branch_points",
    "lyapunov.branch_spacing",
    "lyapunov.track_time",
    "lyapunov.perturbation",
    "lyapunov.offset",
    "lyapunov.sample_interval",
    "lyapunov.metric_weight",
    "lyapunov.fit_min",
    "lyapunov.fit_max",
    "ensemble.n_traj",
    "ensemble.start_dispersion",
    "strobe.phase",
    "strobe.t_skip",
    "sweep.k_values",
    "regime.dfdx",
    "regime.curvature",
    "regime.action",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<T>().map_err(|_| {
                Error::config(ln(line), format!("{key}: cannot parse `{v}` as {}", type_name::<T>()))
            }),
        }
    }

    fn take_auto<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((_, v)) if v == "auto" => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| {
                Error::config(ln(line), format!("{key}: cannot parse `{v}` as {}", type_name::<T>()))
            }),
        }
    }

    fn take_with<T>(&mut self, key: &str, default: T, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => f(&v).map_err(|e| Error::config(ln(line), e)),
        }
    }
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    if full.contains("f64") {
        "a number"
    } else if full.contains("u64") || full.contains("usize") {
        "a non-negative integer"
    } else {
        "the expected type"
    }
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::config(ln(line), format!("expected `key = value`, got `{content}`")))?;
        let mut key = k.trim().to_string();
        let value = v.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::config(ln(line), "empty key or value"));
        }
        if let Some((_, full)) = ALIASES.iter().find(|(a, _)| *a == key) {
            key = full.to_string();
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(ln(line), format!("unknown key `{}`", k.trim())));
        }
        if let Some((first, _)) = map.get(&key) {
            return Err(Error::config(ln(line), format!("duplicate key `{key}` (first set on line {first})")));
        }
        map.insert(key, (line, value));
    }
    Ok(Entries { map })
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("sweep.k_values: cannot parse `{}`", s.trim())))
        .collect()
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Line 0 marks a value that came from the command line.
fn ln(line: usize) -> Option<usize> {
    (line > 0).then_some(line)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, ov: &Overrides) -> Result<RunConfig> {
    let mut e = parse_entries(text)?;
    if let Some(mode) = ov.mode {
        if let Some((line, v)) = e.map.get("mode") {
            if v != &mode.to_string() {
                return Err(Error::config(
                    ln(*line),
                    format!("config mode `{v}` does not match command-line mode `{mode}`"),
                ));
            }
        }
        e.map.insert("mode".into(), (0, mode.to_string()));
    }
    if let Some(seed) = ov.seed {
        e.map.insert("seed".into(), (0, seed.to_string()));
    }
    if let Some(w) = ov.workers {
        e.map.insert("workers".into(), (0, w.to_string()));
    }
    if let Some(dir) = &ov.output_dir {
        e.map.insert("output.dir".into(), (0, dir.display().to_string()));
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !e.map.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::config(
            None,
            format!(
                "missing required key(s): {} (stochastic modes also need `seed`)",
                missing.join(", ")
            ),
        ));
    }
    let mode: Mode = e.take_with("mode", Mode::Quantum, |v| v.parse())?;
    let d = RunConfig::new(mode);
    let lines: BTreeMap<String, usize> = e.map.iter().map(|(k, (l, _))| (k.clone(), *l)).collect();

    let proto_d = d.lyapunov.protocol;
    let perturbation_kind = e.take_with("lyapunov.perturbation", "noise".to_string(), |v| match v {
        "noise" | "offset" => Ok(v.to_string()),
        _ => Err(format!("lyapunov.perturbation must be noise|offset, got `{v}`")),
    })?;
    let offset: f64 = e.take("lyapunov.offset", 1e-6)?;
    let perturbation = if perturbation_kind == "offset" {
        Perturbation::InitialOffset(offset)
    } else {
        Perturbation::NoiseRealization
    };

    let cfg = RunConfig {
        mode,
        engine: e.take_with("engine", d.engine, |v| v.parse())?,
        seed: e.take_auto("seed")?,
        workers: e.take("workers", d.workers)?,
        output_dir: PathBuf::from(e.take("output.dir", d.output_dir.display().to_string())?),
        system: SystemParams {
            m: e.take("system.m", d.system.m)?,
            b: e.take("system.b", d.system.b)?,
            a: e.take("system.a", d.system.a)?,
            lambda: e.take("system.lambda", d.system.lambda)?,
            omega: e.take("system.omega", d.system.omega)?,
        },
        measure: MeasureParams {
            hbar: e.take("measure.hbar", d.measure.hbar)?,
            k: e.take("measure.k", d.measure.k)?,
            eta: e.take("measure.eta", d.measure.eta)?,
        },
        sigma_x: e.take_auto("noise.sigma_x")?,
        sigma_p: e.take_auto("noise.sigma_p")?,
        grid: GridSpec {
            x_min: e.take("grid.x_min", d.grid.x_min)?,
            x_max: e.take("grid.x_max", d.grid.x_max)?,
            n: e.take_auto("grid.n")?,
        },
        init: InitSpec {
            x0: e.take("init.x0", d.init.x0)?,
            p0: e.take("init.p0", d.init.p0)?,
            sigma: e.take_auto("init.sigma")?,
        },
        dt: e.take_auto("dt")?,
        t_end: e.take("t_end", d.t_end)?,
        sample_every: e.take("sample_every", d.sample_every)?,
        record: RecordSpec {
            window: e.take("record.window", d.record.window)?,
            tolerance: e.take("record.tolerance", d.record.tolerance)?,
        },
        lyapunov: LyapunovSpec {
            protocol: BranchProtocol {
                n_fiducial: e.take("lyapunov.n_fiducial", proto_d.n_fiducial)?,
                start: (
                    e.take("lyapunov.start_x", proto_d.start.0)?,
                    e.take("lyapunov.start_p", proto_d.start.1)?,
                ),
                start_dispersion: e.take("lyapunov.start_dispersion", proto_d.start_dispersion)?,
                n_branch_points: e.take("lyapunov.n_branch_points", proto_d.n_branch_points)?,
                branch_spacing: e.take("lyapunov.branch_spacing", proto_d.branch_spacing)?,
                track_time: e.take("lyapunov.track_time", proto_d.track_time)?,
                perturbation,
                sample_interval: e.take("lyapunov.sample_interval", proto_d.sample_interval)?,
                metric_weight: e.take("lyapunov.metric_weight", proto_d.metric_weight)?,
            },
            fit_window: (
                e.take("lyapunov.fit_min", d.lyapunov.fit_window.0)?,
                e.take("lyapunov.fit_max", d.lyapunov.fit_window.1)?,
            ),
        },
        n_traj: e.take("ensemble.n_traj", d.n_traj)?,
        start_dispersion: e.take("ensemble.start_dispersion", d.start_dispersion)?,
        strobe_phase: e.take("strobe.phase", d.strobe_phase)?,
        strobe_t_skip: e.take("strobe.t_skip", d.strobe_t_skip)?,
        k_values: e.take_with("sweep.k_values", d.k_values.clone(), parse_list)?,
        regime: RegimeSpec {
            dfdx: e.take_auto("regime.dfdx")?,
            curvature: e.take_auto("regime.curvature")?,
            action: e.take_auto("regime.action")?,
        },
    };
    debug_assert!(e.map.is_empty());
    validate_with_lines(&cfg, &|k| lines.get(k).copied().and_then(ln))?;
    Ok(cfg)
}

/// Checks every invariant; `line` maps a key to the line that set it.
fn validate_with_lines(c: &RunConfig, line: &dyn Fn(&str) -> Option<usize>) -> Result<()> {
    let fail = |key: &str, msg: String| Err(Error::config(line(key), msg));
    let positive = |key: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            fail(key, format!("{} must be > 0", key.rsplit('.').next().unwrap_or(key)))
        }
    };
    let finite = |key: &str, v: f64| -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            fail(key, format!("{key} must be finite"))
        }
    };

    if c.mode.is_stochastic() && c.seed.is_none() {
        return fail("seed", format!("mode {} is stochastic: `seed` is required", c.mode));
    }
    if c.workers == 0 {
        return fail("workers", "workers must be >= 1".into());
    }
    positive("system.m", c.system.m)?;
    positive("system.omega", c.system.omega)?;
    for (k, v) in [("system.b", c.system.b), ("system.a", c.system.a), ("system.lambda", c.system.lambda)] {
        finite(k, v)?;
    }
    if c.system.b < 0.0 {
        return fail("system.b", "b must be >= 0 (quartic confinement)".into());
    }
    positive("measure.hbar", c.measure.hbar)?;
    if !(c.measure.k >= 0.0 && c.measure.k.is_finite()) {
        return fail("measure.k", "k must be >= 0".into());
    }
    if !(c.measure.eta > 0.0 && c.measure.eta <= 1.0) {
        return fail("measure.eta", "eta out of (0,1]".into());
    }
    for (k, v) in [("noise.sigma_x", c.sigma_x), ("noise.sigma_p", c.sigma_p)] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(k, format!("{k} must be >= 0"));
            }
        }
    }
    if !(c.grid.x_max > c.grid.x_min) || !c.grid.x_min.is_finite() || !c.grid.x_max.is_finite() {
        return fail("grid.x_max", "grid.x_max must exceed grid.x_min".into());
    }
    if let Some(n) = c.grid.n {
        if !n.is_power_of_two() || n < 16 {
            return fail("grid.n", format!("grid.n must be a power of two >= 16, got {n}"));
        }
    }
    finite("init.x0", c.init.x0)?;
    finite("init.p0", c.init.p0)?;
    if let Some(s) = c.init.sigma {
        positive("init.sigma", s)?;
    }
    if let Some(dt) = c.dt {
        positive("dt", dt)?;
    }
    positive("t_end", c.t_end)?;
    if c.sample_every == 0 {
        return fail("sample_every", "sample_every must be >= 1".into());
    }
    positive("record.window", c.record.window)?;
    positive("record.tolerance", c.record.tolerance)?;
    let p = &c.lyapunov.protocol;
    if p.n_fiducial == 0 {
        return fail("lyapunov.n_fiducial", "n_fiducial must be >= 1".into());
    }
    if p.n_branch_points == 0 {
        return fail("lyapunov.n_branch_points", "n_branch_points must be >= 1".into());
    }
    positive("lyapunov.branch_spacing", p.branch_spacing)?;
    positive("lyapunov.track_time", p.track_time)?;
    positive("lyapunov.sample_interval", p.sample_interval)?;
    positive("lyapunov.metric_weight", p.metric_weight)?;
    if !(p.start_dispersion >= 0.0) {
        return fail("lyapunov.start_dispersion", "start_dispersion must be >= 0".into());
    }
    if let Perturbation::InitialOffset(d) = p.perturbation {
        positive("lyapunov.offset", d)?;
    }
    let (lo, hi) = c.lyapunov.fit_window;
    if !(lo >= 0.0 && hi > lo && hi <= p.track_time) {
        return fail(
            "lyapunov.fit_max",
            format!("fit window [{lo}, {hi}] must lie inside [0, track_time = {}]", p.track_time),
        );
    }
    if c.n_traj == 0 {
        return fail("ensemble.n_traj", "n_traj must be >= 1".into());
    }
    if !(c.start_dispersion >= 0.0) {
        return fail("ensemble.start_dispersion", "start_dispersion must be >= 0".into());
    }
    finite("strobe.phase", c.strobe_phase)?;
    if !(c.strobe_t_skip >= 0.0) {
        return fail("strobe.t_skip", "t_skip must be >= 0".into());
    }
    if c.k_values.is_empty() || c.k_values.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return fail("sweep.k_values", "sweep.k_values must be a non-empty list of k > 0".into());
    }
    for (k, v) in [
        ("regime.dfdx", c.regime.dfdx),
        ("regime.curvature", c.regime.curvature),
        ("regime.action", c.regime.action),
    ] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(k, format!("{k} must be >= 0"));
            }
        }
    }
    Ok(())
}

pub fn validate(c: &RunConfig) -> Result<()> {
    validate_with_lines(c, &|_| None)
}

fn auto<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

/// Canonical text form; `parse_config(&render(c)) == c` for valid configs.
pub fn render(c: &RunConfig) -> String {
    let p = &c.lyapunov.protocol;
    let (kind, offset) = match p.perturbation {
        Perturbation::NoiseRealization => ("noise", 1e-6),
        Perturbation::InitialOffset(d) => ("offset", d),
    };
    let values: Vec<String> = vec![
        c.mode.to_string(),
        c.engine.to_string(),
        auto(&c.seed),
        c.workers.to_string(),
        c.output_dir.display().to_string(),
        c.system.m.to_string(),
        c.system.b.to_string(),
        c.system.a.to_string(),
        c.system.lambda.to_string(),
        c.system.omega.to_string(),
        c.measure.hbar.to_string(),
        c.measure.k.to_string(),
        c.measure.eta.to_string(),
        auto(&c.sigma_x),
        auto(&c.sigma_p),
        c.grid.x_min.to_string(),
        c.grid.x_max.to_string(),
        auto(&c.grid.n),
        c.init.x0.to_string(),
        c.init.p0.to_string(),
        auto(&c.init.sigma),
        auto(&c.dt),
        c.t_end.to_string(),
        c.sample_every.to_string(),
        c.record.window.to_string(),
        c.record.tolerance.to_string(),
        p.n_fiducial.to_string(),
        p.start.0.to_string(),
        p.start.1.to_string(),
        p.start_dispersion.to_string(),
        p.n_branch_points.to_string(),
        p.branch_spacing.to_string(),
        p.track_time.to_string(),
        kind.to_string(),
        offset.to_string(),
        p.sample_interval.to_string(),
        p.metric_weight.to_string(),
        c.lyapunov.fit_window.0.to_string(),
        c.lyapunov.fit_window.1.to_string(),
        c.n_traj.to_string(),
        c.start_dispersion.to_string(),
        c.strobe_phase.to_string(),
        c.strobe_t_skip.to_string(),
        c.k_values.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "),
        auto(&c.regime.dfdx),
        auto(&c.regime.curvature),
        auto(&c.regime.action),
    ];
    debug_assert_eq!(values.len(), KEYS.len());
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_quantum_config_uses_defaults() {
        let c = parse_config("mode = quantum\nseed = 3\n").unwrap();
        assert_eq!(c.system.b, 0.5);
        assert_eq!(c.system.a, 10.0);
        assert_eq!(c.system.lambda, 10.0);
        assert_eq!(c.system.omega, 6.07);
        assert_eq!(c.measure.hbar, 1e-5);
        assert_eq!(c.engine, Engine::Quantum);
    }

    #[test]
    fn eta_out_of_range_reports_line() {
        let err = parse_config("mode = regime\n\neta = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eta out of (0,1]"), "{msg}");
        assert!(matches!(err, Error::Config { line: Some(3), .. }));
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let msg = parse_config("").unwrap_err().to_string();
        assert!(msg.contains("mode") && msg.contains("seed"), "{msg}");
        assert!(parse_config("# only a comment\n").is_err());
    }

    #[test]
    fn unknown_key_and_bad_value_carry_line() {
        let err = parse_config("mode = regime\nmeasure.kk = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(2), .. }), "{err}");
        let err = parse_config("mode = regime\nmeasure.k = lots\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(2), .. }), "{err}");
        let err = parse_config("mode = regime\nmeasure.k = 1\nk = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = parse_config("mode = nonsense\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(1), .. }));
    }

    #[test]
    fn command_line_overrides() {
        let ov = Overrides { mode: Some(Mode::Lyapunov), seed: Some(11), workers: Some(4), output_dir: Some("x".into()) };
        let c = parse_config_with("seed = 2\n", &ov).unwrap();
        assert_eq!((c.mode, c.seed, c.workers), (Mode::Lyapunov, Some(11), 4));
        assert_eq!(c.output_dir, PathBuf::from("x"));
        let err = parse_config_with("mode = quantum\nseed = 1\n", &ov).unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(1), .. }));
    }

    #[test]
    fn seed_required_for_stochastic_modes() {
        assert!(parse_config("mode = lyapunov\n").is_err());
        assert!(parse_config("mode = regime\n").is_ok());
    }

    #[test]
    fn comments_and_auto() {
        let c = parse_config("mode = sweep # trailing\nseed = 1\ngrid.n = auto\ndt = 0.001\nsweep.k_values = 2e4, 1e5\n").unwrap();
        assert_eq!(c.grid.n, None);
        assert_eq!(c.dt, Some(0.001));
        assert_eq!(c.k_values, vec![2e4, 1e5]);
    }

    #[test]
    fn render_parses_back() {
        let mut c = RunConfig::new(Mode::Lyapunov);
        c.seed = Some(u64::MAX);
        c.lyapunov.protocol.perturbation = Perturbation::InitialOffset(1e-6);
        c.grid.n = Some(1 << 17);
        c.dt = Some(1.0 / 3.0);
        assert_eq!(parse_config(&render(&c)).unwrap(), c);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::sample::select(Mode::ALL.to_vec()),
            any::<u64>(),
            1e-8..1.0f64,
            0.0..1e7f64,
            1e-3..=1.0f64,
            prop::option::of(1e-6..1.0f64),
            prop::option::of(4u32..20),
            -20.0..20.0f64,
            prop::collection::vec(1.0..1e7f64, 1..4),
            any::<bool>(),
        )
            .prop_map(|(mode, seed, hbar, k, eta, dt, n, x0, ks, offset)| {
                let mut c = RunConfig::new(mode);
                c.seed = Some(seed);
                c.measure = MeasureParams { hbar, k, eta };
                c.dt = dt;
                c.grid.n = n.map(|e| 1usize << e);
                c.init.x0 = x0;
                c.k_values = ks;
                if offset {
                    c.lyapunov.protocol.perturbation = Perturbation::InitialOffset(hbar);
                }
                c
            })
    }

    proptest! {
        #[test]
        fn round_trip(c in arb_config()) {
            let text = render(&c);
            prop_assert_eq!(parse_config(&text).unwrap(), c);
        }
    }
}
