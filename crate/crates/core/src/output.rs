//! CSV and text outputs. Every file starts with `#` lines carrying the schema
//! version, the config fingerprint, the seed and the resolved config; floats
//! are written with 17 significant digits.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::chaos::{LyapunovResult, StrobePoint, SweepRow};
use crate::error::Result;
use crate::grid::Moments;
use crate::record::{BandSample, RawRecord};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: &str = "t,mean_x,mean_p,var_x,var_p,cov_xp,norm,energy";
pub const RAW_RECORD_HEADER: &str = "t,y_raw";
pub const BAND_RECORD_HEADER: &str = "t_center,y_avg";
pub const STROBE_HEADER: &str = "run,period_index,x,p";
pub const LYAPUNOV_HEADER: &str = "tau,mean_ln_delta,stderr";
pub const SWEEP_HEADER: &str =
    "k,lambda,stderr,pooled_lambda,flatness,flagged,localization,noise,record,n_samples";

/// Hex SHA-256 prefix (16 chars) of the canonical config text.
pub fn fingerprint(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// What every output file is stamped with.
#[derive(Debug, Clone, Copy)]
pub struct Provenance<'a> {
    pub fingerprint: &'a str,
    pub seed: Option<u64>,
    pub config_text: &'a str,
}

fn preamble(p: &Provenance<'_>, header: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# qtl csv schema {SCHEMA_VERSION}");
    let _ = writeln!(s, "# fingerprint {}", p.fingerprint);
    match p.seed {
        Some(seed) => {
            let _ = writeln!(s, "# seed {seed}");
        }
        None => s.push_str("# seed none\n"),
    }
    for line in p.config_text.lines() {
        let _ = writeln!(s, "# config {line}");
    }
    s.push_str(header);
    s.push('\n');
    s
}

#[inline]
fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_csv(samples: &[Moments], p: &Provenance<'_>) -> String {
    let mut s = preamble(p, TRAJECTORY_HEADER);
    for m in samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            f(m.t),
            f(m.mean_x),
            f(m.mean_p),
            f(m.var_x),
            f(m.var_p),
            f(m.cov_xp),
            f(m.norm),
            f(m.energy)
        );
    }
    s
}

pub fn raw_record_csv(raw: &RawRecord, p: &Provenance<'_>) -> String {
    let mut s = preamble(p, RAW_RECORD_HEADER);
    for (i, y) in raw.y.iter().enumerate() {
        let _ = writeln!(s, "{},{}", f(raw.time(i)), f(*y));
    }
    s
}

pub fn band_record_csv(band: &[BandSample], p: &Provenance<'_>) -> String {
    let mut s = preamble(p, BAND_RECORD_HEADER);
    for b in band {
        let _ = writeln!(s, "{},{}", f(b.t_center), f(b.y_avg));
    }
    s
}

pub fn strobe_csv(points: &[(usize, StrobePoint)], p: &Provenance<'_>) -> String {
    let mut s = preamble(p, STROBE_HEADER);
    for (run, pt) in points {
        let _ = writeln!(s, "{run},{},{},{}", pt.period_index, f(pt.x), f(pt.p));
    }
    s
}

pub fn lyapunov_csv(r: &LyapunovResult, p: &Provenance<'_>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# lambda {}", f(r.lambda));
    let _ = writeln!(s, "# stderr {}", f(r.stderr));
    let _ = writeln!(s, "# pooled_lambda {}", f(r.pooled_lambda));
    let _ = writeln!(s, "# fit_window {} {}", f(r.fit_window.0), f(r.fit_window.1));
    let _ = writeln!(s, "# n_samples {}", r.n_samples);
    let slopes: Vec<String> = r.per_fiducial.iter().map(|x| f(*x)).collect();
    let _ = writeln!(s, "# per_fiducial {}", slopes.join(" "));
    for w in &r.warnings {
        let _ = writeln!(s, "# warning {w}");
    }
    let mut out = preamble(p, LYAPUNOV_HEADER);
    // summary lines go after the provenance block, before the column header
    let at = out.len() - LYAPUNOV_HEADER.len() - 1;
    out.insert_str(at, &s);
    for c in &r.curve {
        let _ = writeln!(out, "{},{},{}", f(c.tau), f(c.mean_ln_delta), f(c.stderr));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow], p: &Provenance<'_>) -> String {
    let mut s = preamble(p, SWEEP_HEADER);
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            f(r.k),
            f(r.result.lambda),
            f(r.result.stderr),
            f(r.result.pooled_lambda),
            f(r.flatness),
            r.flagged,
            r.regime.localization,
            r.regime.noise,
            r.regime.record,
            r.result.n_samples
        );
    }
    s
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so the final path never holds a partial file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
