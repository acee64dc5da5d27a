//! Sampled trajectories and measurement records.

use crate::error::{Error, Result};
use crate::grid::Moments;

/// Raw measurement record, one sample per integration step. Sample `i`
/// belongs to the step ending at `t0 + (i+1) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub t0: f64,
    pub dt: f64,
    /// `⟨X⟩ + dW/(√(8ηk) dt)`
    pub y: Vec<f64>,
    /// The estimate ⟨X⟩ the record sample was centred on.
    pub mean_x: Vec<f64>,
}

impl RawRecord {
    pub fn new(t0: f64, dt: f64) -> Self {
        Self {
            t0,
            dt,
            y: Vec::new(),
            mean_x: Vec::new(),
        }
    }

    pub fn push(&mut self, y: f64, mean_x: f64) {
        self.y.push(y);
        self.mean_x.push(mean_x);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + (i + 1) as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSample {
    pub t_center: f64,
    pub y_avg: f64,
}

/// Time series produced by either runner. Classical runs fill the moment
/// fields with the point values (`var_* = cov_xp = 0`, `norm = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub fingerprint: Option<String>,
    pub seed: u64,
    pub samples: Vec<Moments>,
    pub raw_record: Option<RawRecord>,
    pub band_limited: Option<Vec<BandSample>>,
}

impl TrajectoryRecord {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn band_limit(&mut self, window: f64) -> Result<()> {
        if let Some(raw) = &self.raw_record {
            self.band_limited = Some(band_limit_record(raw, window)?);
        }
        Ok(())
    }
}

/// Number of raw samples in a window, requiring an integer multiple of `dt`.
pub fn window_samples(window: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(window >= dt * (1.0 - 1e-9)) {
        return Err(Error::Record(format!("window {window} shorter than step {dt}")));
    }
    let n = (window / dt).round();
    if ((n * dt) - window).abs() > 1e-9 * window {
        return Err(Error::Record(format!(
            "window {window} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Non-overlapping boxcar means of `window` length, stamped at window
/// centres. A trailing partial window is dropped.
pub fn band_limit_record(raw: &RawRecord, window: f64) -> Result<Vec<BandSample>> {
    let n = window_samples(window, raw.dt)?;
    let span = n as f64 * raw.dt;
    Ok(raw
        .y
        .chunks_exact(n)
        .enumerate()
        .map(|(j, c)| BandSample {
            t_center: raw.t0 + (j as f64 + 0.5) * span,
            y_avg: c.iter().sum::<f64>() / n as f64,
        })
        .collect())
}

/// Same boxcar applied to the estimate series, for comparing against the
/// band-limited record.
pub fn band_limit_estimate(raw: &RawRecord, window: f64) -> Result<Vec<BandSample>> {
    let est = RawRecord {
        t0: raw.t0,
        dt: raw.dt,
        y: raw.mean_x.clone(),
        mean_x: Vec::new(),
    };
    band_limit_record(&est, window)
}

/// RMS difference between the band-limited record and the band-limited
/// estimate ⟨X⟩.
pub fn record_tracking_rms(raw: &RawRecord, window: f64) -> Result<f64> {
    let y = band_limit_record(raw, window)?;
    let x = band_limit_estimate(raw, window)?;
    if y.is_empty() {
        return Err(Error::Record("record shorter than one window".into()));
    }
    let ss: f64 = y.iter().zip(&x).map(|(a, b)| (a.y_avg - b.y_avg).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}
