//! Lyapunov estimation, stroboscopic sections and the k-sensitivity sweep.

mod lyapunov;
mod strobe;
mod sweep;

pub use lyapunov::{
    lyapunov_estimate, phase_distance, BranchProtocol, ClassicalDynamics, CurvePoint, Dynamics,
    LyapunovResult, Perturbation, QuantumDynamics, saturation_window, DEFAULT_FIT_WINDOW,
};
pub use strobe::{merge_strobe, stroboscopic_map, strobe_times, StrobePoint};
pub use sweep::{flatness, k_sensitivity_sweep, SweepRow, FLATNESS_THRESHOLD};
