//! Constructions over completed runs and executable forms of the supporting
//! inequalities.

pub mod gronwall;
pub mod ode;
pub mod path;
pub mod verify;

pub use gronwall::{
    classical_gronwall_check, gronwall_bound_check, gronwall_threshold, ClassicalVerdict, GronwallInstance,
    GronwallReport, GronwallVerdict,
};
pub use ode::{rk4, DenseSolution};
pub use path::{
    build_rescaled, noise_convergence_probe, ode_solve, tracking_error, tracking_non_increasing, tracking_table, InterpolatedPath,
    NoiseProbe, RescaledPath, SegmentTracking,
};
pub use verify::{decade_maxima, verify_lemma_aoi, verify_lemma_window, AoiLemmaReport, WindowReport};
