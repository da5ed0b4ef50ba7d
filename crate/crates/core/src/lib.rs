//! Causal-effect estimation for bipartite experiments using generalized
//! propensity scores, with bootstrap inference and a simulation harness.
//!
//! Treatment is assigned to *diversion units*; *outcome units* receive a
//! linear exposure `E_i = Σ_j W_ij Z_j` through a fixed weighted bipartite
//! graph. The exposure-response curve `μ(e)` and the effect `μ(1) − μ(0)` are
//! estimated naïvely, by Horvitz–Thompson weighting, or by the two-step GPS
//! procedure (fit `β(e, r)`, then average `β(e, r(e, W_i))` over units).

pub mod design;
pub mod error;
pub mod estimators;
pub mod gps;
pub mod graph;
pub mod inference;
pub mod numerics;
pub mod rng;
pub mod simlab;

pub use design::{draw_assignment, linear_exposure, Assignment, AssignmentDesign, ExposureProfile};
pub use error::{Error, ErrorClass, Result};
pub use gps::{
    build_gps, exact_gps, mc_gps, product_gps, Bucketing, ExposureDistribution, GpsMethod, GpsMode,
    GpsSettings, GpsTable,
};
pub use graph::{BipartiteGraph, Edge, GraphSpec, IdMap};
