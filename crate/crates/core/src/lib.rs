//! Phase retrieval for near-field X-ray holography.
//!
//! The library models the hologram of a single-material object at one or
//! more Fresnel numbers and inverts it with Tikhonov regularization, either
//! through the linear contrast transfer function (closed form, or with
//! convex constraints via ADMM) or through the full nonlinear model
//! (projected gradient descent with Barzilai–Borwein steps).
//!
//! All frequencies are dimensionless per pixel; [`geometry`] converts
//! physical setups.

pub mod constraints;
pub mod ctf;
pub mod error;
pub mod forward;
pub mod fourier;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod nltikh;
pub mod phantom;
pub mod pipeline;
pub mod problem;
pub mod propagation;
pub mod regularization;
pub mod trace;

pub use constraints::{BoxBounds, ConstraintSet, SupportMask};
pub use ctf::{cctf_reconstruct, ctf_reconstruct, AdmmOptions, AdmmVariant};
pub use error::{Error, Result};
pub use forward::{frechet_adjoint, frechet_apply, linear_model, nonlinear_model, MaterialCoupling};
pub use grid::{ComplexField, PadMode, Padding, RealImage, Unit, Window};
pub use nltikh::{nltikh_reconstruct, NltikhOptions};
pub use pipeline::{reconstruct, Method, Reconstruction, ReconstructionSettings};
pub use problem::{HologramSet, TikhonovProblem};
pub use propagation::{fresnel_backpropagate, fresnel_propagate};
pub use regularization::{RegularizationParams, RegularizationWeights};
pub use trace::{ConvergenceTrace, IterationRecord, TraceFlag};
