//! Globally optimal contrast maximisation for event cameras.
//!
//! Events inside a time window are warped back to a reference time by a
//! parametric motion model and accumulated into an Image of Warped Events
//! (IWE). A focus loss scores the sharpness of that image, and a best-first
//! branch-and-bound search over the motion parameters returns the parameter
//! vector maximising the loss up to a user-chosen gap.
//!
//! The crate is organised bottom-up:
//!
//! - [`event`]: events, time windows and IWE accumulation.
//! - [`loss`]: the six focus losses and their recursive bound increments.
//! - [`warp`]: optical flow, Ackermann planar motion and pure rotation models,
//!   together with the per-event bounding boxes over a parameter box.
//! - [`bnb`]: recursive bound evaluation and the branch-and-bound solver.
//! - [`baselines`]: exhaustive grid search, Gaussian-smoothed local ascent and
//!   error metrics.
//! - [`synth`]: synthetic line scenes, event generation and noise injection.
//! - [`io`]: event and calibration files, undistortion, reports and images.

pub mod baselines;
pub mod bnb;
pub mod event;
pub mod io;
pub mod loss;
pub mod synth;
pub mod warp;

pub use bnb::{recursive_bounds, solve, Bounds, Problem, SolverConfig, SolverResult};
pub use event::{
    accumulate, downsample, round_to_accumulator, slice_windows, AccumulatorImage, Event,
    EventWindow, ImageGeometry, PixelRect, Polarity,
};
pub use loss::{FocusLoss, LossKind, LossParams};
pub use warp::{
    AckermannModel, FlowModel, Intrinsics, RigConfig, RotationModel, SearchBox, WarpModel,
};
