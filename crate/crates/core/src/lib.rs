//! Dynamics of a dissipative two-mode system whose parameters are driven
//! around an exceptional point.
//!
//! The crate covers exact propagation of the 2×2 flow in the lab, adiabatic
//! and interaction frames, the Magnus/Dyson perturbative propagator, the
//! fidelity and non-reciprocity metrics, and synthesis of Fourier-corrected
//! control loops. Time is measured in units of 1/Γ throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod magnus;
pub mod metrics;
pub mod propagation;
pub mod quadrature;

pub use control::{FourierControl, Truncation};
pub use dynamics::{
    build_spectral_frame, dynamical_matrix, eval_path, lambda_principal, theta_principal,
    DynamicalMatrix, LoopKind, LoopSpec, Orientation, SpectralFrame, SystemParams,
};
pub use error::{Error, Result};
pub use linalg::{Mat2, Pauli, C64};
pub use magnus::{GainMode, MagnusTerms, TruncatedFlow};
pub use metrics::{InitialStateSet, ProbabilityTable};
pub use propagation::{Flow, FrameKind, Trajectory};
