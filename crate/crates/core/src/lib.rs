//! Operator renormalization group on discretized atom-photon Hamiltonians.
//!
//! The pipeline: build a [`DiscretizedModel`], reduce it to the low-energy
//! photon space with an initial Feshbach map ([`initial`]), iterate the
//! renormalization map on kernel sequences ([`rg`]) and compare against exact
//! diagonalization ([`oracle`]) and Rayleigh-Schroedinger series ([`perturb`]).

pub mod config;
pub mod error;
pub mod feshbach;
pub mod fock;
pub mod initial;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod perturb;
pub mod rg;
pub mod testkit;
pub mod tolerances;
pub mod wick;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use fock::{FockBasis, ReducedBasis};
pub use linalg::{CMat, CVec, C64};
pub use model::{AtomicPart, DiscretizedModel, InteractionSpec, ModelOperators, PhotonModes};
pub use feshbach::FeshbachPair;
pub use initial::InitialStage;
pub use kernels::{Frame, Kernel, KernelSequence};
pub use rg::{RGConfig, RGOutcome, RGTrace};
