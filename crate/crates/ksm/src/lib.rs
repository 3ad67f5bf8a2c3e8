//! Online kernel similarity matching.
//!
//! Learns a T×N representation matrix Y whose dot products y^s·y^t match a
//! positive-semidefinite kernel f(x^s, x^t) over the inputs, using a
//! two-timescale Hebbian/anti-Hebbian stochastic gradient descent-ascent
//! loop on the per-sample energy
//!
//! ```text
//! e = Σ_i −[q_i y_i f(w_i,x) − ½ q_i² f(w_i,w_i)]
//!   + ½ Σ_ij [L_ij y_i y_j − ½ L_ij²] + (λ/2) Σ_i y_i²
//! ```
//!
//! The same kernels feed the classical low-rank baselines (kernel PCA,
//! Nyström with uniform / k-means / learned landmarks, random Fourier
//! features) and the analyses used to compare them: normalized approximation
//! error, spectra, receptive fields, clustering and linear classification.

pub mod analysis;
pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod kernel;
pub mod kmeans;
mod linalg;
pub mod model;
pub mod train;

pub use data::Dataset;
pub use error::{KsmError, Result};
pub use kernel::Kernel;
pub use model::{ModelState, ResponseBatch};
pub use train::{Phase, TrainConfig, TrainLog};
