//! Dense real/complex linear algebra, the unitary FFT, and seeded random streams.

pub mod fft;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod signal;

pub use fft::{fft, ifft, signed_frequency, Direction};
pub use linalg::{
    intersection_projector, pinv, pinv_with, projector_onto_null_space, projector_onto_range,
    projector_onto_range_with, psd_sqrt, rank, spectral_norm, svd, symmetric_eigen, PsdRoot,
    RankTol, Svd, SymEigen,
};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use scalar::Scalar;
pub use signal::Signal;
