//! Kernel-regime analysis and deep-image-prior reconstruction for linear inverse problems.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the element type to `f64`, which every tolerance in the test suite assumes.

pub mod dynamics;
pub mod error;
pub mod generators;
pub mod instances;
pub mod metrics;
pub mod ntk;
pub mod numerics;
pub mod operators;
pub mod train;

pub use error::{Error, Result};
pub use dynamics::DynamicsProblem;
pub use generators::Generator;
pub use ntk::Kernel;
pub use numerics::{Matrix, RngStream, Scalar, Signal};
pub use operators::LinearOp;
pub use train::{DipConfig, RunReport};

pub type RealMatrix = Matrix<f64>;
pub type ComplexSignal = Signal<f64>;
pub type GeneratorNet = Generator<f64>;
pub type LinearMap = LinearOp<f64>;
pub type KernelMatrix = Kernel<f64>;
pub type Problem = DynamicsProblem<f64>;
pub type Report = RunReport<f64>;
