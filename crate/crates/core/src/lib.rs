//! Two-level emitter in a semi-infinite waveguide with delayed coherent
//! feedback, simulated two ways:
//!
//! * a time-bin matrix-product-state engine ([`evolution`]), numerically
//!   exact up to the stroboscopic discretization and SVD truncation;
//! * a recursive Heisenberg matrix-element engine ([`heisenberg`]), which
//!   closes the delayed two-time correlations by a unity insertion and
//!   scales as `(n+1)²` in the photon number.
//!
//! Numerical code is generic over [`Real`]; the aliases below fix `f64`.

pub mod error;
pub mod evolution;
pub mod harness;
pub mod heisenberg;
pub mod mps;
pub mod pulse;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{DenseTensor, TruncationPolicy};

/// Complex amplitude in double precision.
pub type C64 = num_complex::Complex<f64>;
pub type Tensor = tensor::DenseTensor<f64>;
pub type Chain = mps::MpsChain<f64>;
pub type Pulse = pulse::DiscretizedPulse<f64>;
pub type Physics = evolution::PhysicsParams;
pub type Trace = evolution::TraceRecord;
pub type HbState = heisenberg::HeisenbergState<f64>;
