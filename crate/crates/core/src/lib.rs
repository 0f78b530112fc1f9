//! Estimation of spatially varying coefficients in stochastic hyperbolic PDEs.
//!
//! The velocity field `C(x) = exp(g(x))` of a stochastic advection or wave
//! equation is parameterised by a truncated Fourier series whose coefficients
//! are inferred from continuous-time observation increments, either by
//! Metropolis-Hastings over a Kalman-Bucy filter likelihood or by a dual
//! state/parameter filter.
//!
//! Module map:
//!
//! * [`fields`]: grids, Fourier coefficients and velocity fields
//! * [`noise`]: seeded stream derivation and space-time white noise
//! * [`models`]: finite-difference stencils and one-step integrators
//! * [`observation`]: observation operators and increments
//! * [`kbf`] / [`enkbf`]: Kalman-Bucy and ensemble Kalman-Bucy filters
//! * [`mcmc`]: Metropolis-Hastings over filter log-likelihoods
//! * [`dual`]: dual state/parameter filters
//! * [`harness`]: experiment configuration, metrics and result export

pub mod dual;
pub mod enkbf;
pub mod error;
pub(crate) mod exec;
pub mod fields;
pub mod harness;
pub mod kbf;
pub mod mcmc;
pub mod models;
pub mod noise;
pub mod observation;

pub use error::{Error, Result};
pub use fields::{FourierCoefficients, Grid, LogField, VelocityField};
