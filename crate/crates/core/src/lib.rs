//! Downlink MU-MIMO precoding with successive null spaces and rate splitting.
//!
//! Modules build on each other: [`linalg`] wraps the complex matrix kernels,
//! [`channel`] draws Rayleigh channels, [`nullspace`] builds the successive
//! null-space bases, [`rates`] evaluates exact rates, [`optimizer`] runs the
//! SCA design, [`baselines`] provides BD and DPC references and [`harness`]
//! drives Monte-Carlo sweeps.

pub mod baselines;
pub mod channel;
pub mod harness;
pub mod linalg;
pub mod nullspace;
pub mod optimizer;
pub mod rates;
