//! Global minimization of polynomial integral functionals.
//!
//! A variational problem `min ∫_Ω f(x, u, ∇u, ∂ₓ²u) dx` is discretized with
//! finite elements into a polynomial optimization problem whose objective is a
//! sum of element terms. Correlative sparsity of that sum yields a sparse
//! moment relaxation, solved as a block-diagonal SDP, from which a lower bound
//! and an approximate global minimizer are read off.

pub mod config;
pub mod discretize;
pub mod error;
pub mod extract;
pub mod gradflow;
pub mod mesh;
pub mod pipeline;
pub mod poly;
pub mod quadrature;
pub mod relax;
pub mod sdpsolve;
pub mod sparsity;

pub use error::{Error, Result};
