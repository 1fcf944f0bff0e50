//! Cubature, designs and kernel approximation on Grassmannians G(k,d).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod design;
pub mod error;
pub mod grassmann;
pub mod jacobi;
pub mod qmc;
pub mod rng;
pub mod spectral;
pub mod sum;

pub use error::{Error, Result};
