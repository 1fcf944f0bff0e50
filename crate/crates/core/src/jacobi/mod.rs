//! Generalized Jacobi polynomials, their quadrature, and zonal kernels.

pub mod basis;
pub mod kernel;
pub mod onedim;
pub mod quadrature;

pub use basis::{monomial_symmetric, weighted_moment, JacobiBasis, SymmetricPolynomial};
pub use kernel::{
    bessel_kernel, closed_form_mean, cutoff_h, diffusion_kernel, diffusion_kernel_squared,
    eval_kernel, kernel_mean, power_kernel_expansion, shi, ClosedFormKernel, KernelForm,
    ZonalKernelSpec,
};
pub use onedim::JacobiWeight1d;
pub use quadrature::{ordered_simplex_quadrature, SimplexRule, WeightDensity};
