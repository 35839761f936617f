//! Normal, chi-square/gamma and scaled-chi-square-mixture distributions.

mod mixture;
mod rng;
mod special;

pub use mixture::{mixture_cdf, mixture_pdf, ChiSquareMixture, MixtureComponent, MixtureEvaluator};
pub use rng::{mix64, RngStream, GOLDEN_GAMMA};
pub use special::{
    gamma_cdf, gamma_pdf, gauss_legendre_unit, ln_gamma, regularized_gamma, GAUSS_LEGENDRE_NODES,
};

/// One standard normal draw.
pub fn normal_sample(stream: &mut RngStream) -> f64 {
    stream.normal()
}

/// One `χ²(dof)` draw; zero degrees of freedom gives exactly 0.
pub fn chi2_sample(dof: u32, stream: &mut RngStream) -> f64 {
    stream.chi2(dof)
}
