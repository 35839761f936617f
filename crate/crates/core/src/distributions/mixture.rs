//! Sums of independent scaled chi-square variables, `Σ cᵢ·χ²(kᵢ)`.

use serde::Serialize;

use super::rng::RngStream;
use super::special::{
    gamma_ln_pdf_with_norm, gamma_pdf_with_norm, gauss_legendre_unit, ln_gamma, regularized_gamma,
};
use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub scale: f64,
    pub dof: u32,
}

/// `Σ scaleᵢ·χ²(dofᵢ)` with independent summands.
///
/// Zero-dof components are point masses at zero and are dropped on
/// construction; an empty component list is the point mass at zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareMixture {
    components: Vec<MixtureComponent>,
}

impl ChiSquareMixture {
    pub fn new<I>(components: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, u32)>,
    {
        let mut out = Vec::new();
        for (scale, dof) in components {
            if !(scale > 0.0 && scale.is_finite()) {
                return domain(format!("mixture scale must be positive, got {scale}"));
            }
            if dof > 0 {
                out.push(MixtureComponent { scale, dof });
            }
        }
        Ok(Self { components: out })
    }

    /// Plain `χ²(dof)`.
    pub fn chi_square(dof: u32) -> Self {
        Self::new([(1.0, dof)]).expect("unit scale is valid")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn is_point_mass(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.scale * c.dof as f64).sum()
    }

    pub fn variance(&self) -> f64 {
        self.components
            .iter()
            .map(|c| 2.0 * c.scale * c.scale * c.dof as f64)
            .sum()
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.components
            .iter()
            .map(|c| c.scale * rng.chi2(c.dof))
            .sum()
    }

    /// Prepared evaluator; only point masses and one or two components are
    /// supported.
    pub fn evaluator(&self) -> Result<MixtureEvaluator> {
        let laws: Vec<GammaLaw> = self
            .components
            .iter()
            .map(|c| GammaLaw::new(0.5 * c.dof as f64, 2.0 * c.scale))
            .collect();
        let shape = match laws.as_slice() {
            [] => Shape::PointMass,
            [x] => Shape::Single(*x),
            [a, b] => {
                // Larger-scale component first.
                if a.scale >= b.scale {
                    Shape::Pair(*a, *b)
                } else {
                    Shape::Pair(*b, *a)
                }
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "mixtures with {} nonzero components (at most 2 supported)",
                    laws.len()
                )))
            }
        };
        Ok(MixtureEvaluator {
            shape,
            mean: self.mean(),
            sd: self.variance().sqrt(),
        })
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_point(x)?;
        self.evaluator()?.pdf(x)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_point(x)?;
        Ok(self.evaluator()?.cdf(x))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.evaluator()?.quantile(p)
    }
}

fn check_point(x: f64) -> Result<()> {
    if x.is_nan() {
        return domain("mixture evaluated at NaN");
    }
    Ok(())
}

/// Density of `mix` at `x`.
pub fn mixture_pdf(mix: &ChiSquareMixture, x: f64) -> Result<f64> {
    mix.pdf(x)
}

/// Distribution function of `mix` at `x`.
pub fn mixture_cdf(mix: &ChiSquareMixture, x: f64) -> Result<f64> {
    mix.cdf(x)
}

#[derive(Clone, Copy, Debug)]
struct GammaLaw {
    shape: f64,
    scale: f64,
    log_norm: f64,
}

impl GammaLaw {
    fn new(shape: f64, scale: f64) -> Self {
        Self {
            shape,
            scale,
            log_norm: ln_gamma(shape) + shape * scale.ln(),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        gamma_pdf_with_norm(self.shape, self.scale, self.log_norm, x)
    }

    fn cdf(&self, x: f64) -> f64 {
        regularized_gamma(self.shape, x / self.scale)
            .map(|(p, _)| p)
            .unwrap_or(f64::NAN)
    }

    /// `∫₀^{t/2} f(s) g(t − s) ds` after the substitution `s = (t/2)·v²`.
    ///
    /// With half-integer shapes, `f(s)·ds` becomes a polynomial in `v` times
    /// a smooth factor, and `g` is only evaluated on `[t/2, t]`, so the
    /// Gauss–Legendre rule sees a smooth integrand.
    fn half_convolution(&self, t: f64, g: impl Fn(f64) -> f64) -> f64 {
        let (nodes, weights) = gauss_legendre_unit();
        let h = 0.5 * t;
        nodes
            .iter()
            .zip(weights)
            .map(|(&v, &w)| {
                let s = h * v * v;
                let log_f = gamma_ln_pdf_with_norm(self.shape, self.scale, self.log_norm, s);
                w * (log_f + (2.0 * h * v).ln()).exp() * g(t - s)
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    PointMass,
    Single(GammaLaw),
    Pair(GammaLaw, GammaLaw),
}

/// Evaluates the density, distribution function and quantiles of a mixture
/// with at most two components.
///
/// Two-component values are convolutions split at `t/2`:
/// `F(t) = ∫₀^{t/2} f_X F_Y(t−s) + ∫₀^{t/2} f_Y F_X(t−s) − F_X(t/2) F_Y(t/2)`
/// and `f(t) = ∫₀^{t/2} f_X f_Y(t−s) + ∫₀^{t/2} f_Y f_X(t−s)`.
#[derive(Clone, Debug)]
pub struct MixtureEvaluator {
    shape: Shape,
    mean: f64,
    sd: f64,
}

impl MixtureEvaluator {
    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        match self.shape {
            Shape::PointMass => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Single(x) => x.cdf(t),
            Shape::Pair(x, y) => {
                if t <= 0.0 {
                    return 0.0;
                }
                if t == f64::INFINITY {
                    return 1.0;
                }
                let h = 0.5 * t;
                let v = x.half_convolution(t, |u| y.cdf(u)) + y.half_convolution(t, |u| x.cdf(u))
                    - x.cdf(h) * y.cdf(h);
                v.clamp(0.0, 1.0)
            }
        }
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        match self.shape {
            Shape::PointMass => Err(Error::Unsupported(
                "density of the point mass at zero".into(),
            )),
            Shape::Single(x) => Ok(x.pdf(t)),
            Shape::Pair(x, y) => {
                if t < 0.0 || t == f64::INFINITY {
                    return Ok(0.0);
                }
                if t == 0.0 {
                    let total_shape = x.shape + y.shape;
                    return Ok(if total_shape > 1.0 {
                        0.0
                    } else {
                        // Two χ²(1)-type summands: limit 1/√(θ_X θ_Y).
                        1.0 / (x.scale * y.scale).sqrt()
                    });
                }
                let v = x.half_convolution(t, |u| y.pdf(u)) + y.half_convolution(t, |u| x.pdf(u));
                Ok(v.max(0.0))
            }
        }
    }

    /// Smallest `x` with `F(x) ≥ p`, by bracketing and bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return domain(format!("quantile level must lie in [0, 1), got {p}"));
        }
        if matches!(self.shape, Shape::PointMass) || p == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = self.mean + 4.0 * self.sd + 1.0;
        while self.cdf(hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        Ok(hi)
    }
}
