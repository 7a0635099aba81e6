//! Random variates and small dense linear algebra for the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `Σ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub l: DMatrix<f64>,
}

impl CholeskyFactor {
    /// Factor `sigma`; on failure retry once with `1e-10·trace/d` added to the diagonal.
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        if let Some(c) = nalgebra::Cholesky::new(sigma.clone()) {
            return Ok(CholeskyFactor { l: c.unpack() });
        }
        let d = sigma.nrows();
        let jitter = 1e-10 * sigma.trace() / d as f64;
        let mut s = sigma.clone();
        for i in 0..d {
            s[(i, i)] += jitter;
        }
        match nalgebra::Cholesky::new(s) {
            Some(c) => Ok(CholeskyFactor { l: c.unpack() }),
            None => Err(Error::NotPositiveDefinite(format!("{d}x{d} matrix after jitter"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solve `Σ x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.l.solve_lower_triangular(b).expect("nonzero diagonal");
        self.l.tr_solve_lower_triangular(&y).expect("nonzero diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let linv = self
            .l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("nonzero diagonal");
        symmetrize(&(linv.transpose() * linv))
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `mean + L z` with `z` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    chol: &CholeskyFactor,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = chol.dim();
    if mean.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, factor is {d}x{d}",
            mean.len()
        )));
    }
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.to_vec();
    for r in 0..d {
        for c in 0..=r {
            out[r] += chol.l[(r, c)] * z[c];
        }
    }
    Ok(out)
}

/// Draw from the density proportional to `x^(-shape-1) exp(-scale/x)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inverse-gamma shape {shape} and scale {scale} must be positive"
        )));
    }
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    Ok(1.0 / g)
}

/// Inverse-Wishart draw with density ∝ |Σ|^{-(df+d+1)/2} exp(-tr(S Σ⁻¹)/2).
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if !(df > d as f64 - 1.0) {
        return Err(Error::InvalidDegreesOfFreedom {
            df,
            min: d as f64 - 1.0,
        });
    }
    let c = CholeskyFactor::new(scale)?;
    // Bartlett factor of a standard Wishart
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        a[(i, i)] = chi.sqrt();
        for k in 0..i {
            a[(i, k)] = rng.sample(StandardNormal);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Bartlett factor".into()))?;
    let m = &c.l * a_inv.transpose();
    Ok(symmetrize(&(&m * m.transpose())))
}

/// Which half-line a truncated normal draw is restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `(0, ∞)`
    Positive,
    /// `(-∞, 0]`
    NonPositive,
}

const TAIL_SWITCH: f64 = 4.0;
const TAIL_MAX_ITER: usize = 100_000;

/// Standard normal restricted to `(a, ∞)`.
fn standard_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<f64> {
    if a <= TAIL_SWITCH {
        let upper = 0.5 * erfc(a / std::f64::consts::SQRT_2);
        let std_normal = Normal::standard();
        loop {
            let u: f64 = rng.random();
            let p = u * upper;
            if p <= 0.0 {
                continue;
            }
            let z = -std_normal.inverse_cdf(p);
            if z > a && z.is_finite() {
                return Ok(z);
            }
        }
    }
    // Robert (1995) exponential rejection
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(lambda).expect("positive rate");
    for _ in 0..TAIL_MAX_ITER {
        let z = a + exp.sample(rng);
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - lambda) * (z - lambda) {
            return Ok(z);
        }
    }
    Err(Error::TailSamplingFailure)
}

/// Draw `N(mu, sd²)` restricted to one side of zero.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sd: f64,
    side: Side,
    rng: &mut R,
) -> Result<f64> {
    if !(sd > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncated normal needs finite mean and positive sd, got ({mu}, {sd})"
        )));
    }
    let m = match side {
        Side::Positive => mu,
        Side::NonPositive => -mu,
    };
    // resample on the rare rounding to exactly zero
    let x = loop {
        let z = standard_tail(-m / sd, rng)?;
        let x = m + sd * z;
        if x > 0.0 {
            break x;
        }
    };
    Ok(match side {
        Side::Positive => x,
        Side::NonPositive => -x,
    })
}

/// Regression weights of outcome `j` on the others and its conditional variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalNormalParams {
    /// `Σ_{j,-j} Σ_{-j,-j}⁻¹`, ordered by the remaining outcome indices.
    pub weights: Vec<f64>,
    pub v: f64,
}

pub fn conditional_normal_params(sigma: &DMatrix<f64>, j: usize) -> Result<ConditionalNormalParams> {
    let d = sigma.nrows();
    if j >= d || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!("outcome {j} of a {d}x{d} matrix")));
    }
    if d == 1 {
        if !(sigma[(0, 0)] > 0.0) {
            return Err(Error::NotPositiveDefinite("1x1 variance".into()));
        }
        return Ok(ConditionalNormalParams {
            weights: vec![],
            v: sigma[(0, 0)],
        });
    }
    let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
    let s_oo = DMatrix::from_fn(d - 1, d - 1, |r, c| sigma[(others[r], others[c])]);
    let s_oj = DVector::from_fn(d - 1, |r, _| sigma[(others[r], j)]);
    let chol = CholeskyFactor::new(&s_oo)?;
    let w = chol.solve(&s_oj);
    let v = sigma[(j, j)] - w.dot(&s_oj);
    if !(v > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "conditional variance {v} for outcome {j}"
        )));
    }
    Ok(ConditionalNormalParams {
        weights: w.iter().copied().collect(),
        v: v.min(sigma[(j, j)]),
    })
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Covariance matrix from standard deviations and a correlation matrix.
pub fn covariance_from_sd_corr(sd: &[f64], corr: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sd.len();
    DMatrix::from_fn(d, d, |r, c| sd[r] * sd[c] * corr[(r, c)])
}
