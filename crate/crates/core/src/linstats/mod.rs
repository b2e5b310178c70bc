//! Ordinary least squares (no intercept) and the scalar statistics the
//! threshold tests consume.
//!
//! Every variance uses the `n - 1` divisor, residual variance included.
//! Rank-deficient designs are solved for the minimum-norm coefficients, so
//! fitted values, `R²` and residual variance stay well defined when
//! aggregated columns are collinear.

mod qr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::StatsError;
pub use qr::QrFactor;

/// Result of a least-squares fit without intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// In-sample coefficient of determination; `None` when the target is constant.
    pub r2: Option<f64>,
    pub residual_variance: f64,
    pub target_variance: f64,
    /// Mean squared in-sample residual.
    pub mse: f64,
    pub n: usize,
    pub d: usize,
    pub rank: usize,
}

impl OlsFit {
    /// `var(y) - var_res`, the variance the inputs explain in-sample.
    pub fn explained_variance(&self) -> f64 {
        self.target_variance - self.residual_variance
    }

    pub fn r2_score(&self) -> Result<f64, StatsError> {
        self.r2.ok_or(StatsError::ZeroVariance("R²"))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        predict(x, &self.coefficients)
    }
}

pub fn predict(x: &DMatrix<f64>, coefficients: &[f64]) -> Vec<f64> {
    assert_eq!(x.ncols(), coefficients.len());
    let mut out = vec![0.0; x.nrows()];
    for (c, &w) in coefficients.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(x.column(c).iter()) {
            *o += w * v;
        }
    }
    out
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(a: &[f64]) -> f64 {
    let m = mean(a);
    a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Unbiased sample covariance (two-pass).
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 - 1.0)
}

fn check_design(x: &DMatrix<f64>, y_len: usize) -> Result<(), StatsError> {
    if x.nrows() != y_len {
        return Err(StatsError::Shape(format!(
            "design has {} rows, target has {}",
            x.nrows(),
            y_len
        )));
    }
    if x.nrows() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: x.nrows(),
        });
    }
    if x.ncols() == 0 {
        return Err(StatsError::Shape("design has no columns".into()));
    }
    Ok(())
}

/// A factorised design that can be fitted against several targets.
#[derive(Debug, Clone)]
pub struct Design {
    qr: QrFactor,
}

impl Design {
    pub fn new(x: &DMatrix<f64>) -> Result<Self, StatsError> {
        check_design(x, x.nrows())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("design matrix"));
        }
        Ok(Self {
            qr: QrFactor::new(x),
        })
    }

    pub fn rank(&self) -> usize {
        self.qr.rank()
    }

    pub fn fit(&self, y: &[f64]) -> Result<OlsFit, StatsError> {
        let n = self.qr.nrows();
        if y.len() != n {
            return Err(StatsError::Shape(format!(
                "design has {n} rows, target has {}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("target"));
        }
        let coefficients = self.qr.coefficients(y);
        let residual = self.qr.residual(y);
        Ok(Self::summarise(coefficients, &residual, y, self.qr.ncols(), self.qr.rank()))
    }

    /// In-sample `R²` only; skips the coefficient solve.
    pub fn r2_score(&self, y: &[f64]) -> Result<f64, StatsError> {
        if y.len() != self.qr.nrows() {
            return Err(StatsError::Shape("target length".into()));
        }
        let var_y = variance(y);
        if var_y <= 0.0 {
            return Err(StatsError::ZeroVariance("R²"));
        }
        let residual = self.qr.residual(y);
        Ok(1.0 - variance(&residual) / var_y)
    }

    fn summarise(coefficients: Vec<f64>, residual: &[f64], y: &[f64], d: usize, rank: usize) -> OlsFit {
        let n = y.len();
        let target_variance = variance(y);
        let residual_variance = variance(residual);
        let mse = residual.iter().map(|r| r * r).sum::<f64>() / n as f64;
        let r2 = (target_variance > 0.0).then(|| 1.0 - residual_variance / target_variance);
        OlsFit {
            coefficients,
            r2,
            residual_variance,
            target_variance,
            mse,
            n,
            d,
            rank,
        }
    }
}

/// Least-squares fit of `y` on the columns of `x`, without intercept.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, StatsError> {
    check_design(x, y.len())?;
    Design::new(x)?.fit(y)
}

/// In-sample coefficient of determination of the OLS fit.
pub fn r2_score(x: &DMatrix<f64>, y: &[f64]) -> Result<f64, StatsError> {
    check_design(x, y.len())?;
    Design::new(x)?.r2_score(y)
}

/// Sample variance of the OLS residuals.
pub fn var_res(x: &DMatrix<f64>, y: &[f64]) -> Result<f64, StatsError> {
    Ok(ols_fit(x, y)?.residual_variance)
}

/// Pairwise sample moments with the `n - 1` divisor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
    correlation: Option<f64>,
}

impl Moments {
    /// Pearson correlation, clamped to `[-1, 1]`.
    pub fn correlation(&self) -> Result<f64, StatsError> {
        self.correlation.ok_or(StatsError::ZeroVariance("correlation"))
    }
}

pub fn moments(a: &[f64], b: &[f64]) -> Result<Moments, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: a.len(),
        });
    }
    let var_a = variance(a);
    let var_b = variance(b);
    let cov = covariance(a, b);
    let correlation =
        (var_a > 0.0 && var_b > 0.0).then(|| (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0));
    Ok(Moments {
        var_a,
        var_b,
        cov,
        correlation,
    })
}

pub fn mse(predictions: &[f64], actuals: &[f64]) -> Result<f64, StatsError> {
    if predictions.len() != actuals.len() {
        return Err(StatsError::Shape(format!(
            "lengths {} and {}",
            predictions.len(),
            actuals.len()
        )));
    }
    if actuals.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / actuals.len() as f64)
}

/// Root mean squared error divided by the range of `actuals`.
pub fn nrmse(predictions: &[f64], actuals: &[f64]) -> Result<f64, StatsError> {
    let m = mse(predictions, actuals)?;
    let (lo, hi) = actuals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 {
        return Err(StatsError::ZeroRange);
    }
    Ok(m.sqrt() / range)
}
