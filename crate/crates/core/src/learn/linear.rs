use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge least squares with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct LinearRegression {
    intercept: f64,
    coefficients: Vec<f64>,
}

impl LinearRegression {
    pub(crate) fn fit(rows: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Self> {
        let n = rows.len();
        let p = rows[0].len();
        let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let b = DVector::from_column_slice(y);
        let mut gram = a.transpose() * &a;
        for j in 1..=p {
            gram[(j, j)] += ridge;
        }
        let rhs = a.transpose() * b;
        let w = match gram.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => gram
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NonFiniteInput("singular normal equations".into()))?,
        };
        Ok(Self {
            intercept: w[0],
            coefficients: w.iter().skip(1).copied().collect(),
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Coefficients on the standardized features.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub(crate) fn predict(&self, z: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
    }
}
