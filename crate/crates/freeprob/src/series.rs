//! Truncated formal power series arithmetic.
//!
//! The carrier for the psi-function, its functional inverse, the S-transform
//! and Cauchy-transform expansions. All operations keep the truncation order
//! fixed; binary operations demand equal orders so that silent order changes
//! cannot hide truncation bugs.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// A real power series truncated at order `K`: coefficients of `z^0 .. z^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// Builds a series from its coefficient vector `c_0 .. c_K`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("series needs at least the constant term"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("series coefficients must be finite"));
        }
        Ok(TruncatedSeries { coeffs })
    }

    /// The zero series of the given order.
    pub fn zero(order: usize) -> Self {
        TruncatedSeries {
            coeffs: vec![0.0; order + 1],
        }
    }

    /// The constant series 1.
    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = 1.0;
        s
    }

    /// The identity series `z`.
    pub fn identity(order: usize) -> Self {
        let mut s = Self::zero(order);
        if order >= 1 {
            s.coeffs[1] = 1.0;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `z^k`; zero beyond the truncation order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Truncates to a lower order.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::invalid(format!(
                "cannot truncate order {} series to order {order}",
                self.order()
            )));
        }
        Ok(TruncatedSeries {
            coeffs: self.coeffs[..=order].to_vec(),
        })
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(TruncatedSeries { coeffs })
    }

    pub fn scale(&self, c: f64) -> Self {
        TruncatedSeries {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Cauchy product, truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let k = self.order();
        let mut coeffs = vec![0.0; k + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().take(k + 1 - i).enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Ok(TruncatedSeries { coeffs })
    }

    /// Multiplicative inverse: `mul(self, reciprocal(self)) = 1` to order K.
    pub fn reciprocal(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0.abs() <= 1e-300 {
            return Err(Error::invalid(
                "reciprocal of a series with vanishing constant term",
            ));
        }
        let k = self.order();
        let mut inv = vec![0.0; k + 1];
        inv[0] = 1.0 / a0;
        for m in 1..=k {
            let mut acc = 0.0;
            for i in 1..=m {
                acc += self.coeffs[i] * inv[m - i];
            }
            inv[m] = -acc / a0;
        }
        Ok(TruncatedSeries { coeffs: inv })
    }

    /// Functional composition `self(inner(z))`; `inner` must have zero
    /// constant term so the truncation is exact.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        self.check_order(inner)?;
        if inner.coeffs[0] != 0.0 {
            return Err(Error::invalid(
                "composition requires inner series with zero constant term",
            ));
        }
        let k = self.order();
        // Horner on series.
        let mut acc = TruncatedSeries::zero(k);
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(inner)?;
            acc.coeffs[0] += c;
        }
        Ok(acc)
    }

    /// Functional (compositional) inverse of a series with `f_0 = 0`,
    /// `f_1 != 0`, by triangular coefficient recursion: solve for `h_k` from
    /// the `z^k` coefficient of `f(h(z)) = z`.
    pub fn lagrange_invert(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::invalid(
                "functional inversion requires zero constant term",
            ));
        }
        let f1 = self.coeff(1);
        if f1.abs() < 1e-12 {
            return Err(Error::invalid(
                "functional inversion requires nonzero linear coefficient",
            ));
        }
        let k = self.order();
        let mut h = TruncatedSeries::zero(k);
        if k >= 1 {
            h.coeffs[1] = 1.0 / f1;
        }
        for m in 2..=k {
            // With h_m = 0, [z^m] f(h) misses exactly the f1 * h_m term.
            let e = self.compose(&h)?.coeff(m);
            h.coeffs[m] = -e / f1;
        }
        Ok(h)
    }

    /// Integer power by binary exponentiation; `n = 0` gives the constant 1.
    pub fn powi(&self, n: u64) -> Result<Self> {
        let mut result = TruncatedSeries::one(self.order());
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(result)
    }

    /// Divides by `z`; requires a zero constant term. Order drops by one.
    pub fn div_z(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::invalid("division by z requires zero constant term"));
        }
        if self.order() == 0 {
            return Err(Error::invalid("cannot divide an order-0 series by z"));
        }
        Ok(TruncatedSeries {
            coeffs: self.coeffs[1..].to_vec(),
        })
    }

    /// Multiplies by `z`. Order grows by one.
    pub fn mul_z(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(0.0);
        coeffs.extend_from_slice(&self.coeffs);
        TruncatedSeries { coeffs }
    }

    /// Horner evaluation at a real point.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Horner evaluation at a complex point.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }
}
