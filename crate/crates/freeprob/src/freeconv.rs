//! Free multiplicative convolution through the S-transform calculus:
//! pairwise products, n-fold powers of one law, and the reduction of the
//! Gram operator of a product to an n-fold convolution of the factor's Gram
//! law.

use crate::error::{Error, Result};
use crate::measure::{MomentSequence, SpectralMeasure};
use crate::series::TruncatedSeries;
use crate::transforms::{moments_from_s, s_transform};

/// The law of an n-fold free multiplicative convolution.
#[derive(Debug, Clone)]
pub struct ConvolutionResult {
    pub n: u32,
    pub base_label: String,
    pub moments: MomentSequence,
    pub s_series: TruncatedSeries,
}

/// Free multiplicative convolution of two laws given by their moments:
/// multiplies the S-transforms and converts back. Both laws need a nonzero
/// first moment. The result carries `min(K_a, K_b) - 1` reliable moments.
pub fn free_multiply(a: &MomentSequence, b: &MomentSequence) -> Result<MomentSequence> {
    let k = a.order().min(b.order());
    if k < 2 {
        return Err(Error::invalid(
            "free multiplication needs moments at least to order 2",
        ));
    }
    let sa = s_transform(&a.truncated(k)?)?;
    let sb = s_transform(&b.truncated(k)?)?;
    let s = sa.mul(&sb)?;
    moments_from_s(&s, k - 1)
}

/// n-fold free multiplicative power of one law: raises its S-transform to
/// the n-th power by binary exponentiation and converts back. `n = 1`
/// returns the input moments unchanged.
pub fn free_power(ms: &MomentSequence, n: u32) -> Result<ConvolutionResult> {
    if n < 1 {
        return Err(Error::invalid("fold count must be at least 1"));
    }
    let s = s_transform(ms)?;
    if n == 1 {
        return Ok(ConvolutionResult {
            n,
            base_label: String::new(),
            moments: ms.clone(),
            s_series: s,
        });
    }
    if ms.order() < 2 {
        return Err(Error::invalid(
            "free powers need moments at least to order 2",
        ));
    }
    let sn = s.powi(n as u64)?;
    let moments = moments_from_s(&sn, ms.order() - 1)?;
    Ok(ConvolutionResult {
        n,
        base_label: String::new(),
        moments,
        s_series: sn,
    })
}

/// Moments of the Gram operator `X*X = X^2` of a self-adjoint variable,
/// read directly from its spectral measure: `m_k(X*X) = sum_a w_a x_a^{2k}`.
/// For non-self-adjoint models the caller supplies the law of `X*X` as a
/// measure instead.
pub fn gram_base(m: &SpectralMeasure, k_max: usize) -> Result<MomentSequence> {
    let mut values = vec![0.0; k_max];
    for a in m.atoms() {
        let x2 = a.x * a.x;
        let mut p = 1.0;
        for v in values.iter_mut() {
            p *= x2;
            *v += a.w * p;
        }
    }
    MomentSequence::new(values)
}

/// Law of `Pi_n* Pi_n` as the n-fold free power of the `X*X` law; its first
/// moment is exactly `[E(X*X)]^n`.
pub fn product_gram_moments(gram: &MomentSequence, n: u32) -> Result<ConvolutionResult> {
    if gram.m(1) <= 0.0 {
        return Err(Error::invalid(
            "Gram law needs a positive first moment E(X*X)",
        ));
    }
    free_power(gram, n)
}
