//! Conversions between moment sequences and the psi-function, the Cauchy
//! transform, and the S-transform, plus density/support recovery from Cauchy
//! transforms by Stieltjes inversion.

use crate::error::{Error, Result};
use crate::measure::{MomentSequence, SpectralMeasure};
use crate::series::TruncatedSeries;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Default smoothing parameter for Stieltjes inversion.
pub const DEFAULT_EPS: f64 = 1e-3;

/// `psi(z) = sum_k m_k z^k` as a truncated series of the same order.
pub fn psi_from_moments(ms: &MomentSequence) -> TruncatedSeries {
    let mut coeffs = Vec::with_capacity(ms.order() + 1);
    coeffs.push(0.0);
    coeffs.extend_from_slice(ms.values());
    TruncatedSeries::new(coeffs).expect("moments are finite")
}

/// The S-transform `S(z) = (1 + 1/z) psi^{-1}(z)` as a series of order
/// `K - 1` (the `1 + 1/z` factor shifts the reliable degree down by one).
/// Requires `m_1 != 0`.
pub fn s_transform(ms: &MomentSequence) -> Result<TruncatedSeries> {
    if ms.m(1).abs() < 1e-12 {
        return Err(Error::ZeroMean);
    }
    let psi = psi_from_moments(ms);
    let psi_inv = psi.lagrange_invert()?;
    let q = psi_inv.div_z()?; // psi^{-1}(z)/z, order K-1
    // multiply by (1 + z), truncated at K-1
    let mut coeffs = Vec::with_capacity(q.order() + 1);
    for k in 0..=q.order() {
        let prev = if k == 0 { 0.0 } else { q.coeff(k - 1) };
        coeffs.push(q.coeff(k) + prev);
    }
    TruncatedSeries::new(coeffs)
}

/// Recovers `m_1 .. m_K` from an S-transform series of order at least
/// `K - 1`. Inverts `psi^{-1}(z) = z S(z) / (1 + z)` and functionally
/// re-inverts to read the psi coefficients.
pub fn moments_from_s(s: &TruncatedSeries, k_max: usize) -> Result<MomentSequence> {
    if s.coeff(0).abs() < 1e-300 {
        return Err(Error::invalid("S-transform with zero leading coefficient"));
    }
    if k_max < 1 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    if k_max > s.order() + 1 {
        return Err(Error::invalid(format!(
            "requested {k_max} moments exceeds the reliable cap {} of an order-{} S-series",
            s.order() + 1,
            s.order()
        )));
    }
    // q = S / (1 + z): q_k = s_k - q_{k-1}
    let mut q = vec![0.0; s.order() + 1];
    for k in 0..=s.order() {
        q[k] = s.coeff(k) - if k == 0 { 0.0 } else { q[k - 1] };
    }
    let psi_inv = TruncatedSeries::new(q)?.mul_z();
    let psi = psi_inv.lagrange_invert()?;
    let values: Vec<f64> = (1..=k_max).map(|k| psi.coeff(k)).collect();
    MomentSequence::new(values)
}

/// Evaluates the Cauchy transform `G(z) = E(1/(z - A))`, either exactly from
/// atoms or through the Laurent tail `G(z) = z^{-1}[psi(z^{-1}) + 1]` from a
/// truncated moment sequence (valid only above a `|z|` threshold).
#[derive(Debug, Clone)]
pub enum CauchyEvaluator {
    Atoms(Vec<(f64, f64)>),
    MomentTail { psi: TruncatedSeries, threshold: f64 },
}

impl CauchyEvaluator {
    pub fn from_measure(m: &SpectralMeasure) -> Self {
        CauchyEvaluator::Atoms(m.atoms().iter().map(|a| (a.x, a.w)).collect())
    }

    /// Moment-tail mode; `support_hint` is an estimate of the support radius
    /// and sets the validity threshold at `1.1 * hint`.
    pub fn from_moments(ms: &MomentSequence, support_hint: f64) -> Result<Self> {
        if !support_hint.is_finite() || support_hint <= 0.0 {
            return Err(Error::invalid(
                "moment-mode Cauchy evaluation needs a positive support-radius hint",
            ));
        }
        Ok(CauchyEvaluator::MomentTail {
            psi: psi_from_moments(ms),
            threshold: 1.1 * support_hint,
        })
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self {
            CauchyEvaluator::Atoms(atoms) => Ok(atoms
                .iter()
                .map(|&(x, w)| w / (z - x))
                .sum()),
            CauchyEvaluator::MomentTail { psi, threshold } => {
                if z.norm() <= *threshold {
                    return Err(Error::invalid(format!(
                        "|z| = {:.6} is inside the moment-mode validity threshold {:.6}",
                        z.norm(),
                        threshold
                    )));
                }
                let inv = 1.0 / z;
                Ok(inv * (psi.eval_complex(inv) + 1.0))
            }
        }
    }

    /// Smoothed spectral density `-Im G(x + i eps) / pi`.
    pub fn density(&self, x: f64, eps: f64) -> Result<f64> {
        let g = self.eval(Complex64::new(x, eps))?;
        Ok(-g.im / PI)
    }
}

/// Perron-Stieltjes inversion on a uniform grid: pairs `(x, density)` with
/// `density(x) = -(1/pi) Im G(x + i eps)`.
pub fn stieltjes_invert(
    g: &CauchyEvaluator,
    lo: f64,
    hi: f64,
    step: f64,
    eps: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps must be positive and finite"));
    }
    if !(step > 0.0 && step.is_finite() && lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::invalid("grid must be finite with lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = lo + step * i as f64;
        out.push((x, g.density(x, eps)?));
    }
    Ok(out)
}

/// Rightmost crossing of the density floor `10 eps / pi` for smoothing
/// width `eps_eval`, refined by bisection between grid points.
fn raw_edge(g: &CauchyEvaluator, eps: f64, eps_eval: f64, lo: f64, hi: f64) -> Result<Option<f64>> {
    let floor = 10.0 * eps / PI;
    let step = ((hi - lo) / 8192.0).max(eps_eval / 3.0);
    let n = ((hi - lo) / step).ceil() as usize + 1;
    // scan from the right for the first grid point above the floor
    let mut above_idx = None;
    for i in (0..n).rev() {
        let x = (lo + step * i as f64).min(hi);
        if g.density(x, eps_eval)? > floor {
            above_idx = Some(i);
            break;
        }
    }
    let Some(i) = above_idx else {
        return Ok(None);
    };
    let mut a = (lo + step * i as f64).min(hi);
    if i as f64 * step + lo >= hi {
        return Ok(Some(hi));
    }
    let mut b = (a + step).min(hi);
    // density crosses the floor inside (a, b]; bisect
    for _ in 0..60 {
        if b - a <= eps_eval / 100.0 {
            break;
        }
        let mid = 0.5 * (a + b);
        if g.density(mid, eps_eval)? > floor {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// Numerical support-edge detector: the rightmost point where the smoothed
/// density exceeds the floor `10 eps / pi`. The raw crossing overshoots the
/// true edge by an amount proportional to the smoothing width, so the
/// estimate is Richardson-refined from a second pass at `eps / 4`.
pub fn support_edge(g: &CauchyEvaluator, eps: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps must be positive and finite"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid("search range must be finite with lo < hi"));
    }
    let x1 = raw_edge(g, eps, eps, lo, hi)?.ok_or_else(|| {
        Error::invalid("no density above the detection floor anywhere in the search range")
    })?;
    let x2 = raw_edge(g, eps, eps / 4.0, lo, hi)?.unwrap_or(x1);
    // crossing distance scales with the smoothing width at a fixed floor:
    // extrapolate x(eps) and x(eps/4) linearly to zero width
    Ok(2.0 * x2 - x1)
}
