//! Quantitative norm bounds for products and symmetric products of free
//! variables: the linear/sqrt(n) sandwich for symmetric products, the
//! exponential-rate bounds for ordinary products, the exact cyclic-vector
//! norm, the proof-constant inequality suite, and the Gaussian-ensemble
//! Lyapunov constant used for the random-matrix comparison.

use crate::error::{Error, Result};
use crate::freeconv;
use crate::measure::{MomentSequence, SpectralMeasure};
use crate::series::TruncatedSeries;
use crate::transforms::psi_from_moments;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Explicit constant from the symmetric-product support bound. Proven, not
/// sharp.
pub const SUPPORT_CONSTANT: f64 = 102.0;

/// Explicit constant in the product-norm upper bound. Proven, not sharp.
pub const PRODUCT_CONSTANT: f64 = 11.0;

fn require_mean_one(m: &SpectralMeasure) -> Result<()> {
    if !m.is_nonnegative() {
        return Err(Error::invalid(
            "measure must be supported on the nonnegative axis",
        ));
    }
    if (m.mean() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "measure must have mean 1 (found {}); rescale first",
            m.mean()
        )));
    }
    Ok(())
}

/// Norm bounds for the n-fold symmetric product of a mean-1 positive
/// variable: `sigma(X) sqrt(n) <= |Y_n| <= 102 L n`.
pub fn theorem1_bounds(m: &SpectralMeasure, n: u32) -> Result<(f64, f64)> {
    require_mean_one(m)?;
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let (_, var) = m.moments(2)?.mean_variance()?;
    let lower = var.sqrt() * (n as f64).sqrt();
    let upper = SUPPORT_CONSTANT * m.support_radius() * n as f64;
    Ok((lower, upper))
}

/// Norm bounds for the ordinary product `Pi_n`, carried in log space since
/// `[E(X*X)]^{n/2}` overflows doubles near n ~ 2000.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem2Bounds {
    pub lower_log: f64,
    pub upper_log: f64,
    /// Relative spread `gamma = sigma(X*X / E(X*X))` of the Gram law.
    pub gamma: f64,
    /// True when `gamma = 0` makes the lower bound vacuous.
    pub lower_vacuous: bool,
}

impl Theorem2Bounds {
    pub fn lower(&self) -> f64 {
        if self.lower_vacuous {
            0.0
        } else {
            self.lower_log.exp()
        }
    }

    pub fn upper(&self) -> f64 {
        self.upper_log.exp()
    }
}

/// `gamma^{1/2} n^{1/4} [E(X*X)]^{n/2} <= |Pi_n| <= 11 |X| sqrt(n)
/// [E(X*X)]^{(n-1)/2}`, from the Gram moments and the operator norm of X.
pub fn theorem2_bounds(gram: &MomentSequence, x_norm: f64, n: u32) -> Result<Theorem2Bounds> {
    let m1 = gram.m(1);
    if m1 <= 0.0 {
        return Err(Error::invalid("E(X*X) must be positive"));
    }
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if x_norm < m1.sqrt() * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "operator norm {x_norm} is below sqrt(E(X*X)) = {}; inconsistent input",
            m1.sqrt()
        )));
    }
    // gamma is the standard deviation of the normalized Gram law X*X/E(X*X)
    let rel_var = (gram.m(2) / (m1 * m1) - 1.0).max(0.0);
    let gamma = rel_var.sqrt();
    let nf = n as f64;
    let upper_log = PRODUCT_CONSTANT.ln() + x_norm.ln() + 0.5 * nf.ln() + (nf - 1.0) / 2.0 * m1.ln();
    let lower_vacuous = gamma == 0.0;
    let lower_log = if lower_vacuous {
        f64::NEG_INFINITY
    } else {
        0.5 * gamma.ln() + 0.25 * nf.ln() + nf / 2.0 * m1.ln()
    };
    Ok(Theorem2Bounds {
        lower_log,
        upper_log,
        gamma,
        lower_vacuous,
    })
}

/// The exponential growth rate `lim n^{-1} log |Pi_n| = log sqrt(E(X*X))`.
pub fn growth_rate(gram: &MomentSequence) -> Result<f64> {
    if gram.m(1) <= 0.0 {
        return Err(Error::invalid("E(X*X) must be positive"));
    }
    Ok(0.5 * gram.m(1).ln())
}

/// Exact cyclic-vector norm `|pi(Pi_n) xi| = [E(X*X)]^{n/2}`, valid for
/// every n with no limit taken.
pub fn cyclic_vector_norm(gram_m1: f64, n: u32) -> Result<f64> {
    Ok(cyclic_vector_norm_log(gram_m1, n)?.exp())
}

/// Log of the exact cyclic-vector norm, `(n/2) log E(X*X)`.
pub fn cyclic_vector_norm_log(gram_m1: f64, n: u32) -> Result<f64> {
    if !(gram_m1 > 0.0 && gram_m1.is_finite()) {
        return Err(Error::invalid("E(X*X) must be positive and finite"));
    }
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(n as f64 / 2.0 * gram_m1.ln())
}

/// One inequality from the support-bound proof, checked numerically.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    /// Smallest margin observed over all sample points; negative means the
    /// inequality failed somewhere.
    pub worst_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProofReport {
    pub n: u32,
    pub support_radius: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ProofReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Evaluates psi exactly from atoms: `psi(z) = sum_a w_a / (1 - z x_a) - 1`.
fn psi_exact(m: &SpectralMeasure, z: Complex64) -> Complex64 {
    m.atoms()
        .iter()
        .map(|a| a.w / (Complex64::new(1.0, 0.0) - z * a.x))
        .sum::<Complex64>()
        - 1.0
}

fn sample_disk(radius: f64, samples: usize, boundary_only: bool) -> Vec<Complex64> {
    let radii: &[f64] = if boundary_only {
        &[1.0]
    } else {
        &[0.25, 0.5, 0.75, 1.0]
    };
    let mut pts = Vec::with_capacity(radii.len() * samples);
    for &f in radii {
        for j in 0..samples {
            let theta = 2.0 * PI * j as f64 / samples as f64;
            pts.push(Complex64::from_polar(radius * f, theta));
        }
    }
    pts
}

/// Numerically verifies the seven inequalities behind the support bound for
/// a mean-1 measure on `[0, L]` and a given fold count `n >= 2`, sampling
/// each stated disk or circle. All are proven for admissible inputs, so a
/// negative slack indicates a defect, not a counterexample.
pub fn verify_proof_inequalities(
    m: &SpectralMeasure,
    n: u32,
    samples: usize,
) -> Result<ProofReport> {
    require_mean_one(m)?;
    if n < 2 {
        return Err(Error::invalid("the inequality suite needs n >= 2"));
    }
    if samples < 64 {
        return Err(Error::invalid("need at least 64 sample points per circle"));
    }
    let l = m.support_radius();
    let nf = n as f64;

    let order = 32;
    let psi_series = psi_from_moments(&m.moments(order)?);
    let psi_inv: TruncatedSeries = psi_series.lagrange_invert()?;
    let s_eval = |u: Complex64| -> Complex64 {
        let pi_u = psi_inv.eval_complex(u);
        (1.0 + u) * pi_u / u
    };

    let r_psi = 1.0 / (4.0 * l);
    let r_u = 1.0 / (72.0 * l * nf);
    let tol = -1e-10;
    let mut checks = Vec::new();
    let mut push = |name: &'static str, worst: f64| {
        checks.push(InequalityCheck {
            name,
            worst_slack: worst,
            passed: worst >= tol,
        });
    };

    // |psi(z) - z| <= |z|/3 on |z| <= (4L)^{-1}
    let worst = sample_disk(r_psi, samples, false)
        .iter()
        .map(|&z| z.norm() / 3.0 - (psi_exact(m, z) - z).norm())
        .fold(f64::INFINITY, f64::min);
    push("psi_perturbation_disk", worst);

    // |psi(z)| >= (6L)^{-1} on |z| = (4L)^{-1}
    let worst = sample_disk(r_psi, samples, true)
        .iter()
        .map(|&z| psi_exact(m, z).norm() - 1.0 / (6.0 * l))
        .fold(f64::INFINITY, f64::min);
    push("psi_lower_on_circle", worst);

    let disk_u = sample_disk(r_u, samples, false);
    let circle_u = sample_disk(r_u, samples, true);

    // |psi^{-1}(u)/u - 1| <= 1/(7n)
    let worst = disk_u
        .iter()
        .map(|&u| 1.0 / (7.0 * nf) - (psi_inv.eval_complex(u) / u - 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    push("psi_inv_ratio", worst);

    // |1 - S(u)| <= 1/(6n)
    let worst = disk_u
        .iter()
        .map(|&u| 1.0 / (6.0 * nf) - (1.0 - s_eval(u)).norm())
        .fold(f64::INFINITY, f64::min);
    push("s_near_one", worst);

    // e^{1/6} >= |S(u)|^n >= e^{-1/3}
    let worst = disk_u
        .iter()
        .map(|&u| {
            let sn = s_eval(u).norm().powi(n as i32);
            ((1.0f64 / 6.0).exp() - sn).min(sn - (-1.0f64 / 3.0).exp())
        })
        .fold(f64::INFINITY, f64::min);
    push("s_power_window", worst);

    // |S(u)^n - 1| <= 1/5
    let worst = disk_u
        .iter()
        .map(|&u| 0.2 - (s_eval(u).powu(n) - 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    push("s_power_near_one", worst);

    // |psi_n^{-1}(u)| >= (102 L n)^{-1} on |u| = (72 L n)^{-1}
    let worst = circle_u
        .iter()
        .map(|&u| {
            let psi_n_inv = u * s_eval(u).powu(n) / (1.0 + u);
            psi_n_inv.norm() - 1.0 / (SUPPORT_CONSTANT * l * nf)
        })
        .fold(f64::INFINITY, f64::min);
    push("psi_n_inv_lower", worst);

    Ok(ProofReport {
        n,
        support_radius: l,
        checks,
    })
}

/// Digamma function for positive arguments: recurrence up to x >= 10, then
/// the asymptotic series. Absolute error below 1e-12.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid("digamma needs a positive finite argument"));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum B_{2k}/(2k x^{2k})
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    Ok(acc + x.ln() - 0.5 * inv - series)
}

/// The Lyapunov constant for products of k x k Gaussian matrices with i.i.d.
/// N(0, s^2) entries, and its large-k comparison value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CohenNewmanLambda {
    /// `(1/2){log s^2 + log 2 + digamma(k/2)}`
    pub lambda: f64,
    /// `(1/2) log(k s^2)`, the large-k asymptote.
    pub large_k: f64,
}

pub fn cohen_newman_lambda(k: u32, s2: f64) -> Result<CohenNewmanLambda> {
    if k < 1 {
        return Err(Error::invalid("matrix size k must be at least 1"));
    }
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::invalid("entry variance must be positive and finite"));
    }
    let lambda = 0.5 * (s2.ln() + 2.0f64.ln() + digamma(k as f64 / 2.0)?);
    let large_k = 0.5 * (k as f64 * s2).ln();
    Ok(CohenNewmanLambda { lambda, large_k })
}

/// One row of a norm-bounds report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundsRow {
    pub n: u32,
    pub y_lower: f64,
    pub y_upper: f64,
    pub pi_lower_log: f64,
    pub pi_upper_log: f64,
    pub cyclic_exact_log: f64,
}

/// Per-n theoretical bounds for a mean-1 self-adjoint base measure, plus the
/// scalar inputs they derive from.
#[derive(Debug, Clone, Serialize)]
pub struct NormBoundsReport {
    pub support_radius: f64,
    pub sigma: f64,
    /// `s2 = E(X*X)`.
    pub s2: f64,
    pub gamma: f64,
    pub growth_rate: f64,
    pub rows: Vec<BoundsRow>,
}

/// Builds the full report for `n` in `[n_lo, n_hi]`, using `L` as the
/// operator norm of the atomic base variable.
pub fn norm_bounds_report(m: &SpectralMeasure, n_lo: u32, n_hi: u32) -> Result<NormBoundsReport> {
    require_mean_one(m)?;
    if n_lo < 1 || n_lo > n_hi {
        return Err(Error::invalid("need 1 <= n_lo <= n_hi"));
    }
    let (_, var) = m.moments(2)?.mean_variance()?;
    let gram = freeconv::gram_base(m, 2)?;
    let x_norm = m.support_radius();
    let rate = growth_rate(&gram)?;
    let mut rows = Vec::with_capacity((n_hi - n_lo + 1) as usize);
    let mut gamma = 0.0;
    for n in n_lo..=n_hi {
        let (y_lower, y_upper) = theorem1_bounds(m, n)?;
        let t2 = theorem2_bounds(&gram, x_norm, n)?;
        gamma = t2.gamma;
        let row = BoundsRow {
            n,
            y_lower,
            y_upper,
            pi_lower_log: t2.lower_log,
            pi_upper_log: t2.upper_log,
            cyclic_exact_log: cyclic_vector_norm_log(gram.m(1), n)?,
        };
        if row.y_lower > row.y_upper || row.pi_lower_log > row.pi_upper_log {
            return Err(Error::numerical(format!(
                "bound ordering violated at n = {n}"
            )));
        }
        rows.push(row);
    }
    Ok(NormBoundsReport {
        support_radius: m.support_radius(),
        sigma: var.sqrt(),
        s2: gram.m(1),
        gamma,
        growth_rate: rate,
        rows,
    })
}
