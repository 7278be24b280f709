//! Random-matrix Monte Carlo harness.
//!
//! Free variables are realized as independent Haar-orthogonal conjugations
//! of a fixed spectrum drawn from the base measure; asymptotic freeness then
//! makes the empirical norms converge to their free-probability values as
//! the dimension grows. Products are rescaled after every multiplication so
//! the accumulated log norm stays exact while entries stay bounded.

use crate::error::{Error, Result};
use crate::measure::SpectralMeasure;
use faer::Mat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ordinary product `Pi_n = X_1 X_2 ... X_n`.
    Product,
    /// Symmetric product `Y_n` via the `A^{1/2} B A^{1/2}` recursion.
    Symmetric,
    /// Ordinary product plus the image of a fixed random unit vector.
    Cyclic,
    /// Products of i.i.d. Gaussian matrices with entry variance `s^2 / N`.
    Ginibre,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseEnsemble {
    Measure(SpectralMeasure),
    Ginibre { s2: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub base: BaseEnsemble,
    pub dim: usize,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 || self.trials < 1 {
            return Err(Error::invalid("steps and trials must be at least 1"));
        }
        match (&self.base, self.mode) {
            (BaseEnsemble::Ginibre { s2 }, Mode::Ginibre) => {
                if !(s2.is_finite() && *s2 > 0.0) {
                    return Err(Error::invalid("Ginibre entry variance must be positive"));
                }
                if self.dim < 1 {
                    return Err(Error::invalid("dimension must be at least 1"));
                }
            }
            (BaseEnsemble::Ginibre { .. }, _) | (_, Mode::Ginibre) => {
                return Err(Error::invalid(
                    "ginibre mode and a Ginibre base must be used together",
                ));
            }
            (BaseEnsemble::Measure(m), mode) => {
                if self.dim < 2 {
                    return Err(Error::invalid("dimension must be at least 2"));
                }
                if mode == Mode::Symmetric && !m.is_nonnegative() {
                    return Err(Error::invalid(
                        "symmetric products need a measure on the nonnegative axis",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Stable digest of the full configuration; trials carry it so that
    /// aggregation can reject mixing results from different runs.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
    }
}

/// Per-step observables of one trial. `trace_gram` is
/// `N^{-1} tr(Pi_n* Pi_n)`, the matrix-model analogue of `E(Pi_n* Pi_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub op_norm: f64,
    pub log_op_norm: f64,
    pub trace_gram: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cyclic_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub steps: Vec<StepRecord>,
    pub wall_secs: f64,
    pub fingerprint: u64,
}

/// Dedicated RNG stream for one trial, derived deterministically from the
/// master seed and the trial index.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Deterministic proportional fill of the spectrum: `floor(w_a N)` copies of
/// each atom, remainder assigned one by one in order of descending weight.
pub fn spectrum_fill(m: &SpectralMeasure, dim: usize) -> Vec<f64> {
    let atoms = m.atoms();
    let mut counts: Vec<usize> = atoms
        .iter()
        .map(|a| (a.w * dim as f64).floor() as usize)
        .collect();
    let mut total: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&i, &j| atoms[j].w.total_cmp(&atoms[i].w));
    let mut cursor = 0;
    while total < dim {
        counts[order[cursor % order.len()]] += 1;
        cursor += 1;
        total += 1;
    }
    let mut spectrum = Vec::with_capacity(dim);
    for (a, &c) in atoms.iter().zip(&counts) {
        spectrum.extend(std::iter::repeat(a.x).take(c));
    }
    spectrum
}

fn gaussian_matrix(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut g = Mat::<f64>::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            let v: f64 = rng.sample(StandardNormal);
            g[(i, j)] = scale * v;
        }
    }
    g
}

/// Haar-orthogonal matrix: QR of a Gaussian matrix with the R-diagonal sign
/// correction that makes the distribution exactly Haar.
pub fn haar_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let g = gaussian_matrix(dim, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.compute_q();
    let r = qr.compute_r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `Q diag(d) Q^T` (or `Q diag(f(d)) Q^T` via the map applied to `d`).
fn conjugated_diagonal(q: &Mat<f64>, d: &[f64], f: impl Fn(f64) -> f64) -> Mat<f64> {
    let dim = q.nrows();
    let mut qd = Mat::<f64>::zeros(dim, dim);
    for j in 0..dim {
        let dj = f(d[j]);
        for i in 0..dim {
            qd[(i, j)] = q[(i, j)] * dj;
        }
    }
    &qd * q.transpose()
}

/// One realization of the base variable: a Haar conjugation of the
/// deterministic spectrum fill.
pub fn sample_free_factor(m: &SpectralMeasure, dim: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let d = spectrum_fill(m, dim);
    let q = haar_orthogonal(dim, rng);
    conjugated_diagonal(&q, &d, |x| x)
}

/// Largest singular value: power iteration on `M^T M` with a deterministic
/// start vector, falling back to the dense symmetric spectrum when the top
/// singular values cluster and the iteration stalls.
pub fn operator_norm(m: &Mat<f64>) -> Result<f64> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(Error::invalid("operator norm expects a square matrix"));
    }
    for j in 0..dim {
        for i in 0..dim {
            if !m[(i, j)].is_finite() {
                return Err(Error::numerical("matrix has non-finite entries"));
            }
        }
    }
    let mut v = faer::Col::<f64>::from_fn(dim, |i| 1.5 + (i as f64).cos());
    let norm = v.norm_l2();
    for i in 0..dim {
        v[i] /= norm;
    }
    let mut sigma_prev = f64::NAN;
    for iter in 0..200 {
        let w = m * &v;
        let sigma = w.norm_l2();
        if sigma == 0.0 {
            return Ok(0.0);
        }
        let mut v_next = m.transpose() * &w;
        let scale = v_next.norm_l2();
        if scale == 0.0 {
            return Ok(sigma);
        }
        for i in 0..dim {
            v_next[i] /= scale;
        }
        v = v_next;
        if iter > 0 && (sigma - sigma_prev).abs() <= 1e-12 * sigma {
            return Ok(sigma);
        }
        sigma_prev = sigma;
    }
    // clustered top singular values stall the iteration; fall back to the
    // full symmetric spectrum of M^T M
    let gram = m.transpose() * m;
    let eigs = gram.selfadjoint_eigenvalues(faer::Side::Lower);
    let top = eigs.iter().fold(0.0f64, |a, &e| a.max(e));
    if top.is_finite() {
        Ok(top.sqrt())
    } else {
        Err(Error::numerical("singular value computation failed"))
    }
}

struct Accumulator {
    log_scale: f64,
    steps: Vec<StepRecord>,
}

impl Accumulator {
    fn new(capacity: usize) -> Self {
        Accumulator {
            log_scale: 0.0,
            steps: Vec::with_capacity(capacity),
        }
    }

    /// Records the observables of the current (scaled) product and rescales
    /// it to unit operator norm, folding the factor into `log_scale`.
    fn record_and_rescale(
        &mut self,
        n: usize,
        p: &mut Mat<f64>,
        xi: Option<&faer::Col<f64>>,
    ) -> Result<()> {
        let op = operator_norm(p)?;
        if op == 0.0 {
            return Err(Error::numerical(format!(
                "product collapsed to the zero matrix at step {n}"
            )));
        }
        let log_op_norm = self.log_scale + op.ln();
        let dim = p.nrows() as f64;
        let frob = p.norm_l2();
        let trace_gram = (2.0 * self.log_scale).exp() * frob * frob / dim;
        let cyclic_norm = xi.map(|v| (p as &Mat<f64>) * v).map(|w| {
            self.log_scale.exp() * w.norm_l2()
        });
        if !log_op_norm.is_finite() {
            return Err(Error::numerical(format!("non-finite log norm at step {n}")));
        }
        self.steps.push(StepRecord {
            n,
            op_norm: log_op_norm.exp(),
            log_op_norm,
            trace_gram,
            cyclic_norm,
        });
        let inv = 1.0 / op;
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                p[(i, j)] *= inv;
            }
        }
        self.log_scale += op.ln();
        Ok(())
    }
}

fn random_unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> faer::Col<f64> {
    let mut v = faer::Col::<f64>::from_fn(dim, |_| 0.0);
    for i in 0..dim {
        v[i] = rng.sample(StandardNormal);
    }
    let norm = v.norm_l2();
    for i in 0..dim {
        v[i] /= norm;
    }
    v
}

/// Runs one trial of the configured experiment with its own deterministic
/// RNG stream.
pub fn run_trial(cfg: &SimulationConfig, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    if trial >= cfg.trials {
        return Err(Error::invalid(format!(
            "trial index {trial} out of range for {} trials",
            cfg.trials
        )));
    }
    let start = Instant::now();
    let mut rng = trial_rng(cfg.seed, trial);
    let fingerprint = cfg.fingerprint();
    let dim = cfg.dim;

    let mut acc = Accumulator::new(cfg.steps);
    match (&cfg.base, cfg.mode) {
        (BaseEnsemble::Measure(m), Mode::Product | Mode::Cyclic) => {
            let xi = (cfg.mode == Mode::Cyclic).then(|| random_unit_vector(dim, &mut rng));
            let mut p = sample_free_factor(m, dim, &mut rng);
            acc.record_and_rescale(1, &mut p, xi.as_ref())?;
            for n in 2..=cfg.steps {
                let f = sample_free_factor(m, dim, &mut rng);
                p = &p * &f;
                acc.record_and_rescale(n, &mut p, xi.as_ref())?;
            }
        }
        (BaseEnsemble::Measure(m), Mode::Symmetric) => {
            let l = m.support_radius();
            let d = spectrum_fill(m, dim);
            let q = haar_orthogonal(dim, &mut rng);
            let mut y = conjugated_diagonal(&q, &d, |x| x);
            acc.record_and_rescale(1, &mut y, None)?;
            for n in 2..=cfg.steps {
                let q = haar_orthogonal(dim, &mut rng);
                // square root of the fresh factor comes straight from its
                // spectral construction; clamp roundoff-negative eigenvalues
                let clamp = 1e-12 * l;
                let s = conjugated_diagonal(&q, &d, |x| {
                    if x < 0.0 && x > -clamp {
                        0.0
                    } else {
                        x.sqrt()
                    }
                });
                y = &s * &y * &s;
                // symmetrize away multiplication roundoff
                let yt = y.transpose().to_owned();
                for j in 0..dim {
                    for i in 0..dim {
                        y[(i, j)] = 0.5 * (y[(i, j)] + yt[(i, j)]);
                    }
                }
                let norm_est = y.norm_max();
                let min_diag = (0..dim).map(|i| y[(i, i)]).fold(f64::INFINITY, f64::min);
                if min_diag < -1e-10 * norm_est {
                    return Err(Error::numerical(format!(
                        "symmetric-product iterate lost positivity at step {n} (min diagonal {min_diag:.3e})"
                    )));
                }
                acc.record_and_rescale(n, &mut y, None)?;
            }
        }
        (BaseEnsemble::Ginibre { s2 }, Mode::Ginibre) => {
            let scale = (s2 / dim as f64).sqrt();
            let mut p = gaussian_matrix(dim, scale, &mut rng);
            acc.record_and_rescale(1, &mut p, None)?;
            for n in 2..=cfg.steps {
                let f = gaussian_matrix(dim, scale, &mut rng);
                p = &p * &f;
                acc.record_and_rescale(n, &mut p, None)?;
            }
        }
        _ => unreachable!("validate() rejects inconsistent base/mode pairs"),
    }

    Ok(TrialResult {
        trial,
        steps: acc.steps,
        wall_secs: start.elapsed().as_secs_f64(),
        fingerprint,
    })
}

/// Named entry point for the Gaussian-product comparison; the configuration
/// must be in ginibre mode.
pub fn run_ginibre_trial(cfg: &SimulationConfig, trial: usize) -> Result<TrialResult> {
    if cfg.mode != Mode::Ginibre {
        return Err(Error::invalid("run_ginibre_trial requires ginibre mode"));
    }
    run_trial(cfg, trial)
}

/// Runs every trial, in parallel when a rayon pool is available. Results are
/// ordered by trial index and bit-identical regardless of schedule.
pub fn run_all(cfg: &SimulationConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

fn stats_of(values: impl Iterator<Item = f64> + Clone) -> Stats {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values
        .clone()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Stats {
        mean,
        std: var.sqrt(),
        min: values.clone().fold(f64::INFINITY, f64::min),
        max: values.fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepStats {
    pub n: usize,
    pub log_op_norm: Stats,
    pub trace_gram: Stats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cyclic_norm: Option<Stats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub steps: Vec<StepStats>,
}

/// Deterministic per-step reduction over trials of one configuration.
pub fn aggregate(trials: &[TrialResult]) -> Result<Summary> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate zero trials"))?;
    if trials
        .iter()
        .any(|t| t.fingerprint != first.fingerprint || t.steps.len() != first.steps.len())
    {
        return Err(Error::invalid(
            "cannot aggregate trials from different configurations",
        ));
    }
    let steps = (0..first.steps.len())
        .map(|i| {
            let n = first.steps[i].n;
            let logs = trials.iter().map(move |t| t.steps[i].log_op_norm);
            let grams = trials.iter().map(move |t| t.steps[i].trace_gram);
            let cyclic = first.steps[i].cyclic_norm.is_some().then(|| {
                stats_of(
                    trials
                        .iter()
                        .map(move |t| t.steps[i].cyclic_norm.unwrap_or(f64::NAN)),
                )
            });
            StepStats {
                n,
                log_op_norm: stats_of(logs),
                trace_gram: stats_of(grams),
                cyclic_norm: cyclic,
            }
        })
        .collect();
    Ok(Summary {
        trials: trials.len(),
        steps,
    })
}

impl Summary {
    /// Least-squares slope of the mean log norm against n over `[n_lo, n_hi]`.
    pub fn log_norm_slope(&self, n_lo: usize, n_hi: usize) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .steps
            .iter()
            .filter(|s| s.n >= n_lo && s.n <= n_hi)
            .map(|s| (s.n as f64, s.log_op_norm.mean))
            .collect();
        if pts.len() < 2 {
            return Err(Error::invalid("slope needs at least two steps in range"));
        }
        let n = pts.len() as f64;
        let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / n, sy / n);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Ok(sxy / sxx)
    }

    /// `n^{-1} log |Pi_n|` at the final step, averaged over trials.
    pub fn final_growth(&self) -> Result<f64> {
        let last = self
            .steps
            .last()
            .ok_or_else(|| Error::invalid("summary has no steps"))?;
        Ok(last.log_op_norm.mean / last.n as f64)
    }
}
