//! Compactly supported spectral measures as weighted atoms, and the exact
//! moment sequences they generate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Position tolerance below which two atoms are merged into one.
const MERGE_TOL: f64 = 1e-12;

/// Default truncation order for moment sequences.
pub const DEFAULT_ORDER: usize = 32;

/// One weighted atom of a spectral measure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// A probability measure with finitely many atoms: the spectral law of a
/// bounded self-adjoint variable. Atoms are kept sorted by position, weights
/// normalized to total mass one.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    label: String,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureFile {
    label: String,
    atoms: Vec<Atom>,
}

impl SpectralMeasure {
    /// Builds a measure from parallel position/weight lists. Weights are
    /// rescaled to sum to one; atoms closer than 1e-12 are merged.
    pub fn from_atoms(label: &str, positions: &[f64], weights: &[f64]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        if positions.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if positions.iter().chain(weights).any(|v| !v.is_finite()) {
            return Err(Error::invalid("atom positions and weights must be finite"));
        }
        if let Some(w) = weights.iter().find(|&&w| w <= 0.0) {
            return Err(Error::invalid(format!("atom weight {w} is not positive")));
        }

        let mut atoms: Vec<Atom> = positions
            .iter()
            .zip(weights)
            .map(|(&x, &w)| Atom { x, w })
            .collect();
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));

        // Merge duplicates by weight addition.
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if (a.x - last.x).abs() <= MERGE_TOL => last.w += a.w,
                _ => merged.push(a),
            }
        }

        let total: f64 = merged.iter().map(|a| a.w).sum();
        for a in &mut merged {
            a.w /= total;
        }
        Ok(SpectralMeasure {
            label: label.to_string(),
            atoms: merged,
        })
    }

    /// Parses the measure JSON format:
    /// `{"label": "...", "atoms": [{"x": 0.0, "w": 0.5}, ...]}`.
    /// Unknown fields are rejected.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: MeasureFile = serde_json::from_str(json)?;
        let positions: Vec<f64> = raw.atoms.iter().map(|a| a.x).collect();
        let weights: Vec<f64> = raw.atoms.iter().map(|a| a.w).collect();
        Self::from_atoms(&raw.label, &positions, &weights)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Support radius `L = max |x_a|`.
    pub fn support_radius(&self) -> f64 {
        self.atoms.iter().map(|a| a.x.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.x).sum()
    }

    /// True when every atom sits on the nonnegative axis (up to roundoff).
    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.x >= -MERGE_TOL)
    }

    /// Exact moments `m_k = sum_a w_a x_a^k`, `k = 1..K`.
    pub fn moments(&self, k_max: usize) -> Result<MomentSequence> {
        if k_max < 1 {
            return Err(Error::invalid("moment order must be at least 1"));
        }
        let mut values = vec![0.0; k_max];
        for a in &self.atoms {
            let mut p = 1.0;
            for v in values.iter_mut() {
                p *= a.x;
                *v += a.w * p;
            }
        }
        MomentSequence::new(values)
    }

    /// Pushforward under `x -> c x`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() || c == 0.0 {
            return Err(Error::invalid("scale factor must be finite and nonzero"));
        }
        let positions: Vec<f64> = self.atoms.iter().map(|a| c * a.x).collect();
        let weights: Vec<f64> = self.atoms.iter().map(|a| a.w).collect();
        Self::from_atoms(&self.label, &positions, &weights)
    }

    /// Rescales to mean one, returning the measure of `X / E(X)` and the
    /// scale factor `E(X)` that was divided out.
    pub fn normalized_to_mean_one(&self) -> Result<(Self, f64)> {
        let mean = self.mean();
        if mean.abs() < 1e-12 {
            return Err(Error::ZeroMean);
        }
        Ok((self.scaled(1.0 / mean)?, mean))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure serialization cannot fail")
    }
}

/// A truncated moment sequence `m_1 .. m_K` with `m_0 = 1` implicit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSequence {
    values: Vec<f64>,
}

impl MomentSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("moment sequence needs at least m_1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("moments must be finite"));
        }
        Ok(MomentSequence { values })
    }

    /// Truncation order K.
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// `m_k` for `1 <= k <= K`; `m_0 = 1`.
    pub fn m(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn truncated(&self, k_max: usize) -> Result<Self> {
        if k_max < 1 || k_max > self.order() {
            return Err(Error::invalid(format!(
                "cannot truncate order {} moments to order {k_max}",
                self.order()
            )));
        }
        Ok(MomentSequence {
            values: self.values[..k_max].to_vec(),
        })
    }

    /// `(m_1, m_2 - m_1^2)`; variance clamped to zero when within -1e-12.
    pub fn mean_variance(&self) -> Result<(f64, f64)> {
        if self.order() < 2 {
            return Err(Error::invalid("mean/variance needs moments up to order 2"));
        }
        let mean = self.m(1);
        let mut var = self.m(2) - mean * mean;
        if var < 0.0 && var >= -1e-12 {
            var = 0.0;
        }
        Ok((mean, var))
    }

    /// Positive-semidefiniteness gate on the Hankel matrix `H_ij = m_{i+j}`,
    /// `0 <= i,j <= floor(K/2)`. Returns the verdict and the smallest
    /// eigenvalue.
    pub fn hankel_psd_check(&self) -> Result<(bool, f64)> {
        if self.order() < 2 {
            return Err(Error::invalid("Hankel check needs moments up to order 2"));
        }
        let p = self.order() / 2;
        let h = faer::Mat::<f64>::from_fn(p + 1, p + 1, |i, j| self.m(i + j));
        let eigs = h.selfadjoint_eigenvalues(faer::Side::Lower);
        let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let norm = eigs.iter().map(|e| e.abs()).fold(0.0, f64::max);
        Ok((min_eig >= -1e-9 * norm, min_eig))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn bernoulli() -> SpectralMeasure {
        SpectralMeasure::from_atoms("bernoulli", &[0.0, 2.0], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn point_mass_identity() {
        let d = SpectralMeasure::from_atoms("delta1", &[1.0], &[1.0]).unwrap();
        assert_eq!(d.atoms().len(), 1);
        assert_eq!(d.support_radius(), 1.0);
        let ms = d.moments(4).unwrap();
        assert_eq!(ms.values(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn bernoulli_two_atoms() {
        let b = bernoulli();
        assert_eq!(b.support_radius(), 2.0);
        let ms = b.moments(4).unwrap();
        assert_eq!(ms.values(), &[1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn weights_normalized() {
        let b = SpectralMeasure::from_atoms("b", &[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(b.atoms()[0].w, 0.5);
        assert_eq!(b.atoms()[1].w, 0.5);
    }

    #[test]
    fn duplicates_merged() {
        let m = SpectralMeasure::from_atoms("m", &[1.0, 1.0 + 1e-15, 2.0], &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[0].w, 0.5);
    }

    #[test]
    fn zero_measure_moments() {
        let z = SpectralMeasure::from_atoms("zero", &[0.0], &[1.0]).unwrap();
        let ms = z.moments(4).unwrap();
        assert_eq!(ms.values(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(SpectralMeasure::from_atoms("e", &[], &[]).is_err());
        assert!(SpectralMeasure::from_atoms("e", &[1.0], &[]).is_err());
        assert!(SpectralMeasure::from_atoms("e", &[f64::NAN], &[1.0]).is_err());
        assert!(SpectralMeasure::from_atoms("e", &[1.0], &[0.0]).is_err());
        assert!(SpectralMeasure::from_atoms("e", &[1.0], &[-0.5]).is_err());
    }

    #[test]
    fn support_radius_absolute_value() {
        let m = SpectralMeasure::from_atoms("m", &[-3.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(m.support_radius(), 3.0);
    }

    #[test]
    fn mean_variance_examples() {
        let d1 = MomentSequence::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d1.mean_variance().unwrap(), (1.0, 0.0));
        let b = MomentSequence::new(vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert_eq!(b.mean_variance().unwrap(), (1.0, 1.0));
        let scaled = MomentSequence::new(vec![2.0, 8.0]).unwrap();
        assert_eq!(scaled.mean_variance().unwrap(), (2.0, 4.0));
        assert!(MomentSequence::new(vec![1.0]).unwrap().mean_variance().is_err());
    }

    #[test]
    fn hankel_examples() {
        let d1 = MomentSequence::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let (ok, min_eig) = d1.hankel_psd_check().unwrap();
        assert!(ok);
        assert!(min_eig.abs() < 1e-12);

        let b = MomentSequence::new(vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(b.hankel_psd_check().unwrap().0);

        // [[1,1],[1,0.5]] has det -0.5
        let bad = MomentSequence::new(vec![1.0, 0.5]).unwrap();
        let (ok, min_eig) = bad.hankel_psd_check().unwrap();
        assert!(!ok);
        assert!(min_eig < -0.1);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let json = r#"{"label": "bernoulli", "atoms": [{"x": 0.0, "w": 0.5}, {"x": 2.0, "w": 0.5}]}"#;
        let m = SpectralMeasure::from_json(json).unwrap();
        assert_eq!(m.label(), "bernoulli");
        assert_eq!(m.atoms().len(), 2);
        let again = SpectralMeasure::from_json(&m.to_json()).unwrap();
        assert_eq!(again.atoms()[1].x, 2.0);

        let bad = r#"{"label": "x", "atoms": [{"x": 1.0, "w": 1.0}], "extra": 1}"#;
        assert!(SpectralMeasure::from_json(bad).is_err());
        let bad_atom = r#"{"label": "x", "atoms": [{"x": 1.0, "w": 1.0, "z": 2}]}"#;
        assert!(SpectralMeasure::from_json(bad_atom).is_err());
    }

    #[test]
    fn normalized_to_mean_one() {
        let m = SpectralMeasure::from_atoms("2b", &[0.0, 4.0], &[0.5, 0.5]).unwrap();
        let (unit, scale) = m.normalized_to_mean_one().unwrap();
        assert_eq!(scale, 2.0);
        assert!((unit.mean() - 1.0).abs() < 1e-15);
    }

    fn arb_measure() -> impl Strategy<Value = SpectralMeasure> {
        prop::collection::vec((0.01f64..10.0, 0.05f64..1.0), 1..8).prop_map(|atoms| {
            let (p, w): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
            SpectralMeasure::from_atoms("rand", &p, &w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn moments_permutation_invariant(
            atoms in prop::collection::vec((0.0f64..5.0, 0.1f64..1.0), 2..6),
            k in 1usize..10,
        ) {
            let (p, w): (Vec<f64>, Vec<f64>) = atoms.iter().copied().unzip();
            let m1 = SpectralMeasure::from_atoms("a", &p, &w).unwrap();
            let (rp, rw): (Vec<f64>, Vec<f64>) =
                atoms.iter().rev().copied().unzip();
            let m2 = SpectralMeasure::from_atoms("a", &rp, &rw).unwrap();
            let a = m1.moments(k).unwrap();
            let b = m2.moments(k).unwrap();
            for i in 1..=k {
                prop_assert!((a.m(i) - b.m(i)).abs() <= 1e-12 * a.m(i).abs().max(1.0));
            }
        }

        #[test]
        fn moments_scale_as_powers(m in arb_measure(), c in 0.1f64..4.0) {
            let base = m.moments(8).unwrap();
            let scaled = m.scaled(c).unwrap().moments(8).unwrap();
            let mut ck = 1.0;
            for k in 1..=8 {
                ck *= c;
                let expect = ck * base.m(k);
                prop_assert!((scaled.m(k) - expect).abs() <= 1e-9 * expect.abs().max(1.0));
            }
        }

        #[test]
        fn moment_bound_for_mean_one(m in arb_measure()) {
            // rescale to mean 1, then m_k <= L^{k-1}
            let (unit, _) = m.normalized_to_mean_one().unwrap();
            let l = unit.support_radius();
            let ms = unit.moments(DEFAULT_ORDER).unwrap();
            let mut lk = 1.0;
            for k in 1..=DEFAULT_ORDER {
                prop_assert!(ms.m(k) <= lk * (1.0 + 1e-12));
                lk *= l;
            }
        }

        #[test]
        fn hankel_psd_for_generated_sequences(m in arb_measure(), k in 2usize..16) {
            let ms = m.moments(k).unwrap();
            prop_assert!(ms.hankel_psd_check().unwrap().0);
        }
    }
}
