//! Schur-complement marginalization into a linear prior factor.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::factors::{linearize, Factor, FactorKind};
use super::solver::{normal_equations, Graph};
use super::values::{Key, Ordering, Values};
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
const EIG_REL_TOL: f64 = 1e-12;

/// Linear prior `r = r₀ + J (x ⊟ x_lin)` left by marginalization. The
/// Jacobian stays at its first estimate.
#[derive(Debug, Clone)]
pub struct MarginalFactor {
    pub keys: Vec<Key>,
    pub lin: Values,
    pub j: DMatrix<f64>,
    pub r0: DVector<f64>,
}

impl Factor for MarginalFactor {
    fn kind(&self) -> FactorKind {
        FactorKind::Marginal
    }
    fn keys(&self) -> Vec<Key> {
        self.keys.clone()
    }
    fn evaluate(&self, v: &Values) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let dx: Vec<f64> = self.keys.iter().flat_map(|k| v.local(k, &self.lin)).collect();
        let r = &self.r0 + &self.j * DVector::from_vec(dx);
        let mut off = 0;
        let blocks = self
            .keys
            .iter()
            .map(|k| {
                let b = self.j.columns(off, k.dim()).into_owned();
                off += k.dim();
                b
            })
            .collect();
        (r, blocks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub removed: Vec<Key>,
    pub kept: Vec<Key>,
    pub factors: usize,
    /// Most negative eigenvalue clamped to zero (relative to the largest).
    pub clamped: f64,
    pub rank: usize,
}

/// Inverse of a symmetric PSD matrix, falling back to the pseudo-inverse.
fn psd_pinv(h: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = h.clone().cholesky() {
        return c.inverse();
    }
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|s| if s > EIG_REL_TOL * max { 1.0 / s } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Marginalizes `remove` out of the graph: every factor touching one of
/// these keys is linearized at the current values, folded into a
/// [`MarginalFactor`] on the remaining keys, and dropped.
pub fn marginalize(graph: &mut Graph, remove: &BTreeSet<Key>) -> Result<MarginalReport> {
    let touching: Vec<usize> = graph
        .factors
        .iter()
        .enumerate()
        .filter(|(_, f)| f.keys().iter().any(|k| remove.contains(k)))
        .map(|(i, _)| i)
        .collect();
    let involved: BTreeSet<Key> = touching
        .iter()
        .flat_map(|&i| graph.factors[i].keys())
        .filter(|k| !graph.fixed.contains(k))
        .collect();
    let m_keys: Vec<Key> = involved.iter().filter(|k| remove.contains(k)).copied().collect();
    let k_keys: Vec<Key> = involved.iter().filter(|k| !remove.contains(k)).copied().collect();

    // Removed block first, kept block second.
    let mut ord = Ordering::default();
    for k in m_keys.iter().chain(&k_keys) {
        ord.offsets.insert(*k, ord.dim);
        ord.dim += k.dim();
    }
    let lins: Vec<_> = touching.iter().map(|&i| linearize(graph.factors[i].as_ref(), &graph.values)).collect();
    let (h, g, _) = normal_equations(&lins, &ord);
    let m: usize = m_keys.iter().map(Key::dim).sum();
    let n = ord.dim - m;

    let hmm = h.view((0, 0), (m, m)).into_owned();
    let hkm = h.view((m, 0), (n, m)).into_owned();
    let hkk = h.view((m, m), (n, n)).into_owned();
    let hmm_inv = psd_pinv(&hmm);
    let mut hs = hkk - &hkm * &hmm_inv * hkm.transpose();
    hs = 0.5 * (&hs + hs.transpose());
    let gs = g.rows(m, n) - &hkm * &hmm_inv * g.rows(0, m);
    if !hs.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("non-finite Schur complement".into()));
    }

    // Jacobi scaling keeps weakly informed directions above the rank cut.
    let d = DVector::from_fn(n, |i, _| 1.0 / hs[(i, i)].max(1e-300).sqrt());
    let hs = DMatrix::from_fn(n, n, |r, c| hs[(r, c)] * d[r] * d[c]);
    let eig = SymmetricEigen::new(hs);
    let max = eig.eigenvalues.amax().max(1e-300);
    let min = eig.eigenvalues.min();
    let clamped = (min / max).min(0.0);
    if clamped < -1e-8 {
        log::warn!("marginal prior: clamped eigenvalue {:.3e} of {:.3e}", min, max);
    }
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > EIG_REL_TOL * max).collect();
    let mut j = DMatrix::zeros(keep.len(), n);
    let mut r0 = DVector::zeros(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        j.row_mut(row).copy_from(&(v.component_div(&d).transpose() * s.sqrt()));
        r0[row] = v.component_mul(&d).dot(&gs) / s.sqrt();
    }

    let mut kept_idx: BTreeSet<usize> = (0..graph.factors.len()).collect();
    for i in &touching {
        kept_idx.remove(i);
    }
    let old = std::mem::take(&mut graph.factors);
    graph.factors = old.into_iter().enumerate().filter(|(i, _)| kept_idx.contains(i)).map(|(_, f)| f).collect();
    let rank = keep.len();
    if rank > 0 {
        graph.factors.push(Box::new(MarginalFactor { keys: k_keys.clone(), lin: graph.values.clone(), j, r0 }));
    }
    for k in remove {
        graph.values.remove(k);
    }
    Ok(MarginalReport { removed: m_keys, kept: k_keys, factors: touching.len(), clamped, rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{all_factors, random_values};
    use crate::fgo::factors::{NavPrior, VectorPrior};
    use crate::fgo::solver::marginal_covariance;
    use nalgebra::SVector;
    use rand::SeedableRng;

    #[test]
    fn marginal_prior_matches_dense_schur_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let v = random_values(&mut rng);
        let mut graph = Graph::new(v.clone());
        for f in all_factors(&mut rng, &v) {
            graph.factors.push(f);
        }
        // Make the full problem well posed.
        for e in 0..2 {
            graph.add(NavPrior { epoch: e, mean: v.nav(e).clone(), sigma: SVector::from_element(1.0) });
            graph.add(VectorPrior { key: Key::Clock(e), mean: vec![0.0], sigma: vec![100.0] });
            graph.add(VectorPrior { key: Key::Scale(e), mean: vec![0.0; 2], sigma: vec![0.1; 2] });
        }
        let (a, b) = crate::validation::amb_keys();
        for k in [a, b] {
            graph.add(VectorPrior { key: k, mean: vec![0.0], sigma: vec![1e3] });
        }
        let kept = [Key::Extrinsic, Key::Lever, Key::Nav(1), Key::Clock(1)];
        // Oracle: covariance of the kept keys from the full information matrix.
        let full = marginal_covariance(&graph, &kept).unwrap();

        let remove: BTreeSet<Key> = [Key::Nav(0), Key::Clock(0), Key::Scale(0), Key::Scale(1), a, b].into_iter().collect();
        let rep = marginalize(&mut graph, &remove).unwrap();
        assert!(rep.clamped > -1e-8);
        assert!(!graph.values.nav.contains_key(&0));
        let after = marginal_covariance(&graph, &kept).unwrap();
        let rel = (&after - &full).norm() / full.norm();
        assert!(rel < 1e-6, "relative covariance difference {rel:e}");
        let mf = graph.factors.last().unwrap();
        assert_eq!(mf.kind(), FactorKind::Marginal);
    }
}
