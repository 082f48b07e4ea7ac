//! Integer ambiguity resolution.
//!
//! Double-differenced float ambiguities are decorrelated with an integer
//! unimodular transform (LᵀDL reduction with integer Gauss transforms and
//! permutations), the two best integer candidates are found by depth-first
//! search with a shrinking radius, and the fix is validated with the ratio
//! test `q₂ / q₁ ≥ threshold`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gnss::SatId;
use crate::{Error, Result};

/// Variance of the fixed-ambiguity factor (cycles²).
pub const AR_VARIANCE: f64 = 1e-6;

/// Float DD ambiguities `a = G a_SD` with covariance `Q = G Q_SD Gᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatAmbiguitySet {
    pub a: DVector<f64>,
    pub q: DMatrix<f64>,
    /// `(reference, satellite, band)` of every DD ambiguity.
    pub pairs: Vec<(SatId, SatId, u8)>,
    /// Row of the SD vector for each pair's reference and satellite.
    pub sd_index: Vec<(usize, usize)>,
}

impl FloatAmbiguitySet {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Restriction to a subset of DD ambiguities.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let n = idx.len();
        Self {
            a: DVector::from_fn(n, |i, _| self.a[idx[i]]),
            q: DMatrix::from_fn(n, n, |i, j| self.q[(idx[i], idx[j])]),
            pairs: idx.iter().map(|&i| self.pairs[i]).collect(),
            sd_index: idx.iter().map(|&i| self.sd_index[i]).collect(),
        }
    }
}

/// Builds DD ambiguities from SD ambiguities. `keys[i]` names row `i` of
/// `a_sd`; `refs` gives the reference satellite per (constellation, band).
pub fn sd_to_dd(
    keys: &[(SatId, u8)],
    a_sd: &DVector<f64>,
    q_sd: &DMatrix<f64>,
    refs: &BTreeMap<(char, u8), SatId>,
) -> Result<FloatAmbiguitySet> {
    let n = keys.len();
    if a_sd.len() != n || q_sd.nrows() != n || q_sd.ncols() != n {
        return Err(Error::InvalidInput("SD ambiguity dimensions disagree".into()));
    }
    let mut pairs = Vec::new();
    let mut sd_index = Vec::new();
    for (&(cons, band), &rsat) in refs {
        let Some(ri) = keys.iter().position(|&k| k == (rsat, band)) else {
            continue;
        };
        for (j, &(sat, b)) in keys.iter().enumerate() {
            if b == band && sat.constellation == cons && j != ri {
                if sat == rsat {
                    return Err(Error::Degenerate(format!("duplicate SD ambiguity for {sat} L{band}")));
                }
                pairs.push((rsat, sat, band));
                sd_index.push((ri, j));
            }
        }
    }
    let m = pairs.len();
    let mut g = DMatrix::<f64>::zeros(m, n);
    for (row, &(i, j)) in sd_index.iter().enumerate() {
        g[(row, j)] = 1.0;
        g[(row, i)] = -1.0;
    }
    let a = &g * a_sd;
    let q = &g * q_sd * g.transpose();
    if m > 0 && q.clone().cholesky().is_none() {
        return Err(Error::Degenerate("DD ambiguity covariance is singular".into()));
    }
    Ok(FloatAmbiguitySet { a, q, pairs, sd_index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixResult {
    pub best: Vec<i64>,
    pub second: Vec<i64>,
    pub q1: f64,
    pub q2: f64,
    pub ratio: f64,
    pub accepted: bool,
    /// Indices into the float set that the fix covers.
    pub indices: Vec<usize>,
    pub diagnostic: Option<String>,
}

/// Decorrelation result: `Q = Lᵀ diag(D) L` in the transformed space `z = Zᵀ a`.
#[derive(Debug, Clone)]
pub struct Decorrelation {
    pub z: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// `Q = Lᵀ diag(D) L` with unit lower-triangular `L`.
pub fn ltdl(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = q.nrows();
    let mut a = q.clone();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut d = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        d[i] = a[(i, i)];
        if !(d[i] > 0.0) {
            return Err(Error::Numerical("ambiguity covariance is not positive definite".into()));
        }
        let s = d[i].sqrt();
        for j in 0..=i {
            l[(i, j)] = a[(i, j)] / s;
        }
        for j in 0..i {
            for k in 0..=j {
                a[(j, k)] -= l[(i, k)] * l[(i, j)];
            }
        }
        let lii = l[(i, i)];
        for j in 0..=i {
            l[(i, j)] /= lii;
        }
    }
    Ok((l, d))
}

fn round(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn gauss(l: &mut DMatrix<f64>, z: &mut DMatrix<f64>, i: usize, j: usize) {
    let mu = round(l[(i, j)]);
    if mu != 0.0 {
        let n = l.nrows();
        for k in i..n {
            l[(k, j)] -= mu * l[(k, i)];
        }
        for k in 0..n {
            z[(k, j)] -= mu * z[(k, i)];
        }
    }
}

fn permute(l: &mut DMatrix<f64>, d: &mut DVector<f64>, j: usize, del: f64, z: &mut DMatrix<f64>) {
    let n = l.nrows();
    let eta = d[j] / del;
    let lam = d[j + 1] * l[(j + 1, j)] / del;
    d[j] = eta * d[j + 1];
    d[j + 1] = del;
    for k in 0..j {
        let a0 = l[(j, k)];
        let a1 = l[(j + 1, k)];
        l[(j, k)] = -l[(j + 1, j)] * a0 + a1;
        l[(j + 1, k)] = eta * a0 + lam * a1;
    }
    l[(j + 1, j)] = lam;
    for k in j + 2..n {
        l.swap((k, j), (k, j + 1));
    }
    z.swap_columns(j, j + 1);
}

pub fn decorrelate(q: &DMatrix<f64>) -> Result<Decorrelation> {
    let n = q.nrows();
    let (mut l, mut d) = ltdl(q)?;
    let mut z = DMatrix::<f64>::identity(n, n);
    if n < 2 {
        return Ok(Decorrelation { z, l, d });
    }
    let mut j = n as isize - 2;
    let mut k = n as isize - 2;
    while j >= 0 {
        let ju = j as usize;
        if j <= k {
            for i in ju + 1..n {
                gauss(&mut l, &mut z, i, ju);
            }
        }
        let del = d[ju] + l[(ju + 1, ju)].powi(2) * d[ju + 1];
        if del + 1e-6 < d[ju + 1] {
            permute(&mut l, &mut d, ju, del, &mut z);
            k = j;
            j = n as isize - 2;
        } else {
            j -= 1;
        }
    }
    Ok(Decorrelation { z, l, d })
}

/// Two best integer vectors of `(z − ẑ)ᵀ (LᵀDL)⁻¹ (z − ẑ)`, sorted by cost.
fn search(l: &DMatrix<f64>, d: &DVector<f64>, zs: &DVector<f64>) -> Result<[(Vec<f64>, f64); 2]> {
    const LOOP_MAX: usize = 1_000_000;
    let n = zs.len();
    let m = 2;
    let sgn = |x: f64| if x <= 0.0 { -1.0 } else { 1.0 };
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut dist = vec![0.0; n];
    let mut zb = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut found: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m);
    let mut imax = 0;
    let mut maxdist = f64::INFINITY;

    let mut k = n - 1;
    zb[k] = zs[k];
    z[k] = round(zb[k]);
    let mut y = zb[k] - z[k];
    step[k] = sgn(y);
    let mut finished = false;
    for _ in 0..LOOP_MAX {
        let newdist = dist[k] + y * y / d[k];
        if newdist < maxdist {
            if k != 0 {
                k -= 1;
                dist[k] = newdist;
                for i in 0..=k {
                    s[(k, i)] = s[(k + 1, i)] + (z[k + 1] - zb[k + 1]) * l[(k + 1, i)];
                }
                zb[k] = zs[k] + s[(k, k)];
                z[k] = round(zb[k]);
                y = zb[k] - z[k];
                step[k] = sgn(y);
            } else {
                if found.len() < m {
                    if found.is_empty() || newdist > found[imax].1 {
                        imax = found.len();
                    }
                    found.push((z.clone(), newdist));
                    if found.len() == m {
                        maxdist = found[imax].1;
                    }
                } else if newdist < found[imax].1 {
                    found[imax] = (z.clone(), newdist);
                    imax = if found[0].1 < found[1].1 { 1 } else { 0 };
                    maxdist = found[imax].1;
                }
                z[0] += step[0];
                y = zb[0] - z[0];
                step[0] = -step[0] - sgn(step[0]);
            }
        } else if k == n - 1 {
            finished = true;
            break;
        } else {
            k += 1;
            z[k] += step[k];
            y = zb[k] - z[k];
            step[k] = -step[k] - sgn(step[k]);
        }
    }
    if !finished || found.len() < m {
        return Err(Error::Numerical("integer search did not terminate".into()));
    }
    found.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok([found[0].clone(), found[1].clone()])
}

/// Condition number of a symmetric positive definite matrix.
fn condition(q: &DMatrix<f64>) -> f64 {
    let e = q.clone().symmetric_eigen().eigenvalues;
    let max = e.max();
    let min = e.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub const MAX_CONDITION: f64 = 1e12;

/// Integer least-squares fix with ratio-test validation.
pub fn ils_fix(amb: &FloatAmbiguitySet, ratio_threshold: f64) -> Result<FixResult> {
    let n = amb.dim();
    if n == 0 {
        return Err(Error::InvalidInput("no ambiguities to fix".into()));
    }
    let indices: Vec<usize> = (0..n).collect();
    let cond = condition(&amb.q);
    if !(cond <= MAX_CONDITION) {
        return Ok(FixResult {
            best: Vec::new(),
            second: Vec::new(),
            q1: f64::NAN,
            q2: f64::NAN,
            ratio: 0.0,
            accepted: false,
            indices,
            diagnostic: Some(format!("covariance condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")),
        });
    }
    let dec = decorrelate(&amb.q)?;
    let zhat = dec.z.transpose() * &amb.a;
    let [(z1, q1), (z2, q2)] = search(&dec.l, &dec.d, &zhat)?;
    // ǎ = Z⁻ᵀ ž; Z is unimodular so the inverse is integer.
    let zt_inv = dec
        .z
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular decorrelation".into()))?;
    let back = |z: &[f64]| -> Vec<i64> {
        let v = &zt_inv * DVector::from_column_slice(z);
        v.iter().map(|x| x.round() as i64).collect()
    };
    let ratio = if q1 > 0.0 { q2 / q1 } else { f64::INFINITY };
    Ok(FixResult {
        best: back(&z1),
        second: back(&z2),
        q1,
        q2,
        ratio,
        accepted: ratio >= ratio_threshold,
        indices,
        diagnostic: None,
    })
}

/// Full-set fix; if the ratio test fails, retries on the ambiguities whose
/// satellite elevation exceeds `min_elevation`.
pub fn ils_fix_partial(
    amb: &FloatAmbiguitySet,
    elevations: &[f64],
    ratio_threshold: f64,
    min_elevation: f64,
) -> Result<FixResult> {
    let full = ils_fix(amb, ratio_threshold)?;
    if full.accepted {
        return Ok(full);
    }
    let idx: Vec<usize> = (0..amb.dim()).filter(|&i| elevations[i] > min_elevation).collect();
    if idx.is_empty() || idx.len() == amb.dim() {
        return Ok(full);
    }
    let mut sub = ils_fix(&amb.subset(&idx), ratio_threshold)?;
    sub.indices = idx;
    Ok(if sub.accepted { sub } else { full })
}

/// Whitened fixed-ambiguity residual `(Ň_DD − (N_j − N_i)) / σ` and its
/// Jacobian w.r.t. `(N_i, N_j)`.
pub fn ar_residual(fixed: i64, n_ref: f64, n_sat: f64) -> (f64, [f64; 2]) {
    let s = AR_VARIANCE.sqrt();
    ((fixed as f64 - (n_sat - n_ref)) / s, [1.0 / s, -1.0 / s])
}

/// Appends fix-log rows: epoch, dimension, q1, q2, ratio, accepted, integers.
pub fn write_fix_log<W: Write>(w: &mut W, t: f64, fix: &FixResult) -> Result<()> {
    let ints: Vec<String> = fix.best.iter().map(|v| v.to_string()).collect();
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        t,
        fix.indices.len(),
        fix.q1,
        fix.q2,
        fix.ratio,
        u8::from(fix.accepted),
        ints.join(" ")
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::validation::random_q;

    fn set(a: &[f64], q: DMatrix<f64>) -> FloatAmbiguitySet {
        let n = a.len();
        let s = SatId::new('G', 1);
        FloatAmbiguitySet { a: DVector::from_column_slice(a), q, pairs: vec![(s, s, 1); n], sd_index: vec![(0, 0); n] }
    }

    #[test]
    fn sd_to_dd_arithmetic() {
        let keys = [(SatId::new('G', 1), 1), (SatId::new('G', 2), 1)];
        let a = DVector::from_column_slice(&[5.2, 3.1]);
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.04, 0.09]));
        let refs = BTreeMap::from([(('G', 1), SatId::new('G', 1))]);
        let dd = sd_to_dd(&keys, &a, &q, &refs).unwrap();
        assert!((dd.a[0] + 2.1).abs() < 1e-12);
        assert!((dd.q[(0, 0)] - 0.13).abs() < 1e-12);

        let one = sd_to_dd(&keys[..1], &a.rows(0, 1).into_owned(), &q.view((0, 0), (1, 1)).into_owned(), &refs).unwrap();
        assert_eq!(one.dim(), 0);
    }

    #[test]
    fn sd_to_dd_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let keys: Vec<_> = (1..=6).map(|i| (SatId::new('G', i), 1u8)).collect();
        let q = random_q(&mut rng, 6);
        let a = DVector::from_fn(6, |_, _| rng.random_range(-10.0..10.0));
        let refs = BTreeMap::from([(('G', 1), SatId::new('G', 4))]);
        let dd = sd_to_dd(&keys, &a, &q, &refs).unwrap();
        assert_eq!(dd.dim(), 5);
        assert_eq!(dd.q.rank(1e-10), 5);
        assert!(dd.q.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn simple_fixes() {
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.01, 0.01]));
        let f = ils_fix(&set(&[1.2, 3.8], q), 3.0).unwrap();
        assert_eq!(f.best, vec![1, 4]);
        assert!(f.q1 <= f.q2);

        let q = DMatrix::identity(3, 3) * 1e-4;
        let f = ils_fix(&set(&[2.0, -7.0, 11.0], q), 3.0).unwrap();
        assert_eq!(f.best, vec![2, -7, 11]);
        assert!(f.accepted && f.ratio > 1e3);
    }

    #[test]
    fn ill_conditioned_is_rejected() {
        let mut q = DMatrix::identity(2, 2);
        q[(1, 1)] = 1e-13;
        let f = ils_fix(&set(&[0.1, 0.2], q), 3.0).unwrap();
        assert!(!f.accepted);
        assert!(f.diagnostic.is_some());
    }

    #[test]
    fn decorrelation_is_unimodular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=6 {
            let q = random_q(&mut rng, n);
            let dec = decorrelate(&q).unwrap();
            assert!((dec.z.determinant().abs() - 1.0).abs() < 1e-9);
            assert!(dec.z.iter().all(|v| (v - v.round()).abs() < 1e-12));
            let qz = dec.z.transpose() * &q * &dec.z;
            let rebuilt = dec.l.transpose() * DMatrix::from_diagonal(&dec.d) * &dec.l;
            assert!((qz - rebuilt).abs().max() < 1e-9);
        }
    }

    #[test]
    fn ratio_threshold_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let q = random_q(&mut rng, 4);
            let a = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
            let s = set(a.as_slice(), q);
            let mut prev = true;
            for thr in [1.0, 1.5, 2.0, 3.0, 5.0, 10.0] {
                let acc = ils_fix(&s, thr).unwrap().accepted;
                assert!(prev || !acc);
                prev = acc;
            }
        }
    }

    #[test]
    fn ar_residual_scaling() {
        assert_eq!(ar_residual(3, 1.0, 4.0).0, 0.0);
        let (r, j) = ar_residual(3, 1.0, 5.0);
        assert!((r + 1000.0).abs() < 1e-9);
        assert!((j[0] - 1000.0).abs() < 1e-9 && (j[1] + 1000.0).abs() < 1e-9);
    }
}
