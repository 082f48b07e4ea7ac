//! Local identifiability of the IMU-odometer extrinsics.
//!
//! With the IMU bias known, each epoch gives virtual body-frame rates
//! `(v̌, ω̌)`. Perturbing the extrinsic translation and rotation changes the
//! predicted odometer rates through the 6×6 block
//!
//! ```text
//! M(t) = | R_mb ⌊ω̌×⌋    ⌊R_mb (v̌ + ⌊ω̌×⌋ p_bm)×⌋ |
//!        |     0          ⌊R_mb ω̌×⌋              |
//! ```
//!
//! and the stacked matrix has full column rank iff the extrinsics are
//! locally identifiable. Under planar motion the translation along the
//! rotation axis is lost.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use crate::geomath::{skew, Mat3, Vec3};

pub type Mat6 = SMatrix<f64, 6, 6>;

pub const PARAMETER_NAMES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualBodyRates {
    pub t: f64,
    pub v: Vec3,
    pub w: Vec3,
}

/// One observability block. `r_mb` rotates body vectors into the mount frame.
pub fn obs_block(rates: &VirtualBodyRates, r_mb: &Mat3, p_bm: &Vec3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r_mb * skew(&rates.w)));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&(r_mb * (rates.v + skew(&rates.w) * p_bm))));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&skew(&(r_mb * rates.w)));
    m
}

/// Re-expresses the translation columns in mount-frame axes, so that the
/// vehicle up axis is the third parameter regardless of the mounting tilt.
pub fn to_mount_axes(block: &Mat6, r_mb: &Mat3) -> Mat6 {
    let mut t = Mat6::identity();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_mb.transpose());
    block * t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub blocks: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
    /// Orthonormal basis of the numerical null space.
    pub null_basis: Vec<Vec<f64>>,
    pub identifiable: [bool; 6],
}

impl ObservabilityReport {
    /// Largest |cosine| between a null vector and parameter axis `k`.
    pub fn null_alignment(&self, k: usize) -> f64 {
        self.null_basis.iter().map(|v| v[k].abs()).fold(0.0, f64::max)
    }
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const NULL_COMPONENT_TOL: f64 = 1e-3;

/// Stacks blocks and computes the SVD-based rank (relative tolerance `tol`).
pub fn stack_and_rank(blocks: &[Mat6], tol: f64) -> ObservabilityReport {
    let n = blocks.len();
    let mut m = DMatrix::<f64>::zeros(6 * n.max(1), 6);
    for (i, b) in blocks.iter().enumerate() {
        m.view_mut((6 * i, 0), (6, 6)).copy_from(b);
    }
    let svd = m.svd(false, true);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = sv[0];
    let rank = if smax > 0.0 { sv.iter().filter(|&&s| s > tol * smax).count() } else { 0 };
    let null_basis: Vec<Vec<f64>> = order[rank..].iter().map(|&i| vt.row(i).iter().copied().collect()).collect();
    let mut identifiable = [true; 6];
    for (k, flag) in identifiable.iter_mut().enumerate() {
        *flag = null_basis.iter().all(|v| v[k].abs() <= NULL_COMPONENT_TOL);
    }
    ObservabilityReport { blocks: n, singular_values: sv, rank, tolerance: tol, null_basis, identifiable }
}

/// Convenience: blocks for a rate series in mount axes, then rank analysis.
pub fn analyze(rates: &[VirtualBodyRates], r_mb: &Mat3, p_bm: &Vec3, tol: f64) -> ObservabilityReport {
    let blocks: Vec<Mat6> = rates.iter().map(|r| to_mount_axes(&obs_block(r, r_mb, p_bm), r_mb)).collect();
    stack_and_rank(&blocks, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub parameter: String,
    pub prior_std: f64,
    pub posterior_std: f64,
    pub empirically_observable: bool,
    /// Analytic flag from the rank analysis, when the parameter is covered by it.
    pub analytic: Option<bool>,
    pub mismatch: bool,
}

/// Ratio of posterior to prior standard deviation at or above which a
/// parameter is judged unobservable.
pub const UNOBSERVABLE_RATIO: f64 = 0.8;

/// Compares end-of-run posterior stds with the rank analysis. `names`,
/// `prior` and `posterior` are parallel; the first six entries are the
/// extrinsics in [`PARAMETER_NAMES`] order.
pub fn empirical_crosscheck(
    names: &[&str],
    prior: &[f64],
    posterior: &[f64],
    report: Option<&ObservabilityReport>,
) -> Vec<Verdict> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let observable = posterior[i] < UNOBSERVABLE_RATIO * prior[i];
            let analytic = report.filter(|_| i < 6).map(|r| r.identifiable[i]);
            Verdict {
                parameter: name.to_string(),
                prior_std: prior[i],
                posterior_std: posterior[i],
                empirically_observable: observable,
                analytic,
                mismatch: analytic.is_some_and(|a| a != observable),
            }
        })
        .collect()
}

/// First time a std series drops below the unobservability ratio of `prior`.
pub fn convergence_onset(times: &[f64], stds: &[f64], prior: f64) -> Option<f64> {
    times.iter().zip(stds).find(|(_, &s)| s < UNOBSERVABLE_RATIO * prior).map(|(&t, _)| t)
}
