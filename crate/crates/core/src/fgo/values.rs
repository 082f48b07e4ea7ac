//! Variable keys, their current values and the tangent-space ordering used
//! by the solver.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, SVector};

use super::state::{CalibState, NavState};
use crate::geomath::{log_so3, quat_boxplus, quat_to_rot, Quat, Vec3};
use crate::gnss::SatId;

/// Epoch index of a window state.
pub type Epoch = usize;

/// One estimated variable. The derived order is the column order of the
/// normal equations: calibration first, then states, then ambiguities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    /// `[p_bm, θ_bm]`.
    Extrinsic,
    Lever,
    Nav(Epoch),
    /// Receiver clock drift in m/s.
    Clock(Epoch),
    /// `[s_v, s_ω]` valid from this epoch to the next.
    Scale(Epoch),
    /// Single-differenced ambiguity (cycles) of one carrier arc.
    Amb(SatId, u8, u32),
}

impl Key {
    pub fn dim(&self) -> usize {
        match self {
            Key::Extrinsic => 6,
            Key::Lever => 3,
            Key::Nav(_) => 15,
            Key::Clock(_) => 1,
            Key::Scale(_) => 2,
            Key::Amb(..) => 1,
        }
    }

    pub fn epoch(&self) -> Option<Epoch> {
        match *self {
            Key::Nav(e) | Key::Clock(e) | Key::Scale(e) => Some(e),
            _ => None,
        }
    }
}

/// Current values of every variable, estimated or held fixed.
#[derive(Debug, Clone)]
pub struct Values {
    pub p_bm: Vec3,
    pub q_bm: Quat,
    pub lever: Vec3,
    pub nav: BTreeMap<Epoch, NavState>,
    pub clock: BTreeMap<Epoch, f64>,
    pub scale: BTreeMap<Epoch, [f64; 2]>,
    pub amb: BTreeMap<(SatId, u8, u32), f64>,
}

impl Values {
    pub fn new(p_bm: Vec3, q_bm: Quat, lever: Vec3) -> Self {
        Self {
            p_bm,
            q_bm,
            lever,
            nav: BTreeMap::new(),
            clock: BTreeMap::new(),
            scale: BTreeMap::new(),
            amb: BTreeMap::new(),
        }
    }

    pub fn nav(&self, e: Epoch) -> &NavState {
        &self.nav[&e]
    }

    pub fn scale(&self, e: Epoch) -> [f64; 2] {
        self.scale[&e]
    }

    pub fn amb(&self, k: &Key) -> f64 {
        match k {
            Key::Amb(s, b, a) => self.amb[&(*s, *b, *a)],
            _ => panic!("{k:?} is not an ambiguity"),
        }
    }

    /// Calibration view with the scale factors of epoch `e`.
    pub fn calib(&self, e: Epoch) -> CalibState {
        let [s_v, s_w] = self.scale.get(&e).copied().unwrap_or([0.0, 0.0]);
        CalibState { s_v, s_w, p_bm: self.p_bm, q_bm: self.q_bm, lever: Some(self.lever) }
    }

    pub fn contains(&self, k: &Key) -> bool {
        match k {
            Key::Extrinsic | Key::Lever => true,
            Key::Nav(e) => self.nav.contains_key(e),
            Key::Clock(e) => self.clock.contains_key(e),
            Key::Scale(e) => self.scale.contains_key(e),
            Key::Amb(s, b, a) => self.amb.contains_key(&(*s, *b, *a)),
        }
    }

    pub fn remove(&mut self, k: &Key) {
        match k {
            Key::Extrinsic | Key::Lever => {}
            Key::Nav(e) => {
                self.nav.remove(e);
            }
            Key::Clock(e) => {
                self.clock.remove(e);
            }
            Key::Scale(e) => {
                self.scale.remove(e);
            }
            Key::Amb(s, b, a) => {
                self.amb.remove(&(*s, *b, *a));
            }
        }
    }

    /// Applies a tangent increment to one variable.
    pub fn retract(&mut self, k: &Key, d: &[f64]) {
        debug_assert_eq!(d.len(), k.dim());
        match k {
            Key::Extrinsic => {
                self.p_bm += Vec3::new(d[0], d[1], d[2]);
                self.q_bm = quat_boxplus(&self.q_bm, &Vec3::new(d[3], d[4], d[5]));
            }
            Key::Lever => self.lever += Vec3::new(d[0], d[1], d[2]),
            Key::Nav(e) => {
                let x = self.nav.get_mut(e).expect("nav state");
                *x = x.boxplus(&SVector::<f64, 15>::from_column_slice(d));
            }
            Key::Clock(e) => *self.clock.get_mut(e).expect("clock") += d[0],
            Key::Scale(e) => {
                let s = self.scale.get_mut(e).expect("scale");
                s[0] += d[0];
                s[1] += d[1];
            }
            Key::Amb(s, b, a) => *self.amb.get_mut(&(*s, *b, *a)).expect("ambiguity") += d[0],
        }
    }

    /// Tangent difference `self ⊟ lin` for one variable.
    pub fn local(&self, k: &Key, lin: &Values) -> Vec<f64> {
        let rot = |a: &Quat, b: &Quat| log_so3(&(quat_to_rot(b).transpose() * quat_to_rot(a)));
        match k {
            Key::Extrinsic => {
                let dp = self.p_bm - lin.p_bm;
                let dt = rot(&self.q_bm, &lin.q_bm);
                vec![dp.x, dp.y, dp.z, dt.x, dt.y, dt.z]
            }
            Key::Lever => (self.lever - lin.lever).iter().copied().collect(),
            Key::Nav(e) => {
                let (a, b) = (self.nav(*e), lin.nav(*e));
                let mut out = Vec::with_capacity(15);
                out.extend((a.p - b.p).iter());
                out.extend((a.v - b.v).iter());
                out.extend(rot(&a.q, &b.q).iter());
                out.extend((a.ba - b.ba).iter());
                out.extend((a.bg - b.bg).iter());
                out
            }
            Key::Clock(e) => vec![self.clock[e] - lin.clock[e]],
            Key::Scale(e) => {
                let (a, b) = (self.scale(*e), lin.scale(*e));
                vec![a[0] - b[0], a[1] - b[1]]
            }
            Key::Amb(..) => vec![self.amb(k) - lin.amb(k)],
        }
    }

    /// Copies the listed variables from `other`.
    pub fn copy_from(&mut self, other: &Values, keys: impl IntoIterator<Item = Key>) {
        for k in keys {
            match k {
                Key::Extrinsic => {
                    self.p_bm = other.p_bm;
                    self.q_bm = other.q_bm;
                }
                Key::Lever => self.lever = other.lever,
                Key::Nav(e) => {
                    self.nav.insert(e, other.nav(e).clone());
                }
                Key::Clock(e) => {
                    self.clock.insert(e, other.clock[&e]);
                }
                Key::Scale(e) => {
                    self.scale.insert(e, other.scale(e));
                }
                Key::Amb(s, b, a) => {
                    self.amb.insert((s, b, a), other.amb(&k));
                }
            }
        }
    }
}

/// Column offsets of the estimated variables.
#[derive(Debug, Clone, Default)]
pub struct Ordering {
    pub offsets: BTreeMap<Key, usize>,
    pub dim: usize,
}

impl Ordering {
    pub fn new(keys: &BTreeSet<Key>) -> Self {
        let mut offsets = BTreeMap::new();
        let mut dim = 0;
        for k in keys {
            offsets.insert(*k, dim);
            dim += k.dim();
        }
        Self { offsets, dim }
    }

    pub fn get(&self, k: &Key) -> Option<usize> {
        self.offsets.get(k).copied()
    }

    /// Applies a stacked increment to all ordered variables.
    pub fn retract(&self, values: &mut Values, dx: &DVector<f64>) {
        for (k, &o) in &self.offsets {
            values.retract(k, &dx.as_slice()[o..o + k.dim()]);
        }
    }
}
