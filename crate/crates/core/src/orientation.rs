//! Normal → gripper-axis lookup and per-scene orientation sampling.
//!
//! Directions live on a lattice of azimuth `θ = ii·Δα − π` and polar angle
//! `φ = jj·Δα`. All pole directions (`jj = 0`) share the key `(0, 0)`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gripper::GripperSpec;
use crate::real::Real;
use crate::rotation::{angles_to_vec, vec_to_angles, zyz_rotation};
use crate::scene::{is_valid_vector, AffordanceScene};

/// Lattice cell of a direction: azimuth index and polar index.
pub type LatticeKey = (usize, usize);

const PARAM_TOLERANCE: f64 = 1e-12;

/// Direction lattice at angular step `step` (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    step: f64,
    n_theta: usize,
    n_phi: usize,
}

impl Lattice {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= PI / 4.0 + PARAM_TOLERANCE) {
            return Err(Error::InvalidConfig(format!(
                "angle interval {step} rad outside (0, π/4]"
            )));
        }
        Ok(Lattice {
            step,
            n_theta: ((2.0 * PI / step).round() as usize).max(1),
            n_phi: (FRAC_PI_2 / step + 1e-9).floor() as usize,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of azimuth (and spin) samples over a full turn.
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// Largest polar index.
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn theta(&self, ii: usize) -> f64 {
        ii as f64 * self.step - PI
    }

    pub fn phi(&self, jj: usize) -> f64 {
        jj as f64 * self.step
    }

    pub fn direction(&self, key: LatticeKey) -> Vector3<f64> {
        angles_to_vec(self.theta(key.0), self.phi(key.1))
    }

    /// Every distinct lattice direction, pole first.
    pub fn keys(&self) -> impl Iterator<Item = LatticeKey> + '_ {
        std::iter::once((0, 0))
            .chain((1..=self.n_phi).flat_map(move |jj| (0..self.n_theta).map(move |ii| (ii, jj))))
    }

    /// Nearest lattice key of an up-facing unit vector.
    pub fn key_of<T: Real>(&self, v: &Vector3<T>) -> Result<LatticeKey> {
        let (theta, phi) = vec_to_angles(v)?;
        let jj = ((phi.as_f64() / self.step).round() as usize).min(self.n_phi);
        if jj == 0 {
            return Ok((0, 0));
        }
        let ii = ((theta.as_f64() + PI) / self.step).round() as usize % self.n_theta;
        Ok((ii, jj))
    }
}

/// For every lattice normal, the lattice approach axes within `eps_normal` of it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalOrientationMap {
    lattice: Lattice,
    eps_normal: f64,
    entries: BTreeMap<LatticeKey, Vec<LatticeKey>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    angle_interval: f64,
    eps_normal: f64,
    entries: BTreeMap<String, Vec<[usize; 2]>>,
}

impl NormalOrientationMap {
    pub fn build(angle_interval: f64, eps_normal: f64) -> Result<Self> {
        let lattice = Lattice::new(angle_interval)?;
        if !(eps_normal > 0.0) {
            return Err(Error::InvalidConfig("eps_normal must be > 0".into()));
        }
        let keys: Vec<LatticeKey> = lattice.keys().collect();
        let dirs: Vec<Vector3<f64>> = keys.iter().map(|&k| lattice.direction(k)).collect();
        let entries = keys
            .iter()
            .zip(&dirs)
            .map(|(&key, n)| {
                let axes = keys
                    .iter()
                    .zip(&dirs)
                    .filter(|(_, g)| n.dot(g).clamp(-1.0, 1.0).acos() < eps_normal)
                    .map(|(&k, _)| k)
                    .collect();
                (key, axes)
            })
            .collect();
        Ok(NormalOrientationMap {
            lattice,
            eps_normal,
            entries,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn angle_interval(&self) -> f64 {
        self.lattice.step
    }

    pub fn eps_normal(&self) -> f64 {
        self.eps_normal
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn axes(&self, key: LatticeKey) -> &[LatticeKey] {
        self.entries.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (LatticeKey, &[LatticeKey])> {
        self.entries.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn matches(&self, angle_interval: f64, eps_normal: f64) -> bool {
        (self.lattice.step - angle_interval).abs() <= PARAM_TOLERANCE
            && (self.eps_normal - eps_normal).abs() <= PARAM_TOLERANCE
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MapFile {
            angle_interval: self.lattice.step,
            eps_normal: self.eps_normal,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (format!("{},{}", k.0, k.1), v.iter().map(|a| [a.0, a.1]).collect()))
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(s)?;
        let lattice = Lattice::new(file.angle_interval)?;
        let bad = |m: String| Error::InvalidConfig(format!("orientation map: {m}"));
        let in_range = |k: LatticeKey| {
            k.1 <= lattice.n_phi && k.0 < lattice.n_theta && (k.1 > 0 || k.0 == 0)
        };
        let mut entries = BTreeMap::new();
        for (name, axes) in file.entries {
            let key = name
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .filter(|&k| in_range(k))
                .ok_or_else(|| bad(format!("bad key `{name}`")))?;
            let axes: Vec<LatticeKey> = axes.into_iter().map(|a| (a[0], a[1])).collect();
            if let Some(a) = axes.iter().find(|&&a| !in_range(a)) {
                return Err(bad(format!("axis {a:?} out of range")));
            }
            entries.insert(key, axes);
        }
        Ok(NormalOrientationMap {
            lattice,
            eps_normal: file.eps_normal,
            entries,
        })
    }

    /// Reads the cache at `path` when it was built with the same parameters,
    /// otherwise builds the map and rewrites the cache.
    pub fn load_or_build(path: &Path, angle_interval: f64, eps_normal: f64) -> Result<Self> {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(map) = Self::from_json(&text) {
                if map.matches(angle_interval, eps_normal) {
                    return Ok(map);
                }
            }
        }
        let map = Self::build(angle_interval, eps_normal)?;
        std::fs::write(path, map.to_json()?).map_err(|e| Error::io(path, e))?;
        Ok(map)
    }
}

/// Gripper orientations to try, with their ZYZ angles.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSamples<T: Real> {
    pub rotations: Vec<Matrix3<T>>,
    /// `(θ, φ, γ)` per rotation.
    pub angles: Vec<[T; 3]>,
}

impl<T: Real> OrientationSamples<T> {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn from_angles(angles: Vec<[T; 3]>) -> Self {
        OrientationSamples {
            rotations: angles.iter().map(|a| zyz_rotation(a[0], a[1], a[2])).collect(),
            angles,
        }
    }
}

/// Occurrence count of each lattice key among the given normals. Non-finite
/// or down-facing normals are skipped.
pub fn count_normal_keys<'a, T: Real + 'a>(
    lattice: &Lattice,
    normals: impl IntoIterator<Item = &'a Vector3<T>>,
) -> BTreeMap<LatticeKey, usize> {
    let mut counts = BTreeMap::new();
    for n in normals {
        if !is_valid_vector(n) {
            continue;
        }
        if let Ok(key) = lattice.key_of(n) {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Keys whose count reaches the count of the `⌈fraction·n⌉`-th most frequent
/// key. At least one key is kept and ties at the threshold are all kept.
pub fn top_keys(counts: &BTreeMap<LatticeKey, usize>, fraction: f64) -> Vec<LatticeKey> {
    if counts.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<usize> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let keep = ((fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let threshold = sorted[keep - 1];
    counts
        .iter()
        .filter(|&(_, &c)| c >= threshold)
        .map(|(&k, _)| k)
        .collect()
}

/// Spin angles swept about each approach axis; half a turn when `half_turn`.
pub fn spin_angles(lattice: &Lattice, half_turn: bool) -> Vec<f64> {
    let n = if half_turn {
        lattice.n_theta.div_ceil(2)
    } else {
        lattice.n_theta
    };
    (0..n).map(|kk| lattice.theta(kk)).collect()
}

/// Orientation samples for a scene: the approach axes mapped from the most
/// frequent normal keys of affordance-positive pixels, each swept in spin.
pub fn sample_gripper_orientations<T: Real>(
    scene: &AffordanceScene<T>,
    map: &NormalOrientationMap,
    top_fraction: T,
    half_turn_spin: bool,
) -> OrientationSamples<T> {
    let normals = scene.masked_indices().into_iter().map(|i| &scene.normals()[i]);
    let counts = count_normal_keys(map.lattice(), normals);
    let keys = top_keys(&counts, top_fraction.as_f64());
    orientations_for_keys(map, &keys, half_turn_spin)
}

/// Union of mapped axes over `keys`, each swept over the spin angles.
pub fn orientations_for_keys<T: Real>(
    map: &NormalOrientationMap,
    keys: &[LatticeKey],
    half_turn_spin: bool,
) -> OrientationSamples<T> {
    let axes: BTreeSet<LatticeKey> = keys.iter().flat_map(|&k| map.axes(k).iter().copied()).collect();
    let lattice = map.lattice();
    let spins = spin_angles(lattice, half_turn_spin);
    let mut angles = Vec::with_capacity(axes.len() * spins.len());
    for &(ii, jj) in &axes {
        let theta = if jj == 0 { 0.0 } else { lattice.theta(ii) };
        for &gamma in &spins {
            angles.push([T::lit(theta), T::lit(lattice.phi(jj)), T::lit(gamma)]);
        }
    }
    OrientationSamples::from_angles(angles)
}

/// Whether the spin sweep may be halved for this gripper and config.
pub fn half_turn_spin<T: Real>(symmetric_gamma: bool, gripper: &GripperSpec<T>) -> bool {
    symmetric_gamma && gripper.is_centrally_symmetric()
}
