//! Brute-force references: direct candidate enumeration and first-principles
//! grasp condition checks.

use nalgebra::Vector3;

use crate::candidate::{CandidateSource, GraspCandidate};
use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::gripper::GripperSpec;
use crate::orientation::OrientationSamples;
use crate::real::Real;
use crate::scene::{is_valid_vector, AffordanceScene};
use crate::voxel::VoxelGrid;

pub const MAX_ORACLE_CELLS: usize = 64 * 64 * 64;
pub const MAX_ORACLE_ORIENTATIONS: usize = 128;

/// Identity of a multi-cup candidate: orientation index, TCP cell, activation.
pub type CandidateKey = (usize, [usize; 3], Vec<bool>);

pub fn candidate_key<T: Real>(c: &GraspCandidate<T>) -> Option<CandidateKey> {
    match c.source {
        CandidateSource::MultiCup { orientation, cell } => Some((orientation, cell, c.activation.clone())),
        CandidateSource::SingleCupFallback { .. } => None,
    }
}

/// Places the TCP at every cell centre for every orientation and marks a cup
/// active when the cell holding its rotated centre is occupied. When two cups
/// share a cell only the lower-index cup can activate.
pub fn brute_force_candidates<T: Real>(
    grid: &VoxelGrid<T>,
    samples: &OrientationSamples<T>,
    gripper: &GripperSpec<T>,
    voxel_size: T,
) -> Result<Vec<GraspCandidate<T>>> {
    if grid.cell_count() > MAX_ORACLE_CELLS || samples.len() > MAX_ORACLE_ORIENTATIONS {
        return Err(Error::TooLarge(format!(
            "{} cells × {} orientations exceeds {} × {}",
            grid.cell_count(),
            samples.len(),
            MAX_ORACLE_CELLS,
            MAX_ORACLE_ORIENTATIONS
        )));
    }
    let dims = grid.dims();
    let mut out = Vec::new();
    for (n, o) in samples.rotations.iter().enumerate() {
        // cell step of each cup from the TCP cell, nearest cell
        let mut steps: Vec<Option<[i64; 3]>> = Vec::with_capacity(gripper.cup_count());
        for c in gripper.cup_centers() {
            let r = o * c;
            let s = [
                (r.x / voxel_size + T::lit(0.5)).floor().as_f64() as i64,
                (r.y / voxel_size + T::lit(0.5)).floor().as_f64() as i64,
                (r.z / voxel_size + T::lit(0.5)).floor().as_f64() as i64,
            ];
            let taken = steps.iter().flatten().any(|t| *t == s);
            steps.push(if taken { None } else { Some(s) });
        }
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    let activation: Vec<bool> = steps
                        .iter()
                        .map(|s| {
                            s.is_some_and(|s| {
                                let t = [x as i64 + s[0], y as i64 + s[1], z as i64 + s[2]];
                                grid.contains(t) && grid.is_occupied(t.map(|v| v as usize))
                            })
                        })
                        .collect();
                    if activation.iter().filter(|&&a| a).count() >= 2 {
                        out.push(GraspCandidate::new(
                            grid.cell_center([x, y, z]),
                            *o,
                            gripper,
                            activation,
                            CandidateSource::MultiCup { orientation: n, cell: [x, y, z] },
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Contact found for one active cup.
#[derive(Debug, Clone, PartialEq)]
pub struct CupContact<T: Real> {
    pub cup: usize,
    /// Pixel index of the nearest affordance-masked point, if any.
    pub pixel: Option<usize>,
    /// Distance from the cup centre to that point.
    pub gap: T,
    /// Angle between the contact normal and the approach axis (NaN when unknown).
    pub angle: T,
    /// `| ‖contact − P‖ − ‖C⁰ᵢ‖ |`.
    pub distance_residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T: Real> {
    /// At least two active cups touch affordable points within `l·√3`.
    pub contacts: bool,
    /// Active cups and TCP lie in the plane orthogonal to the approach axis.
    pub coplanar: bool,
    /// Every active contact normal is within `ε₁` of the approach axis.
    pub normals: bool,
    /// Every active contact distance matches its cup offset within `ε₂`.
    pub distances: bool,
    /// Stored cup centres equal `O·C⁰ + P`.
    pub centers_consistent: bool,
    pub coplanarity_residual: T,
    pub max_angle: T,
    pub max_distance_residual: T,
    pub cups: Vec<CupContact<T>>,
}

impl<T: Real> ConditionReport<T> {
    pub fn all(&self) -> bool {
        self.contacts && self.coplanar && self.normals && self.distances && self.centers_consistent
    }
}

const CENTER_TOLERANCE: f64 = 1e-9;

/// Re-derives the grasp conditions from the scene alone, using a linear scan
/// for contact points.
pub fn check_conditions<T: Real>(
    c: &GraspCandidate<T>,
    scene: &AffordanceScene<T>,
    config: &PlannerConfig<T>,
    gripper: &GripperSpec<T>,
) -> ConditionReport<T> {
    let l = config.voxel_size;
    let reach = l * T::lit(3f64.sqrt());
    let axis: Vector3<T> = c.orientation.column(2).into_owned();
    let masked = scene.masked_indices();
    let points = scene.points();

    let mut centers_consistent = c.cup_centers.len() == gripper.cup_count();
    let mut cups = Vec::new();
    let mut coplanarity = T::zero();
    for (i, &active) in c.activation.iter().enumerate() {
        let local = gripper.cup_centers()[i];
        let center = c.orientation * local + c.position;
        if c.cup_centers.get(i).is_none_or(|s| (s - center).norm() > T::lit(CENTER_TOLERANCE)) {
            centers_consistent = false;
        }
        if !active {
            continue;
        }
        coplanarity = coplanarity.max((center - c.position).dot(&axis).abs());
        let mut best: Option<(usize, T)> = None;
        for &k in &masked {
            let d = (points[k] - center).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        let contact = match best {
            Some((k, gap)) if gap <= reach => {
                let n = scene.normals()[k];
                let angle = if is_valid_vector(&n) {
                    n.dot(&axis).clamp(-T::one(), T::one()).acos()
                } else {
                    T::nan()
                };
                CupContact {
                    cup: i,
                    pixel: Some(k),
                    gap,
                    angle,
                    distance_residual: ((points[k] - c.position).norm() - local.norm()).abs(),
                }
            }
            other => CupContact {
                cup: i,
                pixel: None,
                gap: other.map_or(T::nan(), |(_, g)| g),
                angle: T::nan(),
                distance_residual: T::nan(),
            },
        };
        cups.push(contact);
    }

    let touching = cups.iter().filter(|k| k.pixel.is_some()).count();
    let all_touch = touching == cups.len();
    let max_of = |f: fn(&CupContact<T>) -> T| {
        cups.iter()
            .map(f)
            .fold(T::zero(), |a, b| if b.is_finite_value() { a.max(b) } else { T::nan() })
    };
    let max_angle = max_of(|k| k.angle);
    let max_distance_residual = max_of(|k| k.distance_residual);
    ConditionReport {
        contacts: touching >= 2,
        coplanar: coplanarity <= l,
        normals: all_touch && cups.iter().all(|k| k.angle < config.eps_normal),
        distances: all_touch && cups.iter().all(|k| k.distance_residual < config.eps_dist),
        centers_consistent,
        coplanarity_residual: coplanarity,
        max_angle,
        max_distance_residual,
        cups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::conv3d_sparse;
    use crate::decode::decode;
    use crate::image::Image;
    use crate::kernel::generate_encoded_kernels;
    use crate::rotation::zyz_rotation;
    use crate::scene::CameraIntrinsics;
    use nalgebra::{Matrix3, Matrix4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn keys(cands: &[GraspCandidate<f64>]) -> BTreeSet<CandidateKey> {
        cands.iter().filter_map(candidate_key).collect()
    }

    fn pipeline(grid: &VoxelGrid<f64>, samples: &OrientationSamples<f64>, g: &GripperSpec<f64>) -> Vec<GraspCandidate<f64>> {
        let k = generate_encoded_kernels(&samples.rotations, g, grid.voxel_size()).unwrap();
        decode(&conv3d_sparse(grid, &k), grid, samples, g)
    }

    #[test]
    fn impulse_grid() {
        let mut occ = vec![false; 20 * 5 * 3];
        occ[(10 * 5 + 2) * 3 + 1] = true;
        occ[(12 * 5 + 2) * 3 + 1] = true;
        let grid = VoxelGrid::from_occupancy(Vector3::zeros(), 0.005, [20, 5, 3], occ);
        let samples = OrientationSamples::from_angles(vec![[0.0, 0.0, 0.0]]);
        let g = GripperSpec::two_cup(0.01, 0.0).unwrap();
        let brute = brute_force_candidates(&grid, &samples, &g, 0.005).unwrap();
        assert_eq!(keys(&brute), BTreeSet::from([(0, [11, 2, 1], vec![true, true])]));
        assert_eq!(keys(&brute), keys(&pipeline(&grid, &samples, &g)));
    }

    #[test]
    fn empty_grid() {
        let grid = VoxelGrid::<f64>::from_occupancy(Vector3::zeros(), 0.005, [6, 6, 6], vec![false; 216]);
        let samples = OrientationSamples::from_angles(vec![[0.3, 0.2, 0.1]]);
        let g = GripperSpec::two_cup(0.01, 0.0).unwrap();
        assert!(brute_force_candidates(&grid, &samples, &g, 0.005).unwrap().is_empty());
    }

    #[test]
    fn refuses_large_instances() {
        let grid = VoxelGrid::<f64>::from_occupancy(Vector3::zeros(), 0.005, [65, 64, 64], vec![false; 65 * 64 * 64]);
        let samples = OrientationSamples::from_angles(vec![[0.0; 3]]);
        let g = GripperSpec::two_cup(0.01, 0.0).unwrap();
        assert!(matches!(brute_force_candidates(&grid, &samples, &g, 0.005), Err(Error::TooLarge(_))));
    }

    #[test]
    fn random_24_cubed_matches_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let occ = (0..24 * 24 * 24).map(|_| rng.random_bool(0.06)).collect();
        let grid = VoxelGrid::from_occupancy(Vector3::new(0.1, -0.2, 0.3), 0.005, [24, 24, 24], occ);
        let angles = (0..8)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(0.0..1.5), rng.random_range(-3.0..3.0)])
            .collect();
        let samples = OrientationSamples::from_angles(angles);
        let g = GripperSpec::four_cup_square(0.03, 0.0).unwrap();
        let brute = brute_force_candidates(&grid, &samples, &g, 0.005).unwrap();
        assert!(!brute.is_empty());
        assert_eq!(keys(&brute), keys(&pipeline(&grid, &samples, &g)));
    }

    fn plane_scene() -> AffordanceScene<f64> {
        let m = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 0.5, //
            0.0, 0.0, 0.0, 1.0,
        );
        let cam = CameraIntrinsics::new(500.0, 500.0, 40.0, 40.0, 81, 81, m).unwrap();
        let normals = Image::filled(81, 81, Vector3::z());
        AffordanceScene::with_normals(Image::filled(81, 81, 0.5), Image::filled(81, 81, 1.0), cam, normals).unwrap()
    }

    fn at(o: Matrix3<f64>, p: Vector3<f64>, g: &GripperSpec<f64>) -> GraspCandidate<f64> {
        GraspCandidate::new(p, o, g, vec![true; g.cup_count()], CandidateSource::MultiCup { orientation: 0, cell: [0; 3] })
    }

    #[test]
    fn vertical_grasp_on_plane_passes() {
        let scene = plane_scene();
        let g = GripperSpec::two_cup(0.04, 0.0).unwrap();
        let r = check_conditions(&at(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.0025), &g), &scene, &PlannerConfig::default(), &g);
        assert!(r.all(), "{r:?}");
        assert!(r.max_distance_residual <= 0.005);
    }

    #[test]
    fn raised_tcp_fails_tight_distance_tolerance() {
        let scene = plane_scene();
        let g = GripperSpec::two_cup(0.04, 0.0).unwrap();
        let c = at(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.005), &g);
        let tight = PlannerConfig { eps_dist: 1e-4, ..PlannerConfig::default() };
        let r = check_conditions(&c, &scene, &tight, &g);
        assert!(r.contacts && r.normals && !r.distances);
        let expected = (0.02f64.powi(2) + 0.005f64.powi(2)).sqrt() - 0.02;
        assert!((r.max_distance_residual - expected).abs() < 2e-4);
    }

    #[test]
    fn tampered_cup_centers_are_flagged() {
        let scene = plane_scene();
        let g = GripperSpec::two_cup(0.04, 0.0).unwrap();
        let mut c = at(Matrix3::identity(), Vector3::zeros(), &g);
        c.cup_centers[1] += Vector3::new(0.002, 0.0, 0.0);
        assert!(!check_conditions(&c, &scene, &PlannerConfig::default(), &g).centers_consistent);
    }

    #[test]
    fn tilted_grasp_fails_normals() {
        let scene = plane_scene();
        let g = GripperSpec::two_cup(0.04, 0.0).unwrap();
        let o = zyz_rotation(0.0, 20f64.to_radians(), 0.0);
        let r = check_conditions(&at(o, Vector3::zeros(), &g), &scene, &PlannerConfig::default(), &g);
        assert!(!r.normals);
        assert!((r.max_angle - 20f64.to_radians()).abs() < 1e-9);
    }
}
