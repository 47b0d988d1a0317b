//! Correlation sums → cup activations → grasp candidates, and the contact
//! normal filter.

use nalgebra::Vector3;

use crate::candidate::{CandidateSource, GraspCandidate};
use crate::conv::ConvResult;
use crate::gripper::GripperSpec;
use crate::kernel::cup_digit;
use crate::orientation::OrientationSamples;
use crate::real::Real;
use crate::rotation::angle_between;
use crate::scene::{is_valid_vector, AffordanceScene};
use crate::spatial::PointIndex;
use crate::voxel::VoxelGrid;

/// Per-cup hit flags encoded in a correlation sum.
pub fn decode_activation(value: u32, cup_count: usize) -> Vec<bool> {
    (0..cup_count)
        .map(|i| (value / cup_digit(i, cup_count)) % 10 >= 1)
        .collect()
}

/// Number of cups flagged in a correlation sum.
#[inline]
pub fn active_count(value: u32, cup_count: usize) -> usize {
    (0..cup_count)
        .filter(|&i| (value / cup_digit(i, cup_count)) % 10 >= 1)
        .count()
}

/// Flags for every (kernel, cell, cup), cup fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationVolume {
    pub kernel_count: usize,
    pub cells: usize,
    pub cup_count: usize,
    pub flags: Vec<bool>,
}

impl ActivationVolume {
    pub fn from_conv(conv: &ConvResult, cup_count: usize) -> Self {
        ActivationVolume {
            kernel_count: conv.kernel_count,
            cells: conv.cells(),
            cup_count,
            flags: conv
                .values
                .iter()
                .flat_map(|&v| decode_activation(v, cup_count))
                .collect(),
        }
    }

    pub fn get(&self, kernel: usize, cell: usize, cup: usize) -> bool {
        self.flags[(kernel * self.cells + cell) * self.cup_count + cup]
    }
}

/// Candidate with the TCP at the centre of `cell` and orientation `n`.
pub fn candidate_at<T: Real>(
    grid: &VoxelGrid<T>,
    samples: &OrientationSamples<T>,
    gripper: &GripperSpec<T>,
    n: usize,
    cell: usize,
    activation: Vec<bool>,
) -> GraspCandidate<T> {
    let idx = grid.unlinear(cell);
    GraspCandidate::new(
        grid.cell_center(idx),
        samples.rotations[n],
        gripper,
        activation,
        CandidateSource::MultiCup {
            orientation: n,
            cell: idx,
        },
    )
}

/// Every (orientation, cell) whose sum flags at least two cups, ordered by
/// orientation then cell.
pub fn decode<T: Real>(
    conv: &ConvResult,
    grid: &VoxelGrid<T>,
    samples: &OrientationSamples<T>,
    gripper: &GripperSpec<T>,
) -> Vec<GraspCandidate<T>> {
    let n_c = gripper.cup_count();
    let mut out = Vec::new();
    for n in 0..conv.kernel_count {
        for (cell, &v) in conv.volume(n).iter().enumerate() {
            if v != 0 && active_count(v, n_c) >= 2 {
                out.push(candidate_at(grid, samples, gripper, n, cell, decode_activation(v, n_c)));
            }
        }
    }
    out
}

/// Nearest affordance-masked scene point to a query, within a fixed radius.
#[derive(Debug, Clone)]
pub struct ContactIndex<T: Real> {
    index: PointIndex<T>,
    radius: T,
}

impl<T: Real> ContactIndex<T> {
    /// Search radius is `voxel_size·√3`.
    pub fn new(scene: &AffordanceScene<T>, voxel_size: T) -> Self {
        let pts = scene.masked_indices().into_iter().map(|i| (i, scene.points()[i]));
        ContactIndex {
            index: PointIndex::new(pts, voxel_size),
            radius: voxel_size * T::lit(3f64.sqrt()),
        }
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// Pixel index of the contact point for a cup centred at `q`.
    pub fn contact(&self, q: &Vector3<T>) -> Option<usize> {
        self.index.nearest_within(q, self.radius).map(|n| n.id)
    }
}

/// Accepts candidates whose every active cup has a nearby contact point
/// with a normal within `eps_normal` of the approach axis.
#[derive(Debug, Clone)]
pub struct NormalCheck<'a, T: Real> {
    scene: &'a AffordanceScene<T>,
    contacts: ContactIndex<T>,
    eps_normal: T,
}

impl<'a, T: Real> NormalCheck<'a, T> {
    pub fn new(scene: &'a AffordanceScene<T>, voxel_size: T, eps_normal: T) -> Self {
        NormalCheck {
            scene,
            contacts: ContactIndex::new(scene, voxel_size),
            eps_normal,
        }
    }

    pub fn accepts(&self, c: &GraspCandidate<T>) -> bool {
        let axis = c.approach_axis();
        c.active_cups().all(|i| {
            self.contacts.contact(&c.cup_centers[i]).is_some_and(|pix| {
                let n = &self.scene.normals()[pix];
                is_valid_vector(n) && angle_between(n, &axis) < self.eps_normal
            })
        })
    }
}

pub fn normal_direction_check<T: Real>(
    candidates: Vec<GraspCandidate<T>>,
    scene: &AffordanceScene<T>,
    voxel_size: T,
    eps_normal: T,
) -> Vec<GraspCandidate<T>> {
    let check = NormalCheck::new(scene, voxel_size, eps_normal);
    candidates.into_iter().filter(|c| check.accepts(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::rotation::zyz_rotation;
    use crate::scene::CameraIntrinsics;
    use nalgebra::{Matrix3, Matrix4};

    #[test]
    fn two_cup_truth_table() {
        let table = [(0, [false, false]), (1, [false, true]), (10, [true, false]), (11, [true, true])];
        for (v, a) in table {
            assert_eq!(decode_activation(v, 2), a.to_vec());
            assert_eq!(active_count(v, 2) >= 2, v == 11);
        }
    }

    #[test]
    fn four_cup_value() {
        assert_eq!(decode_activation(1011, 4), vec![true, false, true, true]);
        assert_eq!(active_count(1011, 4), 3);
    }

    #[test]
    fn all_zero_conv_decodes_to_nothing() {
        let grid = VoxelGrid::<f64>::from_occupancy(Vector3::zeros(), 0.005, [4, 4, 2], vec![false; 32]);
        let samples = OrientationSamples::from_angles(vec![[0.0, 0.0, 0.0]]);
        let conv = ConvResult { dims: [4, 4, 2], kernel_count: 1, values: vec![0; 32] };
        let g = GripperSpec::two_cup(0.02, 0.0).unwrap();
        assert!(decode(&conv, &grid, &samples, &g).is_empty());
    }

    #[test]
    fn decoded_candidate_geometry() {
        let grid = VoxelGrid::<f64>::from_occupancy(Vector3::new(1.0, 2.0, 3.0), 0.01, [2, 2, 1], vec![false; 4]);
        let samples = OrientationSamples::from_angles(vec![[0.0, 0.0, 0.0]]);
        let conv = ConvResult { dims: [2, 2, 1], kernel_count: 1, values: vec![0, 0, 11, 10] };
        let g = GripperSpec::two_cup(0.02, 0.0).unwrap();
        let c = decode(&conv, &grid, &samples, &g);
        assert_eq!(c.len(), 1);
        assert!((c[0].position - Vector3::new(1.015, 2.005, 3.005)).norm() < 1e-12);
        assert_eq!(c[0].activation, vec![true, true]);
        assert_eq!(c[0].source, CandidateSource::MultiCup { orientation: 0, cell: [1, 0, 0] });
        assert!((c[0].cup_centers[0] - Vector3::new(1.005, 2.005, 3.005)).norm() < 1e-12);

        let vol = ActivationVolume::from_conv(&conv, 2);
        assert!(vol.get(0, 3, 0) && !vol.get(0, 3, 1));
    }

    fn flat_scene(with_hole: bool) -> AffordanceScene<f64> {
        let cam_to_world = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 0.5, //
            0.0, 0.0, 0.0, 1.0,
        );
        let cam = CameraIntrinsics::new(500.0, 500.0, 40.0, 40.0, 81, 81, cam_to_world).unwrap();
        let depth = Image::from_fn(81, 81, |p| {
            if with_hole && p.u >= 50 && p.u <= 70 { 0.0 } else { 0.5 }
        });
        let aff = Image::filled(81, 81, 1.0);
        AffordanceScene::new(depth, aff, cam, 9).unwrap()
    }

    fn cand(o: Matrix3<f64>, p: Vector3<f64>) -> GraspCandidate<f64> {
        let g = GripperSpec::two_cup(0.04, 0.0).unwrap();
        GraspCandidate::new(p, o, &g, vec![true, true], CandidateSource::MultiCup { orientation: 0, cell: [0; 3] })
    }

    #[test]
    fn vertical_gripper_on_plane_is_kept() {
        let scene = flat_scene(false);
        let c = cand(Matrix3::identity(), Vector3::zeros());
        let kept = normal_direction_check(vec![c], &scene, 0.005, 11.5f64.to_radians());
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn tilted_gripper_is_rejected() {
        let scene = flat_scene(false);
        let o = zyz_rotation(0.0, 20f64.to_radians(), 0.0);
        let c = cand(o, Vector3::zeros());
        assert!(normal_direction_check(vec![c], &scene, 0.005, 11.5f64.to_radians()).is_empty());
    }

    #[test]
    fn cup_over_hole_is_rejected() {
        let scene = flat_scene(true);
        // cup 1 at x = +0.02 m, pixel u = 60, inside the hole
        let c = cand(Matrix3::identity(), Vector3::zeros());
        assert!(normal_direction_check(vec![c], &scene, 0.005, 11.5f64.to_radians()).is_empty());
    }
}
