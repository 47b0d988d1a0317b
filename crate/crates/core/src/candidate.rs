use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::gripper::GripperSpec;
use crate::real::Real;

/// Image pixel, column `u` and row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub u: usize,
    pub v: usize,
}

/// Where a grasp candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateSource {
    /// Decoded from the convolution of orientation sample `orientation` with
    /// the TCP at voxel `cell`.
    MultiCup { orientation: usize, cell: [usize; 3] },
    /// Single-cup grasp at the affordance maximum.
    SingleCupFallback { pixel: Pixel },
}

impl CandidateSource {
    pub fn name(&self) -> &'static str {
        match self {
            CandidateSource::MultiCup { .. } => "multi_cup",
            CandidateSource::SingleCupFallback { .. } => "single_cup_fallback",
        }
    }
}

/// Gripper state `[P, O, C, A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspCandidate<T: Real> {
    /// TCP position, world frame.
    pub position: Vector3<T>,
    pub orientation: Matrix3<T>,
    /// Cup centres in the world frame, `O·C⁰ᵢ + P`.
    pub cup_centers: Vec<Vector3<T>>,
    pub activation: Vec<bool>,
    pub source: CandidateSource,
}

impl<T: Real> GraspCandidate<T> {
    pub fn new(
        position: Vector3<T>,
        orientation: Matrix3<T>,
        gripper: &GripperSpec<T>,
        activation: Vec<bool>,
        source: CandidateSource,
    ) -> Self {
        debug_assert_eq!(activation.len(), gripper.cup_count());
        let cup_centers = gripper
            .cup_centers()
            .iter()
            .map(|c| orientation * c + position)
            .collect();
        GraspCandidate {
            position,
            orientation,
            cup_centers,
            activation,
            source,
        }
    }

    /// Gripper approach axis `n_g` (third column of the orientation).
    pub fn approach_axis(&self) -> Vector3<T> {
        self.orientation.column(2).into_owned()
    }

    pub fn active_count(&self) -> usize {
        self.activation.iter().filter(|&&a| a).count()
    }

    /// Indices of activated cups.
    pub fn active_cups(&self) -> impl Iterator<Item = usize> + '_ {
        self.activation
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    pub fn activation_bits(&self) -> Vec<u8> {
        self.activation.iter().map(|&a| a as u8).collect()
    }
}
