//! Integer-encoded cup stencils, one per orientation sample.
//!
//! Cup `i` of `N` carries the decimal digit `10^(N−1−i)`, so a correlation
//! sum is a base-10 number whose digits flag which cups touched an occupied
//! cell.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::gripper::{GripperSpec, MAX_CUPS};
use crate::real::Real;

/// Digit value carried by cup `cup` of a `cup_count`-cup gripper.
#[inline]
pub fn cup_digit(cup: usize, cup_count: usize) -> u32 {
    10u32.pow((cup_count - 1 - cup) as u32)
}

/// Cell offset of a cup relative to the kernel centre, rounded to nearest.
#[inline]
pub fn quantize_offset<T: Real>(rotated: &Vector3<T>, voxel_size: T) -> [i32; 3] {
    [0, 1, 2].map(|a| (rotated[a] / voxel_size + T::lit(0.5)).floor().as_f64() as i32)
}

/// Odd kernel edge length that holds every cup under any rotation.
pub fn kernel_extent<T: Real>(gripper: &GripperSpec<T>, voxel_size: T) -> usize {
    let r = (gripper.max_cup_distance() / voxel_size - T::lit(1e-9))
        .ceil()
        .max(T::zero())
        .as_f64() as usize;
    2 * r + 1
}

/// Non-zero kernel cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelEntry {
    /// Offset from the kernel centre, cells.
    pub offset: [i32; 3],
    pub digit: u32,
    pub cup: usize,
}

/// One kernel in sparse form: at most one entry per cup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedKernel {
    pub entries: Vec<KernelEntry>,
    /// Two cups fell on the same cell; only the lower-index cup was kept.
    pub collision: bool,
}

impl EncodedKernel {
    /// Dense `extent³` array, index `(i·extent + j)·extent + k` for offset
    /// `(i, j, k) − centre`.
    pub fn to_dense(&self, extent: usize) -> Vec<u32> {
        let h = (extent / 2) as i32;
        let mut out = vec![0; extent * extent * extent];
        for e in &self.entries {
            let [i, j, k] = e.offset.map(|o| (o + h) as usize);
            out[(i * extent + j) * extent + k] = e.digit;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedKernelSet {
    pub kernels: Vec<EncodedKernel>,
    pub extent: usize,
    pub cup_count: usize,
}

impl EncodedKernelSet {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn half_extent(&self) -> i32 {
        (self.extent / 2) as i32
    }

    pub fn collision_count(&self) -> usize {
        self.kernels.iter().filter(|k| k.collision).count()
    }
}

/// Builds one kernel per rotation, in order.
pub fn generate_encoded_kernels<T: Real>(
    rotations: &[Matrix3<T>],
    gripper: &GripperSpec<T>,
    voxel_size: T,
) -> Result<EncodedKernelSet> {
    let n = gripper.cup_count();
    if n > MAX_CUPS {
        return Err(Error::InvalidGripper(format!("{n} cups exceeds {MAX_CUPS}")));
    }
    if !(voxel_size > T::zero()) {
        return Err(Error::InvalidConfig("voxel_size must be > 0".into()));
    }
    let extent = kernel_extent(gripper, voxel_size);
    let h = (extent / 2) as i32;
    let kernels = rotations
        .iter()
        .map(|o| {
            let mut entries: Vec<KernelEntry> = Vec::with_capacity(n);
            let mut collision = false;
            for (cup, c) in gripper.cup_centers().iter().enumerate() {
                let offset = quantize_offset(&(o * c), voxel_size).map(|v| v.clamp(-h, h));
                if entries.iter().any(|e| e.offset == offset) {
                    collision = true;
                    continue;
                }
                entries.push(KernelEntry {
                    offset,
                    digit: cup_digit(cup, n),
                    cup,
                });
            }
            EncodedKernel { entries, collision }
        })
        .collect();
    Ok(EncodedKernelSet {
        kernels,
        extent,
        cup_count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::zyz_rotation;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn two_cup() -> GripperSpec<f64> {
        GripperSpec::two_cup(0.08, 0.01).unwrap()
    }

    #[test]
    fn identity_two_cup() {
        let k = generate_encoded_kernels(&[Matrix3::identity()], &two_cup(), 0.005).unwrap();
        assert_eq!(k.extent, 17);
        assert_eq!(
            k.kernels[0].entries,
            vec![
                KernelEntry { offset: [-8, 0, 0], digit: 10, cup: 0 },
                KernelEntry { offset: [8, 0, 0], digit: 1, cup: 1 },
            ]
        );
        let dense = k.kernels[0].to_dense(17);
        assert_eq!(dense.iter().filter(|&&v| v != 0).count(), 2);
        assert_eq!(dense[8 * 17 + 8], 10);
        assert_eq!(dense[(16 * 17 + 8) * 17 + 8], 1);
    }

    #[test]
    fn quarter_turn_moves_cups_to_y() {
        let o = zyz_rotation(0.0, 0.0, FRAC_PI_2);
        let k = generate_encoded_kernels(&[o], &two_cup(), 0.005).unwrap();
        let offsets: Vec<_> = k.kernels[0].entries.iter().map(|e| (e.offset, e.digit)).collect();
        assert_eq!(offsets, vec![([0, -8, 0], 10), ([0, 8, 0], 1)]);
    }

    #[test]
    fn single_cup_at_tcp() {
        let g = GripperSpec::new(vec![Vector3::zeros()], 0.01).unwrap();
        let k = generate_encoded_kernels(&[Matrix3::identity()], &g, 0.005).unwrap();
        assert_eq!(k.extent, 1);
        assert_eq!(k.kernels[0].to_dense(1), vec![1]);
    }

    #[test]
    fn close_cups_collide() {
        let g = GripperSpec::new(
            vec![Vector3::new(0.02, 0.0, 0.0), Vector3::new(0.021, 0.0, 0.0)],
            0.0,
        )
        .unwrap();
        let k = generate_encoded_kernels(&[Matrix3::identity()], &g, 0.005).unwrap();
        assert!(k.kernels[0].collision);
        assert_eq!(k.kernels[0].entries.len(), 1);
        assert_eq!(k.kernels[0].entries[0].digit, 10);
        assert_eq!(k.collision_count(), 1);
    }

    #[test]
    fn four_cup_digits() {
        let g = GripperSpec::four_cup_square(0.05, 0.0).unwrap();
        let k = generate_encoded_kernels(&[Matrix3::identity()], &g, 0.005).unwrap();
        let digits: Vec<u32> = k.kernels[0].entries.iter().map(|e| e.digit).collect();
        assert_eq!(digits, vec![1000, 100, 10, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn cups_fit_and_reconstruct(
            theta in -3.2..3.2f64, phi in 0.0..1.6f64, gamma in -3.2..3.2f64,
            spacing in 0.011..0.15f64, l in 0.002..0.01f64,
        ) {
            let g = GripperSpec::four_cup_square(spacing, 0.0).unwrap();
            let o = zyz_rotation(theta, phi, gamma);
            let k = generate_encoded_kernels(&[o], &g, l).unwrap();
            let h = k.half_extent();
            for e in &k.kernels[0].entries {
                prop_assert!(e.offset.iter().all(|&v| v.abs() <= h));
                let rotated = o * g.cup_centers()[e.cup];
                let cell = Vector3::new(e.offset[0] as f64, e.offset[1] as f64, e.offset[2] as f64) * l;
                prop_assert!((cell - rotated).amax() <= l / 2.0 + 1e-12);
                prop_assert!((cell - rotated).norm() <= l * 3f64.sqrt());
                let digit_count = (0..4).filter(|&i| (e.digit / cup_digit(i, 4)) % 10 == 1).count();
                prop_assert_eq!(digit_count, 1);
            }
        }
    }
}
