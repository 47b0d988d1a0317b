//! Binarized occupancy grid over affordance-masked points.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::scene::{is_valid_vector, AffordanceScene};

/// Occupancy grid with cubic cells of edge `voxel_size`, anchored at the
/// minimum corner of the masked points. Cell `[x, y, z]` is stored at
/// `(x·ny + y)·nz + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T: Real> {
    origin: Vector3<T>,
    voxel_size: T,
    dims: [usize; 3],
    occupancy: Vec<bool>,
    /// Linear indices of occupied cells, ascending.
    occupied: Vec<usize>,
    /// CSR offsets into `pixels`, one range per entry of `occupied`.
    pixel_starts: Vec<usize>,
    pixels: Vec<usize>,
}

impl<T: Real> VoxelGrid<T> {
    /// Buckets `(pixel, point)` pairs; a cell is occupied when it holds at
    /// least `min_points` of them. Non-finite points are ignored.
    pub fn from_points(points: &[(usize, Vector3<T>)], voxel_size: T, min_points: usize) -> Result<Self> {
        if !(voxel_size > T::zero()) || !voxel_size.is_finite_value() {
            return Err(Error::InvalidConfig("voxel_size must be > 0".into()));
        }
        let pts: Vec<&(usize, Vector3<T>)> =
            points.iter().filter(|(_, p)| is_valid_vector(p)).collect();
        if pts.is_empty() {
            return Err(Error::EmptyScene);
        }
        let mut lo = pts[0].1;
        let mut hi = pts[0].1;
        for (_, p) in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / voxel_size).floor().as_f64() as usize + 1);
        let n_cells = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n_cells = match n_cells {
            Some(n) if n <= 1 << 31 => n,
            _ => {
                return Err(Error::TooLarge(format!(
                    "voxel grid {dims:?} at cell size {voxel_size}"
                )))
            }
        };
        let mut grid = VoxelGrid {
            origin: lo,
            voxel_size,
            dims,
            occupancy: vec![false; n_cells],
            occupied: Vec::new(),
            pixel_starts: vec![0],
            pixels: Vec::new(),
        };

        let mut keyed: Vec<(usize, usize)> = pts
            .iter()
            .map(|(pix, p)| (grid.linear(grid.cell_of(p)), *pix))
            .collect();
        keyed.sort_unstable();
        let threshold = min_points.max(1);
        for run in keyed.chunk_by(|a, b| a.0 == b.0) {
            if run.len() >= threshold {
                let cell = run[0].0;
                grid.occupancy[cell] = true;
                grid.occupied.push(cell);
                grid.pixels.extend(run.iter().map(|&(_, pix)| pix));
                grid.pixel_starts.push(grid.pixels.len());
            }
        }
        Ok(grid)
    }

    /// Grid with explicit occupancy and no source pixels.
    pub fn from_occupancy(
        origin: Vector3<T>,
        voxel_size: T,
        dims: [usize; 3],
        occupancy: Vec<bool>,
    ) -> Self {
        assert_eq!(occupancy.len(), dims[0] * dims[1] * dims[2], "occupancy length");
        let occupied: Vec<usize> = (0..occupancy.len()).filter(|&i| occupancy[i]).collect();
        VoxelGrid {
            origin,
            voxel_size,
            dims,
            pixel_starts: vec![0; occupied.len() + 1],
            occupancy,
            occupied,
            pixels: Vec::new(),
        }
    }

    pub fn origin(&self) -> &Vector3<T> {
        &self.origin
    }

    pub fn voxel_size(&self) -> T {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Linear indices of occupied cells, ascending.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    #[inline]
    pub fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    #[inline]
    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let z = i % self.dims[2];
        let r = i / self.dims[2];
        [r / self.dims[1], r % self.dims[1], z]
    }

    #[inline]
    pub fn contains(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    #[inline]
    pub fn is_occupied(&self, c: [usize; 3]) -> bool {
        self.occupancy[self.linear(c)]
    }

    /// Cell containing `p`, clamped into the grid.
    pub fn cell_of(&self, p: &Vector3<T>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.voxel_size).floor().as_f64();
            (c.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vector3<T> {
        let half = T::lit(0.5);
        Vector3::new(
            self.origin.x + (T::lit(c[0] as f64) + half) * self.voxel_size,
            self.origin.y + (T::lit(c[1] as f64) + half) * self.voxel_size,
            self.origin.z + (T::lit(c[2] as f64) + half) * self.voxel_size,
        )
    }

    /// Source pixels of an occupied cell (empty for unoccupied cells).
    pub fn cell_pixels(&self, linear: usize) -> &[usize] {
        match self.occupied.binary_search(&linear) {
            Ok(k) => &self.pixels[self.pixel_starts[k]..self.pixel_starts[k + 1]],
            Err(_) => &[],
        }
    }
}

/// Voxelizes the affordance-masked points of `scene`.
pub fn generate_voxel_grid<T: Real>(
    scene: &AffordanceScene<T>,
    voxel_size: T,
    min_points_per_voxel: usize,
) -> Result<VoxelGrid<T>> {
    let pts: Vec<(usize, Vector3<T>)> = scene
        .masked_indices()
        .into_iter()
        .map(|i| (i, scene.points()[i]))
        .collect();
    VoxelGrid::from_points(&pts, voxel_size, min_points_per_voxel)
}
