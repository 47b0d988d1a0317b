//! Cross-correlation of encoded kernels with the occupancy grid.
//!
//! `out[n][m] = Σ_q K_n[q] · V[m + q]`, with cells outside the grid read as 0.

use rayon::prelude::*;

use crate::kernel::{EncodedKernel, EncodedKernelSet};
use crate::real::Real;
use crate::voxel::VoxelGrid;

/// Per-kernel correlation volumes, kernel-major, each laid out like the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvResult {
    pub dims: [usize; 3],
    pub kernel_count: usize,
    pub values: Vec<u32>,
}

impl ConvResult {
    pub fn cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Volume of kernel `n`.
    pub fn volume(&self, n: usize) -> &[u32] {
        let c = self.cells();
        &self.values[n * c..(n + 1) * c]
    }
}

/// Reference implementation: every output cell visits every kernel cell.
pub fn conv3d_dense<T: Real>(grid: &VoxelGrid<T>, kernels: &EncodedKernelSet) -> ConvResult {
    let dims = grid.dims();
    let cells = grid.cell_count();
    let extent = kernels.extent;
    let h = kernels.half_extent() as i64;
    let occ = grid.occupancy();
    let mut values = vec![0u32; cells * kernels.len()];
    if cells > 0 {
        values
            .par_chunks_mut(cells)
            .zip(&kernels.kernels)
            .for_each(|(out, kernel)| {
                let dense = kernel.to_dense(extent);
                for x in 0..dims[0] as i64 {
                    for y in 0..dims[1] as i64 {
                        for z in 0..dims[2] as i64 {
                            let mut sum = 0u32;
                            for i in 0..extent as i64 {
                                let sx = x + i - h;
                                if sx < 0 || sx >= dims[0] as i64 {
                                    continue;
                                }
                                for j in 0..extent as i64 {
                                    let sy = y + j - h;
                                    if sy < 0 || sy >= dims[1] as i64 {
                                        continue;
                                    }
                                    for k in 0..extent as i64 {
                                        let sz = z + k - h;
                                        if sz < 0 || sz >= dims[2] as i64 {
                                            continue;
                                        }
                                        let src = grid.linear([sx as usize, sy as usize, sz as usize]);
                                        if occ[src] {
                                            let q = ((i as usize * extent) + j as usize) * extent + k as usize;
                                            sum += dense[q];
                                        }
                                    }
                                }
                            }
                            out[grid.linear([x as usize, y as usize, z as usize])] = sum;
                        }
                    }
                }
            });
    }
    ConvResult {
        dims,
        kernel_count: kernels.len(),
        values,
    }
}

/// Scatters kernel digits from each occupied cell: cell `c` adds entry
/// `q`'s digit to output cell `c − q`.
pub fn conv3d_sparse<T: Real>(grid: &VoxelGrid<T>, kernels: &EncodedKernelSet) -> ConvResult {
    let cells = grid.cell_count();
    let mut values = vec![0u32; cells * kernels.len()];
    if cells > 0 {
        values
            .par_chunks_mut(cells)
            .zip(&kernels.kernels)
            .for_each(|(out, kernel)| {
                scatter(grid, kernel, |m, digit| out[m] += digit);
            });
    }
    ConvResult {
        dims: grid.dims(),
        kernel_count: kernels.len(),
        values,
    }
}

#[inline]
fn scatter<T: Real>(grid: &VoxelGrid<T>, kernel: &EncodedKernel, mut add: impl FnMut(usize, u32)) {
    let dims = grid.dims().map(|d| d as i64);
    for &c in grid.occupied() {
        let cell = grid.unlinear(c).map(|v| v as i64);
        for e in &kernel.entries {
            let m = [0, 1, 2].map(|a| cell[a] - e.offset[a] as i64);
            if (0..3).all(|a| m[a] >= 0 && m[a] < dims[a]) {
                add(grid.linear(m.map(|v| v as usize)), e.digit);
            }
        }
    }
}

/// Reusable buffers for correlating one kernel at a time.
#[derive(Debug, Default)]
pub struct SparseCorrelator {
    sums: Vec<u32>,
    touched: Vec<usize>,
}

impl SparseCorrelator {
    /// Correlates one kernel and calls `visit(cell, sum)` for every non-zero
    /// output cell in ascending cell order.
    pub fn run<T: Real>(
        &mut self,
        grid: &VoxelGrid<T>,
        kernel: &EncodedKernel,
        mut visit: impl FnMut(usize, u32),
    ) {
        if self.sums.len() != grid.cell_count() {
            self.sums = vec![0; grid.cell_count()];
        }
        self.touched.clear();
        let (sums, touched) = (&mut self.sums, &mut self.touched);
        scatter(grid, kernel, |m, digit| {
            if sums[m] == 0 {
                touched.push(m);
            }
            sums[m] += digit;
        });
        touched.sort_unstable();
        for &m in touched.iter() {
            visit(m, sums[m]);
            sums[m] = 0;
        }
    }
}
