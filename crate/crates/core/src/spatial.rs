//! Uniform-grid index for nearest and k-nearest point queries.

use nalgebra::Vector3;

use crate::real::Real;

const MAX_CELLS: f64 = 4.0e6;

/// Points bucketed into a dense grid of cubic cells (CSR layout).
#[derive(Debug, Clone)]
pub struct PointIndex<T: Real> {
    origin: Vector3<T>,
    cell: T,
    dims: [usize; 3],
    starts: Vec<u32>,
    slots: Vec<u32>,
    points: Vec<Vector3<T>>,
    ids: Vec<usize>,
}

/// Neighbour found by a query: caller-supplied id and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub id: usize,
    pub distance: T,
}

impl<T: Real> PointIndex<T> {
    /// Indexes `(id, point)` pairs; non-finite points are skipped. The cell
    /// edge is enlarged when the bounding box would need too many cells.
    pub fn new(items: impl IntoIterator<Item = (usize, Vector3<T>)>, cell: T) -> Self {
        let (ids, points): (Vec<usize>, Vec<Vector3<T>>) = items
            .into_iter()
            .filter(|(_, p)| p.iter().all(|v| v.is_finite_value()))
            .unzip();
        assert!(cell > T::zero(), "cell size must be positive");
        if points.is_empty() {
            return PointIndex {
                origin: Vector3::zeros(),
                cell,
                dims: [0; 3],
                starts: vec![0],
                slots: Vec::new(),
                points,
                ids,
            };
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).map(|v| v.as_f64());
        let mut cell_f = cell.as_f64();
        let count = |c: f64| {
            extent
                .iter()
                .map(|e| (e / c).floor() + 1.0)
                .product::<f64>()
        };
        while count(cell_f) > MAX_CELLS {
            cell_f *= 1.5;
        }
        let cell = T::lit(cell_f);
        let dims = [0, 1, 2].map(|a| (extent[a] / cell_f).floor() as usize + 1);

        let mut index = PointIndex {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            slots: Vec::new(),
            points,
            ids,
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let cell_of: Vec<usize> = index
            .points
            .iter()
            .map(|p| {
                let c = index.cell_coords(p);
                index.linear([c[0] as usize, c[1] as usize, c[2] as usize])
            })
            .collect();
        let mut starts = vec![0u32; n_cells + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for i in 0..n_cells {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut slots = vec![0u32; cell_of.len()];
        for (k, &c) in cell_of.iter().enumerate() {
            slots[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        index.starts = starts;
        index.slots = slots;
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size(&self) -> T {
        self.cell
    }

    #[inline]
    fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    /// Cell coordinates of `p`, clamped into the grid for indexed points and
    /// left unclamped (possibly negative) for queries.
    #[inline]
    fn cell_coords(&self, p: &Vector3<T>) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor().as_f64();
            (c.clamp(-1e15, 1e15) as i64).min(self.dims[a] as i64 - 1)
        })
    }

    /// Ring radius beyond which no cell of the grid remains.
    fn max_ring(&self, q: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| q[a].abs().max((self.dims[a] as i64 - 1 - q[a]).abs()))
            .max()
            .unwrap_or(0)
    }

    /// Visits the ids of points in cells at Chebyshev ring `r` around `q`.
    fn for_ring(&self, q: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        let range = |a: usize| {
            let lo = (q[a] - r).max(0);
            let hi = (q[a] + r).min(self.dims[a] as i64 - 1);
            (lo, hi)
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        if x0 > x1 || y0 > y1 || z0 > z1 {
            return;
        }
        for x in x0..=x1 {
            let x_edge = (x - q[0]).abs() == r;
            for y in y0..=y1 {
                let edge = x_edge || (y - q[1]).abs() == r;
                let mut visit = |z: i64| {
                    let c = self.linear([x as usize, y as usize, z as usize]);
                    let (s, e) = (self.starts[c] as usize, self.starts[c + 1] as usize);
                    for &slot in &self.slots[s..e] {
                        f(slot as usize);
                    }
                };
                if edge {
                    for z in z0..=z1 {
                        visit(z);
                    }
                } else {
                    let inside = |z: i64| z >= z0 && z <= z1;
                    if inside(q[2] - r) {
                        visit(q[2] - r);
                    }
                    if r > 0 && inside(q[2] + r) {
                        visit(q[2] + r);
                    }
                }
            }
        }
    }

    /// The `k` nearest indexed points to `q`, closest first. Fewer are
    /// returned only when the index holds fewer than `k` points.
    pub fn knn(&self, q: &Vector3<T>, k: usize, out: &mut Vec<Neighbor<T>>) {
        out.clear();
        if k == 0 || self.is_empty() {
            return;
        }
        // squared distances while searching
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        let qc = self.cell_coords_query(q);
        let max_r = self.max_ring(qc);
        for r in 0..=max_r {
            self.for_ring(qc, r, |slot| {
                let d2 = (self.points[slot] - q).norm_squared();
                if best.len() < k || d2 < best[best.len() - 1].0 {
                    let pos = best.partition_point(|&(b, _)| b <= d2);
                    best.insert(pos, (d2, slot));
                    best.truncate(k);
                }
            });
            let reach = self.cell * T::lit(r as f64);
            if best.len() == k && best[k - 1].0 <= reach * reach {
                break;
            }
        }
        out.extend(best.into_iter().map(|(d2, slot)| Neighbor {
            id: self.ids[slot],
            distance: d2.sqrt(),
        }));
    }

    pub fn nearest(&self, q: &Vector3<T>) -> Option<Neighbor<T>> {
        let mut out = Vec::with_capacity(1);
        self.knn(q, 1, &mut out);
        out.pop()
    }

    /// Nearest indexed point no farther than `radius` from `q`.
    pub fn nearest_within(&self, q: &Vector3<T>, radius: T) -> Option<Neighbor<T>> {
        if self.is_empty() {
            return None;
        }
        let qc = self.cell_coords_query(q);
        let max_r = self.max_ring(qc);
        let r2 = radius * radius;
        let mut best: Option<(T, usize)> = None;
        for r in 0..=max_r {
            self.for_ring(qc, r, |slot| {
                let d2 = (self.points[slot] - q).norm_squared();
                if d2 <= r2 && best.is_none_or(|(b, _)| d2 < b) {
                    best = Some((d2, slot));
                }
            });
            let reach = self.cell * T::lit(r as f64);
            if reach >= radius || best.is_some_and(|(b, _)| b <= reach * reach) {
                break;
            }
        }
        best.map(|(d2, slot)| Neighbor {
            id: self.ids[slot],
            distance: d2.sqrt(),
        })
    }

    fn cell_coords_query(&self, p: &Vector3<T>) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor().as_f64();
            c.clamp(-1e15, 1e15) as i64
        })
    }
}
