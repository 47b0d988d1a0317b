//! Object clustering on the affordance mask, candidate scoring and ranking.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::candidate::GraspCandidate;
use crate::config::PlannerConfig;
use crate::image::Image;
use crate::real::Real;
use crate::scene::AffordanceScene;
use crate::spatial::PointIndex;

pub const BACKGROUND: i32 = -1;

/// One affordance blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T: Real> {
    pub size: usize,
    pub mean: Vector3<T>,
    /// Member point nearest the mean.
    pub center: Vector3<T>,
    pub center_pixel: usize,
    /// Principal axes, largest spread first.
    pub axes: [Vector3<T>; 3],
    /// Largest member distance to `center`.
    pub max_dist: T,
}

#[derive(Debug, Clone)]
pub struct ClusterMaps<T: Real> {
    /// Cluster id per pixel, [`BACKGROUND`] outside clusters.
    pub labels: Image<i32>,
    /// Distance from the pixel's point to its cluster centre; NaN on background.
    pub dist: Image<T>,
    /// Major axis of the pixel's cluster; NaN on background.
    pub orient: Image<Vector3<T>>,
    pub clusters: Vec<Cluster<T>>,
    /// Labelled points, searched within `voxel_size·√3`.
    contacts: PointIndex<T>,
    reach: T,
}

impl<T: Real> ClusterMaps<T> {
    pub fn label_at(&self, pixel: usize) -> i32 {
        self.labels[pixel]
    }

    /// Label of the nearest clustered point within reach of `q`.
    pub fn contact_label(&self, q: &Vector3<T>) -> i32 {
        self.contacts
            .nearest_within(q, self.reach)
            .map_or(BACKGROUND, |n| self.labels[n.id])
    }
}

/// Eigenvectors of a symmetric matrix sorted by decreasing eigenvalue, each
/// signed so its largest-magnitude component is positive.
pub fn principal_axes<T: Real>(cov: Matrix3<T>) -> [Vector3<T>; 3] {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.map(|k| {
        let v: Vector3<T> = eig.eigenvectors.column(k).into_owned();
        let big = v.iamax();
        if v[big] < T::zero() {
            -v
        } else {
            v
        }
    })
}

fn covariance<T: Real>(pts: &[Vector3<T>], mean: &Vector3<T>) -> Matrix3<T> {
    pts.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / T::lit(pts.len().max(1) as f64)
}

/// 8-connected components of affordance-positive pixels, split where
/// neighbouring points are more than `2·voxel_size` apart. Components with
/// fewer than `min_cluster_size` pixels become background. Labels follow the
/// raster order of each component's first pixel.
pub fn cluster_affordance<T: Real>(
    scene: &AffordanceScene<T>,
    voxel_size: T,
    min_cluster_size: usize,
) -> ClusterMaps<T> {
    let (w, h) = (scene.width(), scene.height());
    let points = scene.points();
    let link = T::lit(2.0) * voxel_size;
    let link2 = link * link;
    let mut labels = Image::filled(w, h, BACKGROUND);
    let mut visited = vec![false; w * h];
    let mut clusters = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..w * h {
        if visited[seed] || !scene.is_masked(seed) {
            continue;
        }
        members.clear();
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (u, v) = ((i % w) as i64, (i / w) as i64);
            for dv in -1..=1i64 {
                for du in -1..=1i64 {
                    let (nu, nv) = (u + du, v + dv);
                    if (du == 0 && dv == 0) || !labels.contains(nu, nv) {
                        continue;
                    }
                    let j = nv as usize * w + nu as usize;
                    if !visited[j]
                        && scene.is_masked(j)
                        && (points[i] - points[j]).norm_squared() <= link2
                    {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if members.len() < min_cluster_size.max(1) {
            continue;
        }
        members.sort_unstable();
        let label = clusters.len() as i32;
        let pts: Vec<Vector3<T>> = members.iter().map(|&i| points[i]).collect();
        let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / T::lit(pts.len() as f64);
        let (k_center, _) = pts
            .iter()
            .enumerate()
            .map(|(k, p)| (k, (p - mean).norm_squared()))
            .fold((0, T::max_value().unwrap()), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            });
        let center = pts[k_center];
        let max_dist = pts
            .iter()
            .map(|p| (p - center).norm())
            .fold(T::zero(), |a, b| a.max(b));
        for &i in &members {
            labels[i] = label;
        }
        clusters.push(Cluster {
            size: members.len(),
            mean,
            center,
            center_pixel: members[k_center],
            axes: principal_axes(covariance(&pts, &mean)),
            max_dist,
        });
    }

    let dist = Image::from_fn(w, h, |p| {
        let i = labels.index_of(p);
        match labels[i] {
            BACKGROUND => T::nan(),
            l => (points[i] - clusters[l as usize].center).norm(),
        }
    });
    let orient = labels.map(|&l| match l {
        BACKGROUND => Vector3::repeat(T::nan()),
        l => clusters[l as usize].axes[0],
    });
    let contacts = PointIndex::new(
        (0..w * h).filter(|&i| labels[i] != BACKGROUND).map(|i| (i, points[i])),
        voxel_size,
    );
    ClusterMaps {
        labels,
        dist,
        orient,
        clusters,
        contacts,
        reach: voxel_size * T::lit(3f64.sqrt()),
    }
}

/// Score terms of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown<T: Real> {
    /// Distinct cluster labels under the active cups, ascending.
    pub labels: Vec<i32>,
    pub max_obj: usize,
    /// Mean over labels of the centre distance at the label's mean cup pixel, metres.
    pub j_dist: T,
    /// Population variance of those distances, m².
    pub j_var: T,
    /// Mean alignment of each label's cup layout with the cluster axes, in [0, 1].
    pub j_orient: T,
    pub j: T,
}

/// Direction of a set of cup centres: segment for two, principal axis for more.
fn layout_direction<T: Real>(cups: &[Vector3<T>]) -> Option<Vector3<T>> {
    match cups.len() {
        0 | 1 => None,
        2 => (cups[1] - cups[0]).try_normalize(T::lit(1e-15)),
        n => {
            let mean = cups.iter().fold(Vector3::zeros(), |a, p| a + p) / T::lit(n as f64);
            Some(principal_axes(covariance(cups, &mean))[0])
        }
    }
}

fn mean_and_variance<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = xs.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
    (mean, var)
}

/// Scores a candidate. An active cup takes the label of the pixel it projects
/// to, or of its contact point when that pixel is background. `None` when no
/// active cup has a label.
pub fn score_candidate<T: Real>(
    c: &GraspCandidate<T>,
    maps: &ClusterMaps<T>,
    scene: &AffordanceScene<T>,
    config: &PlannerConfig<T>,
) -> Option<ScoreBreakdown<T>> {
    let cam = scene.intrinsics();
    // (label, u, v, cup centre)
    let mut hits: Vec<(i32, T, T, Vector3<T>)> = Vec::with_capacity(c.activation.len());
    for i in c.active_cups() {
        let Some((u, v)) = cam.project(&c.cup_centers[i]) else {
            continue;
        };
        let label = match cam.pixel_at(u, v).map(|px| maps.labels[maps.labels.index_of(px)]) {
            Some(l) if l != BACKGROUND => l,
            _ => maps.contact_label(&c.cup_centers[i]),
        };
        if label != BACKGROUND {
            hits.push((label, u, v, c.cup_centers[i]));
        }
    }
    if hits.is_empty() {
        return None;
    }
    let mut labels: Vec<i32> = hits.iter().map(|h| h.0).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut dists = Vec::with_capacity(labels.len());
    let mut dists_norm = Vec::with_capacity(labels.len());
    let mut orients = Vec::with_capacity(labels.len());
    for &label in &labels {
        let cluster = &maps.clusters[label as usize];
        let mine: Vec<_> = hits.iter().filter(|h| h.0 == label).collect();
        let n = T::lit(mine.len() as f64);
        let u = mine.iter().fold(T::zero(), |a, h| a + h.1) / n;
        let v = mine.iter().fold(T::zero(), |a, h| a + h.2) / n;
        let d = cam
            .pixel_at(u, v)
            .map(|p| maps.labels.index_of(p))
            .filter(|&i| maps.labels[i] == label)
            .map_or(cluster.max_dist, |i| maps.dist[i]);
        dists.push(d);
        dists_norm.push(if cluster.max_dist > T::zero() {
            d / cluster.max_dist
        } else {
            T::zero()
        });
        let cups: Vec<Vector3<T>> = mine.iter().map(|h| h.3).collect();
        orients.push(match layout_direction(&cups) {
            None => T::one(),
            Some(dir) => dir.dot(&cluster.axes[0]).abs().max(dir.dot(&cluster.axes[1]).abs()),
        });
    }
    let (j_dist, j_var) = mean_and_variance(&dists);
    let (jn_dist, jn_var) = mean_and_variance(&dists_norm);
    let (j_orient, _) = mean_and_variance(&orients);
    let j = config.weight_orient * j_orient - config.weight_dist * jn_dist - config.weight_var * jn_var;
    Some(ScoreBreakdown {
        max_obj: labels.len(),
        labels,
        j_dist,
        j_var,
        j_orient,
        j,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T: Real> {
    pub score: ScoreBreakdown<T>,
    pub candidate: GraspCandidate<T>,
}

/// Candidates ordered by (max_obj desc, J desc); the first is the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPlan<T: Real> {
    pub ranking: Vec<RankedEntry<T>>,
}

impl<T: Real> RankedPlan<T> {
    pub fn optimal(&self) -> &RankedEntry<T> {
        &self.ranking[0]
    }
}

fn by_j_desc<T: Real>(a: &RankedEntry<T>, b: &RankedEntry<T>) -> std::cmp::Ordering {
    b.score.j.as_f64().total_cmp(&a.score.j.as_f64())
}

/// Groups scored entries by label set, sorts each group by J, then orders
/// all entries by (max_obj desc, J desc). `None` when `entries` is empty.
pub fn rank_scored<T: Real>(entries: Vec<RankedEntry<T>>) -> Option<RankedPlan<T>> {
    if entries.is_empty() {
        return None;
    }
    let mut groups: BTreeMap<Vec<i32>, Vec<RankedEntry<T>>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.score.labels.clone()).or_default().push(e);
    }
    let mut ranking: Vec<RankedEntry<T>> = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(by_j_desc);
        ranking.extend(group);
    }
    ranking.sort_by(|a, b| b.score.max_obj.cmp(&a.score.max_obj).then_with(|| by_j_desc(a, b)));
    Some(RankedPlan { ranking })
}

/// Scores and ranks candidates; unscorable candidates are dropped.
pub fn rank<T: Real>(
    candidates: Vec<GraspCandidate<T>>,
    maps: &ClusterMaps<T>,
    scene: &AffordanceScene<T>,
    config: &PlannerConfig<T>,
) -> Option<RankedPlan<T>> {
    let entries = candidates
        .into_par_iter()
        .filter_map(|candidate| {
            score_candidate(&candidate, maps, scene, config).map(|score| RankedEntry { score, candidate })
        })
        .collect();
    rank_scored(entries)
}
