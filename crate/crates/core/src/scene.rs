//! Depth + affordance input and the derived world point cloud and normals.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidate::Pixel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::npy;
use crate::real::Real;
use crate::spatial::{Neighbor, PointIndex};

const RIGID_TOLERANCE: f64 = 1e-6;

/// Pinhole camera with a rigid camera-to-world transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    pub camera_to_world: Matrix4<T>,
}

/// JSON form; `camera_to_world` is 16 numbers, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub camera_to_world: Vec<f64>,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        camera_to_world: Matrix4<T>,
    ) -> Result<Self> {
        let cam = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            camera_to_world,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidIntrinsics(m));
        for (name, v) in [("fx", self.fx), ("fy", self.fy), ("cx", self.cx), ("cy", self.cy)] {
            if !v.is_finite_value() {
                return bad(format!("{name} is not finite"));
            }
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return bad("focal lengths must be positive".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero".into());
        }
        if self.cx < T::zero()
            || self.cx >= T::lit(self.width as f64)
            || self.cy < T::zero()
            || self.cy >= T::lit(self.height as f64)
        {
            return bad("principal point outside the image".into());
        }
        let m = &self.camera_to_world;
        if !m.iter().all(|v| v.is_finite_value()) {
            return bad("camera_to_world is not finite".into());
        }
        let tol = T::lit(RIGID_TOLERANCE);
        let bottom = [T::zero(), T::zero(), T::zero(), T::one()];
        if (0..4).any(|c| (m[(3, c)] - bottom[c]).abs() > tol) {
            return bad("camera_to_world bottom row must be [0, 0, 0, 1]".into());
        }
        if !crate::rotation::is_rotation(&self.rotation(), tol) {
            return bad("camera_to_world rotation is not orthonormal with det +1".into());
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<T> {
        self.camera_to_world.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<T> {
        self.camera_to_world.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera-frame point for pixel coordinates `(u, v)` at depth `d`.
    pub fn back_project(&self, u: T, v: T, d: T) -> Vector3<T> {
        Vector3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d)
    }

    pub fn camera_to_world_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation() * p + self.translation()
    }

    pub fn world_to_camera_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation().transpose() * (p - self.translation())
    }

    /// Continuous image coordinates of a world point; `None` behind the camera.
    pub fn project(&self, world: &Vector3<T>) -> Option<(T, T)> {
        let c = self.world_to_camera_point(world);
        if !(c.z > T::zero()) {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// Pixel containing the projection of a world point, if inside the image.
    pub fn pixel_of(&self, world: &Vector3<T>) -> Option<Pixel> {
        let (u, v) = self.project(world)?;
        self.pixel_at(u, v)
    }

    /// Pixel nearest to continuous coordinates `(u, v)`, if inside the image.
    pub fn pixel_at(&self, u: T, v: T) -> Option<Pixel> {
        let (u, v) = (u.round().as_f64(), v.round().as_f64());
        (u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64).then_some(Pixel {
            u: u as usize,
            v: v as usize,
        })
    }

    pub fn from_file_form(file: &IntrinsicsFile) -> Result<Self> {
        if file.camera_to_world.len() != 16 {
            return Err(Error::InvalidIntrinsics(format!(
                "camera_to_world needs 16 numbers, got {}",
                file.camera_to_world.len()
            )));
        }
        let m = Matrix4::from_row_iterator(file.camera_to_world.iter().map(|&v| T::lit(v)));
        Self::new(
            T::lit(file.fx),
            T::lit(file.fy),
            T::lit(file.cx),
            T::lit(file.cy),
            file.width,
            file.height,
            m,
        )
    }

    pub fn to_file_form(&self) -> IntrinsicsFile {
        IntrinsicsFile {
            fx: self.fx.as_f64(),
            fy: self.fy.as_f64(),
            cx: self.cx.as_f64(),
            cy: self.cy.as_f64(),
            width: self.width,
            height: self.height,
            camera_to_world: self
                .camera_to_world
                .transpose()
                .iter()
                .map(|v| v.as_f64())
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: self.fx.cast(),
            fy: self.fy.cast(),
            cx: self.cx.cast(),
            cy: self.cy.cast(),
            width: self.width,
            height: self.height,
            camera_to_world: self.camera_to_world.map(|v| v.cast()),
        }
    }
}

fn nan_vector<T: Real>() -> Vector3<T> {
    Vector3::repeat(T::nan())
}

pub fn is_valid_vector<T: Real>(v: &Vector3<T>) -> bool {
    v.iter().all(|c| c.is_finite_value())
}

/// Back-projects every pixel into the world frame. Pixels with depth ≤ 0 or
/// non-finite depth become NaN points.
pub fn depth_to_pointcloud<T: Real>(
    depth: &Image<T>,
    intrinsics: &CameraIntrinsics<T>,
) -> Image<Vector3<T>> {
    let r = intrinsics.rotation();
    let t = intrinsics.translation();
    Image::from_fn(depth.width(), depth.height(), |p| {
        let d = *depth.at(p);
        if !(d.is_finite_value() && d > T::zero()) {
            return nan_vector();
        }
        let c = intrinsics.back_project(T::lit(p.u as f64), T::lit(p.v as f64), d);
        r * c + t
    })
}

/// Typical distance between horizontally adjacent valid points.
fn median_spacing<T: Real>(points: &Image<Vector3<T>>) -> Option<T> {
    let mut gaps: Vec<f64> = Vec::new();
    let step = (points.len() / 20_000).max(1);
    for i in (0..points.len().saturating_sub(1)).step_by(step) {
        if (i + 1) % points.width() == 0 {
            continue;
        }
        let (a, b) = (&points[i], &points[i + 1]);
        if is_valid_vector(a) && is_valid_vector(b) {
            let g = (a - b).norm().as_f64();
            if g > 0.0 {
                gaps.push(g);
            }
        }
    }
    if gaps.is_empty() {
        return None;
    }
    let mid = gaps.len() / 2;
    let (_, m, _) = gaps.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(T::lit(*m))
}

/// Unit normal of the best-fit plane through `pts`, flipped to face +z.
pub fn plane_normal<T: Real>(pts: impl Iterator<Item = Vector3<T>> + Clone) -> Option<Vector3<T>> {
    let n = pts.clone().count();
    if n < 3 {
        return None;
    }
    let mean = pts.clone().fold(Vector3::zeros(), |a, p| a + p) / T::lit(n as f64);
    let cov = pts.fold(Matrix3::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut normal: Vector3<T> = eig.eigenvectors.column(k).into_owned();
    let len = normal.norm();
    if !(len > T::zero()) || !len.is_finite_value() {
        return None;
    }
    normal /= len;
    if normal.z < T::zero() {
        normal = -normal;
    }
    Some(normal)
}

/// Per-point normals from the covariance of each point's `k` nearest valid
/// neighbours (the point included), oriented up. Points get a NaN normal
/// when the cloud has fewer than `k` valid points.
pub fn estimate_normals<T: Real>(points: &Image<Vector3<T>>, k: usize) -> Image<Vector3<T>> {
    let valid: Vec<usize> = (0..points.len())
        .filter(|&i| is_valid_vector(&points[i]))
        .collect();
    let mut normals = Image::filled(points.width(), points.height(), nan_vector());
    if valid.len() < k.max(3) {
        return normals;
    }
    let spacing = median_spacing(points).unwrap_or_else(|| T::lit(1e-3));
    let cell = spacing * T::lit((k as f64).sqrt() / 2.0).max(T::one());
    let index = PointIndex::new(valid.iter().map(|&i| (i, points[i])), cell);

    let computed: Vec<(usize, Vector3<T>)> = valid
        .par_iter()
        .map_init(Vec::<Neighbor<T>>::new, |buf, &i| {
            index.knn(&points[i], k, buf);
            let normal = if buf.len() < k {
                None
            } else {
                plane_normal(buf.iter().map(|n| points[n.id]))
            };
            (i, normal.unwrap_or_else(nan_vector))
        })
        .collect();
    for (i, n) in computed {
        normals[i] = n;
    }
    normals
}

/// Depth, affordance and the derived world-frame points and normals.
///
/// Pixels without a valid point carry NaN points/normals and zero affordance.
#[derive(Debug, Clone)]
pub struct AffordanceScene<T: Real> {
    depth: Image<T>,
    affordance: Image<T>,
    intrinsics: CameraIntrinsics<T>,
    points: Image<Vector3<T>>,
    normals: Image<Vector3<T>>,
}

impl<T: Real> AffordanceScene<T> {
    /// Builds a scene and estimates normals with `normal_k` neighbours.
    pub fn new(
        depth: Image<T>,
        affordance: Image<T>,
        intrinsics: CameraIntrinsics<T>,
        normal_k: usize,
    ) -> Result<Self> {
        let points = Self::check(&depth, &affordance, &intrinsics)?;
        let normals = estimate_normals(&points, normal_k);
        Ok(Self::assemble(depth, affordance, intrinsics, points, normals))
    }

    /// Builds a scene with externally supplied normals (flipped up, normalized).
    pub fn with_normals(
        depth: Image<T>,
        affordance: Image<T>,
        intrinsics: CameraIntrinsics<T>,
        normals: Image<Vector3<T>>,
    ) -> Result<Self> {
        let points = Self::check(&depth, &affordance, &intrinsics)?;
        if normals.shape() != depth.shape() {
            return Err(Error::ShapeMismatch {
                path: "normals".into(),
                expected: depth.shape().to_vec(),
                found: normals.shape().to_vec(),
            });
        }
        let normals = normals.map(|n| {
            let len = n.norm();
            if is_valid_vector(n) && len > T::zero() {
                let n = n / len;
                if n.z < T::zero() {
                    -n
                } else {
                    n
                }
            } else {
                nan_vector()
            }
        });
        Ok(Self::assemble(depth, affordance, intrinsics, points, normals))
    }

    fn check(
        depth: &Image<T>,
        affordance: &Image<T>,
        intrinsics: &CameraIntrinsics<T>,
    ) -> Result<Image<Vector3<T>>> {
        intrinsics.validate()?;
        let expected = vec![intrinsics.height, intrinsics.width];
        if depth.shape().to_vec() != expected {
            return Err(Error::ShapeMismatch {
                path: "depth".into(),
                expected,
                found: depth.shape().to_vec(),
            });
        }
        if affordance.shape() != depth.shape() {
            return Err(Error::ShapeMismatch {
                path: "affordance".into(),
                expected,
                found: affordance.shape().to_vec(),
            });
        }
        if let Some(i) = (0..affordance.len())
            .find(|&i| !(affordance[i].is_finite_value() && affordance[i] >= T::zero()))
        {
            let p = affordance.pixel_of(i);
            return Err(Error::format(
                "affordance",
                "data",
                format!("score at (u={}, v={}) is negative or not finite", p.u, p.v),
            ));
        }
        Ok(depth_to_pointcloud(depth, intrinsics))
    }

    fn assemble(
        depth: Image<T>,
        mut affordance: Image<T>,
        intrinsics: CameraIntrinsics<T>,
        points: Image<Vector3<T>>,
        normals: Image<Vector3<T>>,
    ) -> Self {
        for i in 0..affordance.len() {
            if !is_valid_vector(&points[i]) {
                affordance[i] = T::zero();
            }
        }
        AffordanceScene {
            depth,
            affordance,
            intrinsics,
            points,
            normals,
        }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn depth(&self) -> &Image<T> {
        &self.depth
    }

    pub fn affordance(&self) -> &Image<T> {
        &self.affordance
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<T> {
        &self.intrinsics
    }

    pub fn points(&self) -> &Image<Vector3<T>> {
        &self.points
    }

    pub fn normals(&self) -> &Image<Vector3<T>> {
        &self.normals
    }

    /// Pixel index has positive affordance (and therefore a valid point).
    #[inline]
    pub fn is_masked(&self, i: usize) -> bool {
        self.affordance[i] > T::zero()
    }

    /// Indices of affordance-positive pixels, row-major order.
    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.affordance.len())
            .filter(|&i| self.is_masked(i))
            .collect()
    }

    /// Same scene with every affordance score multiplied by `factor`.
    pub fn scaled_affordance(&self, factor: T) -> Self {
        let mut s = self.clone();
        for v in s.affordance.as_mut_slice() {
            *v *= factor;
        }
        s
    }

    pub fn cast<U: Real>(&self) -> AffordanceScene<U> {
        let v = |img: &Image<Vector3<T>>| img.map(|p| p.map(|c| c.cast::<U>()));
        AffordanceScene {
            depth: self.depth.map(|d| d.cast()),
            affordance: self.affordance.map(|d| d.cast()),
            intrinsics: self.intrinsics.cast(),
            points: v(&self.points),
            normals: v(&self.normals),
        }
    }
}

pub const DEPTH_FILE: &str = "depth.npy";
pub const AFFORDANCE_FILE: &str = "affordance.npy";
pub const INTRINSICS_FILE: &str = "intrinsics.json";

pub fn load_intrinsics<T: Real>(path: &Path) -> Result<CameraIntrinsics<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: IntrinsicsFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, "json", e.to_string()))?;
    CameraIntrinsics::from_file_form(&file).map_err(|e| match e {
        Error::InvalidIntrinsics(reason) => Error::format(path, "intrinsics", reason),
        other => other,
    })
}

/// Loads depth/affordance NPY arrays and intrinsics JSON and derives points
/// and normals.
pub fn load_scene<T: Real>(
    depth_path: &Path,
    affordance_path: &Path,
    intrinsics_path: &Path,
    normal_k: usize,
) -> Result<AffordanceScene<T>> {
    let intrinsics = load_intrinsics::<T>(intrinsics_path)?;
    let depth = npy::read_image(depth_path)?.map(|&v| T::lit(v as f64));
    let affordance = npy::read_image(affordance_path)?.map(|&v| T::lit(v as f64));
    let expected = vec![intrinsics.height, intrinsics.width];
    for (path, img) in [(depth_path, &depth), (affordance_path, &affordance)] {
        if img.shape().to_vec() != expected {
            return Err(Error::ShapeMismatch {
                path: path.into(),
                expected,
                found: img.shape().to_vec(),
            });
        }
    }
    AffordanceScene::new(depth, affordance, intrinsics, normal_k).map_err(|e| match e {
        Error::Format { field, reason, .. } => Error::Format {
            path: affordance_path.into(),
            field,
            reason,
        },
        other => other,
    })
}

/// Writes `depth.npy`, `affordance.npy` and `intrinsics.json` into `dir`.
pub fn save_scene<T: Real>(dir: &Path, scene: &AffordanceScene<T>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let to_f32 = |img: &Image<T>| img.map(|v| v.as_f64() as f32);
    npy::write_image(&dir.join(DEPTH_FILE), &to_f32(&scene.depth))?;
    npy::write_image(&dir.join(AFFORDANCE_FILE), &to_f32(&scene.affordance))?;
    let path = dir.join(INTRINSICS_FILE);
    let text = serde_json::to_string_pretty(&scene.intrinsics.to_file_form())?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
