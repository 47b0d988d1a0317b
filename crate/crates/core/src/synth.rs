//! Ray-cast synthetic scenes with analytic affordance, normals and
//! ground-truth graspable regions.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidate::Pixel;
use crate::error::{Error, Result};
use crate::gripper::GripperSpec;
use crate::image::Image;
use crate::rotation::{vec_to_angles, zyz_rotation};
use crate::scene::{AffordanceScene, CameraIntrinsics, IntrinsicsFile};

fn up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn yes() -> bool {
    true
}

fn default_cap_deg() -> f64 {
    11.5
}

fn default_normal_k() -> usize {
    16
}

/// Scene primitive. Only upward-facing surfaces of `affordable` primitives
/// receive affordance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Rectangle `size[0] × size[1]` centred at `center`, spun by `yaw` about
    /// its normal.
    Plane {
        center: [f64; 3],
        #[serde(default = "up")]
        normal: [f64; 3],
        size: [f64; 2],
        #[serde(default)]
        yaw: f64,
        #[serde(default = "yes")]
        affordable: bool,
        #[serde(default)]
        ramp: bool,
    },
    /// Box with vertical sides, rotated by `yaw` about world z.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        #[serde(default)]
        yaw: f64,
        #[serde(default = "yes")]
        affordable: bool,
        #[serde(default)]
        ramp: bool,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default = "yes")]
        affordable: bool,
        #[serde(default)]
        ramp: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub camera: IntrinsicsFile,
    pub primitives: Vec<Primitive>,
    /// Affordance is zero within this distance of a surface edge.
    #[serde(default)]
    pub margin: f64,
    /// Half-angle of the affordable cap on spheres.
    #[serde(default = "default_cap_deg")]
    pub sphere_cap_deg: f64,
    /// Standard deviation of Gaussian depth noise in metres.
    #[serde(default)]
    pub depth_noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_normal_k")]
    pub normal_k: usize,
}

impl SceneSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }
}

/// Affordable area of one primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub primitive: usize,
    /// Convex boundary in world coordinates.
    pub polygon: Vec<[f64; 3]>,
    pub center: [f64; 3],
    pub normal: [f64; 3],
    /// Unique affordance maximum among this primitive's pixels.
    pub peak_pixel: Option<Pixel>,
}

impl Region {
    /// Whether `p` projects vertically into the region boundary.
    pub fn covers_xy(&self, p: &Vector3<f64>) -> bool {
        let n = self.polygon.len();
        if n < 3 {
            return false;
        }
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let cross = (b[0] - a[0]) * (p.y - a[1]) - (b[1] - a[1]) * (p.x - a[0]);
            if cross.abs() < 1e-15 {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Index of the primitive hit at each pixel, -1 where the ray misses.
    pub primitive_ids: Image<i32>,
    /// Outward surface normals flipped to point up, NaN where the ray misses.
    pub normals: Image<Vector3<f64>>,
    pub regions: Vec<Region>,
}

impl GroundTruth {
    /// Highest region covering `p` in the xy projection.
    pub fn region_at(&self, p: &Vector3<f64>) -> Option<usize> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.covers_xy(p))
            .max_by(|a, b| a.1.center[2].total_cmp(&b.1.center[2]))
            .map(|(i, _)| i)
    }

    /// Largest number of distinct regions a vertically approaching gripper
    /// can cover at once, searched over TCPs at region centres and pairwise
    /// midpoints and spins in 5° steps.
    pub fn expected_max_obj(&self, gripper: &GripperSpec<f64>) -> usize {
        let centers: Vec<Vector3<f64>> = self.regions.iter().map(|r| Vector3::from(r.center)).collect();
        let mut tcps = centers.clone();
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                tcps.push((centers[i] + centers[j]) / 2.0);
            }
        }
        let mut best = 0;
        for tcp in &tcps {
            for step in 0..72 {
                let spin = zyz_rotation(0.0, 0.0, (step as f64 * 5.0).to_radians());
                let mut hit: Vec<usize> = gripper
                    .cup_centers()
                    .iter()
                    .filter_map(|c| self.region_at(&(tcp + spin * c)))
                    .collect();
                hit.sort_unstable();
                hit.dedup();
                best = best.max(hit.len());
            }
        }
        best
    }
}

struct Hit {
    t: f64,
    normal: Vector3<f64>,
    affordance: f64,
}

fn ramp_value(ramp: bool, rho: f64, rho_max: f64) -> f64 {
    if ramp && rho_max > 0.0 {
        1.0 - 0.5 * (rho / rho_max).min(1.0)
    } else {
        1.0
    }
}

fn plane_frame(normal: &[f64; 3], yaw: f64) -> Result<Matrix3<f64>> {
    let n = Vector3::from(*normal).normalize();
    let n = if n.z < 0.0 { -n } else { n };
    let (theta, phi) = vec_to_angles(&n).map_err(|e| Error::SceneSpec(e.to_string()))?;
    Ok(zyz_rotation(theta, phi, yaw))
}

struct Caster<'a> {
    spec: &'a SceneSpec,
    frames: Vec<Matrix3<f64>>,
    cap: f64,
}

impl Caster<'_> {
    fn cast(&self, index: usize, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        let margin = self.spec.margin;
        let frame = &self.frames[index];
        match &self.spec.primitives[index] {
            Primitive::Plane { center, size, affordable, ramp, .. } => {
                let c = Vector3::from(*center);
                let n = frame.column(2).into_owned();
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(&(c - o)) / denom;
                if t <= 0.0 {
                    return None;
                }
                let rel = o + d * t - c;
                let (a, b) = (rel.dot(&frame.column(0)), rel.dot(&frame.column(1)));
                let (ha, hb) = (size[0] / 2.0, size[1] / 2.0);
                if a.abs() > ha || b.abs() > hb {
                    return None;
                }
                let outward = if denom < 0.0 { n } else { -n };
                let inner = a.abs() <= ha - margin && b.abs() <= hb - margin;
                let affordance = if *affordable && outward.z > 1e-9 && inner {
                    ramp_value(*ramp, a.hypot(b), (ha - margin).hypot(hb - margin))
                } else {
                    0.0
                };
                Some(Hit { t, normal: outward, affordance })
            }
            Primitive::Box { center, size, affordable, ramp, .. } => {
                let c = Vector3::from(*center);
                let lo = frame.transpose() * (o - c);
                let ld = frame.transpose() * d;
                let half = Vector3::from(*size) / 2.0;
                let (mut t_in, mut t_out, mut axis, mut sign) = (f64::NEG_INFINITY, f64::INFINITY, 0, 0.0);
                for k in 0..3 {
                    if ld[k].abs() < 1e-15 {
                        if lo[k].abs() > half[k] {
                            return None;
                        }
                        continue;
                    }
                    let (t0, t1) = ((-half[k] - lo[k]) / ld[k], (half[k] - lo[k]) / ld[k]);
                    let (near, far, s) = if t0 < t1 { (t0, t1, -1.0) } else { (t1, t0, 1.0) };
                    if near > t_in {
                        t_in = near;
                        axis = k;
                        sign = s;
                    }
                    t_out = t_out.min(far);
                }
                if t_in > t_out || t_in <= 0.0 {
                    return None;
                }
                let mut ln = Vector3::zeros();
                ln[axis] = sign;
                let hit = lo + ld * t_in;
                let top = axis == 2 && sign > 0.0;
                let (ha, hb) = (half.x - margin, half.y - margin);
                let affordance = if *affordable && top && hit.x.abs() <= ha && hit.y.abs() <= hb {
                    ramp_value(*ramp, hit.x.hypot(hit.y), ha.hypot(hb))
                } else {
                    0.0
                };
                Some(Hit { t: t_in, normal: frame * ln, affordance })
            }
            Primitive::Sphere { center, radius, affordable, ramp } => {
                let c = Vector3::from(*center);
                let oc = o - c;
                let (a, b, cc) = (d.dot(d), oc.dot(d), oc.dot(&oc) - radius * radius);
                let disc = b * b - a * cc;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / a;
                if t <= 0.0 {
                    return None;
                }
                let normal = (oc + d * t) / *radius;
                let tilt = normal.z.clamp(-1.0, 1.0).acos();
                let limit = self.cap - margin / radius;
                let affordance = if *affordable && tilt <= limit {
                    ramp_value(*ramp, radius * tilt, radius * limit)
                } else {
                    0.0
                };
                Some(Hit { t, normal, affordance })
            }
        }
    }

    fn region(&self, index: usize) -> Option<Region> {
        let margin = self.spec.margin;
        let frame = &self.frames[index];
        let (center, polygon, normal) = match &self.spec.primitives[index] {
            Primitive::Plane { affordable: false, .. }
            | Primitive::Box { affordable: false, .. }
            | Primitive::Sphere { affordable: false, .. } => return None,
            Primitive::Plane { center, size, .. } => {
                let n = frame.column(2).into_owned();
                let n = if n.z < 0.0 { -n } else { n };
                if n.z <= 1e-9 {
                    return None;
                }
                let c = Vector3::from(*center);
                (c, rectangle(&c, frame, size[0] / 2.0 - margin, size[1] / 2.0 - margin)?, n)
            }
            Primitive::Box { center, size, .. } => {
                let c = Vector3::from(*center) + Vector3::new(0.0, 0.0, size[2] / 2.0);
                (c, rectangle(&c, frame, size[0] / 2.0 - margin, size[1] / 2.0 - margin)?, Vector3::z())
            }
            Primitive::Sphere { center, radius, .. } => {
                let limit = self.cap - margin / radius;
                if limit <= 0.0 {
                    return None;
                }
                let c = Vector3::from(*center);
                let ring = (0..32)
                    .map(|k| {
                        let a = k as f64 / 32.0 * std::f64::consts::TAU;
                        let dir = Vector3::new(limit.sin() * a.cos(), limit.sin() * a.sin(), limit.cos());
                        (c + dir * *radius).into()
                    })
                    .collect();
                (c + Vector3::new(0.0, 0.0, *radius), ring, Vector3::z())
            }
        };
        Some(Region {
            primitive: index,
            polygon,
            center: center.into(),
            normal: normal.into(),
            peak_pixel: None,
        })
    }
}

fn rectangle(c: &Vector3<f64>, frame: &Matrix3<f64>, ha: f64, hb: f64) -> Option<Vec<[f64; 3]>> {
    if ha <= 0.0 || hb <= 0.0 {
        return None;
    }
    let (ea, eb) = (frame.column(0).into_owned(), frame.column(1).into_owned());
    Some(
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|(sa, sb)| (c + ea * (sa * ha) + eb * (sb * hb)).into())
            .collect(),
    )
}

fn validate(spec: &SceneSpec, camera: &CameraIntrinsics<f64>) -> Result<()> {
    let bad = |m: String| Err(Error::SceneSpec(m));
    if !(spec.margin >= 0.0 && spec.margin.is_finite()) {
        return bad(format!("margin {} must be finite and >= 0", spec.margin));
    }
    if !(spec.depth_noise >= 0.0 && spec.depth_noise.is_finite()) {
        return bad(format!("depth_noise {} must be finite and >= 0", spec.depth_noise));
    }
    if !(spec.sphere_cap_deg > 0.0 && spec.sphere_cap_deg <= 90.0) {
        return bad(format!("sphere_cap_deg {} must lie in (0, 90]", spec.sphere_cap_deg));
    }
    for (i, p) in spec.primitives.iter().enumerate() {
        let (center, sizes, extra): (&[f64; 3], Vec<f64>, Vec<f64>) = match p {
            Primitive::Plane { center, size, normal, yaw, .. } => {
                if Vector3::from(*normal).norm() < 1e-12 {
                    return bad(format!("primitive {i}: zero normal"));
                }
                (center, size.to_vec(), normal.iter().copied().chain([*yaw]).collect())
            }
            Primitive::Box { center, size, yaw, .. } => (center, size.to_vec(), vec![*yaw]),
            Primitive::Sphere { center, radius, .. } => (center, vec![*radius], vec![]),
        };
        let finite = center.iter().chain(&sizes).chain(&extra).all(|v| v.is_finite());
        if !finite || sizes.iter().any(|s| *s <= 0.0) {
            return bad(format!("primitive {i} is degenerate or not finite"));
        }
        if camera.world_to_camera_point(&Vector3::from(*center)).z <= 0.0 {
            return bad(format!("primitive {i} lies behind the camera"));
        }
    }
    Ok(())
}

/// Renders depth and affordance by nearest-hit ray casting and wraps them in
/// a scene with estimated normals.
pub fn render_scene(spec: &SceneSpec) -> Result<(AffordanceScene<f64>, GroundTruth)> {
    let camera = CameraIntrinsics::<f64>::from_file_form(&spec.camera).map_err(|e| Error::SceneSpec(e.to_string()))?;
    validate(spec, &camera)?;
    let frames = spec
        .primitives
        .iter()
        .map(|p| match p {
            Primitive::Plane { normal, yaw, .. } => plane_frame(normal, *yaw),
            Primitive::Box { yaw, .. } => Ok(zyz_rotation(0.0, 0.0, *yaw)),
            Primitive::Sphere { .. } => Ok(Matrix3::identity()),
        })
        .collect::<Result<Vec<_>>>()?;
    let caster = Caster { spec, frames, cap: spec.sphere_cap_deg.to_radians() };

    let (w, h) = (camera.width, camera.height);
    let origin = camera.translation();
    let rot = camera.rotation();
    let pixels: Vec<(f64, f64, Vector3<f64>, i32)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let d = rot * Vector3::new((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
            let best = (0..spec.primitives.len())
                .filter_map(|k| caster.cast(k, &origin, &d).map(|hit| (k, hit)))
                .min_by(|a, b| a.1.t.total_cmp(&b.1.t));
            match best {
                Some((k, hit)) => {
                    let n = if hit.normal.z < 0.0 { -hit.normal } else { hit.normal };
                    (hit.t, hit.affordance, n, k as i32)
                }
                None => (0.0, 0.0, Vector3::repeat(f64::NAN), -1),
            }
        })
        .collect();

    let mut depth: Vec<f64> = pixels.iter().map(|p| p.0).collect();
    if spec.depth_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.depth_noise).map_err(|e| Error::SceneSpec(e.to_string()))?;
        for d in depth.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + noise.sample(&mut rng)).max(f64::MIN_POSITIVE);
        }
    }
    let affordance: Vec<f64> = pixels.iter().map(|p| p.1).collect();
    let ids = Image::from_vec(w, h, pixels.iter().map(|p| p.3).collect()).expect("pixel count");
    let normals = Image::from_vec(w, h, pixels.iter().map(|p| p.2).collect()).expect("pixel count");

    let mut regions: Vec<Region> = (0..spec.primitives.len()).filter_map(|k| caster.region(k)).collect();
    for r in &mut regions {
        r.peak_pixel = unique_peak(&affordance, &ids, r.primitive);
    }
    let depth = Image::from_vec(w, h, depth).expect("pixel count");
    let affordance = Image::from_vec(w, h, affordance).expect("pixel count");
    let scene = AffordanceScene::new(depth, affordance, camera, spec.normal_k)?;
    Ok((scene, GroundTruth { primitive_ids: ids, normals, regions }))
}

fn unique_peak(affordance: &[f64], ids: &Image<i32>, primitive: usize) -> Option<Pixel> {
    let mut best: Option<(usize, f64)> = None;
    let mut tied = false;
    for (i, &a) in affordance.iter().enumerate() {
        if ids[i] != primitive as i32 || a <= 0.0 {
            continue;
        }
        match best {
            Some((_, b)) if a < b => {}
            Some((_, b)) if a == b => tied = true,
            _ => {
                best = Some((i, a));
                tied = false;
            }
        }
    }
    best.filter(|_| !tied).map(|(i, _)| ids.pixel_of(i))
}

/// Fixed scenes shared by tests, acceptance and the CLI.
pub mod presets {
    use super::*;
    use rand::Rng;

    /// Camera `height` metres above the origin looking straight down, with
    /// image x along world x and image y along world -y.
    pub fn overhead_camera(width: usize, height_px: usize, focal: f64, height: f64) -> IntrinsicsFile {
        IntrinsicsFile {
            fx: focal,
            fy: focal,
            cx: (width - 1) as f64 / 2.0,
            cy: (height_px - 1) as f64 / 2.0,
            width,
            height: height_px,
            camera_to_world: vec![
                1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, height, //
                0.0, 0.0, 0.0, 1.0,
            ],
        }
    }

    fn scene(primitives: Vec<Primitive>) -> SceneSpec {
        SceneSpec {
            camera: overhead_camera(161, 121, 500.0, 0.5),
            primitives,
            margin: 0.005,
            sphere_cap_deg: default_cap_deg(),
            depth_noise: 0.0,
            seed: 0,
            normal_k: default_normal_k(),
        }
    }

    fn table() -> Primitive {
        Primitive::Plane { center: [0.0; 3], normal: up(), size: [1.0, 1.0], yaw: 0.0, affordable: false, ramp: false }
    }

    fn block(center: [f64; 2], size: [f64; 3], yaw: f64, ramp: bool) -> Primitive {
        Primitive::Box { center: [center[0], center[1], size[2] / 2.0], size, yaw, affordable: true, ramp }
    }

    /// Affordable plane exactly covering the view at 0.5 m.
    pub fn flat_plate() -> SceneSpec {
        scene(vec![Primitive::Plane {
            center: [0.0; 3],
            normal: up(),
            size: [0.161, 0.121],
            yaw: 0.0,
            affordable: true,
            ramp: false,
        }])
    }

    /// Two 0.06 m cubes-ish boxes 0.08 m apart along x on a plain table.
    pub fn two_boxes() -> SceneSpec {
        scene(vec![
            table(),
            block([-0.04, 0.0], [0.06, 0.06, 0.04], 0.0, false),
            block([0.04, 0.0], [0.06, 0.06, 0.04], 0.0, false),
        ])
    }

    /// One 0.03 m box with a radial ramp whose centre projects onto pixel
    /// (105, 70).
    pub fn small_blob() -> SceneSpec {
        scene(vec![table(), block([0.024, -0.0096], [0.03, 0.03, 0.02], 0.0, true)])
    }

    /// Table only, nothing affordable.
    pub fn empty() -> SceneSpec {
        scene(vec![table()])
    }

    /// Table with one to three boxes of random size, position and yaw.
    pub fn random_boxes(seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut primitives = vec![table()];
        let n = rng.random_range(1..=3);
        for k in 0..n {
            let x = -0.05 + 0.1 * (k as f64 + 0.5) / n as f64 + rng.random_range(-0.01..0.01);
            let y = rng.random_range(-0.02..0.02);
            let size = [rng.random_range(0.03..0.1), rng.random_range(0.03..0.08), rng.random_range(0.01..0.05)];
            primitives.push(block([x, y], size, rng.random_range(-0.5..0.5), false));
        }
        let mut s = scene(primitives);
        s.seed = seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::angle_between;

    #[test]
    fn flat_plate_has_margin_border() {
        let (scene, truth) = render_scene(&presets::flat_plate()).unwrap();
        let aff = scene.affordance();
        // 1 mm per pixel, plate edge half a pixel outside the outermost
        // pixel centres, 5 mm margin
        for v in 0..121 {
            for u in 0..161 {
                let inside = (5..=155).contains(&u) && (5..=115).contains(&v);
                assert_eq!(aff[v * 161 + u], if inside { 1.0 } else { 0.0 }, "({u}, {v})");
                assert_eq!(truth.normals[v * 161 + u], Vector3::z());
            }
        }
        assert_eq!(truth.regions.len(), 1);
    }

    #[test]
    fn depth_back_projects_onto_surfaces() {
        let (scene, truth) = render_scene(&presets::two_boxes()).unwrap();
        for i in 0..scene.depth().len() {
            let p = scene.points()[i];
            let z = match truth.primitive_ids[i] {
                0 => 0.0,
                1 | 2 if truth.normals[i].z > 0.5 => 0.04,
                1 | 2 => continue,
                _ => unreachable!(),
            };
            assert!((p.z - z).abs() < 1e-6, "pixel {i}: {}", p.z);
        }
    }

    #[test]
    fn box_sides_have_horizontal_normals() {
        let mut s = presets::two_boxes();
        s.camera.camera_to_world[3] = 0.15;
        let (_, truth) = render_scene(&s).unwrap();
        let side = (0..truth.normals.len()).filter(|&i| truth.primitive_ids[i] == 2 && truth.normals[i].z.abs() < 1e-12);
        assert!(side.count() > 0);
    }

    #[test]
    fn two_boxes_expect_two_objects() {
        let (_, truth) = render_scene(&presets::two_boxes()).unwrap();
        assert_eq!(truth.regions.len(), 2);
        assert_eq!(truth.expected_max_obj(&GripperSpec::two_cup(0.08, 0.01).unwrap()), 2);
        assert_eq!(truth.expected_max_obj(&GripperSpec::two_cup(0.2, 0.01).unwrap()), 1);
        let (_, plate) = render_scene(&presets::flat_plate()).unwrap();
        assert_eq!(plate.expected_max_obj(&GripperSpec::two_cup(0.08, 0.01).unwrap()), 1);
    }

    #[test]
    fn ramp_peak_is_unique_at_box_centre() {
        let (scene, truth) = render_scene(&presets::small_blob()).unwrap();
        assert_eq!(truth.regions[0].peak_pixel, Some(Pixel { u: 105, v: 70 }));
        let a = scene.affordance();
        assert_eq!(a[70 * 161 + 105], 1.0);
        assert!(a.as_slice().iter().filter(|&&x| x == 1.0).count() == 1);
    }

    #[test]
    fn sphere_cap_matches_angle() {
        let mut s = presets::empty();
        s.margin = 0.0;
        s.primitives.push(Primitive::Sphere { center: [0.0, 0.0, 0.05], radius: 0.05, affordable: true, ramp: false });
        let (scene, truth) = render_scene(&s).unwrap();
        let cap = 11.5f64.to_radians();
        let mut n = 0;
        for i in 0..scene.depth().len() {
            if truth.primitive_ids[i] != 1 {
                continue;
            }
            let tilt = truth.normals[i].z.acos();
            if (tilt - cap).abs() > 1e-3 {
                assert_eq!(scene.affordance()[i] > 0.0, tilt < cap, "pixel {i}");
                n += 1;
            }
        }
        assert!(n > 100);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let mut s = presets::empty();
        s.primitives.push(Primitive::Sphere { center: [0.0, 0.0, 0.9], radius: 0.05, affordable: true, ramp: false });
        assert!(matches!(render_scene(&s), Err(Error::SceneSpec(_))));
    }

    #[test]
    fn degenerate_primitive_is_rejected() {
        let mut s = presets::empty();
        s.primitives.push(Primitive::Box { center: [0.0; 3], size: [0.0, 0.1, 0.1], yaw: 0.0, affordable: true, ramp: false });
        assert!(matches!(render_scene(&s), Err(Error::SceneSpec(_))));
        let mut s = presets::empty();
        s.margin = -1.0;
        assert!(matches!(render_scene(&s), Err(Error::SceneSpec(_))));
    }

    #[test]
    fn estimated_normals_agree_on_interior_pixels() {
        let mut s = presets::flat_plate();
        s.primitives[0] = Primitive::Plane {
            center: [0.0; 3],
            normal: [0.3, -0.2, 1.0],
            size: [1.0, 1.0],
            yaw: 0.4,
            affordable: true,
            ramp: false,
        };
        let (scene, truth) = render_scene(&s).unwrap();
        let mut worst = 0.0f64;
        for v in 10..111 {
            for u in 10..151 {
                let i = v * 161 + u;
                worst = worst.max(angle_between(&scene.normals()[i], &truth.normals[i]));
            }
        }
        assert!(worst < 2f64.to_radians(), "{}", worst.to_degrees());
    }

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let s = presets::two_boxes();
        assert_eq!(SceneSpec::from_json_str(&s.to_json()).unwrap(), s);
        let minimal = r#"{"camera": {"fx": 500, "fy": 500, "cx": 1, "cy": 1, "width": 3, "height": 3,
            "camera_to_world": [1,0,0,0, 0,-1,0,0, 0,0,-1,0.5, 0,0,0,1]},
            "primitives": [{"type": "plane", "center": [0,0,0], "size": [1,1]}]}"#;
        let m = SceneSpec::from_json_str(minimal).unwrap();
        assert_eq!(m.margin, 0.0);
        assert!(matches!(m.primitives[0], Primitive::Plane { affordable: true, ramp: false, .. }));
        assert!(SceneSpec::from_json_str(&minimal.replace("\"size\"", "\"extent\"")).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut s = presets::flat_plate();
        s.depth_noise = 0.001;
        let a = render_scene(&s).unwrap().0;
        let b = render_scene(&s).unwrap().0;
        assert_eq!(a.depth().as_slice(), b.depth().as_slice());
        s.seed = 1;
        let c = render_scene(&s).unwrap().0;
        assert_ne!(a.depth().as_slice(), c.depth().as_slice());
    }
}
