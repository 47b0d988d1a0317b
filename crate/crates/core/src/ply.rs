//! ASCII PLY export of scene points and cup markers.

use std::io::Write;
use std::path::Path;

use crate::candidate::GraspCandidate;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scene::{is_valid_vector, AffordanceScene};

const SCENE_GREY: [u8; 3] = [150, 150, 150];
const AFFORDABLE: [u8; 3] = [40, 110, 230];
const CUP_ACTIVE: [u8; 3] = [30, 200, 60];
const CUP_IDLE: [u8; 3] = [220, 40, 40];

/// Valid scene points followed by one marker per cup of every grasp.
pub fn vertex_count<T: Real>(scene: &AffordanceScene<T>, grasps: &[&GraspCandidate<T>]) -> usize {
    let points = scene.points().as_slice().iter().filter(|p| is_valid_vector(p)).count();
    points + grasps.iter().map(|g| g.cup_centers.len()).sum::<usize>()
}

/// Scene points are grey, or blue where affordable; cup markers are green
/// when active and red otherwise.
pub fn write_ply<T: Real, W: Write>(out: &mut W, scene: &AffordanceScene<T>, grasps: &[&GraspCandidate<T>]) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "comment {} grasps", grasps.len())?;
    writeln!(out, "element vertex {}", vertex_count(scene, grasps))?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property float {axis}")?;
    }
    for channel in ["red", "green", "blue"] {
        writeln!(out, "property uchar {channel}")?;
    }
    writeln!(out, "end_header")?;
    let mut vertex = |p: &nalgebra::Vector3<T>, c: [u8; 3]| {
        writeln!(out, "{} {} {} {} {} {}", p.x.as_f64() as f32, p.y.as_f64() as f32, p.z.as_f64() as f32, c[0], c[1], c[2])
    };
    for (i, p) in scene.points().as_slice().iter().enumerate() {
        if is_valid_vector(p) {
            vertex(p, if scene.is_masked(i) { AFFORDABLE } else { SCENE_GREY })?;
        }
    }
    for g in grasps {
        for (c, &active) in g.cup_centers.iter().zip(&g.activation) {
            vertex(c, if active { CUP_ACTIVE } else { CUP_IDLE })?;
        }
    }
    Ok(())
}

pub fn save_ply<T: Real>(path: &Path, scene: &AffordanceScene<T>, grasps: &[&GraspCandidate<T>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_ply(&mut w, scene, grasps)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
