use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest supported cup count: each cup owns one decimal digit of a
/// convolution sum and sums are held in `u32`.
pub const MAX_CUPS: usize = 9;

const PLANAR_TOLERANCE: f64 = 1e-9;

/// Cup layout of a multi-cup vacuum gripper in gripper-local coordinates.
///
/// All cups lie in the gripper x–y plane together with the TCP, which sits at
/// the local origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperSpec<T: Real> {
    cup_centers: Vec<Vector3<T>>,
    cup_radius: T,
}

/// On-disk form: `{"cup_centers_local": [[x, y, z], ...], "cup_radius": r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperFile {
    pub cup_centers_local: Vec<[f64; 3]>,
    #[serde(default)]
    pub cup_radius: f64,
}

impl<T: Real> GripperSpec<T> {
    pub fn new(cup_centers: Vec<Vector3<T>>, cup_radius: T) -> Result<Self> {
        if cup_centers.is_empty() {
            return Err(Error::InvalidGripper("no cups".into()));
        }
        if cup_centers.len() > MAX_CUPS {
            return Err(Error::InvalidGripper(format!(
                "{} cups exceeds the supported maximum of {MAX_CUPS}",
                cup_centers.len()
            )));
        }
        for (i, c) in cup_centers.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite_value()) {
                return Err(Error::InvalidGripper(format!("cup {i} is not finite")));
            }
            if c.z.abs() > T::lit(PLANAR_TOLERANCE) {
                return Err(Error::InvalidGripper(format!(
                    "cup {i} has z = {}; cups must lie in the gripper plane",
                    c.z
                )));
            }
        }
        if !(cup_radius >= T::zero()) {
            return Err(Error::InvalidGripper("cup radius must be >= 0".into()));
        }
        let spec = GripperSpec {
            cup_centers,
            cup_radius,
        };
        if spec.cup_count() > 1 && spec.max_cup_distance() <= T::zero() {
            return Err(Error::InvalidGripper(
                "multi-cup gripper needs at least one cup away from the TCP".into(),
            ));
        }
        Ok(spec)
    }

    pub fn cup_count(&self) -> usize {
        self.cup_centers.len()
    }

    pub fn cup_centers(&self) -> &[Vector3<T>] {
        &self.cup_centers
    }

    pub fn cup_radius(&self) -> T {
        self.cup_radius
    }

    /// Distance from cup `i` to the TCP in the gripper frame.
    pub fn cup_distance(&self, i: usize) -> T {
        self.cup_centers[i].norm()
    }

    pub fn max_cup_distance(&self) -> T {
        self.cup_centers
            .iter()
            .map(|c| c.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// True when every cup has a mirror cup through the TCP, making a spin of
    /// `γ + π` map the layout onto itself.
    pub fn is_centrally_symmetric(&self) -> bool {
        let tol = T::lit(1e-9);
        self.cup_centers
            .iter()
            .all(|c| self.cup_centers.iter().any(|d| (c + d).amax() <= tol))
    }

    pub fn cast<U: Real>(&self) -> GripperSpec<U> {
        GripperSpec {
            cup_centers: self.cup_centers.iter().map(|c| c.map(|v| v.cast())).collect(),
            cup_radius: self.cup_radius.cast(),
        }
    }

    pub fn from_file_form(file: &GripperFile) -> Result<Self> {
        let centers = file
            .cup_centers_local
            .iter()
            .map(|c| Vector3::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2])))
            .collect();
        Self::new(centers, T::lit(file.cup_radius))
    }

    pub fn to_file_form(&self) -> GripperFile {
        GripperFile {
            cup_centers_local: self
                .cup_centers
                .iter()
                .map(|c| [c.x.as_f64(), c.y.as_f64(), c.z.as_f64()])
                .collect(),
            cup_radius: self.cup_radius.as_f64(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GripperFile = serde_json::from_str(s)?;
        Self::from_file_form(&file)
    }

    /// Two cups on the gripper x axis, `spacing` apart, TCP midway.
    pub fn two_cup(spacing: T, cup_radius: T) -> Result<Self> {
        let h = spacing / T::lit(2.0);
        Self::new(
            vec![Vector3::new(-h, T::zero(), T::zero()), Vector3::new(h, T::zero(), T::zero())],
            cup_radius,
        )
    }

    /// Four cups on the corners of a square of side `pitch` centred on the TCP.
    pub fn four_cup_square(pitch: T, cup_radius: T) -> Result<Self> {
        let h = pitch / T::lit(2.0);
        let z = T::zero();
        Self::new(
            vec![
                Vector3::new(-h, -h, z),
                Vector3::new(h, -h, z),
                Vector3::new(h, h, z),
                Vector3::new(-h, h, z),
            ],
            cup_radius,
        )
    }
}
