use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Tunables for one planning run. Angles are radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig<T: Real> {
    /// Voxel edge length `l`, metres.
    pub voxel_size: T,
    /// Orientation lattice step `Δα`.
    pub angle_interval: T,
    /// Max deviation `ε₁` between contact normals and the approach axis.
    pub eps_normal: T,
    /// Max cup-to-TCP distance error `ε₂`, metres.
    pub eps_dist: T,
    /// A voxel is occupied when it holds at least this many masked points.
    pub min_points_per_voxel: usize,
    /// Neighbourhood size for normal estimation.
    pub normal_k: usize,
    /// Fraction of the most frequent normal keys used to sample orientations.
    pub top_fraction: T,
    /// Affordance blobs smaller than this many pixels are treated as background.
    pub min_cluster_size: usize,
    pub weight_orient: T,
    pub weight_dist: T,
    pub weight_var: T,
    /// Sample the spin angle over half a turn when the cup layout is
    /// centrally symmetric.
    pub symmetric_gamma: bool,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        PlannerConfig {
            voxel_size: T::lit(0.005),
            angle_interval: T::lit(5f64.to_radians()),
            eps_normal: T::lit(11.5f64.to_radians()),
            eps_dist: T::lit(0.01),
            min_points_per_voxel: 11,
            normal_k: 16,
            top_fraction: T::lit(0.10),
            min_cluster_size: 5,
            weight_orient: T::one(),
            weight_dist: T::one(),
            weight_var: T::one(),
            symmetric_gamma: false,
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        let pos = |v: T| v.is_finite_value() && v > T::zero();
        if !pos(self.voxel_size) {
            return bad("voxel_size must be > 0");
        }
        if !pos(self.angle_interval) || self.angle_interval > T::frac_pi_2() {
            return bad("angle_interval must be in (0, π/2]");
        }
        if !pos(self.eps_normal) {
            return bad("eps_normal must be > 0");
        }
        if !pos(self.eps_dist) {
            return bad("eps_dist must be > 0");
        }
        if self.normal_k < 3 {
            return bad("normal_k must be >= 3");
        }
        if !pos(self.top_fraction) || self.top_fraction > T::one() {
            return bad("top_fraction must be in (0, 1]");
        }
        for w in [self.weight_orient, self.weight_dist, self.weight_var] {
            if !w.is_finite_value() || w < T::zero() {
                return bad("score weights must be finite and >= 0");
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> PlannerConfig<U> {
        PlannerConfig {
            voxel_size: self.voxel_size.cast(),
            angle_interval: self.angle_interval.cast(),
            eps_normal: self.eps_normal.cast(),
            eps_dist: self.eps_dist.cast(),
            min_points_per_voxel: self.min_points_per_voxel,
            normal_k: self.normal_k,
            top_fraction: self.top_fraction.cast(),
            min_cluster_size: self.min_cluster_size,
            weight_orient: self.weight_orient.cast(),
            weight_dist: self.weight_dist.cast(),
            weight_var: self.weight_var.cast(),
            symmetric_gamma: self.symmetric_gamma,
        }
    }

    /// Parses a config document. Every key is optional; angle keys accept
    /// either radians (`eps_normal`) or degrees (`eps_normal_deg`).
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(s)?;
        let mut cfg = PlannerConfig::<T>::default();
        let angle = |rad: Option<f64>, deg: Option<f64>, name: &str| -> Result<Option<T>> {
            match (rad, deg) {
                (Some(_), Some(_)) => Err(Error::InvalidConfig(format!(
                    "both `{name}` and `{name}_deg` given"
                ))),
                (Some(r), None) => Ok(Some(T::lit(r))),
                (None, Some(d)) => Ok(Some(T::lit(d.to_radians()))),
                (None, None) => Ok(None),
            }
        };
        if let Some(v) = file.voxel_size {
            cfg.voxel_size = T::lit(v);
        }
        if let Some(v) = angle(file.angle_interval, file.angle_interval_deg, "angle_interval")? {
            cfg.angle_interval = v;
        }
        if let Some(v) = angle(file.eps_normal, file.eps_normal_deg, "eps_normal")? {
            cfg.eps_normal = v;
        }
        if let Some(v) = file.eps_dist {
            cfg.eps_dist = T::lit(v);
        }
        if let Some(v) = file.min_points_per_voxel {
            cfg.min_points_per_voxel = v;
        }
        if let Some(v) = file.normal_k {
            cfg.normal_k = v;
        }
        if let Some(v) = file.top_fraction {
            cfg.top_fraction = T::lit(v);
        }
        if let Some(v) = file.min_cluster_size {
            cfg.min_cluster_size = v;
        }
        if let Some(v) = file.weight_orient {
            cfg.weight_orient = T::lit(v);
        }
        if let Some(v) = file.weight_dist {
            cfg.weight_dist = T::lit(v);
        }
        if let Some(v) = file.weight_var {
            cfg.weight_var = T::lit(v);
        }
        if let Some(v) = file.symmetric_gamma {
            cfg.symmetric_gamma = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Radian-valued form with every key present.
    pub fn to_file_form(&self) -> ConfigFile {
        ConfigFile {
            voxel_size: Some(self.voxel_size.as_f64()),
            angle_interval: Some(self.angle_interval.as_f64()),
            eps_normal: Some(self.eps_normal.as_f64()),
            eps_dist: Some(self.eps_dist.as_f64()),
            min_points_per_voxel: Some(self.min_points_per_voxel),
            normal_k: Some(self.normal_k),
            top_fraction: Some(self.top_fraction.as_f64()),
            min_cluster_size: Some(self.min_cluster_size),
            weight_orient: Some(self.weight_orient.as_f64()),
            weight_dist: Some(self.weight_dist.as_f64()),
            weight_var: Some(self.weight_var.as_f64()),
            symmetric_gamma: Some(self.symmetric_gamma),
            ..ConfigFile::default()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voxel_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_interval_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_normal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_normal_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_dist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_points_per_voxel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_cluster_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_orient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_dist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetric_gamma: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PlannerConfig::<f64>::default();
        assert_eq!(c.voxel_size, 0.005);
        assert!((c.angle_interval.to_degrees() - 5.0).abs() < 1e-12);
        assert!((c.eps_normal.to_degrees() - 11.5).abs() < 1e-12);
        assert_eq!(c.eps_dist, 0.01);
        assert_eq!(c.min_points_per_voxel, 11);
        assert_eq!(c.top_fraction, 0.10);
        c.validate().unwrap();
    }

    #[test]
    fn degree_keys() {
        let c = PlannerConfig::<f64>::from_json_str(r#"{"eps_normal_deg": 20, "voxel_size": 0.004}"#)
            .unwrap();
        assert!((c.eps_normal - 20f64.to_radians()).abs() < 1e-15);
        assert_eq!(c.voxel_size, 0.004);
        assert!(PlannerConfig::<f64>::from_json_str(r#"{"eps_normal_deg": 20, "eps_normal": 0.3}"#)
            .is_err());
        assert!(PlannerConfig::<f64>::from_json_str(r#"{"voxel_sise": 0.004}"#).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(PlannerConfig::<f64>::from_json_str(r#"{"voxel_size": 0}"#).is_err());
        assert!(PlannerConfig::<f64>::from_json_str(r#"{"angle_interval_deg": 100}"#).is_err());
        assert!(PlannerConfig::<f64>::from_json_str(r#"{"normal_k": 2}"#).is_err());
    }

    #[test]
    fn file_form_round_trips() {
        let c = PlannerConfig::<f64> {
            symmetric_gamma: true,
            ..Default::default()
        };
        let s = serde_json::to_string(&c.to_file_form()).unwrap();
        assert_eq!(PlannerConfig::<f64>::from_json_str(&s).unwrap(), c);
    }
}
