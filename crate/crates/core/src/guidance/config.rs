//! Guidance hyperparameters: phase thresholds, inner-loop budgets, loss
//! weights, and per-parameter-group learning rates.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Learning rates for the three groups of a similarity-transform parameter
/// vector (log-scale scalar, axis-angle rotation, translation).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroupRates {
    pub scale: f64,
    pub rotation: f64,
    pub translation: f64,
}

impl GroupRates {
    /// Per-entry rates in [`TransformGrad::as_array`] order.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.scale,
            self.rotation,
            self.rotation,
            self.rotation,
            self.translation,
            self.translation,
            self.translation,
        ]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    /// Flow time at which the hand-only phase runs.
    pub tau1: f64,
    /// Flow time at which the object-alignment phase runs; joint refinement
    /// follows on every later step.
    pub tau2: f64,
    /// Inner iterations for the hand, object, and joint phases.
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    /// Hand-phase weights: keypoints, normal, disparity, silhouette,
    /// translation regularizer.
    pub lambda: [f64; 5],
    /// Object-phase weights: normal, disparity, silhouette, regularizer.
    pub alpha: [f64; 4],
    /// Joint-phase weights: normal, disparity, silhouette, intersection,
    /// proximity, hand-phase reuse, object-phase reuse.
    pub gamma: [f64; 7],
    pub phase1_rates: GroupRates,
    pub phase2_rates: GroupRates,
    pub phase2_velocity_rate: f64,
    pub phase3_hand_rates: GroupRates,
    pub phase3_object_rates: GroupRates,
    pub phase3_velocity_rate: f64,
    /// Multiplier on the velocity gradient before its Adam update.
    pub guidance_scale: f64,
    /// Contact margin for the proximity loss, scene units.
    pub delta_contact: f64,
    /// Sharpness of the smoothed inside-both indicator.
    pub beta_g: f64,
    pub adam: AdamParams,
    /// Central-difference step for rendered-loss gradients over transform
    /// parameters, sized so a probe moves the render about half a pixel;
    /// much smaller steps leave every rasterized pixel unchanged and return
    /// quotients that are zero or a single-pixel spike.
    pub fd_step: f64,
    /// Soft projector settings for guidance renders.
    pub projector_beta: f64,
    pub projector_samples: usize,
    /// Grid used when converting the hand mesh to an SDF for 3D losses.
    pub hand_sdf_resolution: usize,
    pub hand_sdf_padding: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            tau1: 0.526,
            tau2: 0.579,
            k1: 200,
            k2: 100,
            k3: 50,
            lambda: [0.01, 1.0, 10.0, 10.0, 0.01],
            alpha: [10.0, 10.0, 10.0, 0.001],
            gamma: [10.0, 10.0, 10.0, 1e-5, 1.0, 0.001, 0.001],
            phase1_rates: GroupRates { scale: 0.01, rotation: 0.5, translation: 0.01 },
            phase2_rates: GroupRates { scale: 0.05, rotation: 0.01, translation: 0.05 },
            phase2_velocity_rate: 0.0001,
            phase3_hand_rates: GroupRates { scale: 0.0001, rotation: 0.01, translation: 0.0001 },
            phase3_object_rates: GroupRates { scale: 0.005, rotation: 0.01, translation: 0.005 },
            phase3_velocity_rate: 0.01,
            guidance_scale: 5.0,
            delta_contact: 0.5,
            beta_g: 50.0,
            adam: AdamParams::default(),
            fd_step: 1e-2,
            projector_beta: 100.0,
            projector_samples: 64,
            hand_sdf_resolution: 48,
            hand_sdf_padding: 0.3,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau1 && self.tau1 < self.tau2 && self.tau2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "phase thresholds must satisfy 0 < tau1 < tau2 < 1, got ({}, {})",
                self.tau1, self.tau2
            )));
        }
        if self.k1 == 0 || self.k2 == 0 || self.k3 == 0 {
            return Err(Error::InvalidConfig("iteration budgets must be positive".into()));
        }
        let weights = self
            .lambda
            .iter()
            .chain(&self.alpha)
            .chain(&self.gamma)
            .chain([&self.guidance_scale, &self.delta_contact, &self.beta_g]);
        for &w in weights {
            if !(w >= 0.0) {
                return Err(Error::InvalidConfig(format!("negative loss weight {w}")));
            }
        }
        let rates = [
            self.phase1_rates,
            self.phase2_rates,
            self.phase3_hand_rates,
            self.phase3_object_rates,
        ];
        for r in rates {
            if !(r.scale > 0.0 && r.rotation > 0.0 && r.translation > 0.0) {
                return Err(Error::InvalidConfig("learning rates must be positive".into()));
            }
        }
        if !(self.phase2_velocity_rate > 0.0 && self.phase3_velocity_rate > 0.0) {
            return Err(Error::InvalidConfig("velocity learning rates must be positive".into()));
        }
        if self.fd_step <= 0.0 || self.projector_samples < 2 || self.hand_sdf_resolution < 4 {
            return Err(Error::InvalidConfig("invalid numeric settings".into()));
        }
        Ok(())
    }
}
