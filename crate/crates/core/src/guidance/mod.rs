//! Inference-time guidance: losses on rendered maps and geometry, a small
//! Adam optimizer, and the staged pose-and-latent refinement hook that
//! plugs into the flow sampler.

mod adam;
mod config;
mod losses;
mod phases;
mod render;

pub use adam::AdamState;
pub use config::{AdamParams, GroupRates, GuidanceConfig};
pub use losses::{
    loss_2d, loss_2d_with_grads, loss_intersection, loss_keypoints, loss_proximity,
    loss_proximity_with_grads, total_variation, IntersectionLoss, KeypointLoss, Loss2d,
    Loss2dGrads, ProximityGrads,
};
pub use phases::{
    phase1_optimize, phase2_optimize, phase3_step, pullback_outer, HandView, IterationRecord,
    JointViews, ObjectView, PhaseOutcome,
};
pub use render::{composite_maps, mask_object_upstream, soft_to_maps, CompositeRender};
