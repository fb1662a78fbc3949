//! Rectified-flow sampling over SDF-grid latents: an analytic oracle
//! velocity toward a (possibly corrupted) library target, Euler updates on
//! uniform flow-time steps, and a per-step hook through which guidance can
//! steer the velocity.

use crate::geometry::SdfGrid;
use crate::scene::SyntheticScene;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::path::Path;

/// One point along the sampling trajectory. Flow time runs from 0 (pure
/// noise) to 1 (clean sample) in `n_steps - 1` uniform increments.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub latent: SdfGrid,
    pub step_index: usize,
    pub n_steps: usize,
}

impl FlowState {
    pub fn new(latent: SdfGrid, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "sampling needs at least 2 steps, got {n_steps}"
            )));
        }
        Ok(Self { latent, step_index: 0, n_steps })
    }

    pub fn flow_time(&self) -> f64 {
        self.step_index as f64 / (self.n_steps - 1) as f64
    }

    /// Flow-time increment per Euler step.
    pub fn delta(&self) -> f64 {
        1.0 / (self.n_steps - 1) as f64
    }

    pub fn is_final(&self) -> bool {
        self.step_index + 1 >= self.n_steps
    }
}

/// Noise latent on the canonical [-1,1]^3 grid, i.i.d. standard normal
/// per cell.
pub fn gaussian_latent(resolution: usize, seed: u64) -> SdfGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = resolution * resolution * resolution;
    let values: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    SdfGrid::new(
        [resolution; 3],
        crate::Vec3::new(-1.0, -1.0, -1.0),
        crate::Vec3::new(1.0, 1.0, 1.0),
        values,
    )
    .expect("noise grid dimensions are valid by construction")
}

/// Stands in for a learned conditional velocity model: a small library of
/// clean target latents keyed by condition id, each paired with a decoy
/// latent that `corruption` blends toward.
#[derive(Debug, Clone)]
pub struct OracleModel {
    library: BTreeMap<usize, LibraryEntry>,
    pub corruption: f64,
}

#[derive(Debug, Clone)]
struct LibraryEntry {
    target: SdfGrid,
    decoy: SdfGrid,
}

impl OracleModel {
    pub fn new(corruption: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&corruption) {
            return Err(Error::InvalidConfig(format!(
                "corruption must lie in [0,1], got {corruption}"
            )));
        }
        Ok(Self { library: BTreeMap::new(), corruption })
    }

    pub fn insert(&mut self, condition_id: usize, target: SdfGrid, decoy: SdfGrid) -> Result<()> {
        target.check_sdf_bounds()?;
        decoy.check_sdf_bounds()?;
        target.same_shape(&decoy)?;
        self.library.insert(condition_id, LibraryEntry { target, decoy });
        Ok(())
    }

    /// Library holding the scene's ground-truth latent and its decoy,
    /// with the scene's corruption level.
    pub fn from_scene(scene: &SyntheticScene, resolution: usize) -> Result<Self> {
        let mut model = Self::new(scene.corruption_level)?;
        model.insert(
            scene.condition_id,
            scene.latent_target(resolution),
            scene.latent_decoy(resolution),
        )?;
        Ok(model)
    }

    pub fn target(&self, condition_id: usize) -> Result<&SdfGrid> {
        self.entry(condition_id).map(|e| &e.target)
    }

    pub fn decoy(&self, condition_id: usize) -> Result<&SdfGrid> {
        self.entry(condition_id).map(|e| &e.decoy)
    }

    /// The latent the oracle actually steers toward:
    /// `(1 - corruption) * target + corruption * decoy`.
    pub fn corrupted_target(&self, condition_id: usize) -> Result<SdfGrid> {
        let entry = self.entry(condition_id)?;
        SdfGrid::blend(&entry.target, &entry.decoy, self.corruption)
    }

    /// Conditional velocity `(x_tilde - x_s) / (1 - s)`: the straight-path
    /// velocity from the current latent to the corrupted target.
    pub fn velocity(&self, x_s: &SdfGrid, s: f64, condition_id: usize) -> Result<SdfGrid> {
        if s >= 1.0 {
            return Err(Error::FlowTimeExhausted);
        }
        let mut v = self.corrupted_target(condition_id)?;
        v.axpy(-1.0, x_s)?;
        let inv = 1.0 / (1.0 - s);
        for value in &mut v.values {
            *value *= inv;
        }
        Ok(v)
    }

    fn entry(&self, condition_id: usize) -> Result<&LibraryEntry> {
        self.library.get(&condition_id).ok_or_else(|| {
            Error::InvalidConfig(format!("no library entry for condition {condition_id}"))
        })
    }
}

/// Where the current velocity says the trajectory will land:
/// `x_hat_1 = x_s + (1 - s) * v`.
pub fn clean_estimate(x_s: &SdfGrid, v: &SdfGrid, s: f64) -> Result<SdfGrid> {
    let mut estimate = x_s.clone();
    estimate.axpy(1.0 - s, v)?;
    Ok(estimate)
}

/// One Euler update `x += delta * v`, advancing flow time by one increment.
pub fn flow_step(state: &FlowState, v: &SdfGrid) -> Result<FlowState> {
    if state.is_final() {
        return Err(Error::StepPastEnd(state.step_index));
    }
    let mut latent = state.latent.clone();
    latent.axpy(state.delta(), v)?;
    Ok(FlowState { latent, step_index: state.step_index + 1, n_steps: state.n_steps })
}

/// Per-step interception point. The hook sees the state before the Euler
/// update and the oracle velocity, and returns the velocity actually
/// integrated; transform updates ride along as hook-internal state.
pub trait GuidanceHook {
    fn steer(&mut self, state: &FlowState, v: SdfGrid) -> Result<SdfGrid>;
}

/// Passes every velocity through untouched.
pub struct NullHook;

impl GuidanceHook for NullHook {
    fn steer(&mut self, _state: &FlowState, v: SdfGrid) -> Result<SdfGrid> {
        Ok(v)
    }
}

/// Runs the full sampling loop from `x0` and returns the final latent.
pub fn sample(
    model: &OracleModel,
    condition_id: usize,
    x0: SdfGrid,
    n_steps: usize,
    hook: &mut dyn GuidanceHook,
) -> Result<SdfGrid> {
    sample_with_snapshots(model, condition_id, x0, n_steps, hook, None)
}

/// As `sample`, optionally dumping every latent along the trajectory
/// (including `x0`) as `step_NNN.sdf` files.
pub fn sample_with_snapshots(
    model: &OracleModel,
    condition_id: usize,
    x0: SdfGrid,
    n_steps: usize,
    hook: &mut dyn GuidanceHook,
    snapshot_dir: Option<&Path>,
) -> Result<SdfGrid> {
    let mut state = FlowState::new(x0, n_steps)?;
    if let Some(dir) = snapshot_dir {
        std::fs::create_dir_all(dir)?;
        state.latent.save(&dir.join(format!("step_{:03}.sdf", state.step_index)))?;
    }
    while !state.is_final() {
        let v = model.velocity(&state.latent, state.flow_time(), condition_id)?;
        let v = hook.steer(&state, v).map_err(|source| Error::HookFailed {
            step: state.step_index,
            source: Box::new(source),
        })?;
        state = flow_step(&state, &v)?;
        if let Some(dir) = snapshot_dir {
            state.latent.save(&dir.join(format!("step_{:03}.sdf", state.step_index)))?;
        }
    }
    Ok(state.latent)
}
