use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::iso::{rest_state, IsoTask};
use crate::biomech::ChainModel;
use crate::control::{run_mpc, CostFamily, CostSpec, MpcConfig};
use crate::error::{Error, Result};
use crate::identify::ReferenceTrajectory;
use crate::interaction::TechniqueSpec;

/// What to synthesize: every transition is run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub technique: String,
    pub family: CostFamily,
    pub r1: f64,
    pub r2: f64,
    pub task: IsoTask,
    /// (start, target) index pairs into the task's target positions.
    pub transitions: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
}

/// One manifest line per synthesized trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub start_index: usize,
    pub target_index: usize,
    pub seed: u64,
    pub rows: usize,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SynthSpec,
    pub trials: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub trials: Vec<ReferenceTrajectory>,
}

/// Runs the closed loop for every transition and seed, with motor noise drawn from each seed.
/// Trials are ordered transition-major and simulated in parallel.
pub fn synthesize_references(model: &ChainModel, technique: &TechniqueSpec, spec: &SynthSpec, config: &MpcConfig) -> Result<Dataset> {
    let positions = spec.task.positions()?;
    for &(a, b) in &spec.transitions {
        if a >= positions.len() || b >= positions.len() {
            return Err(Error::InvalidArgument(format!("transition ({a}, {b}) is outside the {} targets", positions.len())));
        }
    }
    let jobs: Vec<((usize, usize), u64)> =
        spec.transitions.iter().flat_map(|&t| spec.seeds.iter().map(move |&s| (t, s))).collect();
    let results: Vec<(ReferenceTrajectory, bool)> = jobs
        .par_iter()
        .map(|&((a, b), seed)| {
            let x0 = rest_state(model, technique, &positions[a])?;
            let cost = CostSpec::new(spec.family, spec.r1, spec.r2, positions[b])?;
            let mut cfg = config.clone();
            cfg.noise.seed = seed;
            let log = run_mpc(&x0, model, &cost, technique, &cfg)?;
            if let Some(reason) = &log.aborted {
                return Err(Error::SolverFailure {
                    message: reason.clone(),
                    diagnostic: Some(format!("transition {a} -> {b}, seed {seed}")),
                });
            }
            let mut r = ReferenceTrajectory::from_trial(&log, &model.max_torque);
            r.meta.technique = Some(spec.technique.clone());
            r.meta.start_index = Some(a);
            r.meta.target_index = Some(b);
            r.meta.weights = Some((spec.r1, spec.r2));
            Ok((r, log.hit_index.is_some()))
        })
        .collect::<Result<_>>()?;
    let entries = results
        .iter()
        .zip(&jobs)
        .enumerate()
        .map(|(i, ((r, hit), &((a, b), seed)))| ManifestEntry {
            file: format!("trial_{i:03}_{a:02}_{b:02}_s{seed}.csv"),
            start_index: a,
            target_index: b,
            seed,
            rows: r.len(),
            hit: *hit,
        })
        .collect();
    let trials = results.into_iter().map(|(r, _)| r).collect();
    Ok(Dataset { manifest: Manifest { spec: spec.clone(), trials: entries }, trials })
}
