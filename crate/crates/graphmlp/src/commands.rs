//! The work behind each subcommand, returning serializable reports.

use std::path::Path;

use graphmlp_core::data::{generate_synthetic, PoseSample, SyntheticConfig};
use graphmlp_core::graph::{build_adjacency, SkeletonTopology};
use graphmlp_core::metrics::{evaluate, pose_loss, EvalReport};
use graphmlp_core::model::{BlockToggle, CostReport, GraphMlpModel, ModelConfig, Placement, Variant};
use graphmlp_core::tensor::{grad_check, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_dataset, DatasetFormat};
use crate::error::{Error, Result};
use crate::train::predict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub frames: usize,
    pub parameter_count: u64,
    pub flops: u64,
    pub elementwise_flops: u64,
    /// `parameter_count / 1e6`
    pub params_m: f64,
    /// `flops / 1e6`
    pub flops_m: f64,
}

pub fn cost(cfg: &ModelConfig, topo: &SkeletonTopology) -> Result<CostRow> {
    cfg.validate()?;
    let adj = build_adjacency(topo, cfg.edge_types)?;
    let r = CostReport::compute(cfg, &adj);
    Ok(CostRow {
        frames: cfg.frames,
        parameter_count: r.parameter_count,
        flops: r.flops,
        elementwise_flops: r.elementwise_flops,
        params_m: r.parameter_count as f64 / 1e6,
        flops_m: r.flops as f64 / 1e6,
    })
}

/// One cost row per frame count, all other settings unchanged.
pub fn cost_sweep(cfg: &ModelConfig, topo: &SkeletonTopology, frames: &[usize]) -> Result<Vec<CostRow>> {
    frames
        .iter()
        .map(|&t| cost(&ModelConfig { frames: t, ..cfg.clone() }, topo))
        .collect()
}

pub fn eval(model: &GraphMlpModel, samples: &[PoseSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(graphmlp_core::Error::Contract("evaluation set is empty".into()).into());
    }
    let preds = predict(model, samples)?;
    let targets: Vec<_> = samples.iter().map(PoseSample::target_points).collect();
    Ok(evaluate(&preds, &targets)?)
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_MAX_JOINTS: usize = 8;
pub const GRADCHECK_MAX_HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub variant: Variant,
    pub placement: Placement,
    pub block_toggle: BlockToggle,
    pub max_rel_err: f64,
    /// Parameter tensor holding the worst entry.
    pub worst_param: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub cases: Vec<GradcheckCase>,
    pub pass: bool,
}

/// The toy skeleton used by gradient checks: pelvis, right leg, left leg,
/// spine, head.
pub fn toy_topology() -> SkeletonTopology {
    SkeletonTopology::new(
        ["pelvis", "r_leg", "l_leg", "spine", "head"].map(String::from).to_vec(),
        vec![0, 0, 0, 0, 3],
        vec![(2, 1)],
    )
    .expect("valid toy layout")
}

/// Toy model dimensions used by `gradcheck` unless overridden.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 8,
        spatial_dim: 6,
        channel_dim: 16,
        joints: 5,
        frames: 1,
        ..ModelConfig::default()
    }
}

/// Gradient check of the full loss for `base` under every listed
/// variant x placement x block-toggle combination.
pub fn gradcheck(
    base: &ModelConfig,
    topo: &SkeletonTopology,
    variants: &[Variant],
    placements: &[Placement],
    toggles: &[BlockToggle],
) -> Result<GradcheckReport> {
    if base.joints > GRADCHECK_MAX_JOINTS || base.hidden > GRADCHECK_MAX_HIDDEN {
        return Err(Error::Config(format!(
            "gradcheck is limited to N <= {GRADCHECK_MAX_JOINTS} and C <= {GRADCHECK_MAX_HIDDEN} (got N={}, C={})",
            base.joints, base.hidden
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut random = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("non-empty shape")
    };
    let x = random(&[base.frames, base.joints, 2]);
    let target = random(&[base.joints, 3]);

    let mut cases = Vec::new();
    for &variant in variants {
        for &placement in placements {
            for &block_toggle in toggles {
                let cfg = ModelConfig {
                    variant,
                    placement,
                    block_toggle,
                    ..base.clone()
                };
                let model = GraphMlpModel::new(cfg, topo)?;
                let report = grad_check(
                    |tape, vars| {
                        let out = model.forward_on(tape, vars, &x)?;
                        let t = tape.constant(target.clone());
                        pose_loss(tape, out, t)
                    },
                    model.params(),
                    GRADCHECK_STEP,
                )?;
                let worst = report.worst();
                let case = GradcheckCase {
                    variant,
                    placement,
                    block_toggle,
                    max_rel_err: report.max_rel_err(),
                    worst_param: worst.map(|w| model.specs()[w.param].name.clone()),
                    pass: report.passes(GRADCHECK_TOLERANCE),
                };
                log::info!(
                    "gradcheck {variant}/{placement}/{block_toggle}: max rel err {:.3e}",
                    case.max_rel_err
                );
                cases.push(case);
            }
        }
    }
    let pass = cases.iter().all(|c| c.pass);
    Ok(GradcheckReport {
        tolerance: GRADCHECK_TOLERANCE,
        step: GRADCHECK_STEP,
        cases,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub path: String,
    pub samples: usize,
    pub frames: usize,
    pub joints: usize,
    pub seed: u64,
}

pub fn synth(
    cfg: &SyntheticConfig,
    topo: &SkeletonTopology,
    out: &Path,
    format: Option<DatasetFormat>,
) -> Result<SynthSummary> {
    let samples = generate_synthetic(cfg, topo)?;
    write_dataset(out, &samples, format)?;
    Ok(SynthSummary {
        path: out.display().to_string(),
        samples: samples.len(),
        frames: cfg.frames,
        joints: topo.num_joints(),
        seed: cfg.seed,
    })
}
