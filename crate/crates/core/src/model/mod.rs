//! The GraphMLP network and its baselines.
//!
//! A forward pass is
//!
//! ```text
//! pose2d [T x N x 2] -> per-joint concat [N x 2T] -> affine -> X0 [N x C]
//!   -> L x (SG-MLP, CG-MLP) -> affine head -> pose3d [N x 3]
//! ```
//!
//! with, for the default parallel layout,
//!
//! ```text
//! SG:  X' = X  + SpatialMLP(LN(X^T))^T + GCN(LN(X^T)^T)
//! CG:  X  = X' + ChannelMLP(LN(X'))    + GCN(LN(X'))
//! ```
//!
//! The spatial LN normalizes each channel across joints (transpose first,
//! then LN). Other variants drop or move the GCN branches; see
//! [`Variant`] and [`Placement`].

mod config;
mod cost;
mod params;

pub use config::{BlockToggle, ModelConfig, Placement, Variant};
pub use cost::{count_flops, count_params, CostReport};
pub use params::{init_params, param_specs, Init, ParamSpec};

use alloc::vec::Vec;

use config::{ChannelMlp, LayerPlan, SerialGcn, SgGcn};

use crate::error::{Error, Result};
use crate::graph::{build_adjacency, AdjacencySet, SkeletonTopology};
use crate::tensor::{Tape, Tensor, Var};

/// Parameters plus the fixed graph structure of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMlpModel {
    config: ModelConfig,
    adjacency: AdjacencySet,
    specs: Vec<ParamSpec>,
    params: Vec<Tensor>,
}

/// Tape handles for one forward pass.
struct Bound<'a> {
    params: &'a [Var],
    next: usize,
    adjacency: Vec<Var>,
}

impl Bound<'_> {
    fn take(&mut self) -> Var {
        let v = self.params[self.next];
        self.next += 1;
        v
    }

    fn take_many(&mut self, n: usize) -> Vec<Var> {
        (0..n).map(|_| self.take()).collect()
    }
}

impl GraphMlpModel {
    /// Builds a freshly initialized model for `topology`.
    pub fn new(config: ModelConfig, topology: &SkeletonTopology) -> Result<Self> {
        let specs = param_specs(&config);
        let params = init_params(&specs, config.seed);
        Self::from_params(config, topology, params)
    }

    /// Wraps existing parameter tensors, checking every shape against the
    /// configuration.
    pub fn from_params(
        config: ModelConfig,
        topology: &SkeletonTopology,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        if topology.num_joints() != config.joints {
            return Err(Error::Config(alloc::format!(
                "topology has {} joints, config expects {}",
                topology.num_joints(),
                config.joints
            )));
        }
        let specs = param_specs(&config);
        for (i, spec) in specs.iter().enumerate() {
            match params.get(i) {
                Some(t) if t.shape() == spec.shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::ParamShape {
                        name: spec.name.clone(),
                        expected: spec.shape.clone(),
                        found: t.shape().to_vec(),
                    })
                }
                None => {
                    return Err(Error::ParamShape {
                        name: spec.name.clone(),
                        expected: spec.shape.clone(),
                        found: Vec::new(),
                    })
                }
            }
        }
        if params.len() != specs.len() {
            return Err(Error::Config(alloc::format!(
                "{} parameter tensors supplied, configuration defines {}",
                params.len(),
                specs.len()
            )));
        }
        let adjacency = build_adjacency(topology, config.edge_types)?;
        Ok(GraphMlpModel {
            config,
            adjacency,
            specs,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn adjacency(&self) -> &AdjacencySet {
        &self.adjacency
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some(&mut self.params[i])
    }

    /// Named parameters in canonical order.
    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.specs.iter().map(|s| s.name.as_str()).zip(&self.params)
    }

    /// Total number of scalars over all parameter tensors.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records every parameter on `tape` as a trainable, labelled leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .zip(&self.specs)
            .map(|(p, s)| {
                let v = tape.param(p.clone());
                tape.set_label(v, s.name.clone());
                v
            })
            .collect()
    }

    /// Runs the network on `tape` using previously bound parameters.
    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], pose2d: &Tensor) -> Result<Var> {
        let cfg = &self.config;
        let (t_frames, n) = (cfg.frames, cfg.joints);
        if pose2d.shape() != [t_frames, n, 2] {
            return Err(Error::InputShape {
                expected_frames: t_frames,
                expected_joints: n,
                shape: pose2d.shape().to_vec(),
            });
        }
        if params.len() != self.params.len() {
            return Err(Error::Contract(alloc::format!(
                "expected {} bound parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let adjacency = self
            .adjacency
            .matrices()
            .iter()
            .map(|m| tape.constant(m.clone()))
            .collect();
        let mut b = Bound {
            params,
            next: 0,
            adjacency,
        };

        // Frame-major concatenation: (f0 x, f0 y, f1 x, f1 y, ...).
        let frame_len = n * 2;
        let frames: Vec<Var> = (0..t_frames)
            .map(|t| {
                let data = pose2d.data()[t * frame_len..(t + 1) * frame_len].to_vec();
                tape.constant(Tensor::new(&[n, 2], data).expect("sliced frame"))
            })
            .collect();
        let tokens = tape.concat_last_axis(&frames)?;
        let mut x = self.affine(tape, &mut b, tokens)?;

        let plan = cfg.plan();
        for _ in 0..cfg.layers {
            x = self.layer(tape, &mut b, &plan, x)?;
        }
        let mut out = self.affine(tape, &mut b, x)?;
        if cfg.output_scale != 1.0 {
            out = tape.scale(out, cfg.output_scale);
        }
        debug_assert_eq!(b.next, params.len(), "forward consumed a different parameter count");
        Ok(out)
    }

    /// Inference without gradients.
    pub fn forward(&self, pose2d: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_on(&mut tape, &vars, pose2d)?;
        Ok(tape.value(out).clone())
    }

    /// Adds the tape gradients of bound parameters into each parameter's
    /// gradient slot.
    pub fn accumulate_grads(&mut self, tape: &Tape, params: &[Var]) {
        for (p, v) in self.params.iter_mut().zip(params) {
            match tape.grad(*v) {
                Some(g) => p.accumulate_grad(g),
                None => {
                    let zeros = alloc::vec![0.0; p.len()];
                    p.accumulate_grad(&zeros);
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    fn affine(&self, tape: &mut Tape, b: &mut Bound, x: Var) -> Result<Var> {
        let (w, bias) = (b.take(), b.take());
        let y = tape.matmul(x, w)?;
        tape.add(y, bias)
    }

    fn norm(&self, tape: &mut Tape, b: &mut Bound, x: Var) -> Result<Var> {
        let (g, bias) = (b.take(), b.take());
        tape.layer_norm(x, g, bias, self.config.ln_eps)
    }

    /// `sum_t A_t x W_t + bias` for an `N x d_in` input.
    fn graph_affine(&self, tape: &mut Tape, b: &mut Bound, x: Var) -> Result<Var> {
        let kernels = b.take_many(self.config.edge_types);
        let bias = b.take();
        let mut acc: Option<Var> = None;
        for (t, w) in kernels.into_iter().enumerate() {
            let xw = tape.matmul(x, w)?;
            let term = tape.matmul(b.adjacency[t], xw)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        tape.add(acc.expect("edge_types >= 1"), bias)
    }

    /// `sum_t H A_t W_t + bias` for a `C x N` input (token-axis GCN).
    fn spatial_graph_affine(&self, tape: &mut Tape, b: &mut Bound, h: Var) -> Result<Var> {
        let kernels = b.take_many(self.config.edge_types);
        let bias = b.take();
        let mut acc: Option<Var> = None;
        for (t, w) in kernels.into_iter().enumerate() {
            let ha = tape.matmul(h, b.adjacency[t])?;
            let term = tape.matmul(ha, w)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        tape.add(acc.expect("edge_types >= 1"), bias)
    }

    fn layer(&self, tape: &mut Tape, b: &mut Bound, plan: &LayerPlan, x: Var) -> Result<Var> {
        let mut x = x;
        if plan.serial_gcn == Some(SerialGcn::BeforeSpatial) {
            x = self.serial_gcn(tape, b, x)?;
        }
        if plan.has_sg() {
            x = self.sg_block(tape, b, plan, x)?;
        }
        if plan.serial_gcn == Some(SerialGcn::AfterSpatial) {
            x = self.serial_gcn(tape, b, x)?;
        }
        if plan.has_cg() {
            x = self.cg_block(tape, b, plan, x)?;
        }
        if plan.serial_gcn == Some(SerialGcn::AfterChannel) {
            x = self.serial_gcn(tape, b, x)?;
        }
        Ok(x)
    }

    /// SG-MLP: both branches read the spatially normalized feature.
    fn sg_block(&self, tape: &mut Tape, b: &mut Bound, plan: &LayerPlan, x: Var) -> Result<Var> {
        let xt = tape.transpose2d(x)?;
        let h = self.norm(tape, b, xt)?;
        let mut out = x;
        if plan.spatial_mlp {
            let mut s = self.affine(tape, b, h)?;
            if self.config.video_ln {
                s = self.norm(tape, b, s)?;
            }
            s = tape.gelu(s);
            s = self.affine(tape, b, s)?;
            if self.config.video_ln {
                s = self.norm(tape, b, s)?;
            }
            let s = tape.transpose2d(s)?;
            out = tape.add(out, s)?;
        }
        match plan.sg_gcn {
            Some(SgGcn::Joint) => {
                let ht = tape.transpose2d(h)?;
                let g = self.graph_affine(tape, b, ht)?;
                out = tape.add(out, g)?;
            }
            Some(SgGcn::Spatial) => {
                let g = self.spatial_graph_affine(tape, b, h)?;
                let g = tape.transpose2d(g)?;
                out = tape.add(out, g)?;
            }
            None => {}
        }
        Ok(out)
    }

    /// CG-MLP: channel MLP and GCN on the channel-normalized feature.
    fn cg_block(&self, tape: &mut Tape, b: &mut Bound, plan: &LayerPlan, x: Var) -> Result<Var> {
        let h = self.norm(tape, b, x)?;
        let mut out = x;
        match plan.channel_mlp {
            Some(ChannelMlp::Dense) => {
                let c = self.affine(tape, b, h)?;
                let c = tape.gelu(c);
                let c = self.affine(tape, b, c)?;
                out = tape.add(out, c)?;
            }
            Some(ChannelMlp::Graph) => {
                let c = self.graph_affine(tape, b, h)?;
                let c = tape.gelu(c);
                let c = self.graph_affine(tape, b, c)?;
                out = tape.add(out, c)?;
            }
            None => {}
        }
        if plan.cg_gcn {
            let g = self.graph_affine(tape, b, h)?;
            out = tape.add(out, g)?;
        }
        Ok(out)
    }

    fn serial_gcn(&self, tape: &mut Tape, b: &mut Bound, x: Var) -> Result<Var> {
        let h = self.norm(tape, b, x)?;
        let g = self.graph_affine(tape, b, h)?;
        tape.add(x, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn toy_topology() -> SkeletonTopology {
        // pelvis, right leg, left leg, spine, head
        SkeletonTopology::new(Vec::new(), vec![0, 0, 0, 0, 3], vec![(2, 1)]).unwrap()
    }

    fn toy_config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 8,
            spatial_dim: 6,
            channel_dim: 16,
            joints: 5,
            frames: 1,
            seed: 1,
            ..ModelConfig::default()
        }
    }

    fn input(cfg: &ModelConfig, seed: u64) -> Tensor {
        let n = cfg.frames * cfg.joints * 2;
        let data = (0..n)
            .map(|i| libm::sin(seed as f64 * 0.37 + i as f64 * 1.3))
            .collect();
        Tensor::new(&[cfg.frames, cfg.joints, 2], data).unwrap()
    }

    #[test]
    fn output_is_n_by_3_for_every_variant() {
        for &variant in Variant::ALL {
            for &placement in Placement::ALL {
                let cfg = ModelConfig {
                    variant,
                    placement,
                    frames: 3,
                    video_ln: true,
                    ..toy_config()
                };
                let m = GraphMlpModel::new(cfg.clone(), &toy_topology()).unwrap();
                let y = m.forward(&input(&cfg, 2)).unwrap();
                assert_eq!(y.shape(), &[5, 3]);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = toy_config();
        let a = GraphMlpModel::new(cfg.clone(), &toy_topology()).unwrap();
        let b = GraphMlpModel::new(cfg.clone(), &toy_topology()).unwrap();
        let x = input(&cfg, 5);
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn wrong_input_shape_names_expected_dims() {
        let cfg = toy_config();
        let m = GraphMlpModel::new(cfg, &toy_topology()).unwrap();
        let err = m.forward(&Tensor::zeros(&[1, 4, 2])).unwrap_err();
        assert_eq!(
            err,
            Error::InputShape {
                expected_frames: 1,
                expected_joints: 5,
                shape: vec![1, 4, 2]
            }
        );
    }

    #[test]
    fn embedding_of_zero_input_with_zero_bias_is_zero() {
        let mut m = GraphMlpModel::new(toy_config(), &toy_topology()).unwrap();
        m.param_mut("embed.bias").unwrap().data_mut().fill(0.0);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let x = tape.constant(Tensor::zeros(&[5, 2]));
        let mut b = Bound {
            params: &vars,
            next: 0,
            adjacency: Vec::new(),
        };
        let e = m.affine(&mut tape, &mut b, x).unwrap();
        assert_eq!(tape.shape(e), &[5, 8]);
        assert!(tape.value(e).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_weights_make_blocks_pure_residual() {
        for &variant in Variant::ALL {
            let cfg = ModelConfig {
                variant,
                ..toy_config()
            };
            let mut m = GraphMlpModel::new(cfg.clone(), &toy_topology()).unwrap();
            let names: Vec<String> = m.specs().iter().map(|s| s.name.clone()).collect();
            for (name, p) in names.iter().zip(m.params_mut()) {
                if name.starts_with("layers.") && !name.contains("norm") {
                    p.data_mut().fill(0.0);
                }
            }
            // With every block a pure residual the network is head(embed(x)).
            let x = input(&cfg, 9);
            let y = m.forward(&x).unwrap();
            let mut tape = Tape::new();
            let vars = m.bind(&mut tape);
            let xv = tape.constant(x.clone().reshape(&[5, 2]).unwrap());
            let last = vars.len() - 2;
            let mut b = Bound {
                params: &vars,
                next: 0,
                adjacency: Vec::new(),
            };
            let e = m.affine(&mut tape, &mut b, xv).unwrap();
            b.next = last;
            let h = m.affine(&mut tape, &mut b, e).unwrap();
            assert!(tape.value(h).max_abs_diff(&y) < 1e-12, "{variant}");
        }
    }

    #[test]
    fn shape_check_names_offending_tensor() {
        let cfg = toy_config();
        let mut params = init_params(&param_specs(&cfg), 0);
        params[2] = Tensor::zeros(&[4]);
        let err = GraphMlpModel::from_params(cfg, &toy_topology(), params).unwrap_err();
        match err {
            Error::ParamShape { name, .. } => assert_eq!(name, "layers.0.sg.norm.gain"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
