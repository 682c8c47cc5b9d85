use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ChannelMlp, LayerPlan, ModelConfig, SerialGcn, SgGcn};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `+-sqrt(1 / fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

/// Name, shape and initializer of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

struct Specs(Vec<ParamSpec>);

impl Specs {
    fn push(&mut self, name: String, shape: &[usize], init: Init) {
        self.0.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.gain"), &[d], Init::Ones);
        self.push(format!("{prefix}.bias"), &[d], Init::Zeros);
    }

    fn affine(&mut self, prefix: &str, w: &str, b: &str, fan_in: usize, fan_out: usize) {
        self.push(format!("{prefix}.{w}"), &[fan_in, fan_out], Init::FanIn(fan_in));
        self.push(format!("{prefix}.{b}"), &[fan_out], Init::FanIn(fan_in));
    }

    /// `k` kernels of `fan_in x fan_out` plus one shared bias.
    fn graph_affine(&mut self, prefix: &str, k: usize, fan_in: usize, fan_out: usize, bias: &str) {
        for t in 0..k {
            self.push(format!("{prefix}.kernel{t}"), &[fan_in, fan_out], Init::FanIn(fan_in));
        }
        self.push(format!("{prefix}.{bias}"), &[fan_out], Init::FanIn(fan_in));
    }

    fn serial(&mut self, layer: &str, k: usize, c: usize) {
        self.norm(&format!("{layer}.gcn.norm"), c);
        self.graph_affine(&format!("{layer}.gcn"), k, c, c, "bias");
    }
}

/// Parameter tensors of a model, in the fixed order used for iteration,
/// the weight file and the forward pass.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (n, c, k) = (cfg.joints, cfg.hidden, cfg.edge_types);
    let (ds, dc) = (cfg.spatial_dim, cfg.channel_dim);
    let plan: LayerPlan = cfg.plan();
    let mut s = Specs(Vec::new());
    s.affine("embed", "weight", "bias", 2 * cfg.frames, c);
    for l in 0..cfg.layers {
        let p = format!("layers.{l}");
        if plan.serial_gcn == Some(SerialGcn::BeforeSpatial) {
            s.serial(&p, k, c);
        }
        if plan.has_sg() {
            s.norm(&format!("{p}.sg.norm"), n);
        }
        if plan.spatial_mlp {
            let m = format!("{p}.sg.mlp");
            s.affine(&m, "w1", "b1", n, ds);
            if cfg.video_ln {
                s.norm(&format!("{m}.norm1"), ds);
            }
            s.affine(&m, "w2", "b2", ds, n);
            if cfg.video_ln {
                s.norm(&format!("{m}.norm2"), n);
            }
        }
        match plan.sg_gcn {
            Some(SgGcn::Joint) => s.graph_affine(&format!("{p}.sg.gcn"), k, c, c, "bias"),
            Some(SgGcn::Spatial) => s.graph_affine(&format!("{p}.sg.gcn"), k, n, n, "bias"),
            None => {}
        }
        if plan.serial_gcn == Some(SerialGcn::AfterSpatial) {
            s.serial(&p, k, c);
        }
        if plan.has_cg() {
            s.norm(&format!("{p}.cg.norm"), c);
        }
        let m = format!("{p}.cg.mlp");
        match plan.channel_mlp {
            Some(ChannelMlp::Dense) => {
                s.affine(&m, "w3", "b3", c, dc);
                s.affine(&m, "w4", "b4", dc, c);
            }
            Some(ChannelMlp::Graph) => {
                s.graph_affine(&format!("{m}.w3"), k, c, dc, "b3");
                s.graph_affine(&format!("{m}.w4"), k, dc, c, "b4");
            }
            None => {}
        }
        if plan.cg_gcn {
            s.graph_affine(&format!("{p}.cg.gcn"), k, c, c, "bias");
        }
        if plan.serial_gcn == Some(SerialGcn::AfterChannel) {
            s.serial(&p, k, c);
        }
    }
    s.affine("head", "weight", "bias", c, 3);
    s.0
}

/// Deterministic initialization from `seed`.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    specs
        .iter()
        .map(|spec| {
            let n = spec.numel();
            let data = match spec.init {
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
                Init::FanIn(fan_in) => {
                    let bound = libm::sqrt(1.0 / fan_in as f64);
                    (0..n)
                        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
                        .collect()
                }
            };
            Tensor::new(&spec.shape, data).expect("spec shapes are non-empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let cfg = ModelConfig {
            video_ln: true,
            ..ModelConfig::default()
        };
        let specs = param_specs(&cfg);
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        let before = names.len();
        names.dedup();
        assert_eq!(before, names.len());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig {
            hidden: 8,
            channel_dim: 16,
            spatial_dim: 4,
            joints: 5,
            ..ModelConfig::default()
        };
        let specs = param_specs(&cfg);
        let a = init_params(&specs, 3);
        assert_eq!(a, init_params(&specs, 3));
        assert_ne!(a, init_params(&specs, 4));
        for (spec, t) in specs.iter().zip(&a) {
            if let Init::FanIn(f) = spec.init {
                let b = libm::sqrt(1.0 / f as f64);
                assert!(t.data().iter().all(|v| v.abs() <= b), "{}", spec.name);
            }
        }
    }
}
