//! Closed-form parameter and FLOP accounting.
//!
//! FLOPs count one multiply-add as 2 and cover the affine maps, the GCN
//! kernel products and the adjacency aggregation (at its nonzero support)
//! for one forward pass at batch size 1. Cheaper elementwise work (bias and
//! residual adds, layer norm, GELU) is reported separately in
//! [`CostReport::elementwise_flops`].

use super::config::{ChannelMlp, ModelConfig, SgGcn};
use crate::graph::AdjacencySet;

/// Operations charged per element of a layer norm: mean, centering,
/// squaring, variance sum, scaling, gain and bias.
const LN_OPS: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    pub parameter_count: u64,
    /// Multiply-adds x 2 of one forward pass.
    pub flops: u64,
    pub elementwise_flops: u64,
}

impl CostReport {
    pub fn compute(cfg: &ModelConfig, adjacency: &AdjacencySet) -> Self {
        let (flops, elementwise_flops) = flop_terms(cfg, adjacency.support_sizes().iter().sum());
        CostReport {
            parameter_count: count_params(cfg),
            flops,
            elementwise_flops,
        }
    }
}

/// Exact number of trainable scalars implied by `cfg`.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    let n = cfg.joints as u64;
    let c = cfg.hidden as u64;
    let k = cfg.edge_types as u64;
    let ds = cfg.spatial_dim as u64;
    let dc = cfg.channel_dim as u64;
    let t = cfg.frames as u64;
    let plan = cfg.plan();

    let mut layer = 0;
    if plan.has_sg() {
        layer += 2 * n;
    }
    if plan.spatial_mlp {
        layer += (n * ds + ds) + (ds * n + n);
        if cfg.video_ln {
            layer += 2 * ds + 2 * n;
        }
    }
    layer += match plan.sg_gcn {
        Some(SgGcn::Joint) => k * c * c + c,
        Some(SgGcn::Spatial) => k * n * n + n,
        None => 0,
    };
    if plan.has_cg() {
        layer += 2 * c;
    }
    layer += match plan.channel_mlp {
        Some(ChannelMlp::Dense) => (c * dc + dc) + (dc * c + c),
        Some(ChannelMlp::Graph) => (k * c * dc + dc) + (k * dc * c + c),
        None => 0,
    };
    if plan.cg_gcn {
        layer += k * c * c + c;
    }
    if plan.serial_gcn.is_some() {
        layer += 2 * c + k * c * c + c;
    }

    let embed = 2 * t * c + c;
    let head = c * 3 + 3;
    embed + cfg.layers as u64 * layer + head
}

/// Forward FLOPs (multiply-add = 2) for `cfg` on the given adjacency.
pub fn count_flops(cfg: &ModelConfig, adjacency: &AdjacencySet) -> u64 {
    flop_terms(cfg, adjacency.support_sizes().iter().sum()).0
}

/// `(mac_flops, elementwise_flops)`; `nnz` is the total adjacency support.
fn flop_terms(cfg: &ModelConfig, nnz: usize) -> (u64, u64) {
    let n = cfg.joints as u64;
    let c = cfg.hidden as u64;
    let k = cfg.edge_types as u64;
    let ds = cfg.spatial_dim as u64;
    let dc = cfg.channel_dim as u64;
    let t = cfg.frames as u64;
    let nnz = nnz as u64;
    let plan = cfg.plan();

    // Per-type kernel products plus aggregation over the adjacency support,
    // for a joint-token GCN mapping d_in -> d_out features.
    let gcn = |d_in: u64, d_out: u64| k * 2 * n * d_in * d_out + 2 * nnz * d_out;
    // Elementwise: summing the k branch outputs, then the bias.
    let gcn_ew = |d_out: u64| (k - 1) * n * d_out + n * d_out;
    let ln_ew = |elems: u64| LN_OPS * elems;

    let (mut mac, mut ew) = (0, 0);
    if plan.has_sg() {
        ew += ln_ew(n * c);
    }
    if plan.spatial_mlp {
        mac += 2 * c * n * ds + 2 * c * ds * n;
        // biases, GELU, residual add
        ew += c * ds + c * n + c * ds + n * c;
        if cfg.video_ln {
            ew += ln_ew(c * ds) + ln_ew(c * n);
        }
    }
    match plan.sg_gcn {
        Some(SgGcn::Joint) => {
            mac += gcn(c, c);
            ew += gcn_ew(c) + n * c;
        }
        Some(SgGcn::Spatial) => {
            mac += k * 2 * c * n * n + 2 * nnz * c;
            ew += gcn_ew(c) + n * c;
        }
        None => {}
    }
    if plan.has_cg() {
        ew += ln_ew(n * c);
    }
    match plan.channel_mlp {
        Some(ChannelMlp::Dense) => {
            mac += 2 * n * c * dc + 2 * n * dc * c;
            ew += n * dc + n * dc + n * c + n * c;
        }
        Some(ChannelMlp::Graph) => {
            mac += gcn(c, dc) + gcn(dc, c);
            ew += gcn_ew(dc) + n * dc + gcn_ew(c) + n * c;
        }
        None => {}
    }
    if plan.cg_gcn {
        mac += gcn(c, c);
        ew += gcn_ew(c) + n * c;
    }
    if plan.serial_gcn.is_some() {
        mac += gcn(c, c);
        ew += ln_ew(n * c) + gcn_ew(c) + n * c;
    }

    let layers = cfg.layers as u64;
    let embed_mac = 2 * n * (2 * t) * c;
    let head_mac = 2 * n * c * 3;
    let mac_total = embed_mac + layers * mac + head_mac;
    let ew_total = n * c + layers * ew + n * 3;
    (mac_total, ew_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_adjacency, SkeletonTopology};

    #[test]
    fn default_single_frame_hand_count() {
        // Per layer: spatial LN 34, spatial MLP 8,977, channel LN 1,024,
        // channel MLP 1,050,112, two GCN blocks 2 x (4 * 512^2 + 512).
        let per_layer = 34 + 8_977 + 1_024 + 1_050_112 + 2 * (4 * 512 * 512 + 512);
        let expected = 2 * 512 + 512 + 3 * per_layer + 512 * 3 + 3;
        assert_eq!(count_params(&ModelConfig::default()), expected);
    }

    #[test]
    fn video_ln_adds_two_norms_per_layer() {
        let a = count_params(&ModelConfig::default());
        let b = count_params(&ModelConfig {
            video_ln: true,
            ..ModelConfig::default()
        });
        assert_eq!(b - a, 3 * (2 * 256 + 2 * 17));
    }

    #[test]
    fn flops_use_adjacency_support() {
        let adj = build_adjacency(&SkeletonTopology::h36m_17(), 4).unwrap();
        let cfg = ModelConfig::default();
        let gcn = 4 * 2 * 17 * 512 * 512 + 2 * 61 * 512;
        let per_layer = 2 * gcn + 2 * 2 * 17 * 512 * 1024 + 2 * 2 * 512 * 17 * 256;
        let expected = 2 * 17 * 2 * 512 + 3 * per_layer + 2 * 17 * 512 * 3;
        assert_eq!(count_flops(&cfg, &adj), expected);
    }
}
