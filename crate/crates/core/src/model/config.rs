use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::MAX_EDGE_TYPES;

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    /// Spatial and channel MLPs with GCN branches.
    #[cfg_attr(feature = "serde", serde(rename = "graphmlp"))]
    GraphMlp,
    /// Spatial and channel MLPs only.
    MlpMixer,
    /// GCN branches only; both MLPs removed.
    GcnOnly,
    /// MLP-Mixer whose channel-MLP linear layers are GCN layers.
    GraphMixer,
}

/// Where the GCN sits inside a GraphMLP layer. Only consulted for
/// [`Variant::GraphMlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Placement {
    /// GCN branches run beside the spatial and channel MLPs.
    Parallel,
    /// A residual GCN sub-block before the spatial MLP.
    BeforeSpatial,
    /// A residual GCN sub-block between the spatial and channel MLPs.
    AfterSpatial,
    /// A residual GCN sub-block after the channel MLP.
    AfterChannel,
    /// Parallel, but the SG-MLP GCN works on the token axis with N x N
    /// kernels.
    ParallelSpatialGcn,
}

/// Which parallel GCN branches are enabled. Consulted for the parallel
/// placements of [`Variant::GraphMlp`] and for [`Variant::GcnOnly`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BlockToggle {
    Both,
    SgOnly,
    CgOnly,
}

impl BlockToggle {
    pub fn sg(self) -> bool {
        matches!(self, BlockToggle::Both | BlockToggle::SgOnly)
    }

    pub fn cg(self) -> bool {
        matches!(self, BlockToggle::Both | BlockToggle::CgOnly)
    }
}

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

named_enum!(Variant {
    GraphMlp => "graphmlp",
    MlpMixer => "mlp_mixer",
    GcnOnly => "gcn_only",
    GraphMixer => "graph_mixer",
});

named_enum!(Placement {
    Parallel => "parallel",
    BeforeSpatial => "before_spatial",
    AfterSpatial => "after_spatial",
    AfterChannel => "after_channel",
    ParallelSpatialGcn => "parallel_spatial_gcn",
});

named_enum!(BlockToggle {
    Both => "both",
    SgOnly => "sg_only",
    CgOnly => "cg_only",
});

/// Hyper-parameters that fully determine the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    /// Number of GraphMLP layers (L).
    pub layers: usize,
    /// Token feature size (C).
    pub hidden: usize,
    /// Spatial-MLP hidden size (D_S).
    pub spatial_dim: usize,
    /// Channel-MLP hidden size (D_C).
    pub channel_dim: usize,
    pub joints: usize,
    pub frames: usize,
    /// Number of adjacency edge types, one kernel each (k).
    pub edge_types: usize,
    pub variant: Variant,
    pub placement: Placement,
    pub block_toggle: BlockToggle,
    /// Extra LN after each affine layer of the spatial MLP.
    pub video_ln: bool,
    pub ln_eps: f64,
    /// Multiplies the head output, e.g. 1000 for a network that predicts
    /// meters against millimeter targets. Adds no parameters.
    pub output_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 3,
            hidden: 512,
            spatial_dim: 256,
            channel_dim: 1024,
            joints: 17,
            frames: 1,
            edge_types: 4,
            variant: Variant::GraphMlp,
            placement: Placement::Parallel,
            block_toggle: BlockToggle::Both,
            video_ln: false,
            ln_eps: 1e-5,
            output_scale: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Default configuration for `frames` input frames; multi-frame inputs
    /// turn on the extra spatial-MLP normalization used for video.
    pub fn for_frames(frames: usize) -> Self {
        ModelConfig {
            frames,
            video_ln: frames > 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("spatial_dim", self.spatial_dim),
            ("channel_dim", self.channel_dim),
            ("joints", self.joints),
            ("frames", self.frames),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !(1..=MAX_EDGE_TYPES).contains(&self.edge_types) {
            return Err(Error::Config(format!(
                "edge_types must be in 1..={MAX_EDGE_TYPES}, got {}",
                self.edge_types
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be > 0".into()));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::Config("output_scale must be finite and > 0".into()));
        }
        Ok(())
    }

    pub(crate) fn plan(&self) -> LayerPlan {
        LayerPlan::new(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SgGcn {
    /// `sum_t A_t X W_t` with C x C kernels on the N x C feature.
    Joint,
    /// `sum_t H A_t W_t` with N x N kernels on the C x N feature.
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ChannelMlp {
    Dense,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SerialGcn {
    BeforeSpatial,
    AfterSpatial,
    AfterChannel,
}

/// Which sub-blocks one layer contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerPlan {
    pub spatial_mlp: bool,
    pub sg_gcn: Option<SgGcn>,
    pub channel_mlp: Option<ChannelMlp>,
    pub cg_gcn: bool,
    pub serial_gcn: Option<SerialGcn>,
}

impl LayerPlan {
    fn new(cfg: &ModelConfig) -> Self {
        let toggle = cfg.block_toggle;
        let none = LayerPlan {
            spatial_mlp: false,
            sg_gcn: None,
            channel_mlp: None,
            cg_gcn: false,
            serial_gcn: None,
        };
        match cfg.variant {
            Variant::MlpMixer => LayerPlan {
                spatial_mlp: true,
                channel_mlp: Some(ChannelMlp::Dense),
                ..none
            },
            Variant::GraphMixer => LayerPlan {
                spatial_mlp: true,
                channel_mlp: Some(ChannelMlp::Graph),
                ..none
            },
            Variant::GcnOnly => LayerPlan {
                sg_gcn: toggle.sg().then_some(SgGcn::Joint),
                cg_gcn: toggle.cg(),
                ..none
            },
            Variant::GraphMlp => {
                let base = LayerPlan {
                    spatial_mlp: true,
                    channel_mlp: Some(ChannelMlp::Dense),
                    ..none
                };
                match cfg.placement {
                    Placement::Parallel => LayerPlan {
                        sg_gcn: toggle.sg().then_some(SgGcn::Joint),
                        cg_gcn: toggle.cg(),
                        ..base
                    },
                    Placement::ParallelSpatialGcn => LayerPlan {
                        sg_gcn: toggle.sg().then_some(SgGcn::Spatial),
                        cg_gcn: toggle.cg(),
                        ..base
                    },
                    Placement::BeforeSpatial => LayerPlan {
                        serial_gcn: Some(SerialGcn::BeforeSpatial),
                        ..base
                    },
                    Placement::AfterSpatial => LayerPlan {
                        serial_gcn: Some(SerialGcn::AfterSpatial),
                        ..base
                    },
                    Placement::AfterChannel => LayerPlan {
                        serial_gcn: Some(SerialGcn::AfterChannel),
                        ..base
                    },
                }
            }
        }
    }

    pub fn has_sg(&self) -> bool {
        self.spatial_mlp || self.sg_gcn.is_some()
    }

    pub fn has_cg(&self) -> bool {
        self.channel_mlp.is_some() || self.cg_gcn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), *v);
        }
        for p in Placement::ALL {
            assert_eq!(p.name().parse::<Placement>().unwrap(), *p);
        }
        for b in BlockToggle::ALL {
            assert_eq!(b.name().parse::<BlockToggle>().unwrap(), *b);
        }
        assert!("transformer".parse::<Variant>().is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let c = ModelConfig::default();
        assert_eq!((c.layers, c.hidden, c.channel_dim, c.spatial_dim), (3, 512, 1024, 256));
        c.validate().unwrap();
        assert!(ModelConfig { frames: 0, ..c.clone() }.validate().is_err());
        assert!(ModelConfig { edge_types: 5, ..c.clone() }.validate().is_err());
        assert!(ModelConfig::for_frames(243).video_ln);
        assert!(!ModelConfig::for_frames(1).video_ln);
    }

    #[test]
    fn mixer_plan_has_no_graph_branches() {
        let p = ModelConfig {
            variant: Variant::MlpMixer,
            ..ModelConfig::default()
        }
        .plan();
        assert!(p.sg_gcn.is_none() && !p.cg_gcn && p.serial_gcn.is_none());
    }
}
