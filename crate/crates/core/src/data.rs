//! Pose samples, synthetic data and flip augmentation.
//!
//! The synthetic generator stands in for a motion-capture dataset: it draws
//! joint rotations, runs forward kinematics down the skeleton tree with
//! fixed bone lengths, places the body in front of a pinhole camera and
//! projects every frame. 3D targets are root-relative millimeters; the
//! camera used for projection is kept on the sample so that the 2D input
//! can be reproduced from the 3D target.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SkeletonTopology;
use crate::metrics::Point3;
use crate::tensor::Tensor;

/// Pinhole camera and the camera-frame position of the root joint.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Camera {
    pub focal: f64,
    pub principal: [f64; 2],
    /// Root position in camera coordinates (millimeters) for the target frame.
    pub root_translation: [f64; 3],
}

impl Camera {
    /// Projects a camera-frame point.
    pub fn project(&self, p: &Point3) -> [f64; 2] {
        [
            self.focal * p[0] / p[2] + self.principal[0],
            self.focal * p[1] / p[2] + self.principal[1],
        ]
    }

    /// Projects a root-relative point.
    pub fn project_relative(&self, p: &Point3) -> [f64; 2] {
        let t = self.root_translation;
        self.project(&[p[0] + t[0], p[1] + t[1], p[2] + t[2]])
    }
}

/// One training/evaluation example: a `T x N x 2` input sequence and the
/// `N x 3` target of its center frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseSample {
    pub id: String,
    pub frames: usize,
    pub joints: usize,
    /// Row-major `frames x joints x 2`.
    pub pose2d: Vec<f64>,
    /// Row-major `joints x 3`, millimeters.
    pub pose3d: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub camera: Option<Camera>,
}

impl PoseSample {
    pub fn new(
        id: impl Into<String>,
        frames: usize,
        joints: usize,
        pose2d: Vec<f64>,
        pose3d: Vec<f64>,
    ) -> Result<Self> {
        let s = PoseSample {
            id: id.into(),
            frames,
            joints,
            pose2d,
            pose3d,
            camera: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.joints == 0 {
            return Err(Error::Contract(format!("sample '{}': T and N must be >= 1", self.id)));
        }
        if self.pose2d.len() != self.frames * self.joints * 2 || self.pose3d.len() != self.joints * 3 {
            return Err(Error::Contract(format!(
                "sample '{}': payload sizes {} / {} do not match T={}, N={}",
                self.id,
                self.pose2d.len(),
                self.pose3d.len(),
                self.frames,
                self.joints
            )));
        }
        Ok(())
    }

    pub fn input_tensor(&self) -> Tensor {
        Tensor::new(&[self.frames, self.joints, 2], self.pose2d.clone()).expect("validated sample")
    }

    pub fn target_tensor(&self) -> Tensor {
        Tensor::new(&[self.joints, 3], self.pose3d.clone()).expect("validated sample")
    }

    pub fn target_points(&self) -> Vec<Point3> {
        self.pose3d.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    /// 2D joints of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.joints * 2;
        &self.pose2d[t * w..(t + 1) * w]
    }

    /// Index of the frame whose 3D pose is the target.
    pub fn center_frame(&self) -> usize {
        self.frames / 2
    }
}

/// Mirrors a sample left/right: negates every x coordinate and swaps the
/// joints of each symmetry pair.
pub fn horizontal_flip(sample: &PoseSample, topo: &SkeletonTopology) -> PoseSample {
    let mirror = topo.mirror_map();
    let n = sample.joints;
    let mut pose2d = vec![0.0; sample.pose2d.len()];
    for t in 0..sample.frames {
        for j in 0..n {
            let src = (t * n + j) * 2;
            let dst = (t * n + mirror[j]) * 2;
            pose2d[dst] = -sample.pose2d[src];
            pose2d[dst + 1] = sample.pose2d[src + 1];
        }
    }
    let mut pose3d = vec![0.0; sample.pose3d.len()];
    for j in 0..n {
        let (src, dst) = (j * 3, mirror[j] * 3);
        pose3d[dst] = -sample.pose3d[src];
        pose3d[dst + 1] = sample.pose3d[src + 1];
        pose3d[dst + 2] = sample.pose3d[src + 2];
    }
    let camera = sample.camera.map(|c| Camera {
        focal: c.focal,
        principal: [-c.principal[0], c.principal[1]],
        root_translation: [-c.root_translation[0], c.root_translation[1], c.root_translation[2]],
    });
    PoseSample {
        id: sample.id.clone(),
        frames: sample.frames,
        joints: n,
        pose2d,
        pose3d,
        camera,
    }
}

/// Moves the root joint of the 3D target to the origin.
pub fn root_relative(sample: &PoseSample, topo: &SkeletonTopology) -> PoseSample {
    let r = topo.root() * 3;
    let root = [sample.pose3d[r], sample.pose3d[r + 1], sample.pose3d[r + 2]];
    let mut out = sample.clone();
    for p in out.pose3d.chunks_exact_mut(3) {
        for i in 0..3 {
            p[i] -= root[i];
        }
    }
    if let Some(c) = out.camera.as_mut() {
        for i in 0..3 {
            c.root_translation[i] += root[i];
        }
    }
    out
}

/// A batch followed by the flipped copy of each of its samples.
pub fn augment_with_flips(batch: &[PoseSample], topo: &SkeletonTopology) -> Vec<PoseSample> {
    let mut out = batch.to_vec();
    out.extend(batch.iter().map(|s| horizontal_flip(s, topo)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ImageUnits {
    /// `focal * X / Z + principal`.
    Pixels,
    /// `X / Z`, i.e. unit focal length and zero principal point.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_samples: usize,
    pub frames: usize,
    /// Rest-pose offset of each joint from its parent, millimeters; the
    /// root entry is ignored. Its norm is the bone length.
    pub rest_offsets: Vec<Point3>,
    /// Max absolute rotation (radians) about each axis at every joint.
    pub joint_angle_range: f64,
    /// Max absolute yaw (radians) of the whole body.
    pub root_yaw_range: f64,
    /// Max per-frame change of each angle for multi-frame samples.
    pub walk_step: f64,
    pub units: ImageUnits,
    pub focal: f64,
    pub principal: [f64; 2],
    /// Root depth range in front of the camera, millimeters.
    pub distance: (f64, f64),
    /// Max absolute lateral/vertical root offset, millimeters.
    pub lateral_offset: f64,
}

const H36M_REST: [Point3; 17] = [
    [0.0, 0.0, 0.0],
    [-130.0, 0.0, 0.0],
    [0.0, 450.0, 0.0],
    [0.0, 440.0, 0.0],
    [130.0, 0.0, 0.0],
    [0.0, 450.0, 0.0],
    [0.0, 440.0, 0.0],
    [0.0, -230.0, 0.0],
    [0.0, -250.0, 0.0],
    [0.0, -110.0, -40.0],
    [0.0, -115.0, 20.0],
    [150.0, 0.0, 0.0],
    [0.0, 280.0, 0.0],
    [0.0, 250.0, 0.0],
    [-150.0, 0.0, 0.0],
    [0.0, 280.0, 0.0],
    [0.0, 250.0, 0.0],
];

impl SyntheticConfig {
    /// Defaults for a topology: a Human3.6M-like body for the built-in
    /// 17-joint layout, otherwise 100mm bones hanging down and splayed
    /// sideways for paired joints.
    pub fn for_topology(topo: &SkeletonTopology) -> Self {
        let rest_offsets = if topo == &SkeletonTopology::h36m_17() {
            H36M_REST.to_vec()
        } else {
            let mut side = vec![0.0; topo.num_joints()];
            for &(l, r) in topo.symmetry_pairs() {
                side[l] = 1.0;
                side[r] = -1.0;
            }
            (0..topo.num_joints())
                .map(|j| {
                    let s = side[j];
                    let norm = libm::sqrt(1.0 + 0.25 * s * s);
                    [50.0 * s / norm, 100.0 / norm, 0.0]
                })
                .collect()
        };
        SyntheticConfig {
            seed: 0,
            num_samples: 100,
            frames: 1,
            rest_offsets,
            joint_angle_range: 0.5,
            root_yaw_range: core::f64::consts::PI,
            walk_step: 0.02,
            units: ImageUnits::Normalized,
            focal: 1145.0,
            principal: [500.0, 500.0],
            distance: (4000.0, 6000.0),
            lateral_offset: 300.0,
        }
    }

    pub fn bone_length(&self, joint: usize) -> f64 {
        let o = self.rest_offsets[joint];
        libm::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2])
    }

    pub fn camera_intrinsics(&self) -> (f64, [f64; 2]) {
        match self.units {
            ImageUnits::Pixels => (self.focal, self.principal),
            ImageUnits::Normalized => (1.0, [0.0, 0.0]),
        }
    }

    pub fn validate(&self, topo: &SkeletonTopology) -> Result<()> {
        let n = topo.num_joints();
        if self.rest_offsets.len() != n {
            return Err(Error::Config(format!(
                "{} rest offsets for {n} joints",
                self.rest_offsets.len()
            )));
        }
        if let Some((c, _)) = topo.bones().find(|&(c, _)| !(self.bone_length(c) > 0.0)) {
            return Err(Error::Config(format!("bone ending at joint {c} has zero length")));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        if self.units == ImageUnits::Pixels && !(self.focal > 0.0) {
            return Err(Error::Config("focal length must be > 0".into()));
        }
        // Every joint must stay in front of the camera: the nearest root
        // depth has to exceed the longest root-to-joint chain.
        let mut reach = vec![0.0; n];
        for j in topo.topological_order() {
            let p = topo.parents()[j];
            if p != j {
                reach[j] = reach[p] + self.bone_length(j);
            }
        }
        let max_reach = reach.iter().copied().fold(0.0, f64::max);
        let (near, far) = self.distance;
        if !(near > max_reach) || !(far >= near) {
            return Err(Error::Config(format!(
                "distance range ({near}, {far}) must satisfy {max_reach} < near <= far"
            )));
        }
        Ok(())
    }
}

type Mat3 = [[f64; 3]; 3];

fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply3(r: &Mat3, v: &Point3) -> Point3 {
    [0, 1, 2].map(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

/// `Rz(c) * Ry(b) * Rx(a)`.
fn euler(a: f64, b: f64, c: f64) -> Mat3 {
    let (sa, ca) = (libm::sin(a), libm::cos(a));
    let (sb, cb) = (libm::sin(b), libm::cos(b));
    let (sc, cc) = (libm::sin(c), libm::cos(c));
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    matmul3(&rz, &matmul3(&ry, &rx))
}

/// Forward kinematics: joint positions relative to the root for per-joint
/// Euler angles (`angles[root]` is the global orientation).
pub fn forward_kinematics(
    topo: &SkeletonTopology,
    rest_offsets: &[Point3],
    angles: &[[f64; 3]],
) -> Vec<Point3> {
    let n = topo.num_joints();
    let mut rot = vec![[[0.0; 3]; 3]; n];
    let mut pos = vec![[0.0; 3]; n];
    for j in topo.topological_order() {
        let p = topo.parents()[j];
        let local = euler(angles[j][0], angles[j][1], angles[j][2]);
        if p == j {
            rot[j] = local;
            continue;
        }
        rot[j] = matmul3(&rot[p], &local);
        // The bone from p to j is oriented by the parent's frame, so the
        // joint's own rotation only moves its descendants.
        let offset = apply3(&rot[p], &rest_offsets[j]);
        pos[j] = [0, 1, 2].map(|i| pos[p][i] + offset[i]);
    }
    pos
}

fn sample_angles(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, n: usize, root: usize) -> Vec<[f64; 3]> {
    let sym = |rng: &mut ChaCha8Rng, r: f64| (rng.gen::<f64>() * 2.0 - 1.0) * r;
    (0..n)
        .map(|j| {
            if j == root {
                let tilt = 0.1;
                [sym(rng, tilt), sym(rng, cfg.root_yaw_range), sym(rng, tilt)]
            } else {
                let r = cfg.joint_angle_range;
                [sym(rng, r), sym(rng, r), sym(rng, r)]
            }
        })
        .collect()
}

/// Draws `cfg.num_samples` synthetic samples for `topo`; deterministic in
/// `cfg.seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig, topo: &SkeletonTopology) -> Result<Vec<PoseSample>> {
    cfg.validate(topo)?;
    let n = topo.num_joints();
    let root = topo.root();
    let (focal, principal) = cfg.camera_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.num_samples);
    for i in 0..cfg.num_samples {
        let mut angles = sample_angles(&mut rng, cfg, n, root);
        let (near, far) = cfg.distance;
        let lat = cfg.lateral_offset;
        let translation = [
            (rng.gen::<f64>() * 2.0 - 1.0) * lat,
            (rng.gen::<f64>() * 2.0 - 1.0) * lat,
            near + rng.gen::<f64>() * (far - near),
        ];
        let camera = Camera {
            focal,
            principal,
            root_translation: translation,
        };
        let center = cfg.frames / 2;
        let mut pose2d = Vec::with_capacity(cfg.frames * n * 2);
        let mut pose3d = Vec::new();
        for f in 0..cfg.frames {
            if f > 0 {
                for (j, a) in angles.iter_mut().enumerate() {
                    let limit = if j == root { cfg.root_yaw_range } else { cfg.joint_angle_range };
                    for v in a.iter_mut() {
                        let step = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.walk_step;
                        *v = (*v + step).clamp(-limit, limit);
                    }
                }
            }
            let joints = forward_kinematics(topo, &cfg.rest_offsets, &angles);
            for p in &joints {
                let uv = camera.project_relative(p);
                pose2d.extend_from_slice(&uv);
            }
            if f == center {
                pose3d = joints.iter().flat_map(|p| p.iter().copied()).collect();
            }
        }
        out.push(PoseSample {
            id: format!("synth-{}-{i:06}", cfg.seed),
            frames: cfg.frames,
            joints: n,
            pose2d,
            pose3d,
            camera: Some(camera),
        });
    }
    Ok(out)
}
