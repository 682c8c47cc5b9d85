//! Skeleton topology, edge-type partition and normalized adjacency.
//!
//! The GCN blocks aggregate joint features with
//! `D^-1/2 (A + I) D^-1/2`, split into one matrix per edge type so that
//! each type gets its own kernel. Degrees always come from the full
//! `A + I` before splitting, so summing the per-type matrices gives back the
//! single normalized adjacency exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Human3.6M 17-joint layout.
pub const H36M_17: &str = "h36m_17";

const H36M_NAMES: [&str; 17] = [
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "nose",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
];
const H36M_PARENTS: [usize; 17] = [0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];
const H36M_SYMMETRY: [(usize, usize); 6] = [(4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)];

/// A rooted joint tree with left/right symmetry pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkeletonTopology {
    joint_names: Vec<String>,
    /// `parents[root] == root`.
    parents: Vec<usize>,
    /// `(left, right)` pairs.
    symmetry: Vec<(usize, usize)>,
}

impl SkeletonTopology {
    /// Validates and builds a topology. Empty `joint_names` get generated
    /// labels.
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<usize>,
        symmetry: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::Topology("no joints".into()));
        }
        let joint_names = if joint_names.is_empty() {
            (0..n).map(|i| format!("joint_{i}")).collect()
        } else if joint_names.len() != n {
            return Err(Error::Topology(format!(
                "{} joint names for {n} parents",
                joint_names.len()
            )));
        } else {
            joint_names
        };
        if let Some((i, &p)) = parents.iter().enumerate().find(|(_, &p)| p >= n) {
            return Err(Error::Topology(format!("joint {i} has out-of-range parent {p}")));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i] == i).collect();
        if roots.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one root, found {} ({roots:?})",
                roots.len()
            )));
        }
        for start in 0..n {
            let mut j = start;
            let mut steps = 0;
            while parents[j] != j {
                j = parents[j];
                steps += 1;
                if steps > n {
                    return Err(Error::Topology(format!("parent cycle through joint {start}")));
                }
            }
        }
        let root = roots[0];
        let mut seen = vec![false; n];
        for &(l, r) in &symmetry {
            if l >= n || r >= n {
                return Err(Error::Topology(format!("symmetry pair ({l}, {r}) out of range")));
            }
            if l == r || l == root || r == root {
                return Err(Error::Topology(format!(
                    "symmetry pair ({l}, {r}) must join two distinct non-root joints"
                )));
            }
            if seen[l] || seen[r] {
                return Err(Error::Topology(format!("symmetry pair ({l}, {r}) overlaps another pair")));
            }
            if parents[l] == r || parents[r] == l {
                return Err(Error::Topology(format!("symmetry pair ({l}, {r}) is also a bone")));
            }
            seen[l] = true;
            seen[r] = true;
        }
        Ok(SkeletonTopology {
            joint_names,
            parents,
            symmetry,
        })
    }

    pub fn h36m_17() -> Self {
        Self::new(
            H36M_NAMES.iter().map(|s| s.to_string()).collect(),
            H36M_PARENTS.to_vec(),
            H36M_SYMMETRY.to_vec(),
        )
        .expect("built-in layout is valid")
    }

    /// Looks up a built-in layout.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            H36M_17 => Ok(Self::h36m_17()),
            _ => Err(Error::UnknownLayout(name.to_string())),
        }
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn root(&self) -> usize {
        (0..self.parents.len())
            .find(|&i| self.parents[i] == i)
            .expect("validated")
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn symmetry_pairs(&self) -> &[(usize, usize)] {
        &self.symmetry
    }

    /// Tree edges as `(child, parent)`, in joint order.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(|(c, p)| c != *p)
            .map(|(c, &p)| (c, p))
    }

    /// Joint index each joint maps to under a left/right mirror.
    pub fn mirror_map(&self) -> Vec<usize> {
        let mut map: Vec<usize> = (0..self.num_joints()).collect();
        for &(l, r) in &self.symmetry {
            map[l] = r;
            map[r] = l;
        }
        map
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.num_joints();
        let mut children = vec![Vec::new(); n];
        for (c, p) in self.bones() {
            children[p].push(c);
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![self.root()];
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev());
        }
        order
    }

    /// Relabels joints: old joint `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_joints();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || core::mem::replace(&mut check[p], true)) {
            return Err(Error::Contract("permutation is not a bijection on joints".into()));
        }
        let mut parents = vec![0; n];
        let mut names = vec![String::new(); n];
        for i in 0..n {
            parents[perm[i]] = perm[self.parents[i]];
            names[perm[i]] = self.joint_names[i].clone();
        }
        let symmetry = self.symmetry.iter().map(|&(l, r)| (perm[l], perm[r])).collect();
        Self::new(names, parents, symmetry)
    }
}

/// Connection class of one nonzero of `A + I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeType {
    SelfLoop,
    /// Bone whose endpoints both lie on the body midline.
    AxialBone,
    /// Bone touching at least one lateral (left/right paired) joint.
    LimbBone,
    Symmetry,
}

impl EdgeType {
    /// Kernel slot of this edge type when the graph is split into `k` types.
    ///
    /// - k = 1: everything shares one kernel.
    /// - k = 2: self-loops | every other connection.
    /// - k = 3: self-loops | bones | symmetry links.
    /// - k = 4: self-loops | axial bones | limb bones | symmetry links.
    pub fn slot(self, k: usize) -> usize {
        use EdgeType::*;
        match (k, self) {
            (1, _) => 0,
            (2, SelfLoop) => 0,
            (2, _) => 1,
            (3, SelfLoop) => 0,
            (3, AxialBone | LimbBone) => 1,
            (3, Symmetry) => 2,
            (_, SelfLoop) => 0,
            (_, AxialBone) => 1,
            (_, LimbBone) => 2,
            (_, Symmetry) => 3,
        }
    }
}

pub const MAX_EDGE_TYPES: usize = 4;

fn check_k(k: usize) -> Result<()> {
    if (1..=MAX_EDGE_TYPES).contains(&k) {
        Ok(())
    } else {
        Err(Error::Config(format!("edge_types must be in 1..={MAX_EDGE_TYPES}, got {k}")))
    }
}

/// Edge-type label for every entry of `A + I`; `None` where there is no edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePartition {
    num_joints: usize,
    num_types: usize,
    labels: Vec<Option<EdgeType>>,
}

impl EdgePartition {
    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn label(&self, i: usize, j: usize) -> Option<EdgeType> {
        self.labels[i * self.num_joints + j]
    }

    /// Kernel slot of entry `(i, j)`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.label(i, j).map(|t| t.slot(self.num_types))
    }

    /// Number of nonzeros assigned to each of the `k` slots.
    pub fn support_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_types];
        for t in self.labels.iter().flatten() {
            sizes[t.slot(self.num_types)] += 1;
        }
        sizes
    }

    pub fn count(&self, ty: EdgeType) -> usize {
        self.labels.iter().filter(|l| **l == Some(ty)).count()
    }
}

/// Labels every nonzero of `A + I` with one of `k` edge types.
pub fn partition_edges(topo: &SkeletonTopology, k: usize) -> Result<EdgePartition> {
    check_k(k)?;
    let n = topo.num_joints();
    let mut labels = vec![None; n * n];
    for i in 0..n {
        labels[i * n + i] = Some(EdgeType::SelfLoop);
    }
    let mut lateral = vec![false; n];
    for &(l, r) in topo.symmetry_pairs() {
        lateral[l] = true;
        lateral[r] = true;
    }
    for (c, p) in topo.bones() {
        let ty = if lateral[c] || lateral[p] {
            EdgeType::LimbBone
        } else {
            EdgeType::AxialBone
        };
        labels[c * n + p] = Some(ty);
        labels[p * n + c] = Some(ty);
    }
    for &(l, r) in topo.symmetry_pairs() {
        labels[l * n + r] = Some(EdgeType::Symmetry);
        labels[r * n + l] = Some(EdgeType::Symmetry);
    }
    Ok(EdgePartition {
        num_joints: n,
        num_types: k,
        labels,
    })
}

/// Per-edge-type slices of the symmetrically normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySet {
    partition: EdgePartition,
    matrices: Vec<Tensor>,
}

impl AdjacencySet {
    pub fn num_joints(&self) -> usize {
        self.partition.num_joints
    }

    pub fn num_types(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Tensor] {
        &self.matrices
    }

    pub fn partition(&self) -> &EdgePartition {
        &self.partition
    }

    /// Nonzero count of each per-type matrix.
    pub fn support_sizes(&self) -> Vec<usize> {
        self.partition.support_sizes()
    }

    /// Sum of the per-type matrices.
    pub fn combined(&self) -> Tensor {
        let n = self.num_joints();
        let mut out = Tensor::zeros(&[n, n]);
        for m in &self.matrices {
            out.data_mut()
                .iter_mut()
                .zip(m.data())
                .for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Builds `D^-1/2 (A + I) D^-1/2` over all connections and splits it by
/// edge type into `k` matrices.
pub fn build_adjacency(topo: &SkeletonTopology, k: usize) -> Result<AdjacencySet> {
    let partition = partition_edges(topo, k)?;
    let n = topo.num_joints();
    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| partition.label(i, j).is_some()).count() as f64)
        .collect();
    let mut matrices = vec![Tensor::zeros(&[n, n]); k];
    for i in 0..n {
        for j in 0..n {
            if let Some(slot) = partition.slot(i, j) {
                matrices[slot].data_mut()[i * n + j] = 1.0 / libm::sqrt(degree[i] * degree[j]);
            }
        }
    }
    Ok(AdjacencySet {
        partition,
        matrices,
    })
}
