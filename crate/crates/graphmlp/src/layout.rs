//! Skeleton layout files and layout lookup.

use std::fs;
use std::path::Path;

use graphmlp_core::graph::SkeletonTopology;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// JSON skeleton layout: joint names, parent indices (root is its own
/// parent) and left/right symmetry pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub joints: Vec<String>,
    pub parents: Vec<usize>,
    #[serde(default)]
    pub symmetry: Vec<[usize; 2]>,
}

impl LayoutFile {
    pub fn from_topology(topo: &SkeletonTopology) -> Self {
        LayoutFile {
            joints: topo.joint_names().to_vec(),
            parents: topo.parents().to_vec(),
            symmetry: topo.symmetry_pairs().iter().map(|&(l, r)| [l, r]).collect(),
        }
    }

    pub fn to_topology(&self) -> Result<SkeletonTopology> {
        if !self.joints.is_empty() && self.joints.len() != self.parents.len() {
            return Err(Error::Format(format!(
                "layout lists {} joint names but {} parents",
                self.joints.len(),
                self.parents.len()
            )));
        }
        let pairs = self.symmetry.iter().map(|&[l, r]| (l, r)).collect();
        Ok(SkeletonTopology::new(self.joints.clone(), self.parents.clone(), pairs)?)
    }
}

pub fn read_layout(path: &Path) -> Result<SkeletonTopology> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LayoutFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    file.to_topology()
}

pub fn write_layout(path: &Path, topo: &SkeletonTopology) -> Result<()> {
    let text = serde_json::to_string_pretty(&LayoutFile::from_topology(topo)).expect("layout serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A built-in layout name, or else a path to a layout file.
pub fn resolve_layout(name_or_path: &str) -> Result<SkeletonTopology> {
    match SkeletonTopology::builtin(name_or_path) {
        Ok(t) => Ok(t),
        Err(unknown) => {
            let path = Path::new(name_or_path);
            if path.exists() {
                read_layout(path)
            } else {
                Err(unknown.into())
            }
        }
    }
}
