//! Training loss and evaluation metrics.
//!
//! Poses are `N x 3` point sets in millimeters. Per-joint PCK counts a joint
//! as correct when its error is at most the threshold; the same inclusive
//! rule is used for every point of the AUC curve so that `auc <= pck_150`
//! always holds.

mod svd;

pub use svd::{det3, svd3, Mat3, Svd3};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub type Point3 = [f64; 3];

/// PCK threshold used for the headline number.
pub const PCK_THRESHOLD_MM: f64 = 150.0;

/// `sum_n ||pred_n - target_n||_2` on the tape (not squared, not averaged).
pub fn pose_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let norms = tape.row_norm(diff)?;
    Ok(tape.sum_all(norms))
}

/// Reads an `N x 3` tensor as points.
pub fn to_points(t: &Tensor) -> Result<Vec<Point3>> {
    if t.rank() != 2 || t.shape()[1] != 3 {
        return Err(Error::Rank {
            op: "to_points",
            expected: 2,
            shape: t.shape().to_vec(),
        });
    }
    Ok(t.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn points_to_tensor(points: &[Point3]) -> Tensor {
    let data = points.iter().flat_map(|p| p.iter().copied()).collect();
    Tensor::new(&[points.len(), 3], data).expect("non-empty pose")
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    libm::sqrt((0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum())
}

fn check_pair(pred: &[Point3], target: &[Point3]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape {
            op: "pose metric",
            lhs: vec![pred.len(), 3],
            rhs: vec![target.len(), 3],
        });
    }
    Ok(())
}

/// Euclidean error of each joint.
pub fn joint_errors(pred: &[Point3], target: &[Point3]) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| dist(p, t)).collect())
}

/// Mean per-joint position error of one pose.
pub fn mpjpe(pred: &[Point3], target: &[Point3]) -> Result<f64> {
    let e = joint_errors(pred, target)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

fn centroid(points: &[Point3]) -> Point3 {
    let mut c = [0.0; 3];
    for p in points {
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    c.map(|v| v / points.len() as f64)
}

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Point3,
}

impl Similarity {
    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        [0, 1, 2].map(|i| {
            self.scale * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + self.translation[i]
        })
    }
}

/// Least-squares similarity transform taking `pred` onto `target`.
///
/// Rotation comes from the SVD of the 3x3 cross-covariance with the sign
/// of the last singular direction flipped when needed so `det(R) = +1`.
pub fn procrustes_fit(pred: &[Point3], target: &[Point3]) -> Result<Similarity> {
    check_pair(pred, target)?;
    let (mp, mt) = (centroid(pred), centroid(target));
    let xs: Vec<Point3> = pred.iter().map(|p| [0, 1, 2].map(|i| p[i] - mp[i])).collect();
    let ys: Vec<Point3> = target.iter().map(|p| [0, 1, 2].map(|i| p[i] - mt[i])).collect();

    let mut yy = [[0.0; 3]; 3];
    for y in &ys {
        for i in 0..3 {
            for j in 0..3 {
                yy[i][j] += y[i] * y[j];
            }
        }
    }
    let spread = svd3(&yy).s;
    // singular values of the centered target are sqrt of these
    if !(spread[0] > 0.0) || libm::sqrt(spread[1]) <= 1e-9 * libm::sqrt(spread[0]) {
        return Err(Error::DegenerateTarget);
    }

    // cross-covariance sum_i y_i x_i^T
    let mut cov = [[0.0; 3]; 3];
    for (x, y) in xs.iter().zip(&ys) {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += y[i] * x[j];
            }
        }
    }
    let d = svd3(&cov);
    let flip = if det3(&d.u) * det3(&d.v) < 0.0 { -1.0 } else { 1.0 };
    let signs = [1.0, 1.0, flip];
    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = (0..3).map(|k| d.u[i][k] * signs[k] * d.v[j][k]).sum();
        }
    }
    let var_x: f64 = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum();
    let scale = if var_x > 0.0 {
        (0..3).map(|k| d.s[k] * signs[k]).sum::<f64>() / var_x
    } else {
        0.0
    };
    let rm = [0, 1, 2].map(|i| (0..3).map(|j| rotation[i][j] * mp[j]).sum::<f64>());
    let translation = [0, 1, 2].map(|i| mt[i] - scale * rm[i]);
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// `pred` after optimal similarity alignment to `target`.
pub fn procrustes_align(pred: &[Point3], target: &[Point3]) -> Result<Vec<Point3>> {
    let t = procrustes_fit(pred, target)?;
    Ok(pred.iter().map(|p| t.apply(p)).collect())
}

/// MPJPE after Procrustes alignment.
pub fn pa_mpjpe(pred: &[Point3], target: &[Point3]) -> Result<f64> {
    let aligned = procrustes_align(pred, target)?;
    mpjpe(&aligned, target)
}

/// Evenly spaced PCK thresholds `0, step, ..., max` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AucGrid {
    pub max_mm: f64,
    pub step_mm: f64,
}

impl Default for AucGrid {
    fn default() -> Self {
        AucGrid {
            max_mm: PCK_THRESHOLD_MM,
            step_mm: 5.0,
        }
    }
}

impl AucGrid {
    pub fn thresholds(&self) -> Vec<f64> {
        let count = libm::round(self.max_mm / self.step_mm) as usize;
        (0..=count).map(|i| i as f64 * self.step_mm).collect()
    }
}

/// Percentage of errors at or below `threshold`.
pub fn pck(errors: &[f64], threshold: f64) -> f64 {
    100.0 * errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
}

/// `(pck_150, auc)` over a flat list of per-joint errors, both in percent.
pub fn pck_auc_from_errors(errors: &[f64], grid: &AucGrid) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::Contract("pck/auc over an empty set".into()));
    }
    let thresholds = grid.thresholds();
    let auc = thresholds.iter().map(|&t| pck(errors, t)).sum::<f64>() / thresholds.len() as f64;
    Ok((pck(errors, PCK_THRESHOLD_MM), auc))
}

/// `(pck_150, auc)` over a set of poses with the default 0..150mm / 5mm grid.
pub fn pck_auc(preds: &[Vec<Point3>], targets: &[Vec<Point3>]) -> Result<(f64, f64)> {
    if preds.len() != targets.len() {
        return Err(Error::Contract("prediction and target sets differ in size".into()));
    }
    let mut errors = Vec::new();
    for (p, t) in preds.iter().zip(targets) {
        errors.extend(joint_errors(p, t)?);
    }
    pck_auc_from_errors(&errors, &AucGrid::default())
}

/// Aggregate metrics over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pck_150: f64,
    pub auc: f64,
    pub per_joint_errors: Vec<f64>,
    pub sample_count: usize,
}

/// Computes every metric over paired predictions and targets.
pub fn evaluate(preds: &[Vec<Point3>], targets: &[Vec<Point3>]) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Contract("evaluation set is empty".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Contract("prediction and target sets differ in size".into()));
    }
    let n = targets[0].len();
    let mut per_joint = vec![0.0; n];
    let mut all = Vec::with_capacity(preds.len() * n);
    let mut pa_sum = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        if t.len() != n {
            return Err(Error::Contract("samples differ in joint count".into()));
        }
        let e = joint_errors(p, t)?;
        per_joint.iter_mut().zip(&e).for_each(|(acc, v)| *acc += v);
        all.extend_from_slice(&e);
        pa_sum += pa_mpjpe(p, t)?;
    }
    let count = preds.len() as f64;
    per_joint.iter_mut().for_each(|v| *v /= count);
    let (pck_150, auc) = pck_auc_from_errors(&all, &AucGrid::default())?;
    Ok(EvalReport {
        mpjpe: all.iter().sum::<f64>() / all.len() as f64,
        pa_mpjpe: pa_sum / count,
        pck_150,
        auc,
        per_joint_errors: per_joint,
        sample_count: preds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skeleton() -> Vec<Point3> {
        vec![
            [0.0, 0.0, 0.0],
            [120.0, 10.0, 5.0],
            [130.0, -400.0, 20.0],
            [-120.0, 12.0, -3.0],
            [-10.0, 450.0, 30.0],
            [60.0, 300.0, -80.0],
        ]
    }

    #[test]
    fn loss_of_identical_poses_is_zero() {
        let mut t = Tape::new();
        let a = t.constant(points_to_tensor(&skeleton()));
        let l = pose_loss(&mut t, a, a).unwrap();
        assert_eq!(t.value(l).item(), 0.0);
    }

    #[test]
    fn loss_of_three_four_five_offset() {
        let target = skeleton();
        let mut pred = target.clone();
        pred[2][0] += 3.0;
        pred[2][2] += 4.0;
        let mut t = Tape::new();
        let p = t.constant(points_to_tensor(&pred));
        let g = t.constant(points_to_tensor(&target));
        let l = pose_loss(&mut t, p, g).unwrap();
        assert!((t.value(l).item() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn loss_shape_mismatch() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::zeros(&[4, 3]));
        let g = t.constant(Tensor::zeros(&[5, 3]));
        assert!(pose_loss(&mut t, p, g).is_err());
    }

    #[test]
    fn mpjpe_cases() {
        let t = skeleton();
        assert_eq!(mpjpe(&t, &t).unwrap(), 0.0);
        let shifted: Vec<Point3> = t.iter().map(|p| [p[0], p[1], p[2] + 2.0]).collect();
        assert!((mpjpe(&shifted, &t).unwrap() - 2.0).abs() < 1e-12);
        assert!(mpjpe(&t[..3], &t).is_err());
    }

    #[test]
    fn mpjpe_is_loss_over_joints() {
        let t = skeleton();
        let p: Vec<Point3> = t
            .iter()
            .enumerate()
            .map(|(i, q)| [q[0] + i as f64, q[1] - 2.0, q[2] * 1.1])
            .collect();
        let mut tape = Tape::new();
        let pv = tape.constant(points_to_tensor(&p));
        let tv = tape.constant(points_to_tensor(&t));
        let l = pose_loss(&mut tape, pv, tv).unwrap();
        let per = tape.value(l).item() / t.len() as f64;
        assert!((per - mpjpe(&p, &t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn procrustes_identity() {
        let t = skeleton();
        let a = procrustes_align(&t, &t).unwrap();
        assert!(mpjpe(&a, &t).unwrap() < 1e-9);
    }

    #[test]
    fn procrustes_recovers_similarity() {
        let t = skeleton();
        let (c, s) = (libm::cos(0.7), libm::sin(0.7));
        let r = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let sim = Similarity {
            scale: 2.0,
            rotation: r,
            translation: [10.0, -5.0, 300.0],
        };
        let moved: Vec<Point3> = t.iter().map(|p| sim.apply(p)).collect();
        assert!(pa_mpjpe(&moved, &t).unwrap() < 1e-6);
    }

    #[test]
    fn procrustes_rejects_collinear_target() {
        let line: Vec<Point3> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        let pred = skeleton()[..5].to_vec();
        assert_eq!(procrustes_align(&pred, &line), Err(Error::DegenerateTarget));
    }

    #[test]
    fn pck_auc_fixed_cases() {
        let grid = AucGrid::default();
        assert_eq!(grid.thresholds().len(), 31);
        assert_eq!(pck_auc_from_errors(&[0.0; 10], &grid).unwrap(), (100.0, 100.0));
        assert_eq!(pck_auc_from_errors(&[200.0; 10], &grid).unwrap(), (0.0, 0.0));
        // 100mm passes thresholds 100, 105, ..., 150: 11 of 31
        let (p, a) = pck_auc_from_errors(&[100.0; 10], &grid).unwrap();
        assert_eq!(p, 100.0);
        assert!((a - 100.0 * 11.0 / 31.0).abs() < 1e-12);
        assert!(pck_auc_from_errors(&[], &grid).is_err());
    }

    #[test]
    fn evaluate_ground_truth_is_zero_error() {
        let t = vec![skeleton(), skeleton()];
        let r = evaluate(&t, &t).unwrap();
        assert_eq!(r.mpjpe, 0.0);
        assert!(r.pa_mpjpe < 1e-9);
        assert_eq!((r.pck_150, r.auc), (100.0, 100.0));
        assert!(r.per_joint_errors.iter().all(|e| *e == 0.0));
        assert_eq!(r.sample_count, 2);
        assert!(evaluate(&[], &[]).is_err());
    }
}
