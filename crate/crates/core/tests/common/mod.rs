#![allow(dead_code)]

use graphmlp_core::graph::SkeletonTopology;
use graphmlp_core::metrics::Point3;
use graphmlp_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// pelvis, right leg, left leg, spine, head
pub fn toy_topology() -> SkeletonTopology {
    SkeletonTopology::new(Vec::new(), vec![0, 0, 0, 0, 3], vec![(2, 1)]).unwrap()
}

/// Random tree on `n` joints rooted at 0 with random disjoint symmetry
/// pairs that are neither the root nor bones.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SkeletonTopology {
    let mut parents = vec![0];
    for i in 1..n {
        parents.push(rng.gen_range(0..i));
    }
    let is_bone = |a: usize, b: usize| parents[a] == b || parents[b] == a;
    let mut free: Vec<usize> = (1..n).collect();
    let mut pairs = Vec::new();
    for _ in 0..n {
        if free.len() < 2 {
            break;
        }
        let a = free[rng.gen_range(0..free.len())];
        let b = free[rng.gen_range(0..free.len())];
        if a != b && !is_bone(a, b) && rng.gen_bool(0.5) {
            pairs.push((a, b));
            free.retain(|&j| j != a && j != b);
        }
    }
    SkeletonTopology::new(Vec::new(), parents, pairs).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_pose(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| [0; 3].map(|_| rng.gen_range(-scale..scale)))
        .collect()
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // Normalized random quaternion.
    let mut q = [0.0f64; 4].map(|_| rng.gen_range(-1.0..1.0));
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= norm);
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn similarity(p: &[Point3], s: f64, r: &[[f64; 3]; 3], t: Point3) -> Vec<Point3> {
    p.iter()
        .map(|v| [0, 1, 2].map(|i| s * (r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2]) + t[i]))
        .collect()
}

/// Plain row-major matrix helpers used by the reference oracles.
pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    let cols = t.last_dim();
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    (0..m)
        .map(|i| (0..n).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

pub fn tr(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn add_row(a: &Mat, bias: &[f64]) -> Mat {
    a.iter()
        .map(|r| r.iter().zip(bias).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn ln_rows(a: &Mat, gain: &[f64], bias: &[f64], eps: f64) -> Mat {
    a.iter()
        .map(|r| {
            let d = r.len() as f64;
            let mean = r.iter().sum::<f64>() / d;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            r.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + eps).sqrt() * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

pub fn gelu(a: &Mat) -> Mat {
    a.iter()
        .map(|r| {
            r.iter()
                .map(|&x| 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)))
                .collect()
        })
        .collect()
}

pub fn max_diff(a: &Mat, b: &[f64]) -> f64 {
    a.iter()
        .flatten()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
