mod common;

use common::{random_tree, rng};
use graphmlp_core::graph::{build_adjacency, partition_edges, EdgeType, SkeletonTopology};
use graphmlp_core::Error;
use rand::seq::SliceRandom;

/// `A~_ij / sqrt(d_i d_j)` computed straight from parents and pairs.
fn oracle_normalized(topo: &SkeletonTopology) -> Vec<f64> {
    let n = topo.num_joints();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
        let p = topo.parents()[i];
        if p != i {
            a[i * n + p] = 1.0;
            a[p * n + i] = 1.0;
        }
    }
    for &(l, r) in topo.symmetry_pairs() {
        a[l * n + r] = 1.0;
        a[r * n + l] = 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if a[idx] == 0.0 {
                0.0
            } else {
                a[idx] / (d[i] * d[j]).sqrt()
            }
        })
        .collect()
}

fn spectral_radius(m: &[f64], n: usize) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..3000 {
        let w: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        lambda = norm / vn;
        v = w.iter().map(|x| x / norm).collect();
    }
    lambda
}

fn check_all_properties(topo: &SkeletonTopology) {
    let n = topo.num_joints();
    let oracle = oracle_normalized(topo);
    for k in 1..=4 {
        let adj = build_adjacency(topo, k).unwrap();
        assert_eq!(adj.num_types(), k);
        let mut owner = vec![None; n * n];
        for (t, m) in adj.matrices().iter().enumerate() {
            let d = m.data();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(d[i * n + j], d[j * n + i], "type {t} not symmetric");
                    if d[i * n + j] != 0.0 {
                        assert!(owner[i * n + j].is_none(), "supports overlap at ({i},{j})");
                        owner[i * n + j] = Some(t);
                    }
                }
            }
        }
        assert_eq!(adj.combined().data(), &oracle[..], "k={k}");
        assert!(spectral_radius(adj.combined().data(), n) <= 1.0 + 1e-9);
    }
}

#[test]
fn h36m_adjacency_properties() {
    let topo = SkeletonTopology::h36m_17();
    check_all_properties(&topo);
    let p = partition_edges(&topo, 4).unwrap();
    assert_eq!(p.count(EdgeType::SelfLoop), 17);
    assert_eq!(p.count(EdgeType::Symmetry), 2 * topo.symmetry_pairs().len());
    assert_eq!(p.support_sizes(), vec![17, 8, 24, 12]);
    let combined = build_adjacency(&topo, 4).unwrap().combined();
    assert!(combined.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn fifty_random_trees() {
    let mut r = rng(2024);
    for case in 0..50 {
        let n = 2 + case % 23;
        let topo = random_tree(&mut r, n);
        check_all_properties(&topo);
    }
}

#[test]
fn permutation_conjugates_adjacency() {
    let mut r = rng(5);
    let topos = [SkeletonTopology::h36m_17(), random_tree(&mut r, 12)];
    for topo in &topos {
        let n = topo.num_joints();
        let base = build_adjacency(topo, 4).unwrap();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut r);
            let moved = build_adjacency(&topo.permuted(&perm).unwrap(), 4).unwrap();
            for (a, b) in base.matrices().iter().zip(moved.matrices()) {
                for i in 0..n {
                    for j in 0..n {
                        assert_eq!(a.data()[i * n + j], b.data()[perm[i] * n + perm[j]]);
                    }
                }
            }
            let mut inverse = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            let back = topo.permuted(&perm).unwrap().permuted(&inverse).unwrap();
            assert_eq!(build_adjacency(&back, 4).unwrap(), base);
        }
    }
}

#[test]
fn hand_cases() {
    let single = SkeletonTopology::new(Vec::new(), vec![0], Vec::new()).unwrap();
    let adj = build_adjacency(&single, 4).unwrap();
    assert_eq!(adj.matrices()[0].data(), &[1.0]);

    let chain = SkeletonTopology::new(Vec::new(), vec![0, 0], Vec::new()).unwrap();
    assert_eq!(chain.parents(), &[0, 0]);
    let adj = build_adjacency(&chain, 1).unwrap();
    assert_eq!(adj.combined().data(), &[0.5, 0.5, 0.5, 0.5]);
}

#[test]
fn malformed_layouts_are_rejected() {
    let cycle = SkeletonTopology::new(Vec::new(), vec![0, 2, 1], Vec::new());
    assert!(matches!(cycle, Err(Error::Topology(_))));
    let two_roots = SkeletonTopology::new(Vec::new(), vec![0, 1, 0], Vec::new());
    assert!(matches!(two_roots, Err(Error::Topology(_))));
    let root_pair = SkeletonTopology::new(Vec::new(), vec![0, 0, 0], vec![(0, 1)]);
    assert!(matches!(root_pair, Err(Error::Topology(_))));
    let overlapping = SkeletonTopology::new(Vec::new(), vec![0, 0, 0, 0], vec![(1, 2), (2, 3)]);
    assert!(matches!(overlapping, Err(Error::Topology(_))));
}
