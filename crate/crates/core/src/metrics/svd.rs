//! 3x3 singular value decomposition by one-sided Jacobi rotations.

pub type Mat3 = [[f64; 3]; 3];

const TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// `a = u * diag(s) * v^T` with `s` sorted in decreasing order and `u`, `v`
/// orthogonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    pub s: [f64; 3],
    pub v: Mat3,
}

fn col(m: &Mat3, j: usize) -> [f64; 3] {
    [m[0][j], m[1][j], m[2][j]]
}

fn set_col(m: &mut Mat3, j: usize, c: [f64; 3]) {
    for i in 0..3 {
        m[i][j] = c[i];
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = libm::sqrt(dot(a, a));
    (n > 0.0).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Unit vector orthogonal to `a` (assumed unit length).
fn any_orthogonal(a: [f64; 3]) -> [f64; 3] {
    let axis = if libm::fabs(a[0]) < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    normalized(cross(a, axis)).expect("axis chosen non-parallel")
}

pub fn svd3(a: &Mat3) -> Svd3 {
    let mut w = *a;
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..2 {
            for q in p + 1..3 {
                let (wp, wq) = (col(&w, p), col(&w, q));
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if gamma == 0.0 || libm::fabs(gamma) <= TOL * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for m in [&mut w, &mut v] {
                    let (mp, mq) = (col(m, p), col(m, q));
                    let np = [0, 1, 2].map(|i| c * mp[i] - s * mq[i]);
                    let nq = [0, 1, 2].map(|i| s * mp[i] + c * mq[i]);
                    set_col(m, p, np);
                    set_col(m, q, nq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [0, 1, 2].map(|j| libm::sqrt(dot(col(&w, j), col(&w, j))));
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut s = [0.0; 3];
    let mut u = [[0.0; 3]; 3];
    let mut vs = [[0.0; 3]; 3];
    let scale = norms[order[0]];
    let mut cols: [Option<[f64; 3]>; 3] = [None; 3];
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        set_col(&mut vs, k, col(&v, j));
        if norms[j] > TOL * scale && norms[j] > 0.0 {
            let wj = col(&w, j);
            cols[k] = Some([wj[0] / norms[j], wj[1] / norms[j], wj[2] / norms[j]]);
        }
    }
    // Complete U for (near-)zero singular values.
    let u0 = cols[0].unwrap_or([1.0, 0.0, 0.0]);
    let u1 = cols[1].unwrap_or_else(|| any_orthogonal(u0));
    let u2 = cols[2].unwrap_or_else(|| cross(u0, u1));
    set_col(&mut u, 0, u0);
    set_col(&mut u, 1, u1);
    set_col(&mut u, 2, u2);
    Svd3 { u, s, v: vs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(d: &Svd3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| d.u[i][k] * d.s[k] * d.v[j][k]).sum();
            }
        }
        out
    }

    fn assert_orthogonal(m: &Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(col(m, i), col(m, j));
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((d - e).abs() < 1e-10, "{m:?}");
            }
        }
    }

    #[test]
    fn reconstructs_general_matrix() {
        let a = [[2.0, -1.0, 0.5], [0.3, 4.0, 1.0], [-1.5, 0.2, 3.0]];
        let d = svd3(&a);
        let r = reconstruct(&d);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - a[i][j]).abs() < 1e-10);
            }
        }
        assert!(d.s[0] >= d.s[1] && d.s[1] >= d.s[2] && d.s[2] >= 0.0);
        assert_orthogonal(&d.u);
        assert_orthogonal(&d.v);
    }

    #[test]
    fn handles_rank_one() {
        let a = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0]];
        let d = svd3(&a);
        assert!(d.s[1].abs() < 1e-10 && d.s[2].abs() < 1e-10);
        assert_orthogonal(&d.u);
        let r = reconstruct(&d);
        assert!((r[1][2] - 6.0).abs() < 1e-10);
    }
}
