use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Worst entry of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub param: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(1, |numeric|)`
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.params.iter().all(|p| p.rel_err < tol)
    }
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let v = tape.value(root);
    if v.len() != 1 {
        return Err(Error::Contract("grad_check: function must return a scalar".into()));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of `f` against central differences with
/// the given `step`, for every entry of every tensor in `params`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract("grad_check: step must be > 0".into()));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            tape.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| alloc::vec![0.0; p.len()])
        })
        .collect();
    drop(tape);

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport::default();
    for (pi, grads) in analytic.iter().enumerate() {
        let mut worst = ParamCheck {
            param: pi,
            entry: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_err: -1.0,
        };
        for (i, &a) in grads.iter().enumerate() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + step;
            let plus = evaluate(&f, &work)?;
            work[pi].data_mut()[i] = orig - step;
            let minus = evaluate(&f, &work)?;
            work[pi].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let rel_err = libm::fabs(a - numeric) / f64::max(1.0, libm::fabs(numeric));
            if rel_err > worst.rel_err || rel_err.is_nan() {
                worst = ParamCheck {
                    param: pi,
                    entry: i,
                    analytic: a,
                    numeric,
                    rel_err,
                };
            }
        }
        report.params.push(worst);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;
    use alloc::vec;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random(shape: &[usize], seed: &mut u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| lcg(seed)).collect()).unwrap()
    }

    #[test]
    fn linear_map_is_exact() {
        let mut s = 1;
        let w = random(&[3, 4], &mut s);
        let x = random(&[4, 2], &mut s);
        let r = grad_check(
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                Ok(t.sum_all(y))
            },
            &[w, x],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-9, "{r:?}");
    }

    #[test]
    fn matmul_gradient_matches_central_differences() {
        let mut s = 7;
        let a = random(&[3, 4], &mut s);
        let b = random(&[4, 2], &mut s);
        // sum(A*B) is linear in A; square the product to get curvature.
        let r = grad_check(
            |t, v| {
                let c = t.matmul(v[0], v[1])?;
                let sq = t.mul(c, c)?;
                Ok(t.sum_all(sq))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-6, "{r:?}");
    }

    #[test]
    fn transpose_gradient() {
        let mut s = 3;
        let a = random(&[2, 3], &mut s);
        let w = random(&[3, 2], &mut s);
        let r = grad_check(
            |t, v| {
                let at = t.transpose2d(v[0])?;
                let p = t.mul(at, v[1])?;
                let p = t.mul(p, p)?;
                Ok(t.sum_all(p))
            },
            &[a, w],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-6, "{r:?}");
    }

    #[test]
    fn layer_norm_gradient() {
        let mut s = 11;
        let x = random(&[3, 4], &mut s);
        let g = random(&[4], &mut s);
        let b = random(&[4], &mut s);
        let w = random(&[3, 4], &mut s);
        let r = grad_check(
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                let y = t.mul(y, v[3])?;
                let y = t.gelu(y);
                Ok(t.sum_all(y))
            },
            &[x, g, b, w],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-5, "{r:?}");
    }

    #[test]
    fn gelu_gradient_over_grid() {
        let xs: Vec<f64> = (0..61).map(|i| -3.0 + 0.1 * i as f64).collect();
        let x = Tensor::new(&[61], xs).unwrap();
        let r = grad_check(
            |t, v| {
                let y = t.gelu(v[0]);
                Ok(t.sum_all(y))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-6, "{r:?}");
    }

    #[test]
    fn broadcast_concat_scale_gradients() {
        let mut s = 5;
        let a = random(&[3, 2], &mut s);
        let b = random(&[3, 4], &mut s);
        let bias = random(&[6], &mut s);
        let r = grad_check(
            |t, v| {
                let c = t.concat_last_axis(&[v[0], v[1]])?;
                let c = t.add(c, v[2])?;
                let c = t.scale(c, -1.5);
                let c = t.mul(c, c)?;
                Ok(t.sum_all(c))
            },
            &[a, b, bias],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err() < 1e-6, "{r:?}");
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut s = 9;
        let used = random(&[2, 2], &mut s);
        let dead = random(&[3], &mut s);
        let r = grad_check(
            |t, v| {
                let y = t.mul(v[0], v[0])?;
                Ok(t.sum_all(y))
            },
            &[used, dead],
            1e-5,
        )
        .unwrap();
        let d = &r.params[1];
        assert_eq!(d.analytic, 0.0);
        assert_eq!(d.numeric, 0.0);
    }

    #[test]
    fn corrupted_backward_rule_is_detected() {
        let mut s = 13;
        let x = random(&[4], &mut s);
        let r = grad_check(
            |t, v| {
                let xv = t.value(v[0]).data().to_vec();
                let out = Tensor::new(&[4], xv.iter().map(|x| x * x).collect()).unwrap();
                // d(x^2)/dx is 2x; the rule below is deliberately wrong.
                let bad: crate::tensor::BackwardFn = Box::new(|ins, _out, g| {
                    vec![ins[0].data().iter().zip(g).map(|(x, g)| 3.0 * x * g).collect()]
                });
                let y = t.custom("bad_square", &[v[0]], out, bad);
                Ok(t.sum_all(y))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(!r.passes(1e-4));
    }
}
