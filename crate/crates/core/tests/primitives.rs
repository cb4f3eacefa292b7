//! Finite-difference checks for every differentiable primitive, plus the
//! softmax and evaluation-mode invariants.

use rand::Rng;
use swapgt_core::nn::{grad_check, ParamStore, Tape, Tensor, Var};
use swapgt_core::rng;
use swapgt_core::Result;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces any value to a scalar through fixed random weights so every output
/// coordinate contributes to the gradient.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let len = tape.value(y).len();
    let flat = tape.reshape(y, &[1, len])?;
    let w = tape.constant(random(&[len, 1], seed));
    let s = tape.matmul(flat, w)?;
    tape.reshape(s, &[])
}

fn check<F>(params: ParamStore, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let report = grad_check(&params, EPS, |p, with_grad| {
        let mut tape = Tape::new();
        let vars = tape.params(p);
        let out = build(&mut tape, &vars)?;
        let loss = project(&mut tape, out, 99)?;
        let value = tape.value(loss).item();
        if !with_grad {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let data = grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.value(i).len()]);
                Tensor::new(p.value(i).shape(), data).unwrap()
            })
            .collect();
        Ok((value, g))
    })
    .unwrap();
    report.max_rel_error
}

fn store(items: &[(&str, Tensor)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (n, t) in items {
        s.push(n, t.clone());
    }
    s
}

#[test]
fn matmul() {
    let p = store(&[("a", random(&[3, 4], 1)), ("b", random(&[4, 2], 2))]);
    let err = check(p, |t, v| t.matmul(v[0], v[1]));
    assert!(err <= TOL, "{err}");
}

#[test]
fn add_and_add_row_and_scale() {
    let p = store(&[("a", random(&[3, 4], 3)), ("b", random(&[3, 4], 4)), ("c", random(&[4], 5))]);
    let err = check(p, |t, v| {
        let s = t.add(v[0], v[1])?;
        let s = t.add_row(s, v[2])?;
        Ok(t.scale(s, -1.7))
    });
    assert!(err <= TOL, "{err}");
}

#[test]
fn concat_last_axis() {
    let p = store(&[("a", random(&[3, 2], 6)), ("b", random(&[3, 5], 7))]);
    let err = check(p, |t, v| t.concat(&[v[0], v[1], v[0]]));
    assert!(err <= TOL, "{err}");
}

#[test]
fn mean_over_each_axis() {
    for axis in 0..3 {
        let p = store(&[("a", random(&[2, 3, 4], 8 + axis as u64))]);
        let err = check(p, |t, v| t.mean(v[0], axis));
        assert!(err <= TOL, "axis {axis}: {err}");
    }
}

#[test]
fn select_and_slice() {
    let p = store(&[("a", random(&[4, 5], 11))]);
    let err = check(p, |t, v| {
        let r = t.select_rows(v[0], &[3, 0, 3, 1])?;
        t.slice_cols(r, 1, 4)
    });
    assert!(err <= TOL, "{err}");
}

#[test]
fn row_softmax() {
    let p = store(&[("a", random(&[3, 5], 12))]);
    let err = check(p, |t, v| t.softmax(v[0]));
    assert!(err <= TOL, "{err}");
}

#[test]
fn layer_norm() {
    let p = store(&[("x", random(&[4, 6], 13)), ("g", random(&[6], 14)), ("b", random(&[6], 15))]);
    let err = check(p, |t, v| t.layer_norm(v[0], v[1], v[2]));
    assert!(err <= TOL, "{err}");
}

#[test]
fn gelu() {
    let p = store(&[("x", random(&[3, 7], 16))]);
    let err = check(p, |t, v| Ok(t.gelu(v[0])));
    assert!(err <= TOL, "{err}");
}

#[test]
fn dropout_with_frozen_mask() {
    let mut r = rng::seeded(17);
    let mask: Vec<f64> = (0..12).map(|_| if r.random::<f64>() < 0.4 { 0.0 } else { 1.0 / 0.6 }).collect();
    let p = store(&[("x", random(&[3, 4], 18))]);
    let err = check(p, move |t, v| t.mask(v[0], mask.clone()));
    assert!(err <= TOL, "{err}");
}

#[test]
fn blocked_attention_products() {
    let p = store(&[("q", random(&[6, 2], 19)), ("k", random(&[6, 2], 20)), ("v", random(&[6, 3], 21))]);
    let err = check(p, |t, v| {
        let s = t.block_qk(v[0], v[1], 3)?;
        let w = t.softmax(s)?;
        t.block_pv(w, v[2], 3)
    });
    assert!(err <= TOL, "{err}");
}

#[test]
fn softmax_cross_entropy() {
    let p = store(&[("z", random(&[1, 3], 22))]);
    let report = grad_check(&p, EPS, |p, _| {
        let mut tape = Tape::new();
        let vars = tape.params(p);
        let loss = tape.cross_entropy(vars[0], &[1])?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vec![Tensor::new(&[1, 3], grads.get(vars[0]).unwrap().to_vec())?]))
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);

    // Closed form: softmax - onehot.
    let z = p.value(0).data();
    let m: f64 = z.iter().map(|x| x.exp()).sum();
    let mut tape = Tape::new();
    let v = tape.leaf(p.value(0).clone());
    let loss = tape.cross_entropy(v, &[1]).unwrap();
    let g = tape.backward(loss).unwrap();
    for (l, &gz) in g.get(v).unwrap().iter().enumerate() {
        let expected = z[l].exp() / m - if l == 1 { 1.0 } else { 0.0 };
        assert!((gz - expected).abs() < 1e-14);
    }
}

#[test]
fn center_alignment() {
    let p = store(&[("z", random(&[6, 4], 23))]);
    let err = check(p, |t, v| t.center_alignment(v[0], 3));
    assert!(err <= TOL, "{err}");
}

#[test]
fn quadratic_is_exact() {
    let p = store(&[("theta", random(&[10], 24))]);
    let report = grad_check(&p, EPS, |p, _| {
        let th = p.value(0).data();
        let value = th.iter().map(|x| x * x).sum();
        Ok((value, vec![Tensor::vector(th.iter().map(|x| 2.0 * x).collect())]))
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-8, "{}", report.max_rel_error);
}

#[test]
fn detects_wrong_gradient_and_bad_probes() {
    let p = store(&[("theta", random(&[4], 25))]);
    let report = grad_check(&p, EPS, |p, _| {
        let th = p.value(0).data();
        Ok((th.iter().map(|x| x * x).sum(), vec![Tensor::vector(th.iter().map(|x| -2.0 * x).collect())]))
    })
    .unwrap();
    assert!(report.max_rel_error > 1.0);
    assert!(grad_check(&p, 1e-2, |_, _| Ok((0.0, vec![]))).is_err());
    assert!(grad_check(&p, EPS, |_, _| Ok((f64::NAN, vec![Tensor::zeros(&[4])]))).is_err());
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    for seed in 0..20 {
        let x = random(&[4, 9], 100 + seed);
        let mut tape = Tape::new();
        let a = tape.constant(x.clone());
        let y = tape.softmax(a).unwrap();
        let shifted: Vec<f64> = x.data().chunks(9).enumerate().flat_map(|(r, row)| row.iter().map(move |v| v + 3.0 * r as f64 - 5.0)).collect();
        let b = tape.constant(Tensor::new(&[4, 9], shifted).unwrap());
        let z = tape.softmax(b).unwrap();
        for (r, row) in tape.value(y).data().chunks(9).enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (u, w) in row.iter().zip(tape.value(z).row(r)) {
                assert!((u - w).abs() < 1e-10);
            }
        }
    }
}
