//! Plain-tensor entry points for the differentiable kernels, for callers that do not need
//! gradients (encoders, inference, tests).

use crate::error::Result;
use crate::graph::Graph;
use crate::tensor::Tensor;

fn unary(x: &Tensor, f: impl FnOnce(&mut Graph, crate::Var) -> Result<crate::Var>) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let out = f(&mut g, v)?;
    Ok(g.value(out).clone())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (va, vb) = (g.input(a.clone()), g.input(b.clone()));
    let out = g.matmul(va, vb)?;
    Ok(g.value(out).clone())
}

pub fn softmax_lastdim(x: &Tensor) -> Result<Tensor> {
    unary(x, |g, v| g.softmax(v))
}

pub fn avg_pool2d(x: &Tensor, kh: usize, kw: usize) -> Result<Tensor> {
    unary(x, |g, v| g.avg_pool(v, kh, kw))
}

pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (vx, vw, vb) = (g.input(x.clone()), g.input(weight.clone()), g.input(bias.clone()));
    let out = g.conv2d(vx, vw, vb)?;
    Ok(g.value(out).clone())
}

pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    unary(x, |g, v| g.resize(v, out_h, out_w))
}

pub fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    unary(x, |g, v| g.l2_normalize(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::nn::GruCell;
    use crate::params::ParamSet;
    use crate::rng::labeled_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = labeled_rng(seed, "ops-test");
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_small_cases() {
        let x = random(&[2, 2], 1);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(matmul(&eye, &x).unwrap(), x);
        let out = matmul(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), &t(&[2, 1], &[1.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
        assert!(matmul(&random(&[2, 3], 1), &random(&[2, 3], 2)).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let (a, b) = (random(&[5, 7], 3), random(&[7, 3], 4));
        let out = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += a.at(&[i, k]) * b.at(&[k, j]);
                }
                assert!((out.at(&[i, j]) - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_cases() {
        let out = softmax_lastdim(&t(&[3], &[0.0, 0.0, 0.0])).unwrap();
        out.data().iter().for_each(|v| assert!((v - 1.0 / 3.0).abs() < 1e-15));
        let out = softmax_lastdim(&t(&[2], &[0.0, 2f64.ln()])).unwrap();
        assert!((out.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out.data()[1] - 2.0 / 3.0).abs() < 1e-15);
        let big = softmax_lastdim(&t(&[2], &[1000.0, 1001.0])).unwrap();
        let small = softmax_lastdim(&t(&[2], &[0.0, 1.0])).unwrap();
        assert!(big.max_abs_diff(&small) < 1e-15);
        assert!(softmax_lastdim(&Tensor::new(&[0], vec![]).unwrap()).is_err());
    }

    #[test]
    fn avg_pool_cases() {
        let c = Tensor::full(&[5, 7, 2], 0.3);
        let out = avg_pool2d(&c, 2, 3).unwrap();
        assert_eq!(out.shape(), &[3, 3, 2]);
        out.data().iter().for_each(|v| assert!((v - 0.3).abs() < 1e-15));
        assert_eq!(avg_pool2d(&t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap().data(), &[2.5]);
        assert!(avg_pool2d(&c, 6, 1).is_err());
        assert!(avg_pool2d(&c, 0, 1).is_err());
        // full-axis strips
        assert_eq!(avg_pool2d(&c, 1, 7).unwrap().shape(), &[5, 1, 2]);
        assert_eq!(avg_pool2d(&c, 5, 1).unwrap().shape(), &[1, 7, 2]);
    }

    #[test]
    fn avg_pool_matches_window_loop() {
        let x = random(&[7, 9, 1], 5);
        let out = avg_pool2d(&x, 3, 3).unwrap();
        assert_eq!(out.shape(), &[3, 3, 1]);
        for oy in 0..3 {
            for ox in 0..3 {
                let mut vals = Vec::new();
                for y in oy * 3..(oy * 3 + 3).min(7) {
                    for xx in ox * 3..(ox * 3 + 3).min(9) {
                        vals.push(x.at(&[y, xx, 0]));
                    }
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((out.at(&[oy, ox, 0]) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_then_constant_upsample_preserves_mean() {
        let x = random(&[6, 9, 2], 6);
        let p = avg_pool2d(&x, 3, 3).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(x.data()) - mean(p.data())).abs() < 1e-12);
    }

    #[test]
    fn conv_identity_and_all_ones() {
        let x = random(&[4, 5, 3], 7);
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 3 + i] = 1.0);
        let out = conv2d(&x, &t(&[1, 1, 3, 3], &eye), &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out, x);

        let ones = Tensor::full(&[5, 5, 1], 1.0);
        let out = conv2d(&ones, &Tensor::full(&[3, 3, 1, 1], 1.0), &t(&[1], &[0.5])).unwrap();
        assert_eq!(out.at(&[2, 2, 0]), 9.5);
        assert_eq!(out.at(&[0, 0, 0]), 4.5);
        assert!(conv2d(&ones, &Tensor::full(&[3, 3, 2, 1], 1.0), &t(&[1], &[0.0])).is_err());
        assert!(conv2d(&ones, &Tensor::full(&[2, 2, 1, 1], 1.0), &t(&[1], &[0.0])).is_err());
    }

    #[test]
    fn conv_matches_nested_loops() {
        let (h, w, cin, cout) = (6, 5, 3, 4);
        let x = random(&[h, w, cin], 8);
        let k = random(&[3, 3, cin, cout], 9);
        let b = random(&[cout], 10);
        let out = conv2d(&x, &k, &b).unwrap();
        for y in 0..h {
            for xx in 0..w {
                for co in 0..cout {
                    let mut s = b.data()[co];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let (sy, sx) = (y as isize + dy as isize - 1, xx as isize + dx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                s += x.at(&[sy as usize, sx as usize, ci]) * k.at(&[dy, dx, ci, co]);
                            }
                        }
                    }
                    assert!((out.at(&[y, xx, co]) - s).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn resize_cases() {
        let x = random(&[3, 4, 2], 11);
        assert_eq!(bilinear_resize(&x, 3, 4).unwrap(), x);
        let c = bilinear_resize(&Tensor::full(&[1, 1, 1], 0.7), 5, 3).unwrap();
        c.data().iter().for_each(|v| assert!((v - 0.7).abs() < 1e-15));
        let col = bilinear_resize(&t(&[2, 1, 1], &[0.0, 1.0]), 4, 1).unwrap();
        assert_eq!(col.data(), &[0.0, 0.25, 0.75, 1.0]);
        assert!(bilinear_resize(&x, 0, 2).is_err());
    }

    #[test]
    fn l2_cases() {
        let out = l2_normalize_rows(&t(&[3, 2], &[3.0, 4.0, 0.6, 0.8, 0.0, 0.0])).unwrap();
        let expect = [0.6, 0.8, 0.6, 0.8, 0.0, 0.0];
        out.data().iter().zip(expect).for_each(|(a, b)| assert!((a - b).abs() < 1e-15));
    }

    /// Independent scalar GRU, written directly from the gate equations.
    fn gru_reference(ps: &ParamSet, cell: &GruCell, x: &Tensor, h: &Tensor) -> Vec<f64> {
        let (rows, d) = (x.shape()[0], x.shape()[1]);
        let m = |id, i: usize, j: usize| ps.value(id).data()[i * d + j];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            for j in 0..d {
                let mut pre = [0.0; 3];
                let mut hid = [0.0; 3];
                for k in 0..3 {
                    pre[k] = ps.value(cell.bias[k]).data()[j];
                    for i in 0..d {
                        pre[k] += x.at(&[r, i]) * m(cell.input[k], i, j);
                        hid[k] += h.at(&[r, i]) * m(cell.hidden[k], i, j);
                    }
                }
                let z = sig(pre[0] + hid[0]);
                let rr = sig(pre[1] + hid[1]);
                let n = (pre[2] + rr * hid[2]).tanh();
                out[r * d + j] = (1.0 - z) * n + z * h.at(&[r, j]);
            }
        }
        out
    }

    fn run_gru(ps: &ParamSet, cell: &GruCell, x: &Tensor, h: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let (vx, vh) = (g.input(x.clone()), g.input(h.clone()));
        let out = cell.forward(&mut g, ps, vx, vh).unwrap();
        g.value(out).clone()
    }

    #[test]
    fn gru_zero_params() {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "gru", 4, 1).unwrap();
        let zeroed: Vec<_> = ps.iter().map(|(id, p)| (id, Tensor::zeros(p.value.shape()))).collect();
        for (id, z) in zeroed {
            ps.set_value(id, z).unwrap();
        }
        let x = random(&[2, 4], 12);
        let out = run_gru(&ps, &cell, &x, &Tensor::zeros(&[2, 4]));
        assert!(out.data().iter().all(|&v| v == 0.0));
        let h = random(&[2, 4], 13);
        let out = run_gru(&ps, &cell, &x, &h);
        out.data().iter().zip(h.data()).for_each(|(o, hv)| assert!((o - 0.5 * hv).abs() < 1e-15));
    }

    #[test]
    fn gru_matches_scalar_reference() {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "gru", 5, 2).unwrap();
        let (x, h) = (random(&[3, 5], 14), random(&[3, 5], 15));
        let out = run_gru(&ps, &cell, &x, &h);
        let reference = gru_reference(&ps, &cell, &x, &h);
        out.data().iter().zip(&reference).for_each(|(a, b)| assert!((a - b).abs() < 1e-12));
    }

    #[test]
    fn gru_rejects_dim_mismatch() {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "gru", 3, 2).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 4]));
        let h = g.input(Tensor::zeros(&[2, 3]));
        assert!(cell.forward(&mut g, &ps, x, h).is_err());
    }

    #[test]
    fn linear_function_gradient_is_exact() {
        let mut ps = ParamSet::new();
        let id = ps.add_uniform("w", &[6], 6, 3).unwrap();
        let x = random(&[6], 16);
        let report = grad_check(
            &ps,
            |g, ps| {
                let w = g.param(ps, id);
                let xs = g.input(x.clone());
                let prod = g.mul(w, xs)?;
                let sum = g.reshape(prod, &[1, 6])?;
                let ones = g.input(Tensor::full(&[6, 1], 1.0));
                g.matmul(sum, ones)
            },
            0,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        use crate::gradcheck::{analytic_gradients, compare_with_finite_differences};
        let mut ps = ParamSet::new();
        let id = ps.add_uniform("w", &[4, 3], 4, 9).unwrap();
        let x = random(&[2, 4], 17);
        let f = |g: &mut Graph, ps: &ParamSet| {
            let w = g.param(ps, id);
            let xs = g.input(x.clone());
            let y = g.matmul(xs, w)?;
            let y = g.tanh(y)?;
            let y = g.reshape(y, &[1, 6])?;
            let ones = g.input(Tensor::full(&[6, 1], 1.0));
            g.matmul(y, ones)
        };
        let mut analytic = analytic_gradients(&ps, &f).unwrap();
        let clean = compare_with_finite_differences(&ps, &f, &analytic, 0, None).unwrap();
        assert!(clean.max_rel_error < 1e-7);
        analytic[0][5] *= 2.0;
        let bad = compare_with_finite_differences(&ps, &f, &analytic, 0, None).unwrap();
        assert!(bad.max_rel_error > 0.1);
        assert_eq!(bad.worst_index, 5);
    }

    /// Sum of the output weighted by a fixed random tensor, so every output element matters.
    fn weighted_sum(g: &mut Graph, y: crate::Var, seed: u64) -> Result<crate::Var> {
        let shape = g.value(y).shape().to_vec();
        let n = g.value(y).len();
        let w = g.input(random(&shape, seed ^ 0x5eed));
        let p = g.mul(y, w)?;
        let p = g.reshape(p, &[1, n])?;
        let ones = g.input(Tensor::full(&[n, 1], 1.0));
        g.matmul(p, ones)
    }

    fn check_op(seed: u64, build: impl Fn(&mut Graph, crate::Var) -> Result<crate::Var>, shape: &[usize]) {
        let mut ps = ParamSet::new();
        let id = ps.add("x", random(shape, seed)).unwrap();
        let report = grad_check(
            &ps,
            |g, ps| {
                let x = g.param(ps, id);
                let y = build(g, x)?;
                weighted_sum(g, y, seed)
            },
            seed,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "seed {seed}: {report:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn every_op_gradient_matches_finite_differences(seed in 0u64..1_000_000) {
            check_op(seed, |g, x| g.softmax(x), &[3, 4]);
            check_op(seed, |g, x| g.l2_normalize(x), &[3, 4]);
            check_op(seed, |g, x| g.avg_pool(x, 2, 3), &[5, 4, 2]);
            check_op(seed, |g, x| g.resize(x, 5, 7), &[3, 2, 2]);
            check_op(seed, |g, x| g.resize(x, 2, 3), &[5, 4, 1]);
            check_op(seed, |g, x| g.tanh(x), &[6]);
            check_op(seed, |g, x| g.sigmoid(x), &[6]);
            check_op(seed, |g, x| g.transpose(x), &[3, 5]);
            check_op(seed, |g, x| g.channel(x, 1), &[2, 3, 3]);
            check_op(seed, |g, x| { let y = g.scale(x, 1.5)?; g.concat(&[x, y]) }, &[2, 2, 2]);
            check_op(seed, |g, x| {
                let w = g.input(random(&[3, 3, 2, 3], seed + 1));
                let b = g.input(random(&[3], seed + 2));
                g.conv2d(x, w, b)
            }, &[4, 5, 2]);
            check_op(seed, |g, w| {
                let x = g.input(random(&[4, 5, 2], seed + 3));
                let b = g.input(random(&[3], seed + 4));
                g.conv2d(x, w, b)
            }, &[3, 1, 2, 3]);
            check_op(seed, |g, a| {
                let b = g.input(random(&[4, 2], seed + 5));
                g.matmul(a, b)
            }, &[3, 4]);
            check_op(seed, |g, b| {
                let a = g.input(random(&[3, 4], seed + 6));
                g.matmul(a, b)
            }, &[4, 2]);
            check_op(seed, |g, q| {
                let k = g.input(random(&[2, 4], seed + 7));
                let v = g.input(random(&[2, 3], seed + 8));
                g.attention(q, k, v)
            }, &[5, 4]);
            check_op(seed, |g, x| {
                let s = g.input(random(&[3, 4], seed + 9));
                let m = g.mul(x, s)?;
                let d = g.sub(m, x)?;
                g.lin_comb(&[(d, 0.3), (x, -2.0)])
            }, &[3, 4]);
        }

        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(seed in 0u64..1_000_000, shift in -50.0f64..50.0) {
            let x = random(&[4, 6], seed);
            let y = softmax_lastdim(&x).unwrap();
            for row in y.data().chunks(6) {
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            let shifted = softmax_lastdim(&x.map(|v| v + shift).unwrap()).unwrap();
            prop_assert!(shifted.max_abs_diff(&y) < 1e-12);
        }
    }

    #[test]
    fn gru_gradient_matches_finite_differences() {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "gru", 3, 4).unwrap();
        let (x, h) = (random(&[2, 3], 18), random(&[2, 3], 19));
        let report = grad_check(
            &ps,
            |g, ps| {
                let vx = g.input(x.clone());
                let vh = g.input(h.clone());
                let y = cell.forward(g, ps, vx, vh)?;
                weighted_sum(g, y, 20)
            },
            0,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
