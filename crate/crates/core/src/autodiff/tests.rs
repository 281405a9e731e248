use super::*;
use crate::error::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_real(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_complex(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    Tensor::new_complex(shape.to_vec(), data).unwrap()
}

fn inputs(pairs: &[(&str, &Tensor)]) -> BTreeMap<String, Tensor> {
    pairs.iter().map(|(k, v)| (k.to_string(), (*v).clone())).collect()
}

#[test]
fn fft_of_constant_is_dc_only() {
    let n = 12;
    let spec = fft::rfft_rows(&vec![2.5; n], n);
    assert!((spec[0] - C64::new(2.5 * n as f64, 0.0)).norm() < 1e-12);
    assert!(spec[1..].iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn inverse_fft_roundtrip() {
    let mut r = rng(1);
    for n in [15usize, 16, 201] {
        let v: Vec<f64> = (0..3 * n).map(|_| r.random_range(-1.0..1.0)).collect();
        let back = fft::irfft_rows(&fft::rfft_rows(&v, n), n);
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn two_dimensional_roundtrip() {
    let mut r = rng(2);
    let x = random_real(&[2, 3, 10, 9], &mut r);
    let mut g = Graph::new();
    let xi = g.input("x");
    let f = g.rfft2(xi);
    let b = g.irfft2(f, 10, 9);
    g.forward(&ParamMap::new(), &inputs(&[("x", &x)])).unwrap();
    let y = g.value(b).unwrap();
    for (a, c) in x.real().iter().zip(y.real()) {
        assert!((a - c).abs() < 1e-12);
    }
}

#[test]
fn gelu_values() {
    assert_eq!(gelu(0.0), 0.0);
    for x in [10.0, 12.5, 40.0] {
        assert!((gelu(x) - x).abs() <= 1e-8);
    }
}

#[test]
fn exp_derivative_at_zero() {
    let mut g = Graph::new();
    let x = g.param("x");
    let y = g.exp(x, None);
    let s = g.sum_all(y);
    let p = BTreeMap::from([("x".to_string(), Tensor::new(vec![1], vec![0.0]).unwrap())]);
    g.forward(&p, &BTreeMap::new()).unwrap();
    assert_eq!(g.backward(s, None).unwrap()["x"].real(), &[1.0]);
}

#[test]
fn linear_map_gradient_is_input() {
    // y = a x with a a 1x1 weight over 5 spatial points, summed.
    let mut r = rng(3);
    let x = random_real(&[1, 1, 5], &mut r);
    let mut g = Graph::new();
    let xi = g.input("x");
    let a = g.param("a");
    let y = g.linear(xi, a, None);
    let c = Tensor::new(vec![1, 1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let s = g.dot_const(y, c);
    let p = BTreeMap::from([("a".to_string(), Tensor::new(vec![1, 1], vec![0.7]).unwrap())]);
    g.forward(&p, &inputs(&[("x", &x)])).unwrap();
    assert_eq!(g.backward(s, None).unwrap()["a"].real(), &[x.real()[2]]);
}

#[test]
fn backward_requires_forward() {
    let mut g = Graph::new();
    let x = g.param("x");
    let s = g.sum_all(x);
    assert!(matches!(g.backward(s, None), Err(Error::State(_))));
}

#[test]
fn overflow_names_the_node() {
    let mut g = Graph::new();
    let x = g.param("x");
    let y = g.exp(x, None);
    g.set_label(y, "block0.exp");
    let p = BTreeMap::from([("x".to_string(), Tensor::new(vec![1], vec![1000.0]).unwrap())]);
    match g.forward(&p, &BTreeMap::new()) {
        Err(Error::Overflow { node, primitive }) => {
            assert!(node.contains("block0.exp"));
            assert_eq!(primitive, "exp");
        }
        other => panic!("expected overflow, got {other:?}"),
    }
}

fn three_layer(r: &mut ChaCha8Rng) -> (Graph, NodeId, ParamMap, BTreeMap<String, Tensor>) {
    let mut g = Graph::new();
    let x = g.input("x");
    let mut h = x;
    let mut p = ParamMap::new();
    let dims = [(2usize, 4usize), (4, 4), (4, 1)];
    for (l, (cin, cout)) in dims.iter().enumerate() {
        let w = g.param(&format!("w{l}"));
        let b = g.param(&format!("b{l}"));
        p.insert(format!("w{l}"), random_real(&[*cout, *cin], r));
        p.insert(format!("b{l}"), random_real(&[*cout], r));
        h = g.linear(h, w, Some(b));
        if l + 1 < dims.len() {
            h = g.gelu(h);
        }
    }
    let e = g.exp(h, Some(20.0));
    let c = random_real(&[3, 1, 32], r);
    let s = g.dot_const(e, c);
    let x = random_real(&[3, 2, 32], r);
    (g, s, p, inputs(&[("x", &x)]))
}

#[test]
fn three_layer_composition_matches_finite_differences() {
    let mut r = rng(4);
    let (mut g, s, p, i) = three_layer(&mut r);
    let rep = gradient_check(&mut g, s, &p, &i, 1e-5, 1e-5).unwrap();
    assert!(rep.within_tolerance, "{:?}", rep.per_param);
    assert!(!rep.overflow_risk);
}

#[test]
fn pure_linear_graph_is_exact() {
    let mut r = rng(5);
    let mut g = Graph::new();
    let x = g.input("x");
    let w = g.param("w");
    let b = g.param("b");
    let y = g.linear(x, w, Some(b));
    let s = g.dot_const(y, random_real(&[2, 3, 8], &mut r));
    let p = BTreeMap::from([("w".to_string(), random_real(&[3, 4], &mut r)), ("b".to_string(), random_real(&[3], &mut r))]);
    let xi = random_real(&[2, 4, 8], &mut r);
    let rep = gradient_check(&mut g, s, &p, &inputs(&[("x", &xi)]), 1e-5, 1e-9).unwrap();
    assert!(rep.within_tolerance, "{}", rep.max_rel_error);
}

#[test]
fn spectral_graph_gradients() {
    let mut r = rng(6);
    let mut g = Graph::new();
    let x = g.input("x");
    let w = g.param("w");
    let y = spectral_conv_1d(&mut g, x, w, 16, 5).unwrap();
    let z = g.gelu(y);
    let s = g.dot_const(z, random_real(&[2, 3, 16], &mut r));
    let p = BTreeMap::from([("w".to_string(), random_complex(&[5, 2, 3], &mut r))]);
    let xi = random_real(&[2, 2, 16], &mut r);
    let rep = gradient_check(&mut g, s, &p, &inputs(&[("x", &xi)]), 1e-5, 1e-6).unwrap();
    assert!(rep.within_tolerance, "{}", rep.max_rel_error);
}

#[test]
fn spectral_2d_gradients_including_input() {
    let mut r = rng(7);
    let mut g = Graph::new();
    let x = g.param("x");
    let w = g.param("w");
    let y = spectral_conv_2d(&mut g, x, w, 8, 7, 2).unwrap();
    let s = g.dot_const(y, random_real(&[1, 2, 8, 7], &mut r));
    let p = BTreeMap::from([
        ("w".to_string(), random_complex(&[8, 2, 2], &mut r)),
        ("x".to_string(), random_real(&[1, 2, 8, 7], &mut r)),
    ]);
    let rep = gradient_check(&mut g, s, &p, &BTreeMap::new(), 1e-5, 1e-6).unwrap();
    assert!(rep.within_tolerance, "{:?}", rep.per_param);
}

#[test]
fn large_exponent_flagged() {
    let mut g = Graph::new();
    let x = g.param("x");
    let y = g.exp(x, Some(20.0));
    let s = g.sum_all(y);
    let p = BTreeMap::from([("x".to_string(), Tensor::new(vec![2], vec![0.5, 31.0]).unwrap())]);
    let rep = gradient_check(&mut g, s, &p, &BTreeMap::new(), 1e-5, 1e-5).unwrap();
    assert!(rep.overflow_risk);
}

fn identity_weights(modes: usize, c: usize) -> Tensor {
    let mut w = Tensor::zeros_complex(&[modes, c, c]);
    for k in 0..modes {
        for i in 0..c {
            w.complex_mut()[(k * c + i) * c + i] = C64::new(1.0, 0.0);
        }
    }
    w
}

#[test]
fn identity_filter_with_all_modes() {
    let mut r = rng(8);
    for n in [16usize, 17] {
        let v = random_real(&[2, 3, n], &mut r);
        let m = fft::half_len(n);
        let y = spectral_conv(&v, &identity_weights(m, 3), m).unwrap();
        for (a, b) in v.real().iter().zip(y.real()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_mode_projects_onto_mean() {
    let mut r = rng(9);
    let v = random_real(&[1, 2, 16], &mut r);
    let y = spectral_conv(&v, &identity_weights(1, 2), 1).unwrap();
    for c in 0..2 {
        let row = &v.real()[c * 16..(c + 1) * 16];
        let mean = row.iter().sum::<f64>() / 16.0;
        assert!(y.real()[c * 16..(c + 1) * 16].iter().all(|&u| (u - mean).abs() < 1e-12));
    }
}

#[test]
fn too_many_modes_rejected() {
    let v = Tensor::zeros(&[1, 1, 16]);
    assert!(spectral_conv(&v, &identity_weights(10, 1), 10).is_err());
}

/// Kernel of the circulant operator whose half spectrum is `h`, by direct
/// evaluation of the inverse DFT.
fn kernel_from_response(h: &[C64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let mut s = h[0].re;
            for (k, hk) in h.iter().enumerate().skip(1) {
                let th = 2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                let e = C64::new(th.cos(), th.sin());
                let c = if 2 * k == n { 1.0 } else { 2.0 };
                s += c * (hk * e).re;
            }
            s / n as f64
        })
        .collect()
}

#[test]
fn circulant_oracle() {
    let mut r = rng(10);
    let (n, cin, cout, modes) = (16usize, 3usize, 2usize, 6usize);
    let v = random_real(&[2, cin, n], &mut r);
    let w = random_complex(&[modes, cin, cout], &mut r);
    let y = spectral_conv(&v, &w, modes).unwrap();
    for b in 0..2 {
        for o in 0..cout {
            for t in 0..n {
                let mut s = 0.0;
                for i in 0..cin {
                    let h: Vec<C64> = (0..modes).map(|k| w.complex()[(k * cin + i) * cout + o]).collect();
                    let ker = kernel_from_response(&h, n);
                    for j in 0..n {
                        s += ker[(t + n - j) % n] * v.real()[(b * cin + i) * n + j];
                    }
                }
                let got = y.real()[(b * cout + o) * n + t];
                assert!((got - s).abs() <= 1e-10 * s.abs().max(1.0), "{got} vs {s}");
            }
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let run = || {
        let mut r = rng(11);
        let (mut g, s, p, i) = three_layer(&mut r);
        g.forward(&p, &i).unwrap();
        let v = g.value(s).unwrap().item();
        (v, g.backward(s, None).unwrap())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ga, gb);
}

#[test]
fn broadcast_mul_gradient() {
    let mut r = rng(12);
    let mut g = Graph::new();
    let a = g.param("a");
    let b = g.param("b");
    let y = g.mul(a, b);
    let z = g.add(y, b);
    let s = g.dot_const(z, random_real(&[2, 3, 5], &mut r));
    let p = BTreeMap::from([("a".to_string(), random_real(&[2, 1, 1], &mut r)), ("b".to_string(), random_real(&[2, 3, 5], &mut r))]);
    let rep = gradient_check(&mut g, s, &p, &BTreeMap::new(), 1e-5, 1e-9).unwrap();
    assert!(rep.within_tolerance, "{:?}", rep.per_param);
}

#[test]
fn structural_ops_gradients() {
    let mut r = rng(13);
    let mut g = Graph::new();
    let a = g.param("a");
    let b = g.param("b");
    let c = g.concat(vec![a, b]);
    let t = g.swap_last2(c);
    let f = g.reshape(t, vec![3 * 4 * 5]);
    let s = g.dot_const(f, random_real(&[2, 60], &mut r));
    let p = BTreeMap::from([("a".to_string(), random_real(&[2, 1, 5, 4], &mut r)), ("b".to_string(), random_real(&[2, 2, 5, 4], &mut r))]);
    let rep = gradient_check(&mut g, s, &p, &BTreeMap::new(), 1e-5, 1e-9).unwrap();
    assert!(rep.within_tolerance, "{:?}", rep.per_param);
}

#[test]
fn rel_l2_loss_gradient() {
    let mut r = rng(14);
    let mut g = Graph::new();
    let p0 = g.param("p");
    let t = g.input("t");
    let l = g.rel_l2(p0, t);
    let p = BTreeMap::from([("p".to_string(), random_real(&[3, 1, 9], &mut r))]);
    let tt = random_real(&[3, 1, 9], &mut r);
    let rep = gradient_check(&mut g, l, &p, &inputs(&[("t", &tt)]), 1e-6, 1e-7).unwrap();
    assert!(rep.within_tolerance, "{}", rep.max_rel_error);
}

proptest! {
    #[test]
    fn parseval(v in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
        let n = v.len();
        let half = fft::rfft_rows(&v, n);
        let mut energy = 0.0;
        for k in 0..n {
            let z = if k < half.len() { half[k] } else { half[n - k].conj() };
            energy += z.norm_sqr();
        }
        let lhs: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((lhs - energy / n as f64).abs() <= 1e-10 * lhs.max(1e-300));
    }

    #[test]
    fn backward_is_linear_in_seed(scale in -5.0f64..5.0, seed in 0u64..1000) {
        let mut r = rng(seed);
        let mut g = Graph::new();
        let x = g.param("x");
        let w = g.param("w");
        let y = spectral_conv_1d(&mut g, x, w, 12, 4).unwrap();
        let h = g.gelu(y);
        let p = BTreeMap::from([("x".to_string(), random_real(&[1, 2, 12], &mut r)), ("w".to_string(), random_complex(&[4, 2, 2], &mut r))]);
        g.forward(&p, &BTreeMap::new()).unwrap();
        let s1 = random_real(&[1, 2, 12], &mut r);
        let mut s2 = s1.clone();
        s2.scale(scale);
        let g1 = g.backward(h, Some(&s1)).unwrap();
        let g2 = g.backward(h, Some(&s2)).unwrap();
        for (name, a) in &g1 {
            let b = &g2[name];
            for k in 0..a.real_len() {
                prop_assert!((scale * a.get_flat(k) - b.get_flat(k)).abs() <= 1e-12 * (1.0 + a.get_flat(k).abs() * scale.abs()));
            }
        }
    }
}
