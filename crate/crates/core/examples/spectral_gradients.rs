//! Builds a one-layer Fourier network by hand on the autodiff graph and
//! checks its reverse-mode gradients against central differences.

use std::collections::BTreeMap;

use comfno::autodiff::{gradient_check, spectral_conv_1d, Graph, Tensor, C64};

fn main() -> comfno::Result<()> {
    let n = 32;
    let mut g = Graph::new();
    let x = g.input("x");
    let target = g.input("y");
    let w = g.param("w");
    let r = g.param("r");
    let local = g.linear(x, w, None);
    let spectral = spectral_conv_1d(&mut g, x, r, n, 6)?;
    let sum = g.add(local, spectral);
    let h = g.gelu(sum);
    let loss = g.rel_l2(h, target);

    let params = BTreeMap::from([
        ("w".to_string(), Tensor::new(vec![1, 1], vec![0.7])?),
        (
            "r".to_string(),
            Tensor::new_complex(vec![6, 1, 1], (0..6).map(|k| C64::new(0.5 / (k + 1) as f64, 0.1 * k as f64)).collect())?,
        ),
    ]);
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.4).sin()).collect();
    let ys: Vec<f64> = (0..n).map(|i| (i as f64 * 0.2).cos()).collect();
    let inputs = BTreeMap::from([
        ("x".to_string(), Tensor::new(vec![1, 1, n], xs)?),
        ("y".to_string(), Tensor::new(vec![1, 1, n], ys)?),
    ]);
    let rep = gradient_check(&mut g, loss, &params, &inputs, 1e-6, 1e-6)?;
    for (name, err) in &rep.per_param {
        println!("{name}: relative error {err:.2e}");
    }
    println!("within tolerance: {}", rep.within_tolerance);
    Ok(())
}
