//! A small float64 reverse-mode engine covering what Fourier neural
//! operators need: channel linears, broadcasting arithmetic, `exp`, GELU,
//! real FFTs with mode truncation, and complex modal multiplication.
//!
//! FFT convention: the forward transform is unnormalized and the inverse
//! carries `1/n`, so `||v||^2 = (1/n) sum_k |V_k|^2` over the full spectrum.

pub mod fft;
mod graph;
mod tensor;

use std::collections::BTreeMap;

pub use graph::{gelu, gelu_prime, Graph, NodeId, Op};
pub use tensor::{Data, Tensor, C64};

use crate::error::{invalid, Result};

/// Named parameter tensors.
pub type ParamMap = BTreeMap<String, Tensor>;

/// Appends the 1D spectral convolution of `x` (shape `(B, Cin, n)`) with
/// weights `w` (shape `(modes, Cin, Cout)`): FFT, keep the first `modes`
/// bins, multiply channelwise, zero the rest, inverse FFT.
pub fn spectral_conv_1d(g: &mut Graph, x: NodeId, w: NodeId, n: usize, modes: usize) -> Result<NodeId> {
    if modes == 0 || modes > fft::half_len(n) {
        return Err(invalid(format!("{modes} modes exceed the {} bins of a length-{n} transform", fft::half_len(n))));
    }
    let xf = g.rfft(x);
    let xt = g.truncate(xf, modes);
    let yt = g.modal_mul(xt, w);
    let yp = g.pad(yt, fft::half_len(n));
    Ok(g.irfft(yp, n))
}

/// 2D analogue on `(B, Cin, ny, nx)`: keeps `modes` rows at each end of the
/// `ky` axis and the first `modes` columns of `kx`; `w` has shape
/// `(2 * modes * modes, Cin, Cout)`.
pub fn spectral_conv_2d(g: &mut Graph, x: NodeId, w: NodeId, ny: usize, nx: usize, modes: usize) -> Result<NodeId> {
    if modes == 0 || 2 * modes > ny || modes > fft::half_len(nx) {
        return Err(invalid(format!("{modes} modes per axis do not fit a {ny}x{nx} grid")));
    }
    let xf = g.rfft2(x);
    let xt = g.truncate2(xf, modes);
    let yt = g.modal_mul(xt, w);
    let yp = g.pad2(yt, ny, fft::half_len(nx));
    Ok(g.irfft2(yp, ny, nx))
}

/// Eager 1D spectral convolution of `v` `(B, Cin, n)` with complex `r` `(modes, Cin, Cout)`.
pub fn spectral_conv(v: &Tensor, r: &Tensor, modes: usize) -> Result<Tensor> {
    let n = *v.shape().last().ok_or_else(|| invalid("spectral_conv needs a spatial axis"))?;
    if r.shape().first() != Some(&modes) {
        return Err(invalid(format!("weights hold {:?} modes, {modes} requested", r.shape().first())));
    }
    let mut g = Graph::new();
    let x = g.input("v");
    let w = g.param("r");
    let y = spectral_conv_1d(&mut g, x, w, n, modes)?;
    let params = BTreeMap::from([("r".to_string(), r.clone())]);
    let inputs = BTreeMap::from([("v".to_string(), v.clone())]);
    g.forward(&params, &inputs)?;
    Ok(g.value(y)?.clone())
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    /// Worst per-tensor relative error `max|ad - fd| / max(|ad|, |fd|)`.
    pub max_rel_error: f64,
    pub per_param: Vec<(String, f64)>,
    /// Some `exp` saw an input of magnitude 30 or more.
    pub overflow_risk: bool,
    pub within_tolerance: bool,
}

/// Compares reverse-mode gradients of the scalar `output` with central
/// differences of step `step` on every real scalar of every parameter
/// (real and imaginary parts separately for complex tensors).
pub fn gradient_check(
    g: &mut Graph,
    output: NodeId,
    params: &ParamMap,
    inputs: &BTreeMap<String, Tensor>,
    step: f64,
    tol: f64,
) -> Result<GradientReport> {
    g.forward(params, inputs)?;
    if g.value(output)?.numel() != 1 {
        return Err(invalid("gradient_check needs a scalar output"));
    }
    let mut overflow_risk = false;
    for k in 0..g.len() {
        if let Op::Exp { x, .. } = g.op(NodeId(k)) {
            if g.value(*x)?.max_abs() >= 30.0 {
                overflow_risk = true;
            }
        }
    }
    let analytic = g.backward(output, None)?;
    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for (name, ad) in &analytic {
        let base = params[name].clone();
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for k in 0..base.real_len() {
            let x0 = base.get_flat(k);
            let mut eval = |x: f64, work: &mut ParamMap| -> Result<f64> {
                work.get_mut(name).expect("parameter present").set_flat(k, x);
                g.forward(work, inputs)?;
                Ok(g.value(output)?.item())
            };
            let fp = eval(x0 + step, &mut work)?;
            let fm = eval(x0 - step, &mut work)?;
            work.get_mut(name).expect("parameter present").set_flat(k, x0);
            let fd = (fp - fm) / (2.0 * step);
            let a = ad.get_flat(k);
            diff = diff.max((a - fd).abs());
            scale = scale.max(a.abs()).max(fd.abs());
        }
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        max_rel_error = max_rel_error.max(rel);
        per_param.push((name.clone(), rel));
    }
    g.forward(params, inputs)?;
    Ok(GradientReport {
        max_rel_error,
        per_param,
        overflow_risk,
        within_tolerance: max_rel_error <= tol,
    })
}

#[cfg(test)]
mod tests;
