use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

/// Row-major dense array of reals or complex numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Data,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self {
            shape,
            data: Data::Real(data),
        })
    }

    pub fn new_complex(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self {
            shape,
            data: Data::Complex(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Data::Real(vec![0.0; shape.iter().product()]),
        }
    }

    pub fn zeros_complex(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Data::Complex(vec![C64::new(0.0, 0.0); shape.iter().product()]),
        }
    }

    /// Zero tensor with the same shape and field as `self`.
    pub fn zeros_like(&self) -> Self {
        if self.is_complex() {
            Self::zeros_complex(&self.shape)
        } else {
            Self::zeros(&self.shape)
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: Data::Real(vec![v]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, Data::Complex(_))
    }

    pub fn data(&self) -> &Data {
        &self.data
    }

    /// Real storage. Panics on complex tensors; callers check the field first.
    pub fn data_mut(&mut self) -> &mut Data {
        &mut self.data
    }

    /// Entries `idx` along the leading axis, stacked in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let rows = *self.shape.first().ok_or_else(|| Error::Shape {
            primitive: "select_rows",
            detail: "scalar has no rows".into(),
        })?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape {
                primitive: "select_rows",
                detail: format!("row {bad} of {rows}"),
            });
        }
        let stride = self.numel() / rows.max(1);
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        let data = match &self.data {
            Data::Real(v) => Data::Real(idx.iter().flat_map(|&i| v[i * stride..(i + 1) * stride].iter().copied()).collect()),
            Data::Complex(v) => {
                Data::Complex(idx.iter().flat_map(|&i| v[i * stride..(i + 1) * stride].iter().copied()).collect())
            }
        };
        Ok(Self { shape, data })
    }

    pub fn real(&self) -> &[f64] {
        match &self.data {
            Data::Real(v) => v,
            Data::Complex(_) => panic!("expected a real tensor"),
        }
    }

    pub fn real_mut(&mut self) -> &mut [f64] {
        match &mut self.data {
            Data::Real(v) => v,
            Data::Complex(_) => panic!("expected a real tensor"),
        }
    }

    pub fn complex(&self) -> &[C64] {
        match &self.data {
            Data::Complex(v) => v,
            Data::Real(_) => panic!("expected a complex tensor"),
        }
    }

    pub fn complex_mut(&mut self) -> &mut [C64] {
        match &mut self.data {
            Data::Complex(v) => v,
            Data::Real(_) => panic!("expected a complex tensor"),
        }
    }

    pub fn into_real(self) -> Vec<f64> {
        match self.data {
            Data::Real(v) => v,
            Data::Complex(_) => panic!("expected a real tensor"),
        }
    }

    pub fn item(&self) -> f64 {
        self.real()[0]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::Shape {
                primitive: "reshape",
                detail: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Number of real scalars (complex entries count twice).
    pub fn real_len(&self) -> usize {
        match &self.data {
            Data::Real(v) => v.len(),
            Data::Complex(v) => 2 * v.len(),
        }
    }

    /// Reads real scalar `k`, viewing complex storage as interleaved pairs.
    pub fn get_flat(&self, k: usize) -> f64 {
        match &self.data {
            Data::Real(v) => v[k],
            Data::Complex(v) => {
                let z = v[k / 2];
                if k % 2 == 0 {
                    z.re
                } else {
                    z.im
                }
            }
        }
    }

    pub fn set_flat(&mut self, k: usize, val: f64) {
        match &mut self.data {
            Data::Real(v) => v[k] = val,
            Data::Complex(v) => {
                if k % 2 == 0 {
                    v[k / 2].re = val
                } else {
                    v[k / 2].im = val
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        match &self.data {
            Data::Real(v) => v.iter().all(|x| x.is_finite()),
            Data::Complex(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    /// `self += other` for tensors of identical shape and field.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        match (&mut self.data, &other.data) {
            (Data::Real(a), Data::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Data::Complex(a), Data::Complex(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            _ => panic!("field mismatch in accumulation"),
        }
    }

    pub fn scale(&mut self, s: f64) {
        match &mut self.data {
            Data::Real(a) => a.iter_mut().for_each(|x| *x *= s),
            Data::Complex(a) => a.iter_mut().for_each(|x| *x *= s),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.data {
            Data::Real(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Data::Complex(v) => v.iter().fold(0.0, |m, z| m.max(z.re.abs()).max(z.im.abs())),
        }
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != len {
        return Err(Error::Shape {
            primitive: "tensor",
            detail: format!("shape {shape:?} holds {n} elements, got {len}"),
        });
    }
    Ok(())
}
