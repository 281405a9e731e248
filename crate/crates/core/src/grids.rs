//! Uniform and piecewise-uniform (Shishkin) meshes, time grids, and
//! piecewise-linear transfer of nodal values between meshes.
//!
//! Every mesh is immutable once built. Two-dimensional meshes are tensor
//! products whose nodes are flattened row-major over `(y, x)` with `x`
//! varying fastest: node `(i, j)` (x-index `i`, y-index `j`) lives at
//! `j * nx + i`.

use crate::error::{invalid, Error, Result};

/// Which node distribution a [`Mesh1D`] follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Uniform,
    /// Half of the intervals packed into `[b - tau, b]`.
    ShishkinRight,
    /// A quarter of the intervals packed into each of `[a, a + tau]` and `[b - tau, b]`.
    ShishkinBoth,
}

/// Layer placement requested from [`shishkin_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSide {
    Right,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    a: f64,
    b: f64,
    kind: MeshKind,
    tau: Option<f64>,
}

impl Mesh1D {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Transition width; present only for Shishkin meshes.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Interval widths `h_1..h_n`.
    pub fn widths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Builds `n + 1` equispaced nodes on `[a, b]`.
pub fn uniform_mesh(n: usize, a: f64, b: f64) -> Result<Mesh1D> {
    check_interval(a, b)?;
    if n == 0 {
        return Err(invalid("uniform mesh needs at least one interval"));
    }
    Ok(Mesh1D {
        nodes: equispaced(a, b, n),
        a,
        b,
        kind: MeshKind::Uniform,
        tau: None,
    })
}

/// Parameters of the Shishkin transition point
/// `tau = min(cap, sigma * (eps / beta) * ln n)`.
#[derive(Debug, Clone, Copy)]
pub struct ShishkinParams {
    pub eps: f64,
    /// Lower bound of the convection coefficient magnitude at the layer.
    pub beta: f64,
    pub sigma: f64,
    pub layers: LayerSide,
}

impl ShishkinParams {
    pub fn new(eps: f64, beta: f64, layers: LayerSide) -> Self {
        Self {
            eps,
            beta,
            sigma: 2.0,
            layers,
        }
    }
}

/// Piecewise-uniform mesh resolving exponential layers of width `O(eps ln n)`.
///
/// The cap on `tau` is `(b - a) / 2` for a right layer and `(b - a) / 4`
/// when both ends carry layers; when the cap is active the mesh is uniform
/// on each piece.
pub fn shishkin_mesh(n: usize, a: f64, b: f64, p: ShishkinParams) -> Result<Mesh1D> {
    check_interval(a, b)?;
    if n == 0 || n % 4 != 0 {
        return Err(invalid(format!("Shishkin mesh needs n divisible by 4, got {n}")));
    }
    if !(p.eps > 0.0 && p.eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {}", p.eps)));
    }
    if !(p.beta > 0.0 && p.beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {}", p.beta)));
    }
    if !(p.sigma >= 2.0) {
        return Err(invalid(format!("sigma must be at least 2, got {}", p.sigma)));
    }
    let len = b - a;
    let cap = match p.layers {
        LayerSide::Right => len / 2.0,
        LayerSide::Both => len / 4.0,
    };
    let tau = cap.min(p.sigma * (p.eps / p.beta) * (n as f64).ln());
    let (nodes, kind) = match p.layers {
        LayerSide::Right => {
            let mut nodes = equispaced(a, b - tau, n / 2);
            nodes.pop();
            nodes.extend(equispaced(b - tau, b, n / 2));
            (nodes, MeshKind::ShishkinRight)
        }
        LayerSide::Both => {
            let mut nodes = equispaced(a, a + tau, n / 4);
            nodes.pop();
            nodes.extend(equispaced(a + tau, b - tau, n / 2));
            nodes.pop();
            nodes.extend(equispaced(b - tau, b, n / 4));
            (nodes, MeshKind::ShishkinBoth)
        }
    };
    Ok(Mesh1D {
        nodes,
        a,
        b,
        kind,
        tau: Some(tau),
    })
}

fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    v[n] = hi;
    v
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("non-finite domain [{a}, {b}]")));
    }
    if a >= b {
        return Err(invalid(format!("empty domain [{a}, {b}]")));
    }
    Ok(())
}

/// Tensor-product mesh; see the module docs for the node ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub mx: Mesh1D,
    pub my: Mesh1D,
}

impl Mesh2D {
    pub fn new(mx: Mesh1D, my: Mesh1D) -> Self {
        Self { mx, my }
    }

    pub fn len(&self) -> usize {
        self.mx.len() * self.my.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.mx.len() + i
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let nx = self.mx.len();
        (self.mx.nodes[k % nx], self.my.nodes[k / nx])
    }
}

/// Uniform time levels on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(invalid(format!("final time must be positive, got {t_final}")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self {
            t_nodes: equispaced(0.0, t_final, steps),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn steps(&self) -> usize {
        self.t_nodes.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final() / self.steps() as f64
    }

    pub fn t_final(&self) -> f64 {
        *self.t_nodes.last().unwrap()
    }
}

/// A mesh in one or two space dimensions.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    D1(Mesh1D),
    D2(Mesh2D),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::D1(m) => m.len(),
            Grid::D2(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis node counts, slowest axis first (`[ny, nx]` in 2D).
    pub fn resolution(&self) -> Vec<usize> {
        match self {
            Grid::D1(m) => vec![m.len()],
            Grid::D2(m) => vec![m.my.len(), m.mx.len()],
        }
    }
}

impl From<Mesh1D> for Grid {
    fn from(m: Mesh1D) -> Self {
        Grid::D1(m)
    }
}

impl From<Mesh2D> for Grid {
    fn from(m: Mesh2D) -> Self {
        Grid::D2(m)
    }
}

/// Nodal values attached to the mesh they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: impl Into<Grid>, values: Vec<f64>) -> Result<Self> {
        let grid = grid.into();
        if grid.len() != values.len() {
            return Err(invalid(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericFailure {
                reason: "non-finite nodal value".into(),
                row: k,
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node of a 1D mesh.
    pub fn from_fn_1d(mesh: &Mesh1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(mesh.clone(), mesh.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn from_fn_2d(mesh: &Mesh2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..mesh.len())
            .map(|k| {
                let (x, y) = mesh.point(k);
                f(x, y)
            })
            .collect();
        Self::new(mesh.clone(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mesh_1d(&self) -> Option<&Mesh1D> {
        match &self.grid {
            Grid::D1(m) => Some(m),
            Grid::D2(_) => None,
        }
    }

    pub fn mesh_2d(&self) -> Option<&Mesh2D> {
        match &self.grid {
            Grid::D2(m) => Some(m),
            Grid::D1(_) => None,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear (bilinear in 2D) interpolation onto `dst`.
    pub fn interpolate_to(&self, dst: &Grid) -> Result<GridFunction> {
        let values = interpolate_linear(&self.grid, &self.values, dst)?;
        GridFunction::new(dst.clone(), values)
    }

    /// Evaluates the 1D piecewise-linear interpolant at an arbitrary point.
    pub fn eval_1d(&self, x: f64) -> Result<f64> {
        match &self.grid {
            Grid::D1(m) => eval_linear(m.nodes(), &self.values, x),
            Grid::D2(_) => Err(invalid("eval_1d on a 2D grid function")),
        }
    }

    pub fn eval_2d(&self, x: f64, y: f64) -> Result<f64> {
        match &self.grid {
            Grid::D2(m) => eval_bilinear(m, &self.values, x, y),
            Grid::D1(_) => Err(invalid("eval_2d on a 1D grid function")),
        }
    }
}

/// Piecewise-linear interpolation between meshes of matching dimension.
/// Exact at shared nodes; affine data is reproduced to rounding.
pub fn interpolate_linear(src: &Grid, values: &[f64], dst: &Grid) -> Result<Vec<f64>> {
    if values.len() != src.len() {
        return Err(invalid(format!(
            "{} values for a source mesh with {} nodes",
            values.len(),
            src.len()
        )));
    }
    match (src, dst) {
        (Grid::D1(s), Grid::D1(d)) => d
            .nodes()
            .iter()
            .map(|&x| eval_linear(s.nodes(), values, x))
            .collect(),
        (Grid::D2(s), Grid::D2(d)) => (0..d.len())
            .map(|k| {
                let (x, y) = d.point(k);
                eval_bilinear(s, values, x, y)
            })
            .collect(),
        _ => Err(invalid("source and destination meshes differ in dimension")),
    }
}

/// Locates the cell `[x_i, x_{i+1}]` containing `p` and the local coordinate.
fn locate(nodes: &[f64], p: f64) -> Result<(usize, f64)> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    if !(p >= lo && p <= hi) {
        return Err(Error::OutOfDomain { point: p, lo, hi });
    }
    if nodes.len() == 1 {
        return Ok((0, 0.0));
    }
    let i = (nodes.partition_point(|&x| x <= p) - 1).min(nodes.len() - 2);
    let t = (p - nodes[i]) / (nodes[i + 1] - nodes[i]);
    Ok((i, t))
}

fn eval_linear(nodes: &[f64], values: &[f64], p: f64) -> Result<f64> {
    let (i, t) = locate(nodes, p)?;
    if t == 0.0 {
        return Ok(values[i]);
    }
    Ok((1.0 - t) * values[i] + t * values[i + 1])
}

fn eval_bilinear(m: &Mesh2D, values: &[f64], x: f64, y: f64) -> Result<f64> {
    let (i, tx) = locate(m.mx.nodes(), x)?;
    let (j, ty) = locate(m.my.nodes(), y)?;
    let nx = m.mx.len();
    let v = |ii: usize, jj: usize| values[jj * nx + ii];
    let i1 = (i + 1).min(nx - 1);
    let j1 = (j + 1).min(m.my.len() - 1);
    let lower = if tx == 0.0 { v(i, j) } else { (1.0 - tx) * v(i, j) + tx * v(i1, j) };
    if ty == 0.0 {
        return Ok(lower);
    }
    let upper = if tx == 0.0 { v(i, j1) } else { (1.0 - tx) * v(i, j1) + tx * v(i1, j1) };
    Ok((1.0 - ty) * lower + ty * upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_mesh_examples() {
        let m = uniform_mesh(2, 0.0, 1.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        let m = uniform_mesh(200, 0.0, 1.0).unwrap();
        assert_eq!(m.len(), 201);
        for w in m.widths() {
            assert!((w - 0.005).abs() < 1e-15);
        }
        let m = uniform_mesh(1, -1.0, 1.0).unwrap();
        assert_eq!(m.nodes(), &[-1.0, 1.0]);
    }

    #[test]
    fn uniform_mesh_rejects_bad_input() {
        assert!(uniform_mesh(0, 0.0, 1.0).is_err());
        assert!(uniform_mesh(4, f64::NAN, 1.0).is_err());
        assert!(uniform_mesh(4, 0.0, f64::INFINITY).is_err());
        assert!(uniform_mesh(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn shishkin_right_transition_point() {
        let m = shishkin_mesh(64, 0.0, 1.0, ShishkinParams::new(1e-3, 1.0, LayerSide::Right)).unwrap();
        let tau = m.tau().unwrap();
        // 2 * 1e-3 * ln 64
        assert!((tau - 8.317766166719343e-3).abs() < 1e-15);
        let w = m.widths();
        assert_eq!(w.len(), 64);
        for &h in &w[32..] {
            assert!((h - 2.0 * tau / 64.0).abs() < 1e-15);
        }
        for &h in &w[..32] {
            assert!((h - (1.0 - tau) / 32.0).abs() < 1e-14);
        }
        assert_eq!(m.kind(), MeshKind::ShishkinRight);
    }

    #[test]
    fn shishkin_cap_gives_uniform_halves() {
        let m = shishkin_mesh(64, 0.0, 1.0, ShishkinParams::new(1.0, 1.0, LayerSide::Right)).unwrap();
        assert_eq!(m.tau(), Some(0.5));
        let u = uniform_mesh(64, 0.0, 1.0).unwrap();
        for (x, y) in m.nodes().iter().zip(u.nodes()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn shishkin_both_counts() {
        let m = shishkin_mesh(8, -1.0, 1.0, ShishkinParams::new(1e-3, 1.0, LayerSide::Both)).unwrap();
        let tau = m.tau().unwrap();
        let x = m.nodes();
        assert_eq!(x.len(), 9);
        assert_eq!(x.iter().filter(|&&p| p < -1.0 + tau).count(), 2);
        assert_eq!(x.iter().filter(|&&p| p > 1.0 - tau).count(), 2);
        assert!((x[2] - (-1.0 + tau)).abs() < 1e-15);
        assert!((x[6] - (1.0 - tau)).abs() < 1e-15);
    }

    #[test]
    fn shishkin_rejects_bad_input() {
        let p = ShishkinParams::new(1e-3, 1.0, LayerSide::Right);
        assert!(shishkin_mesh(10, 0.0, 1.0, p).is_err());
        assert!(shishkin_mesh(8, 0.0, 1.0, ShishkinParams { eps: 0.0, ..p }).is_err());
        assert!(shishkin_mesh(8, 0.0, 1.0, ShishkinParams { beta: -1.0, ..p }).is_err());
        assert!(shishkin_mesh(8, 0.0, 1.0, ShishkinParams { sigma: 1.0, ..p }).is_err());
    }

    #[test]
    fn shishkin_is_deterministic() {
        let p = ShishkinParams::new(3.7e-4, 0.9, LayerSide::Both);
        let a = shishkin_mesh(256, -1.0, 1.0, p).unwrap();
        let b = shishkin_mesh(256, -1.0, 1.0, p).unwrap();
        let bits = |m: &Mesh1D| m.nodes().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn interpolation_examples() {
        let src = Grid::D1(uniform_mesh(1, 0.0, 1.0).unwrap());
        let dst = Grid::D1(Mesh1D {
            nodes: vec![0.25],
            a: 0.25,
            b: 0.25,
            kind: MeshKind::Uniform,
            tau: None,
        });
        assert_eq!(interpolate_linear(&src, &[0.0, 1.0], &dst).unwrap(), vec![0.25]);

        let m = Grid::D1(shishkin_mesh(32, 0.0, 1.0, ShishkinParams::new(1e-2, 1.0, LayerSide::Right)).unwrap());
        let vals: Vec<f64> = (0..33).map(|i| (i as f64).sin()).collect();
        assert_eq!(interpolate_linear(&m, &vals, &m).unwrap(), vals);
    }

    #[test]
    fn interpolation_outside_domain_fails() {
        let src = Grid::D1(uniform_mesh(4, 0.0, 1.0).unwrap());
        let dst = Grid::D1(uniform_mesh(4, 0.0, 1.5).unwrap());
        let vals = vec![0.0; 5];
        assert!(matches!(
            interpolate_linear(&src, &vals, &dst),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn bilinear_is_exact_at_shared_nodes_and_for_affine_data() {
        let src = Mesh2D::new(
            shishkin_mesh(16, 0.0, 1.0, ShishkinParams::new(1e-2, 1.0, LayerSide::Right)).unwrap(),
            shishkin_mesh(8, 0.0, 1.0, ShishkinParams::new(1e-2, 1.0, LayerSide::Right)).unwrap(),
        );
        let dst = Mesh2D::new(uniform_mesh(10, 0.0, 1.0).unwrap(), uniform_mesh(7, 0.0, 1.0).unwrap());
        let f = |x: f64, y: f64| 0.3 + 2.0 * x - 1.5 * y + 0.7 * x * y;
        let g = GridFunction::from_fn_2d(&src, f).unwrap();
        let same = g.interpolate_to(g.grid()).unwrap();
        assert_eq!(same.values(), g.values());
        let h = g.interpolate_to(&Grid::D2(dst.clone())).unwrap();
        for k in 0..dst.len() {
            let (x, y) = dst.point(k);
            assert!((h.values()[k] - f(x, y)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn widths_sum_to_domain_length(
            n4 in 1usize..200,
            eps in 1e-6f64..1.0,
            a in -3.0f64..0.0,
            len in 0.1f64..5.0,
            both in any::<bool>(),
        ) {
            let n = 4 * n4;
            let b = a + len;
            let layers = if both { LayerSide::Both } else { LayerSide::Right };
            let m = shishkin_mesh(n, a, b, ShishkinParams::new(eps, 1.0, layers)).unwrap();
            let total: f64 = m.widths().iter().sum();
            prop_assert!((total - len).abs() < 1e-12);
            prop_assert!(m.widths().iter().all(|&h| h > 0.0));
            prop_assert_eq!(m.nodes()[0], a);
            prop_assert_eq!(*m.nodes().last().unwrap(), b);
            let u = uniform_mesh(n, a, b).unwrap();
            prop_assert!((u.widths().iter().sum::<f64>() - len).abs() < 1e-12);
        }

        #[test]
        fn affine_data_reproduced(
            n4 in 1usize..64,
            m in 1usize..300,
            eps in 1e-5f64..0.5,
            c0 in -5.0f64..5.0,
            c1 in -5.0f64..5.0,
        ) {
            let src = shishkin_mesh(4 * n4, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
            let dst = uniform_mesh(m, 0.0, 1.0).unwrap();
            let g = GridFunction::from_fn_1d(&src, |x| c0 + c1 * x).unwrap();
            let h = g.interpolate_to(&Grid::D1(dst.clone())).unwrap();
            for (&x, &v) in dst.nodes().iter().zip(h.values()) {
                prop_assert!((v - (c0 + c1 * x)).abs() <= 1e-12);
            }
        }
    }
}
