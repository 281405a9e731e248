//! Layer-adapted finite difference solvers used to produce ground truth,
//! plus integrators for the reduced (`eps = 0`) problems.
//!
//! All discretizations share one first-order upwind stencil on nonuniform
//! meshes. At an interior node with left gap `h_l` and right gap `h_r`:
//!
//! ```text
//! -eps u''  ~  -eps * 2/(h_l + h_r) * ((u[i+1]-u[i])/h_r - (u[i]-u[i-1])/h_l)
//!  b u'     ~   b * (u[i]-u[i-1])/h_l   if b > 0
//!               b * (u[i+1]-u[i])/h_r   if b < 0
//! ```
//!
//! Turning-point problems are passed with the *full* convection field
//! (`x * b(x)`), so the same solver covers both families.

mod elliptic;
pub mod linalg;
mod parabolic;
mod reduced;
mod steady;

use std::fmt;
use std::sync::Arc;

use crate::grids::GridFunction;

pub use elliptic::{solve_elliptic_2d, EllipticSolver};
pub use parabolic::{solve_parabolic_cn, solve_parabolic_cn_history, ParabolicSolver};
pub use reduced::{
    solve_reduced, solve_reduced_elliptic, solve_reduced_right, solve_reduced_turning,
    ReducedKind, REDUCED_GRID_2D, REDUCED_STEPS,
};
pub use steady::{solve_steady_1d, upwind_operator};

/// Default fine-mesh interval count for 1D ground truth.
pub const FINE_MESH_1D: usize = 4096;
/// Default fine-mesh interval count per axis for 2D ground truth.
pub const FINE_MESH_2D: usize = 256;
/// Default number of Crank–Nicolson steps for ground truth.
pub const FINE_TIME_STEPS: usize = 2048;

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A coefficient, source or boundary function.
///
/// Two-argument closures take `(x, y)` for steady 2D problems and `(x, t)`
/// for parabolic ones. Nodal fields are evaluated by linear/bilinear
/// interpolation, with points clamped to the field's mesh.
#[derive(Clone)]
pub enum ScalarField {
    Const(f64),
    Fn1(Fn1),
    Fn2(Fn2),
    Nodal(GridFunction),
}

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField::Const(v)
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Fn1(Arc::new(f))
    }

    pub fn from_fn2(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Fn2(Arc::new(f))
    }

    /// Value at `x` (second argument taken as 0 for two-argument fields).
    pub fn at(&self, x: f64) -> f64 {
        self.at2(x, 0.0)
    }

    pub fn at2(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarField::Const(v) => *v,
            ScalarField::Fn1(f) => f(x),
            ScalarField::Fn2(f) => f(x, y),
            ScalarField::Nodal(g) => match g.grid() {
                crate::grids::Grid::D1(m) => g
                    .eval_1d(x.clamp(m.a(), m.b()))
                    .expect("clamped point lies in the mesh"),
                crate::grids::Grid::D2(m) => g
                    .eval_2d(x.clamp(m.mx.a(), m.mx.b()), y.clamp(m.my.a(), m.my.b()))
                    .expect("clamped point lies in the mesh"),
            },
        }
    }

    /// True when the field cannot depend on its second argument.
    pub fn is_one_dimensional(&self) -> bool {
        match self {
            ScalarField::Const(_) | ScalarField::Fn1(_) => true,
            ScalarField::Fn2(_) => false,
            ScalarField::Nodal(g) => g.mesh_1d().is_some(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Const(v) if *v == 0.0)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Const(v) => write!(f, "Const({v})"),
            ScalarField::Fn1(_) => write!(f, "Fn1(..)"),
            ScalarField::Fn2(_) => write!(f, "Fn2(..)"),
            ScalarField::Nodal(g) => write!(f, "Nodal({} nodes)", g.values().len()),
        }
    }
}

impl From<f64> for ScalarField {
    fn from(v: f64) -> Self {
        ScalarField::Const(v)
    }
}

/// `-eps u'' + b(x) u' + c(x) u = f(x)` on `(a, b)` with Dirichlet data.
#[derive(Debug, Clone)]
pub struct SteadyProblem1D {
    pub eps: f64,
    /// Full convection coefficient (for turning points this is `x * b(x)`).
    pub b: ScalarField,
    pub c: ScalarField,
    pub f: ScalarField,
    pub domain: (f64, f64),
    pub boundary: (f64, f64),
}

impl SteadyProblem1D {
    /// Homogeneous Dirichlet problem on `domain`.
    pub fn new(
        eps: f64,
        b: impl Into<ScalarField>,
        c: impl Into<ScalarField>,
        f: impl Into<ScalarField>,
        domain: (f64, f64),
    ) -> Self {
        Self {
            eps,
            b: b.into(),
            c: c.into(),
            f: f.into(),
            domain,
            boundary: (0.0, 0.0),
        }
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(crate::error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(crate::error::invalid("degenerate domain"));
        }
        Ok(())
    }
}

/// `u_t - eps u_xx + b u_x + d u = f` on `(0,1) x (0,T]`,
/// `u(x,0) = s(x)`, `u(0,t) = q0(t)`, `u(1,t) = q1(t)`.
#[derive(Debug, Clone)]
pub struct ParabolicProblem {
    pub eps: f64,
    pub b: ScalarField,
    pub d: ScalarField,
    pub f: ScalarField,
    pub s: ScalarField,
    pub q0: ScalarField,
    pub q1: ScalarField,
    pub t_final: f64,
}

/// `-eps Δu + b1 u_x + b2 u_y + c u = f` on the unit square, `u = 0` on the boundary.
#[derive(Debug, Clone)]
pub struct EllipticProblem2D {
    pub eps: f64,
    pub b1: ScalarField,
    pub b2: ScalarField,
    pub c: ScalarField,
    pub f: ScalarField,
}

/// Any of the supported problem families.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Steady(SteadyProblem1D),
    Parabolic(ParabolicProblem),
    Elliptic(EllipticProblem2D),
}
