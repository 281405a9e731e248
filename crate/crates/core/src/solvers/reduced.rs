//! Reduced problems (`eps = 0`). The 1D transport equations are integrated
//! with classical RK4; the 2D one is marched with first-order upwinding
//! from the inflow edges `x = 0` and `y = 0`.

use super::{EllipticProblem2D, ProblemSpec, ScalarField, SteadyProblem1D};
use crate::error::{invalid, Result};
use crate::grids::{uniform_mesh, GridFunction, Mesh2D};

/// Default RK4 step count across the whole 1D domain.
pub const REDUCED_STEPS: usize = 4096;
/// Default intervals per axis for the 2D reduced transport solve.
pub const REDUCED_GRID_2D: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedKind {
    RightLayer,
    TurningPoint,
    Elliptic2D,
}

pub fn solve_reduced(p: &ProblemSpec, kind: ReducedKind) -> Result<GridFunction> {
    match (p, kind) {
        (ProblemSpec::Steady(s), ReducedKind::RightLayer) => solve_reduced_right(s, REDUCED_STEPS),
        (ProblemSpec::Steady(s), ReducedKind::TurningPoint) => solve_reduced_turning(s, REDUCED_STEPS),
        (ProblemSpec::Elliptic(e), ReducedKind::Elliptic2D) => solve_reduced_elliptic(e, REDUCED_GRID_2D),
        _ => Err(invalid(format!("reduced kind {kind:?} does not apply to this problem"))),
    }
}

fn rhs(p: &SteadyProblem1D, x: f64, u: f64) -> f64 {
    (p.f.at(x) - p.c.at(x) * u) / p.b.at(x)
}

fn rk4_step(p: &SteadyProblem1D, x: f64, u: f64, h: f64, k1: f64) -> f64 {
    let k2 = rhs(p, x + 0.5 * h, u + 0.5 * h * k1);
    let k3 = rhs(p, x + 0.5 * h, u + 0.5 * h * k2);
    let k4 = rhs(p, x + h, u + h * k3);
    u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `b u0' + c u0 = f`, `u0(a) = u(a)`, for convection bounded away from zero.
pub fn solve_reduced_right(p: &SteadyProblem1D, steps: usize) -> Result<GridFunction> {
    p.validate()?;
    let mesh = uniform_mesh(steps, p.domain.0, p.domain.1)?;
    let x = mesh.nodes();
    if let Some(&bad) = x.iter().find(|&&t| !(p.b.at(t) > 0.0)) {
        return Err(invalid(format!("right-layer reduced problem needs b > 0, but b({bad}) = {}", p.b.at(bad))));
    }
    let mut u = Vec::with_capacity(x.len());
    u.push(p.boundary.0);
    for i in 0..steps {
        let (xi, ui) = (x[i], u[i]);
        let h = x[i + 1] - xi;
        u.push(rk4_step(p, xi, ui, h, rhs(p, xi, ui)));
    }
    GridFunction::new(mesh, u)
}

fn derivative(g: &ScalarField, x: f64) -> f64 {
    let h = 1e-5;
    (g.at(x + h) - g.at(x - h)) / (2.0 * h)
}

/// `B u0' + c u0 = f` on `[-1, 1]` with `B(0) = 0`, where `B` is the full
/// convection field. Seeded by `u0(0) = f(0)/c(0)` and integrated outward.
pub fn solve_reduced_turning(p: &SteadyProblem1D, steps: usize) -> Result<GridFunction> {
    p.validate()?;
    if p.domain != (-1.0, 1.0) {
        return Err(invalid("turning-point problems live on [-1, 1]"));
    }
    if steps % 2 != 0 {
        return Err(invalid("turning-point reduced solve needs an even step count"));
    }
    let c0 = p.c.at(0.0);
    if !(c0 > 0.0) {
        return Err(invalid(format!("turning-point reduced problem needs c(0) > 0, got {c0}")));
    }
    let mesh = uniform_mesh(steps, -1.0, 1.0)?;
    let x = mesh.nodes();
    let mid = steps / 2;
    let u0 = p.f.at(0.0) / c0;
    // L'Hôpital at the turning point: (B' + c) u' = f' - c' u.
    let du0 = (derivative(&p.f, 0.0) - derivative(&p.c, 0.0) * u0) / (derivative(&p.b, 0.0) + c0);
    let mut u = vec![0.0; steps + 1];
    u[mid] = u0;
    for (dir, range) in [(1isize, mid..steps), (-1, 0..mid)] {
        let mut ui = u0;
        let mut xi = 0.0;
        let count = range.len();
        for k in 0..count {
            let next = (mid as isize + dir * (k as isize + 1)) as usize;
            let h = x[next] - xi;
            let k1 = if k == 0 { du0 } else { rhs(p, xi, ui) };
            ui = rk4_step(p, xi, ui, h, k1);
            xi = x[next];
            u[next] = ui;
        }
    }
    GridFunction::new(mesh, u)
}

/// `b1 u0_x + b2 u0_y + c u0 = f` on the unit square with `u0 = 0` on the
/// inflow edges, on a uniform `n x n` mesh.
pub fn solve_reduced_elliptic(p: &EllipticProblem2D, n: usize) -> Result<GridFunction> {
    let m1 = uniform_mesh(n, 0.0, 1.0)?;
    let mesh = Mesh2D::new(m1.clone(), m1);
    let x = mesh.mx.nodes();
    let nx = x.len();
    let h = 1.0 / n as f64;
    let mut u = vec![0.0; nx * nx];
    for j in 1..nx {
        for i in 1..nx {
            let (xi, yj) = (x[i], x[j]);
            let (b1, b2) = (p.b1.at2(xi, yj), p.b2.at2(xi, yj));
            if !(b1 > 0.0 && b2 > 0.0) {
                return Err(invalid(format!("reduced 2D problem needs b1, b2 > 0, violated at ({xi}, {yj})")));
            }
            let num = p.f.at2(xi, yj) + (b1 * u[j * nx + i - 1] + b2 * u[(j - 1) * nx + i]) / h;
            u[j * nx + i] = num / (p.c.at2(xi, yj) + (b1 + b2) / h);
        }
    }
    GridFunction::new(mesh, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_source_right_layer_gives_identity() {
        let p = SteadyProblem1D::new(1e-3, 1.0, 0.0, 1.0, (0.0, 1.0));
        let u = solve_reduced_right(&p, 64).unwrap();
        let m = u.mesh_1d().unwrap();
        for (x, v) in m.nodes().iter().zip(u.values()) {
            assert!((x - v).abs() < 1e-14);
        }
    }

    #[test]
    fn nonpositive_convection_rejected() {
        let p = SteadyProblem1D::new(1e-3, ScalarField::from_fn(|x| x - 0.5), 0.0, 1.0, (0.0, 1.0));
        assert!(solve_reduced_right(&p, 64).is_err());
    }

    // x(x+2) u' + u = f: u = sqrt((x+2)/x) * int_0^sqrt(x) 2 f(t^2) (t^2+2)^(-3/2) dt for x > 0,
    // with the mirrored substitution s = -t^2 on the left.
    fn integrating_factor_oracle(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        if x == 0.0 {
            return f(0.0);
        }
        let r = x.abs().sqrt();
        let sign = x.signum();
        let g = |t: f64| 2.0 * f(sign * t * t) * (2.0 + sign * t * t).powf(-1.5);
        let n = 2000;
        let h = r / n as f64;
        let mut s = g(0.0) + g(r);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k as f64 * h);
        }
        ((x + 2.0) / x.abs()).sqrt() * s * h / 3.0
    }

    #[test]
    fn turning_point_reduced_matches_integrating_factor() {
        let f = |x: f64| (2.0 * x).cos() + x;
        let p = SteadyProblem1D::new(
            1e-3,
            ScalarField::from_fn(|x| x * (x + 2.0)),
            1.0,
            ScalarField::from_fn(f),
            (-1.0, 1.0),
        );
        let u = solve_reduced_turning(&p, REDUCED_STEPS).unwrap();
        let m = u.mesh_1d().unwrap();
        let mut worst: f64 = 0.0;
        for k in (0..=REDUCED_STEPS).step_by(128) {
            let x = m.nodes()[k];
            worst = worst.max((u.values()[k] - integrating_factor_oracle(f, x)).abs());
        }
        assert!(worst <= 1e-8, "max deviation {worst}");
    }

    #[test]
    fn turning_point_needs_positive_reaction_at_origin() {
        let p = SteadyProblem1D::new(1e-3, ScalarField::from_fn(|x| x * (x + 2.0)), 0.0, 1.0, (-1.0, 1.0));
        assert!(solve_reduced_turning(&p, 64).is_err());
    }

    #[test]
    fn elliptic_reduced_follows_characteristics() {
        let p = EllipticProblem2D {
            eps: 1e-3,
            b1: 1.0.into(),
            b2: 1.0.into(),
            c: 1.0.into(),
            f: 1.0.into(),
        };
        let n = 256;
        let u = solve_reduced_elliptic(&p, n).unwrap();
        let m = u.mesh_2d().unwrap();
        // Characteristics are diagonals; the distance travelled from the
        // inflow edge is min(x, y), so u0 = 1 - exp(-min(x, y)). The kink on
        // the diagonal is smeared by upwinding, so sample away from it.
        for &(i, j) in &[(32usize, 160usize), (64, 200), (255, 128), (256, 64), (100, 0)] {
            let (x, y) = m.point(m.index(i, j));
            let exact = 1.0 - (-x.min(y)).exp();
            let err = (u.values()[m.index(i, j)] - exact).abs();
            assert!(err < 2.0 / n as f64, "error {err} at ({x}, {y})");
        }
    }
}
