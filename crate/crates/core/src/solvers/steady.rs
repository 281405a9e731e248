use super::linalg::Tridiagonal;
use super::SteadyProblem1D;
use crate::error::{invalid, Result};
use crate::grids::{GridFunction, Mesh1D};

/// Upwind discretization of `-eps u'' + b u' + c u` on all mesh nodes.
/// Boundary rows (first and last) are left zero.
pub fn upwind_operator(nodes: &[f64], eps: f64, b: &[f64], c: &[f64]) -> Tridiagonal {
    let n = nodes.len();
    let mut op = Tridiagonal::zeros(n);
    for i in 1..n - 1 {
        let hl = nodes[i] - nodes[i - 1];
        let hr = nodes[i + 1] - nodes[i];
        let diff = 2.0 * eps / (hl + hr);
        let mut lo = -diff / hl;
        let mut up = -diff / hr;
        let mut d = diff / hl + diff / hr + c[i];
        if b[i] > 0.0 {
            lo -= b[i] / hl;
            d += b[i] / hl;
        } else if b[i] < 0.0 {
            up += b[i] / hr;
            d -= b[i] / hr;
        }
        op.lower[i] = lo;
        op.diag[i] = d;
        op.upper[i] = up;
    }
    op
}

/// Solves a steady 1D convection-diffusion-reaction problem on `mesh` with
/// the upwind scheme; boundary values are imposed exactly.
pub fn solve_steady_1d(p: &SteadyProblem1D, mesh: &Mesh1D) -> Result<GridFunction> {
    p.validate()?;
    let tol = 1e-12 * (p.domain.1 - p.domain.0);
    if (mesh.a() - p.domain.0).abs() > tol || (mesh.b() - p.domain.1).abs() > tol {
        return Err(invalid(format!(
            "mesh [{}, {}] does not cover the problem domain [{}, {}]",
            mesh.a(),
            mesh.b(),
            p.domain.0,
            p.domain.1
        )));
    }
    let x = mesh.nodes();
    let n = x.len();
    if n < 3 {
        return Err(invalid("mesh needs at least one interior node"));
    }
    let b: Vec<f64> = x.iter().map(|&t| p.b.at(t)).collect();
    let c: Vec<f64> = x.iter().map(|&t| p.c.at(t)).collect();
    let mut a = upwind_operator(x, p.eps, &b, &c);
    a.diag[0] = 1.0;
    a.diag[n - 1] = 1.0;
    let mut rhs: Vec<f64> = x.iter().map(|&t| p.f.at(t)).collect();
    rhs[0] = p.boundary.0;
    rhs[n - 1] = p.boundary.1;
    let u = a.solve(&rhs)?;
    GridFunction::new(mesh.clone(), u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{shishkin_mesh, uniform_mesh, LayerSide, ShishkinParams};
    use crate::solvers::ScalarField;

    fn closed_form(eps: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| x - ((-(1.0 - x) / eps).exp() - (-1.0 / eps).exp()) / (1.0 - (-1.0 / eps).exp())
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let p = SteadyProblem1D::new(1e-3, 1.0, 0.5, 0.0, (0.0, 1.0));
        let m = shishkin_mesh(64, 0.0, 1.0, ShishkinParams::new(1e-3, 1.0, LayerSide::Right)).unwrap();
        let u = solve_steady_1d(&p, &m).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn midpoint_value_against_closed_form() {
        let eps = 0.1;
        let p = SteadyProblem1D::new(eps, 1.0, 0.0, 1.0, (0.0, 1.0));
        let m = shishkin_mesh(1024, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
        let u = solve_steady_1d(&p, &m).unwrap();
        let mid = m.nodes().iter().position(|&x| x == 0.5).unwrap();
        let exact = closed_form(eps)(0.5);
        assert!((exact - 0.4933072).abs() < 1e-6);
        // First-order scheme, n = 1024.
        assert!((u.values()[mid] - exact).abs() < 2e-3);
    }

    #[test]
    fn error_decreases_like_n_inverse_log_n() {
        let eps = 1e-4;
        let exact = closed_form(eps);
        let mut prev = f64::INFINITY;
        for n in [64usize, 128, 256, 512] {
            let p = SteadyProblem1D::new(eps, 1.0, 0.0, 1.0, (0.0, 1.0));
            let m = shishkin_mesh(n, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
            let u = solve_steady_1d(&p, &m).unwrap();
            let err = m
                .nodes()
                .iter()
                .zip(u.values())
                .map(|(&x, &v)| (v - exact(x)).abs())
                .fold(0.0, f64::max);
            assert!(err < prev);
            assert!(err <= 2.0 * (n as f64).ln() / n as f64);
            prev = err;
        }
    }

    #[test]
    fn discrete_maximum_principle_holds() {
        let eps = 1e-3;
        let p = SteadyProblem1D::new(
            eps,
            ScalarField::from_fn(|x| 1.0 + x),
            ScalarField::from_fn(|x| x * x),
            ScalarField::from_fn(|x| (3.0 * x).sin().abs()),
            (0.0, 1.0),
        );
        let m = shishkin_mesh(256, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
        let u = solve_steady_1d(&p, &m).unwrap();
        assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn mesh_must_cover_domain() {
        let p = SteadyProblem1D::new(1e-2, 1.0, 0.0, 1.0, (0.0, 1.0));
        let m = uniform_mesh(16, 0.0, 0.5).unwrap();
        assert!(solve_steady_1d(&p, &m).is_err());
    }
}
