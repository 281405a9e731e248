//! Zeroth-order expansion (reduced solution plus exponential layer) of a
//! turning-point problem, compared with a fine Shishkin solve. The
//! reference is first order, so its own error inside the layers sets a
//! floor of roughly `ln n / n` on what the comparison can show.

use comfno::asymptotics::{build_expansion0, verify_expansion};
use comfno::grids::{shishkin_mesh, LayerSide, ShishkinParams};
use comfno::solvers::{solve_steady_1d, ProblemSpec, ReducedKind, ScalarField, SteadyProblem1D};

fn main() -> comfno::Result<()> {
    for eps in [1e-2, 1e-3, 1e-4] {
        let p = SteadyProblem1D::new(
            eps,
            ScalarField::from_fn(|x| x * (x + 2.0)),
            1.0,
            ScalarField::from_fn(|x| (2.0 * x).cos() + 1.0),
            (-1.0, 1.0),
        );
        let mesh = shishkin_mesh(1 << 16, -1.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Both))?;
        let u = solve_steady_1d(&p, &mesh)?;
        let exp = build_expansion0(&ProblemSpec::Steady(p), ReducedKind::TurningPoint)?;
        let rep = verify_expansion(&u, &exp, eps)?;
        println!("eps = {eps:.0e}: sup error {:.3e}, fitted C {:.3}", rep.sup_error, rep.fitted_c);
    }
    Ok(())
}
