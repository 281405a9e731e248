//! Crank–Nicolson on a Shishkin mesh for `u_t - eps u_xx + u_x + x u = 0`
//! with a smooth initial profile; prints the solution at t = 1 near x = 1.

use comfno::grids::{shishkin_mesh, LayerSide, ShishkinParams, TimeGrid};
use comfno::solvers::{solve_parabolic_cn, ParabolicProblem, ScalarField};

fn main() -> comfno::Result<()> {
    let eps = 1e-3;
    let p = ParabolicProblem {
        eps,
        b: 1.0.into(),
        d: ScalarField::from_fn(|x| x),
        f: 0.0.into(),
        s: ScalarField::from_fn(|x| (std::f64::consts::PI * x).sin()),
        q0: 0.0.into(),
        q1: 0.0.into(),
        t_final: 1.0,
    };
    let mesh = shishkin_mesh(1024, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right))?;
    let u = solve_parabolic_cn(&p, &mesh, &TimeGrid::new(1.0, 1000)?)?;
    for x in [0.5, 0.9, 0.99, 0.995, 0.999, 1.0] {
        println!("u({x}, 1) = {:+.6e}", u.eval_1d(x)?);
    }
    Ok(())
}
