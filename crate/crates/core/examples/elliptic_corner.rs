//! The 2D problem `-eps Δu + u_x + u_y + u = 1` on a tensor Shishkin mesh:
//! layers along x = 1 and y = 1 meet in a corner layer.

use comfno::grids::{shishkin_mesh, LayerSide, Mesh2D, ShishkinParams};
use comfno::solvers::{solve_elliptic_2d, EllipticProblem2D};

fn main() -> comfno::Result<()> {
    let eps = 1e-3;
    let m = shishkin_mesh(128, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right))?;
    let p = EllipticProblem2D {
        eps,
        b1: 1.0.into(),
        b2: 1.0.into(),
        c: 1.0.into(),
        f: 1.0.into(),
    };
    let u = solve_elliptic_2d(&p, &Mesh2D::new(m.clone(), m))?;
    for (x, y) in [(0.5, 0.5), (0.9, 0.9), (0.999, 0.5), (0.5, 0.999), (0.999, 0.999)] {
        println!("u({x}, {y}) = {:.5}", u.eval_2d(x, y)?);
    }
    Ok(())
}
