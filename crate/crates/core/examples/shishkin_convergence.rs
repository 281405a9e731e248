//! Upwind solutions of `-eps u'' + u' = 1` on Shishkin meshes: the nodal
//! error decays like `ln n / n` whatever the size of `eps`.

use comfno::grids::{shishkin_mesh, LayerSide, ShishkinParams};
use comfno::solvers::{solve_steady_1d, SteadyProblem1D};

fn main() -> comfno::Result<()> {
    for eps in [1e-2, 1e-4, 1e-6] {
        let exact = |x: f64| x - ((-(1.0 - x) / eps).exp() - (-1.0 / eps).exp()) / (1.0 - (-1.0 / eps).exp());
        let p = SteadyProblem1D::new(eps, 1.0, 0.0, 1.0, (0.0, 1.0));
        print!("eps = {eps:.0e}:");
        for n in [64usize, 256, 1024] {
            let mesh = shishkin_mesh(n, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right))?;
            let u = solve_steady_1d(&p, &mesh)?;
            let err = mesh.nodes().iter().zip(u.values()).map(|(&x, &v)| (v - exact(x)).abs()).fold(0.0, f64::max);
            print!("  n={n}: {err:.2e} (tau {:.4})", mesh.tau().unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
