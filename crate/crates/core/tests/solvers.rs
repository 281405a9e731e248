//! Cross-checks of the ground-truth solvers against independent references.

use comfno::grf::GrfSampler;
use comfno::grids::{shishkin_mesh, uniform_mesh, Grid, GridFunction, LayerSide, Mesh2D, ShishkinParams};
use comfno::solvers::{
    solve_elliptic_2d, solve_reduced_turning, solve_steady_1d, EllipticProblem2D, ScalarField, SteadyProblem1D,
    REDUCED_STEPS,
};

fn elliptic_on(n: usize, eps: f64, f: &GridFunction, target: &Grid) -> Vec<f64> {
    let m = shishkin_mesh(n, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
    let p = EllipticProblem2D {
        eps,
        b1: 1.0.into(),
        b2: 1.0.into(),
        c: 1.0.into(),
        f: ScalarField::Nodal(f.clone()),
    };
    solve_elliptic_2d(&p, &Mesh2D::new(m.clone(), m)).unwrap().interpolate_to(target).unwrap().into_values()
}

#[test]
fn elliptic_self_refinement_on_target_grid() {
    let eps = 1e-3;
    let u51 = uniform_mesh(50, 0.0, 1.0).unwrap();
    let target: Grid = Mesh2D::new(u51.clone(), u51).into();
    let f = GridFunction::new(target.clone(), GrfSampler::new(&target, 1.0).unwrap().sample_one(11, 0)).unwrap();
    let coarse = elliptic_on(64, eps, &f, &target);
    let fine = elliptic_on(256, eps, &f, &target);
    let scale = fine.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = coarse.iter().zip(&fine).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    // First order on a Shishkin mesh: O(ln n / n) relative to the solution size.
    let n = 64.0f64;
    assert!(diff <= scale * n.ln() / n, "diff {diff:e}, scale {scale}");
}

#[test]
fn turning_point_solution_approaches_reduced_away_from_layers() {
    let f = |x: f64| (3.0 * x).sin() + 1.5;
    let reduced_problem = SteadyProblem1D::new(
        1.0,
        ScalarField::from_fn(|x| x * (x + 2.0)),
        1.0,
        ScalarField::from_fn(f),
        (-1.0, 1.0),
    );
    let u0 = solve_reduced_turning(&reduced_problem, REDUCED_STEPS).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let p = SteadyProblem1D { eps, ..reduced_problem.clone() };
        let m = shishkin_mesh(8192, -1.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Both)).unwrap();
        let u = solve_steady_1d(&p, &m).unwrap();
        let gap = (0..=180)
            .map(|k| -0.9 + k as f64 * 0.01)
            .map(|x| (u.eval_1d(x).unwrap() - u0.eval_1d(x).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(gap < prev, "eps {eps}: {gap:e} vs {prev:e}");
        prev = gap;
    }
    assert!(prev < 5e-3);
}

#[test]
fn shishkin_error_constant_is_eps_uniform() {
    let mut constants = Vec::new();
    for eps in [1e-3, 1e-5, 1e-7, 1e-9] {
        let exact = |x: f64| x - ((-(1.0 - x) / eps).exp() - (-1.0 / eps).exp()) / (1.0 - (-1.0 / eps).exp());
        let p = SteadyProblem1D::new(eps, 1.0, 0.0, 1.0, (0.0, 1.0));
        let n = 512;
        let m = shishkin_mesh(n, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
        let u = solve_steady_1d(&p, &m).unwrap();
        let err = m.nodes().iter().zip(u.values()).map(|(&x, &v)| (v - exact(x)).abs()).fold(0.0, f64::max);
        constants.push(err * n as f64 / (n as f64).ln());
    }
    let (lo, hi) = constants.iter().fold((f64::MAX, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo < 1.05, "{constants:?}");
}
