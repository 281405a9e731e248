use log::warn;

use super::linalg::{Tridiagonal, TridiagonalLu};
use super::steady::upwind_operator;
use super::ParabolicProblem;
use crate::error::{invalid, Result};
use crate::grids::{GridFunction, Mesh1D, TimeGrid};

/// Crank–Nicolson stepping of the upwind semi-discretization.
///
/// When every coefficient is time independent the step matrices are
/// assembled and factored once; `solve` then costs `O(n)` per step, which
/// matters when generating hundreds of samples that differ only in `s`.
pub struct ParabolicSolver {
    problem: ParabolicProblem,
    mesh: Mesh1D,
    tg: TimeGrid,
    frozen: Option<Frozen>,
}

struct Frozen {
    explicit: Tridiagonal,
    implicit: TridiagonalLu,
}

impl ParabolicSolver {
    pub fn new(problem: ParabolicProblem, mesh: &Mesh1D, tg: &TimeGrid) -> Result<Self> {
        if !(problem.eps > 0.0 && problem.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", problem.eps)));
        }
        if mesh.a() != 0.0 || mesh.b() != 1.0 {
            return Err(invalid("parabolic problems live on x in [0, 1]"));
        }
        if (tg.t_final() - problem.t_final).abs() > 1e-12 * problem.t_final {
            return Err(invalid(format!(
                "time grid ends at {} but the problem at {}",
                tg.t_final(),
                problem.t_final
            )));
        }
        let frozen = if problem.b.is_one_dimensional() && problem.d.is_one_dimensional() {
            let (explicit, implicit) = step_matrices(&problem, mesh, tg.dt(), 0.0, 0.0);
            Some(Frozen {
                explicit,
                implicit: implicit.factor()?,
            })
        } else {
            None
        };
        Ok(Self {
            problem,
            mesh: mesh.clone(),
            tg: tg.clone(),
            frozen,
        })
    }

    /// Solution at the final time for the stored initial profile.
    pub fn solve(&self) -> Result<GridFunction> {
        self.run(None)
    }

    /// Like [`solve`](Self::solve) but with a different initial profile.
    pub fn solve_with_initial(&self, s: &[f64]) -> Result<GridFunction> {
        if s.len() != self.mesh.len() {
            return Err(invalid("initial profile length does not match the mesh"));
        }
        self.run_from(s.to_vec(), None)
    }

    fn run(&self, history: Option<&mut Vec<Vec<f64>>>) -> Result<GridFunction> {
        let s: Vec<f64> = self.mesh.nodes().iter().map(|&x| self.problem.s.at(x)).collect();
        self.run_from(s, history)
    }

    fn run_from(&self, mut u: Vec<f64>, mut history: Option<&mut Vec<Vec<f64>>>) -> Result<GridFunction> {
        let p = &self.problem;
        let x = self.mesh.nodes();
        let n = x.len();
        let dt = self.tg.dt();
        let t0 = self.tg.nodes()[0];
        let t_plus = self.tg.nodes()[1];
        if (u[0] - p.q0.at(t_plus)).abs() > 1e-12 || (u[n - 1] - p.q1.at(t_plus)).abs() > 1e-12 {
            warn!("initial profile incompatible with boundary traces at t = 0+");
        }
        if let Some(h) = history.as_deref_mut() {
            h.push(u.clone());
        }
        let forcing_free = p.f.is_zero();
        let mut f_old: Vec<f64> = if forcing_free {
            Vec::new()
        } else {
            x.iter().map(|&xi| p.f.at2(xi, t0)).collect()
        };
        let mut rhs = vec![0.0; n];
        for k in 0..self.tg.steps() {
            let (t_old, t_new) = (self.tg.nodes()[k], self.tg.nodes()[k + 1]);
            let assembled;
            let (explicit, implicit): (&Tridiagonal, &TridiagonalLu) = match &self.frozen {
                Some(fz) => (&fz.explicit, &fz.implicit),
                None => {
                    let (e, i) = step_matrices(p, &self.mesh, dt, t_old, t_new);
                    assembled = (e, i.factor()?);
                    (&assembled.0, &assembled.1)
                }
            };
            for i in 1..n - 1 {
                rhs[i] = explicit.lower[i] * u[i - 1] + explicit.diag[i] * u[i] + explicit.upper[i] * u[i + 1];
            }
            if !forcing_free {
                let f_new: Vec<f64> = x.iter().map(|&xi| p.f.at2(xi, t_new)).collect();
                for i in 1..n - 1 {
                    rhs[i] += 0.5 * dt * (f_old[i] + f_new[i]);
                }
                f_old = f_new;
            }
            rhs[0] = p.q0.at(t_new);
            rhs[n - 1] = p.q1.at(t_new);
            implicit.solve_in_place(&mut rhs);
            std::mem::swap(&mut u, &mut rhs);
            if let Some(h) = history.as_deref_mut() {
                h.push(u.clone());
            }
        }
        GridFunction::new(self.mesh.clone(), u)
    }
}

/// `(I - dt/2 L(t_old), I + dt/2 L(t_new))` with identity boundary rows.
fn step_matrices(p: &ParabolicProblem, mesh: &Mesh1D, dt: f64, t_old: f64, t_new: f64) -> (Tridiagonal, Tridiagonal) {
    let x = mesh.nodes();
    let n = x.len();
    let op_at = |t: f64| {
        let b: Vec<f64> = x.iter().map(|&xi| p.b.at2(xi, t)).collect();
        let d: Vec<f64> = x.iter().map(|&xi| p.d.at2(xi, t)).collect();
        upwind_operator(x, p.eps, &b, &d)
    };
    let mut explicit = op_at(t_old);
    let mut implicit = if t_old == t_new { explicit.clone() } else { op_at(t_new) };
    for i in 0..n {
        explicit.lower[i] *= -0.5 * dt;
        explicit.upper[i] *= -0.5 * dt;
        explicit.diag[i] = 1.0 - 0.5 * dt * explicit.diag[i];
        implicit.lower[i] *= 0.5 * dt;
        implicit.upper[i] *= 0.5 * dt;
        implicit.diag[i] = 1.0 + 0.5 * dt * implicit.diag[i];
    }
    for m in [&mut explicit, &mut implicit] {
        for i in [0, n - 1] {
            m.lower[i] = 0.0;
            m.upper[i] = 0.0;
            m.diag[i] = 1.0;
        }
    }
    (explicit, implicit)
}

/// Solution at `t = T`.
pub fn solve_parabolic_cn(p: &ParabolicProblem, mesh: &Mesh1D, tg: &TimeGrid) -> Result<GridFunction> {
    ParabolicSolver::new(p.clone(), mesh, tg)?.solve()
}

/// Every time level, `t_0 ..= T`, as nodal vectors.
pub fn solve_parabolic_cn_history(p: &ParabolicProblem, mesh: &Mesh1D, tg: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let solver = ParabolicSolver::new(p.clone(), mesh, tg)?;
    let mut h = Vec::with_capacity(tg.steps() + 1);
    solver.run(Some(&mut h))?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{shishkin_mesh, uniform_mesh, LayerSide, ShishkinParams};
    use crate::solvers::{solve_steady_1d, ScalarField, SteadyProblem1D};

    fn zero_problem() -> ParabolicProblem {
        ParabolicProblem {
            eps: 1e-3,
            b: 1.0.into(),
            d: ScalarField::from_fn(|x| x),
            f: 0.0.into(),
            s: 0.0.into(),
            q0: 0.0.into(),
            q1: 0.0.into(),
            t_final: 1.0,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = shishkin_mesh(64, 0.0, 1.0, ShishkinParams::new(1e-3, 1.0, LayerSide::Right)).unwrap();
        let tg = TimeGrid::new(1.0, 32).unwrap();
        let u = solve_parabolic_cn(&zero_problem(), &m, &tg).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    // u*(x,t) = t x (1 - x): u_t = x(1-x), u_x = t(1-2x), u_xx = -2t.
    fn manufactured(eps: f64) -> ParabolicProblem {
        ParabolicProblem {
            eps,
            b: 1.0.into(),
            d: ScalarField::from_fn(|x| x),
            f: ScalarField::from_fn2(move |x, t| x * (1.0 - x) + 2.0 * eps * t + t * (1.0 - 2.0 * x) + x * t * x * (1.0 - x)),
            s: 0.0.into(),
            q0: 0.0.into(),
            q1: 0.0.into(),
            t_final: 1.0,
        }
    }

    #[test]
    fn manufactured_solution_converges() {
        let eps = 0.05;
        let exact = |x: f64| x * (1.0 - x);
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let m = uniform_mesh(n, 0.0, 1.0).unwrap();
            let tg = TimeGrid::new(1.0, n).unwrap();
            let u = solve_parabolic_cn(&manufactured(eps), &m, &tg).unwrap();
            let err = m
                .nodes()
                .iter()
                .zip(u.values())
                .map(|(&x, &v)| (v - exact(x)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // First order in space dominates; each halving of h should roughly halve the error.
        assert!(errs[0] < 0.05);
        assert!(errs[1] < 0.6 * errs[0]);
        assert!(errs[2] < 0.6 * errs[1]);
    }

    #[test]
    fn time_independent_data_reaches_steady_state() {
        let eps = 1e-2;
        let m = uniform_mesh(64, 0.0, 1.0).unwrap();
        let p = ParabolicProblem {
            eps,
            b: 1.0.into(),
            d: 1.0.into(),
            f: 1.0.into(),
            s: 0.0.into(),
            q0: 0.0.into(),
            q1: 0.0.into(),
            t_final: 20.0,
        };
        let steady = solve_steady_1d(&SteadyProblem1D::new(eps, 1.0, 1.0, 1.0, (0.0, 1.0)), &m).unwrap();
        let tg = TimeGrid::new(20.0, 400).unwrap();
        let u = solve_parabolic_cn(&p, &m, &tg).unwrap();
        let diff = u
            .values()
            .iter()
            .zip(steady.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "difference to steady solve {diff}");
    }

    #[test]
    fn history_has_every_level() {
        let m = uniform_mesh(16, 0.0, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let h = solve_parabolic_cn_history(&zero_problem(), &m, &tg).unwrap();
        assert_eq!(h.len(), 11);
    }
}
