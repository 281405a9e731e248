use super::linalg::{BandLu, BandMatrix};
use super::{EllipticProblem2D, ScalarField};
use crate::error::{invalid, Result};
use crate::grids::{GridFunction, Mesh2D};

/// Factored 5-point upwind operator on a tensor mesh of the unit square.
///
/// The coefficients are fixed at construction; only the source changes
/// between solves, so the banded LU is computed once.
pub struct EllipticSolver {
    mesh: Mesh2D,
    lu: BandLu,
}

impl EllipticSolver {
    pub fn new(p: &EllipticProblem2D, mesh: &Mesh2D) -> Result<Self> {
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {}", p.eps)));
        }
        let (nx, ny) = (mesh.mx.len(), mesh.my.len());
        if nx < 3 || ny < 3 {
            return Err(invalid("2D mesh needs interior nodes in both directions"));
        }
        let (mi, mj) = (nx - 2, ny - 2);
        let xs = mesh.mx.nodes();
        let ys = mesh.my.nodes();
        let mut a = BandMatrix::zeros(mi * mj, mi);
        let unknown = |i: usize, j: usize| (j - 1) * mi + (i - 1);
        for j in 1..=mj {
            for i in 1..=mi {
                let (x, y) = (xs[i], ys[j]);
                let row = unknown(i, j);
                let couple = |ii: usize, jj: usize, v: f64, a: &mut BandMatrix| {
                    if ii >= 1 && ii <= mi && jj >= 1 && jj <= mj {
                        a.add(row, unknown(ii, jj), v);
                    }
                };
                // x direction
                let (hl, hr) = (x - xs[i - 1], xs[i + 1] - x);
                let dx = 2.0 * p.eps / (hl + hr);
                let b1 = p.b1.at2(x, y);
                let mut diag = dx / hl + dx / hr + p.c.at2(x, y);
                let (mut west, mut east) = (-dx / hl, -dx / hr);
                if b1 > 0.0 {
                    west -= b1 / hl;
                    diag += b1 / hl;
                } else if b1 < 0.0 {
                    east += b1 / hr;
                    diag -= b1 / hr;
                }
                // y direction
                let (hd, hu) = (y - ys[j - 1], ys[j + 1] - y);
                let dy = 2.0 * p.eps / (hd + hu);
                let b2 = p.b2.at2(x, y);
                diag += dy / hd + dy / hu;
                let (mut south, mut north) = (-dy / hd, -dy / hu);
                if b2 > 0.0 {
                    south -= b2 / hd;
                    diag += b2 / hd;
                } else if b2 < 0.0 {
                    north += b2 / hu;
                    diag -= b2 / hu;
                }
                couple(i, j, diag, &mut a);
                couple(i - 1, j, west, &mut a);
                couple(i + 1, j, east, &mut a);
                couple(i, j - 1, south, &mut a);
                couple(i, j + 1, north, &mut a);
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            lu: a.factor()?,
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    /// Solves with source `f`; the boundary is homogeneous.
    pub fn solve(&self, f: &ScalarField) -> Result<GridFunction> {
        let (nx, ny) = (self.mesh.mx.len(), self.mesh.my.len());
        let (mi, mj) = (nx - 2, ny - 2);
        let xs = self.mesh.mx.nodes();
        let ys = self.mesh.my.nodes();
        let mut rhs = Vec::with_capacity(mi * mj);
        for &y in &ys[1..=mj] {
            for &x in &xs[1..=mi] {
                rhs.push(f.at2(x, y));
            }
        }
        self.lu.solve_in_place(&mut rhs);
        let mut u = vec![0.0; nx * ny];
        for j in 1..=mj {
            let src = &rhs[(j - 1) * mi..j * mi];
            u[j * nx + 1..j * nx + 1 + mi].copy_from_slice(src);
        }
        GridFunction::new(self.mesh.clone(), u)
    }
}

pub fn solve_elliptic_2d(p: &EllipticProblem2D, mesh: &Mesh2D) -> Result<GridFunction> {
    EllipticSolver::new(p, mesh)?.solve(&p.f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{shishkin_mesh, LayerSide, ShishkinParams};

    fn mesh(n: usize, eps: f64) -> Mesh2D {
        let m = shishkin_mesh(n, 0.0, 1.0, ShishkinParams::new(eps, 1.0, LayerSide::Right)).unwrap();
        Mesh2D::new(m.clone(), m)
    }

    fn problem(eps: f64, f: ScalarField) -> EllipticProblem2D {
        EllipticProblem2D {
            eps,
            b1: 1.0.into(),
            b2: 1.0.into(),
            c: 1.0.into(),
            f,
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let u = solve_elliptic_2d(&problem(1e-3, 0.0.into()), &mesh(16, 1e-3)).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_data_gives_symmetric_solution() {
        let m = mesh(32, 1e-3);
        let f = ScalarField::from_fn2(|x, y| 1.0 + x * y + (x + y).sin());
        let u = solve_elliptic_2d(&problem(1e-3, f), &m).unwrap();
        let n = m.mx.len();
        for j in 0..n {
            for i in 0..n {
                let d = (u.values()[m.index(i, j)] - u.values()[m.index(j, i)]).abs();
                assert!(d <= 1e-10, "asymmetry {d} at ({i}, {j})");
            }
        }
    }

    #[test]
    fn reused_factorization_matches_fresh_solve() {
        let m = mesh(16, 1e-2);
        let p = problem(1e-2, 0.0.into());
        let solver = EllipticSolver::new(&p, &m).unwrap();
        let f = ScalarField::from_fn2(|x, y| x - y * y);
        let a = solver.solve(&f).unwrap();
        let b = solve_elliptic_2d(&problem(1e-2, f), &m).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
