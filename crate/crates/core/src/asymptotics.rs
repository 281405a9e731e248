//! Order-0 asymptotic expansions: a reduced solution plus exponential layer
//! corrections, and checks of the `O(eps)` estimate and layer decay rate.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grids::{Grid, GridFunction};
use crate::solvers::{
    solve_reduced_elliptic, solve_reduced_right, solve_reduced_turning, EllipticProblem2D, ProblemSpec,
    ReducedKind, ScalarField, SteadyProblem1D, REDUCED_GRID_2D, REDUCED_STEPS,
};

type Trace = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One exponential correction.
#[derive(Clone)]
pub enum LayerTerm {
    /// `amplitude(t) * exp(-rate(t) * |anchor - s| / eps)` where `s` is the
    /// coordinate along `axis` and `t` the transverse one (unused in 1D).
    Edge {
        axis: usize,
        anchor: f64,
        amplitude: Trace,
        rate: Trace,
    },
    /// `amplitude * exp(-rate * (1 - x) (1 - y) / eps^2)`, anchored on the
    /// edges `x = 1` and `y = 1`.
    Corner { amplitude: f64, rate: f64 },
}

impl LayerTerm {
    fn edge_const(anchor: f64, amplitude: f64, rate: f64) -> Self {
        LayerTerm::Edge {
            axis: 0,
            anchor,
            amplitude: Arc::new(move |_| amplitude),
            rate: Arc::new(move |_| rate),
        }
    }

    pub fn eval(&self, x: f64, y: f64, eps: f64) -> f64 {
        match self {
            LayerTerm::Edge {
                axis,
                anchor,
                amplitude,
                rate,
            } => {
                let (s, t) = if *axis == 0 { (x, y) } else { (y, x) };
                amplitude(t) * (-rate(t) * (anchor - s).abs() / eps).exp()
            }
            LayerTerm::Corner { amplitude, rate } => amplitude * (-rate * (1.0 - x) * (1.0 - y) / (eps * eps)).exp(),
        }
    }

    /// Amplitude seen at transverse coordinate `t`.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        match self {
            LayerTerm::Edge { amplitude, .. } => amplitude(t),
            LayerTerm::Corner { amplitude, .. } => *amplitude,
        }
    }
}

impl fmt::Debug for LayerTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerTerm::Edge { axis, anchor, .. } => write!(f, "Edge {{ axis: {axis}, anchor: {anchor} }}"),
            LayerTerm::Corner { amplitude, rate } => write!(f, "Corner {{ amplitude: {amplitude}, rate: {rate} }}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expansion0 {
    pub kind: ReducedKind,
    pub eps: f64,
    pub u0: GridFunction,
    pub layers: Vec<LayerTerm>,
}

impl Expansion0 {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let smooth = match self.u0.grid() {
            Grid::D1(_) => self.u0.eval_1d(x)?,
            Grid::D2(_) => self.u0.eval_2d(x, y)?,
        };
        Ok(smooth + self.layers.iter().map(|l| l.eval(x, y, self.eps)).sum::<f64>())
    }

    /// `u_as` at every node of `grid`.
    pub fn on_grid(&self, grid: &Grid) -> Result<GridFunction> {
        let values = match (grid, self.u0.grid()) {
            (Grid::D1(m), Grid::D1(_)) => m.nodes().iter().map(|&x| self.eval(x, 0.0)).collect::<Result<Vec<_>>>()?,
            (Grid::D2(m), Grid::D2(_)) => (0..m.len())
                .map(|k| {
                    let (x, y) = m.point(k);
                    self.eval(x, y)
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(invalid("evaluation grid dimension differs from the expansion")),
        };
        GridFunction::new(grid.clone(), values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionReport {
    pub sup_error: f64,
    pub fitted_c: f64,
    pub eps: f64,
}

fn sample_points(a: f64, b: f64) -> impl Iterator<Item = f64> {
    (0..=256).map(move |k| a + (b - a) * k as f64 / 256.0)
}

pub fn build_expansion0(p: &ProblemSpec, kind: ReducedKind) -> Result<Expansion0> {
    match (p, kind) {
        (ProblemSpec::Steady(s), ReducedKind::RightLayer) => right_expansion(s),
        (ProblemSpec::Steady(s), ReducedKind::TurningPoint) => turning_expansion(s),
        (ProblemSpec::Elliptic(e), ReducedKind::Elliptic2D) => elliptic_expansion(e),
        _ => Err(invalid(format!("expansion kind {kind:?} does not apply to this problem"))),
    }
}

fn right_expansion(p: &SteadyProblem1D) -> Result<Expansion0> {
    let (a, b) = p.domain;
    if let Some(x) = sample_points(a, b).find(|&x| !(p.b.at(x) > 0.0)) {
        return Err(invalid(format!("hypothesis b >= beta > 0 fails at x = {x}")));
    }
    let u0 = solve_reduced_right(p, REDUCED_STEPS)?;
    let u0_b = *u0.values().last().expect("nonempty");
    Ok(Expansion0 {
        kind: ReducedKind::RightLayer,
        eps: p.eps,
        layers: vec![LayerTerm::edge_const(b, p.boundary.1 - u0_b, p.b.at(b))],
        u0,
    })
}

// The printed correction at x = -1 reads exp(b(-1)(1+x)/eps) with the factor
// b of the convection x b(x). Here `p.b` already holds the full field, whose
// value at -1 is negative, so the same expression decays away from x = -1.
fn turning_expansion(p: &SteadyProblem1D) -> Result<Expansion0> {
    let (bl, br) = (p.b.at(-1.0), p.b.at(1.0));
    if !(br > 0.0) {
        return Err(invalid(format!("hypothesis: convection positive at x = 1 fails (value {br})")));
    }
    if !(bl < 0.0) {
        return Err(invalid(format!("hypothesis: convection negative at x = -1 fails (value {bl})")));
    }
    let u0 = solve_reduced_turning(p, REDUCED_STEPS)?;
    let v = u0.values();
    let (u0_l, u0_r) = (v[0], v[v.len() - 1]);
    Ok(Expansion0 {
        kind: ReducedKind::TurningPoint,
        eps: p.eps,
        layers: vec![
            LayerTerm::edge_const(1.0, p.boundary.1 - u0_r, br),
            LayerTerm::edge_const(-1.0, p.boundary.0 - u0_l, -bl),
        ],
        u0,
    })
}

fn elliptic_expansion(p: &EllipticProblem2D) -> Result<Expansion0> {
    for x in sample_points(0.0, 1.0).step_by(8) {
        for y in sample_points(0.0, 1.0).step_by(8) {
            if !(p.b1.at2(x, y) > 0.0 && p.b2.at2(x, y) > 0.0) {
                return Err(invalid(format!("hypothesis b1, b2 > 0 fails at ({x}, {y})")));
            }
        }
    }
    let u0 = solve_reduced_elliptic(p, REDUCED_GRID_2D)?;
    let trace = |g: GridFunction, on_x_edge: bool| -> Trace {
        Arc::new(move |t: f64| {
            let t = t.clamp(0.0, 1.0);
            let v = if on_x_edge { g.eval_2d(1.0, t) } else { g.eval_2d(t, 1.0) };
            -v.expect("trace inside the unit square")
        })
    };
    let field_trace = |f: ScalarField, on_x_edge: bool| -> Trace {
        Arc::new(move |t: f64| if on_x_edge { f.at2(1.0, t) } else { f.at2(t, 1.0) })
    };
    let corner_value = u0.eval_2d(1.0, 1.0)?;
    let layers = vec![
        LayerTerm::Edge {
            axis: 0,
            anchor: 1.0,
            amplitude: trace(u0.clone(), true),
            rate: field_trace(p.b1.clone(), true),
        },
        LayerTerm::Edge {
            axis: 1,
            anchor: 1.0,
            amplitude: trace(u0.clone(), false),
            rate: field_trace(p.b2.clone(), false),
        },
        LayerTerm::Corner {
            amplitude: corner_value,
            rate: p.b1.at2(1.0, 1.0) * p.b2.at2(1.0, 1.0),
        },
    ];
    Ok(Expansion0 {
        kind: ReducedKind::Elliptic2D,
        eps: p.eps,
        u0,
        layers,
    })
}

/// Sup-norm distance between a reference solution and the expansion on the
/// reference's own nodes.
pub fn verify_expansion(u_ref: &GridFunction, exp: &Expansion0, eps: f64) -> Result<ExpansionReport> {
    if (eps - exp.eps).abs() > 1e-15 * eps.abs().max(1.0) {
        return Err(invalid(format!("expansion was built for eps = {} but eps = {eps} given", exp.eps)));
    }
    let same_kind = matches!(
        (u_ref.grid(), exp.u0.grid()),
        (Grid::D1(_), Grid::D1(_)) | (Grid::D2(_), Grid::D2(_))
    );
    if !same_kind {
        return Err(invalid("reference and expansion live on meshes of different dimension"));
    }
    let u_as = exp
        .on_grid(u_ref.grid())
        .map_err(|e| invalid(format!("reference mesh is not covered by the expansion: {e}")))?;
    let sup_error = u_ref
        .values()
        .iter()
        .zip(u_as.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ExpansionReport {
        sup_error,
        fitted_c: sup_error / eps,
        eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    /// Fitted exponential decay rate of `|u_ref - u0|` away from the anchor.
    pub rate: f64,
    /// `rate / (beta / eps)`.
    pub ratio: f64,
    pub nodes_used: usize,
    pub passes: bool,
}

/// Least-squares fit of `log |u_ref - u0|` against the distance from `x0`.
pub fn layer_decay_check(u_ref: &GridFunction, u0: &GridFunction, beta: f64, eps: f64, x0: f64) -> Result<DecayReport> {
    let mesh = u_ref
        .mesh_1d()
        .ok_or_else(|| invalid("decay check expects a 1D reference solution"))?;
    if !(beta > 0.0 && eps > 0.0) {
        return Err(invalid("beta and eps must be positive"));
    }
    let mut pts = Vec::new();
    for (&x, &u) in mesh.nodes().iter().zip(u_ref.values()) {
        let e = (u - u0.eval_1d(x)?).abs();
        let d = (x0 - x).abs();
        if e > 1e-12 && d >= 2.0 * eps {
            pts.push((d, e.ln()));
        }
    }
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} usable nodes for the decay fit, need 4",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let md = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - md).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - md) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("usable nodes share one distance".into()));
    }
    let rate = -sxy / sxx;
    let expected = beta / eps;
    Ok(DecayReport {
        rate,
        ratio: rate / expected,
        nodes_used: pts.len(),
        passes: rate >= 0.8 * expected,
    })
}
