//! Residual statistics over a test set and their tabular export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamMap;
use crate::error::{invalid, Error, Result};
use crate::grids::Grid;
use crate::neuralop::ModelConfig;
use crate::training::{predict, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub model: String,
    pub mean: f64,
    /// Per-sample maximum residual, averaged over samples.
    pub inf_norm: f64,
    /// Squared deviation from each sample's own mean residual, averaged.
    pub variance: f64,
    pub samples: usize,
    pub nodes: usize,
}

impl MetricsReport {
    pub fn tagged(mut self, experiment: &str, model: &str) -> Self {
        self.experiment = experiment.to_string();
        self.model = model.to_string();
        self
    }
}

/// Mean, averaged per-sample sup norm and per-sample-centred variance of
/// `|pred - truth|` over `N` samples of `M` nodes.
pub fn residual_metrics(preds: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<MetricsReport> {
    let residuals = abs_residuals(preds, truths)?;
    Ok(metrics_of(&residuals))
}

fn abs_residuals(preds: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(invalid(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    let m = truths[0].len();
    if m == 0 || preds.iter().chain(truths).any(|r| r.len() != m) {
        return Err(invalid("every sample needs the same positive node count"));
    }
    Ok(preds
        .iter()
        .zip(truths)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).collect())
        .collect())
}

fn metrics_of(r: &[Vec<f64>]) -> MetricsReport {
    let (n, m) = (r.len(), r[0].len());
    let (mut sum, mut sup, mut var) = (0.0, 0.0, 0.0);
    for row in r {
        let row_sum: f64 = row.iter().sum();
        let row_mean = row_sum / m as f64;
        sum += row_sum;
        sup += row.iter().copied().fold(0.0, f64::max);
        var += row.iter().map(|v| (v - row_mean).powi(2)).sum::<f64>();
    }
    let nm = (n * m) as f64;
    MetricsReport {
        experiment: String::new(),
        model: String::new(),
        mean: sum / nm,
        inf_norm: sup / n as f64,
        variance: var / nm,
        samples: n,
        nodes: m,
    }
}

/// Metrics of one model on a test set plus the per-node mean residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub curve: Vec<f64>,
}

pub fn evaluate_model(cfg: &ModelConfig, params: &ParamMap, test: &Dataset) -> Result<Evaluation> {
    let pred = predict(cfg, params, test, 50)?;
    let m = test.grid.len();
    let preds: Vec<Vec<f64>> = pred.real().chunks(m).map(<[f64]>::to_vec).collect();
    let residuals = abs_residuals(&preds, &test.targets)?;
    let mut curve = vec![0.0; m];
    for row in &residuals {
        for (c, v) in curve.iter_mut().zip(row) {
            *c += v;
        }
    }
    curve.iter_mut().for_each(|c| *c /= residuals.len() as f64);
    Ok(Evaluation {
        report: metrics_of(&residuals),
        curve,
    })
}

/// Two significant digits with a two-digit exponent, e.g. `5.0e-04`.
pub fn sci2(v: f64) -> String {
    let s = format!("{v:.1e}");
    match s.split_once('e') {
        Some((mant, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        None => s,
    }
}

/// Side-by-side text table: one row per experiment, FNO then ComFNO.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut experiments: Vec<&str> = Vec::new();
    for r in reports {
        if !experiments.contains(&r.experiment.as_str()) {
            experiments.push(&r.experiment);
        }
    }
    let mut out = format!(
        "{:<14} | {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9}\n",
        "experiment", "FNO mean", "inf", "var", "Com mean", "inf", "var"
    );
    out.push_str(&format!("{}\n", "-".repeat(out.trim_end().len())));
    for e in experiments {
        let cells = |model: &str| -> String {
            match reports.iter().find(|r| r.experiment == e && r.model == model) {
                Some(r) => format!("{:>9} {:>9} {:>9}", sci2(r.mean), sci2(r.inf_norm), sci2(r.variance)),
                None => format!("{:>9} {:>9} {:>9}", "-", "-", "-"),
            }
        };
        out.push_str(&format!("{e:<14} | {} | {}\n", cells("fno"), cells("comfno")));
    }
    out
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// CSV with columns `experiment,model,mean,inf_norm,var`.
pub fn write_reports_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["experiment", "model", "mean", "inf_norm", "var"]).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.experiment.clone(),
            r.model.clone(),
            format!("{:e}", r.mean),
            format!("{:e}", r.inf_norm),
            format!("{:e}", r.variance),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-node mean residual curves of both models. 1D grids give
/// `x,fno_abs_residual,comfno_abs_residual`; 2D grids give the long format
/// `model,x,y,abs_residual`.
pub fn write_curves_csv(path: &Path, grid: &Grid, fno: &[f64], comfno: &[f64]) -> Result<()> {
    if fno.len() != grid.len() || comfno.len() != grid.len() {
        return Err(invalid("curve length does not match the grid"));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    match grid {
        Grid::D1(m) => {
            w.write_record(["x", "fno_abs_residual", "comfno_abs_residual"]).map_err(csv_err)?;
            for ((x, a), b) in m.nodes().iter().zip(fno).zip(comfno) {
                w.write_record([x.to_string(), format!("{a:e}"), format!("{b:e}")]).map_err(csv_err)?;
            }
        }
        Grid::D2(m) => {
            w.write_record(["model", "x", "y", "abs_residual"]).map_err(csv_err)?;
            for (name, curve) in [("fno", fno), ("comfno", comfno)] {
                for (k, v) in curve.iter().enumerate() {
                    let (x, y) = m.point(k);
                    w.write_record([name.to_string(), x.to_string(), y.to_string(), format!("{v:e}")])
                        .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{uniform_mesh, Mesh2D};
    use proptest::prelude::*;

    fn pair(r: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (r.to_vec(), r.iter().map(|row| vec![0.0; row.len()]).collect())
    }

    #[test]
    fn hand_computed_case() {
        let (p, t) = pair(&[vec![1.0, 3.0], vec![2.0, 4.0]]);
        let r = residual_metrics(&p, &t).unwrap();
        assert_eq!((r.mean, r.inf_norm, r.variance), (2.5, 3.5, 1.0));
    }

    #[test]
    fn perfect_and_constant() {
        let u = vec![vec![0.3, -1.0, 2.0]; 4];
        let r = residual_metrics(&u, &u).unwrap();
        assert_eq!((r.mean, r.inf_norm, r.variance), (0.0, 0.0, 0.0));
        let (p, t) = pair(&[vec![0.25; 5], vec![0.25; 5]]);
        let r = residual_metrics(&p, &t).unwrap();
        assert_eq!((r.mean, r.inf_norm, r.variance), (0.25, 0.25, 0.0));
        assert!(residual_metrics(&p, &t[..1]).is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(sci2(5.0e-4), "5.0e-04");
        assert_eq!(sci2(1.67e-2), "1.7e-02");
        assert_eq!(sci2(0.0), "0.0e+00");
        let reports = vec![
            MetricsReport {
                experiment: "1d-plain".into(),
                model: "fno".into(),
                mean: 5e-4,
                inf_norm: 1e-3,
                variance: 1e-7,
                samples: 1,
                nodes: 1,
            },
            MetricsReport {
                experiment: "1d-plain".into(),
                model: "comfno".into(),
                mean: 1e-4,
                inf_norm: 2e-4,
                variance: 1e-9,
                samples: 1,
                nodes: 1,
            },
        ];
        let t = format_table(&reports);
        assert!(t.lines().nth(2).unwrap().contains("5.0e-04") && t.contains("1.0e-09"));
    }

    #[test]
    fn curve_exports() {
        let dir = tempfile::tempdir().unwrap();
        let m = uniform_mesh(200, 0.0, 1.0).unwrap();
        let p = dir.path().join("c.csv");
        write_curves_csv(&p, &m.clone().into(), &[0.0; 201], &[1.0; 201]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,fno_abs_residual,comfno_abs_residual");
        assert_eq!(text.lines().count(), 202);
        let m2 = uniform_mesh(50, 0.0, 1.0).unwrap();
        let g: Grid = Mesh2D::new(m2.clone(), m2).into();
        write_curves_csv(&p, &g, &[0.0; 2601], &[1.0; 2601]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("fno,")).count(), 2601);
        assert_eq!(text.lines().filter(|l| l.starts_with("comfno,")).count(), 2601);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..8, 1usize..14).prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(0.0f64..10.0, m), n))
    }

    proptest! {
        #[test]
        fn invariant_under_sample_and_node_permutation(r in matrix(), rot in 0usize..13) {
            let base = { let (p, t) = pair(&r); residual_metrics(&p, &t).unwrap() };
            let mut shuffled: Vec<Vec<f64>> = r.iter().rev().cloned().collect();
            for row in &mut shuffled {
                let k = rot % row.len();
                row.rotate_left(k);
            }
            let (p, t) = pair(&shuffled);
            let s = residual_metrics(&p, &t).unwrap();
            prop_assert!((s.mean - base.mean).abs() <= 1e-12 * (1.0 + base.mean));
            prop_assert!((s.variance - base.variance).abs() <= 1e-12 * (1.0 + base.variance));
            prop_assert!((s.inf_norm - base.inf_norm).abs() <= 1e-12 * (1.0 + base.inf_norm));
        }

        #[test]
        fn scaling_law(r in matrix(), lambda in 0.1f64..10.0) {
            let base = { let (p, t) = pair(&r); residual_metrics(&p, &t).unwrap() };
            let scaled: Vec<Vec<f64>> = r.iter().map(|row| row.iter().map(|v| v * lambda).collect()).collect();
            let (p, t) = pair(&scaled);
            let s = residual_metrics(&p, &t).unwrap();
            prop_assert!((s.mean - lambda * base.mean).abs() <= 1e-12 * (1.0 + s.mean));
            prop_assert!((s.inf_norm - lambda * base.inf_norm).abs() <= 1e-12 * (1.0 + s.inf_norm));
            prop_assert!((s.variance - lambda * lambda * base.variance).abs() <= 1e-10 * (1.0 + s.variance));
            prop_assert!(s.variance >= 0.0 && s.inf_norm >= s.mean);
        }
    }
}
