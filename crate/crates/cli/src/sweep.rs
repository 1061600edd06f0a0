//! Parameter sweeps over (operator, β, n_H, k).

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use lodlab_core::fem::solve_reference;
use lodlab_core::quasi_interp::build_operator;
use lodlab_core::{
    build_hierarchy, load_raster, make_blocks, make_channels, relative_energy_error, ElementCoefficient, KPolicy,
    LodProblem, MeshHierarchy, OperatorKind, RasterCoefficient, ReferenceSolution, Source,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: Experiment,
    pub operator: OperatorKind,
    pub beta: f64,
    pub n_coarse: usize,
    /// `None` for the global method
    pub k: Option<usize>,
    pub rel_energy_error: f64,
    pub coarse_dofs: usize,
    pub fine_dofs: usize,
    pub corrector_solves: usize,
    pub wall_time_s: f64,
    /// empty unless the row failed
    pub reason: String,
}

impl Row {
    pub fn h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn failed(&self) -> bool {
        !self.reason.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<Row>,
}

impl Report {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "experiment",
            "operator",
            "beta",
            "n_H",
            "H",
            "k",
            "rel_energy_error",
            "coarse_dofs",
            "fine_dofs",
            "corrector_solves",
            "wall_time_s",
            "reason",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.experiment.to_string(),
                r.operator.to_string(),
                r.beta.to_string(),
                r.n_coarse.to_string(),
                r.h().to_string(),
                r.k.map_or_else(|| "global".to_string(), |k| k.to_string()),
                r.rel_energy_error.to_string(),
                r.coarse_dofs.to_string(),
                r.fine_dofs.to_string(),
                r.corrector_solves.to_string(),
                format!("{:.3}", r.wall_time_s),
                r.reason.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coefficient of the configured experiment. For raster experiments `beta`
/// is ignored.
pub fn coefficient(cfg: &ExperimentConfig, beta: f64) -> Result<RasterCoefficient> {
    Ok(match cfg.experiment {
        Experiment::Blocks => make_blocks(beta)?,
        Experiment::Channels => make_channels(beta)?,
        Experiment::Raster => {
            let path = cfg.raster_path.as_ref().context("raster experiment without a raster path")?;
            load_raster(path).with_context(|| format!("loading raster {}", path.display()))?
        }
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Hierarchy whose ε-level resolves both the coefficient raster and the
/// coarse mesh.
pub fn hierarchy(coeff: &RasterCoefficient, n_coarse: usize, n_fine: usize) -> Result<MeshHierarchy> {
    anyhow::ensure!(coeff.nx() == coeff.ny(), "raster must be square, got {}x{}", coeff.nx(), coeff.ny());
    let n = coeff.nx();
    let n_eps = n / gcd(n, n_coarse) * n_coarse;
    build_hierarchy(n_coarse, n_eps, n_fine)
        .with_context(|| format!("n_H = {n_coarse}, raster {n}, n_h = {n_fine} are not nested"))
}

type RefKey = (u64, usize, String);

struct Cell {
    operator: OperatorKind,
    beta: f64,
    n_coarse: usize,
    policy: KPolicy,
}

fn betas(cfg: &ExperimentConfig) -> Vec<f64> {
    match cfg.experiment {
        // the raster fixes its own contrast; the row records it
        Experiment::Raster => vec![coefficient(cfg, 1.0).map_or(f64::NAN, |c| c.contrast())],
        _ => cfg.betas.clone(),
    }
}

fn reference(cfg: &ExperimentConfig, beta: f64) -> Result<ReferenceSolution> {
    let rc = coefficient(cfg, beta)?;
    let n_fine = cfg.fine;
    let h = hierarchy(&rc, 1, n_fine)?;
    let ec = ElementCoefficient::from_raster(&rc, &h);
    let source = Source::from_spec(&cfg.source).with_context(|| format!("loading source {}", cfg.source))?;
    Ok(solve_reference(&h, ec.fine(), &source)?)
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell, reference: &ReferenceSolution) -> Result<Row> {
    let start = Instant::now();
    let rc = coefficient(cfg, cell.beta)?;
    let h = hierarchy(&rc, cell.n_coarse, cfg.fine)?;
    let ec = ElementCoefficient::from_raster(&rc, &h);
    let op = build_operator(cell.operator, &h, &ec)?;
    let lod = LodProblem::new(&h, &ec, &op)?;
    let k = cell.policy.resolve(cell.n_coarse, rc.contrast());
    let basis = lod.basis(k, cfg.localization)?;
    let sol = lod.solve_coarse(&basis, &reference.load)?;
    let err = relative_energy_error(&reference.u, &sol.lifted, lod.stiffness())?;
    Ok(Row {
        experiment: cfg.experiment,
        operator: cell.operator,
        beta: cell.beta,
        n_coarse: cell.n_coarse,
        k,
        rel_energy_error: err,
        coarse_dofs: basis.nodes.len(),
        fine_dofs: lod.fine_dofs().len(),
        corrector_solves: basis.solves,
        wall_time_s: start.elapsed().as_secs_f64(),
        reason: String::new(),
    })
}

fn failed_row(cfg: &ExperimentConfig, cell: &Cell, reason: String) -> Row {
    let k = match cell.policy {
        KPolicy::Fixed(k) => Some(k),
        KPolicy::Global => None,
        p => p.resolve(cell.n_coarse, cell.beta),
    };
    Row {
        experiment: cfg.experiment,
        operator: cell.operator,
        beta: cell.beta,
        n_coarse: cell.n_coarse,
        k,
        rel_energy_error: f64::NAN,
        coarse_dofs: cell.n_coarse.saturating_sub(1).pow(2),
        fine_dofs: cfg.fine.saturating_sub(1).pow(2),
        corrector_solves: 0,
        wall_time_s: 0.0,
        reason,
    }
}

fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.operator
            .as_str()
            .cmp(b.operator.as_str())
            .then(a.beta.total_cmp(&b.beta))
            .then(a.n_coarse.cmp(&b.n_coarse))
            .then(a.k.unwrap_or(usize::MAX).cmp(&b.k.unwrap_or(usize::MAX)))
    });
}

/// Runs every cell of the sweep. Failures become rows with a reason.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let betas = betas(cfg);
    let key = |beta: f64| -> RefKey { (beta.to_bits(), cfg.fine, cfg.source.clone()) };

    let mut cells = Vec::new();
    for &operator in &cfg.operators {
        for &beta in &betas {
            for &n_coarse in &cfg.coarse {
                for policy in cfg.k.policies() {
                    cells.push(Cell { operator, beta, n_coarse, policy });
                }
            }
        }
    }

    let rows = pool.install(|| {
        let keys: Vec<f64> = {
            let mut seen = BTreeMap::new();
            for &b in &betas {
                seen.entry(key(b)).or_insert(b);
            }
            seen.into_values().collect()
        };
        let references: BTreeMap<RefKey, Result<Arc<ReferenceSolution>, String>> =
            keys.par_iter().map(|&b| (key(b), reference(cfg, b).map(Arc::new).map_err(|e| format!("{e:#}")))).collect();
        cells
            .par_iter()
            .map(|cell| match &references[&key(cell.beta)] {
                Err(e) => failed_row(cfg, cell, format!("reference solve: {e}")),
                Ok(r) => run_cell(cfg, cell, r).unwrap_or_else(|e| failed_row(cfg, cell, format!("{e:#}"))),
            })
            .collect::<Vec<_>>()
    });
    let mut report = Report { rows };
    sort_rows(&mut report.rows);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_hierarchies() {
        let rc = make_blocks(10.0).unwrap();
        assert_eq!(hierarchy(&rc, 4, 128).unwrap().eps_level().n(), 32);
        assert_eq!(hierarchy(&rc, 64, 128).unwrap().eps_level().n(), 64);
        assert!(hierarchy(&rc, 4, 48).is_err());
    }

    #[test]
    fn rows_sort_with_global_last() {
        let cfg = ExperimentConfig::default();
        let mk = |op, beta, n, k| failed_row(&cfg, &Cell { operator: op, beta, n_coarse: n, policy: k }, "x".into());
        let mut rows = vec![
            mk(OperatorKind::Proj, 1.0, 4, KPolicy::Global),
            mk(OperatorKind::Proj, 1.0, 4, KPolicy::Fixed(2)),
            mk(OperatorKind::AwProj, 1e6, 4, KPolicy::Fixed(1)),
            mk(OperatorKind::AwProj, 1.0, 8, KPolicy::Fixed(1)),
        ];
        sort_rows(&mut rows);
        let keys: Vec<_> = rows.iter().map(|r| (r.operator, r.beta, r.n_coarse, r.k)).collect();
        assert_eq!(
            keys,
            vec![
                (OperatorKind::AwProj, 1.0, 8, Some(1)),
                (OperatorKind::AwProj, 1e6, 4, Some(1)),
                (OperatorKind::Proj, 1.0, 4, Some(2)),
                (OperatorKind::Proj, 1.0, 4, None),
            ]
        );
    }
}
