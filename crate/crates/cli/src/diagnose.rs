//! Per-triangle coefficient and operator diagnostics, and corrector decay.

use std::io::Write;

use anyhow::{Context, Result};
use lodlab_core::quasi_interp::{build_operator, estimate_qi3};
use lodlab_core::{classify_quasi_monotone, estimate_poincare, ElementCoefficient, LodProblem, MeshHierarchy};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::sweep::{coefficient, hierarchy};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRow {
    pub experiment: Experiment,
    pub operator: String,
    pub beta: f64,
    pub n_coarse: usize,
    pub triangle: Option<usize>,
    pub quasi_monotone: String,
    pub c_p: f64,
    pub qi3: f64,
    pub c_inv1: f64,
    pub c_inv2: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub experiment: Experiment,
    pub operator: String,
    pub beta: f64,
    pub n_coarse: usize,
    pub node: (usize, usize),
    pub k: usize,
    /// `‖a^{1/2}∇φ_z‖²` outside `ω_{z,k}`
    pub tail_energy: f64,
    pub relative_tail: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub triangles: Vec<TriangleRow>,
    pub decay: Vec<DecayRow>,
}

impl Diagnostics {
    pub fn failed_rows(&self) -> usize {
        self.triangles.iter().filter(|r| !r.reason.is_empty()).count()
            + self.decay.iter().filter(|r| !r.reason.is_empty()).count()
    }

    pub fn write_triangles<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "experiment",
            "operator",
            "beta",
            "n_H",
            "triangle",
            "quasi_monotone",
            "c_p",
            "qi3",
            "c_inv1",
            "c_inv2",
            "reason",
        ])?;
        for r in &self.triangles {
            w.write_record([
                r.experiment.to_string(),
                r.operator.clone(),
                r.beta.to_string(),
                r.n_coarse.to_string(),
                r.triangle.map_or_else(String::new, |t| t.to_string()),
                r.quasi_monotone.clone(),
                r.c_p.to_string(),
                r.qi3.to_string(),
                r.c_inv1.to_string(),
                r.c_inv2.to_string(),
                r.reason.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_decay<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "experiment",
            "operator",
            "beta",
            "n_H",
            "node_i",
            "node_j",
            "k",
            "tail_energy",
            "relative_tail",
            "reason",
        ])?;
        for r in &self.decay {
            w.write_record([
                r.experiment.to_string(),
                r.operator.clone(),
                r.beta.to_string(),
                r.n_coarse.to_string(),
                r.node.0.to_string(),
                r.node.1.to_string(),
                r.k.to_string(),
                r.tail_energy.to_string(),
                r.relative_tail.to_string(),
                r.reason.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Setup {
    beta: f64,
    hier: MeshHierarchy,
    coeff: ElementCoefficient,
}

fn setup(cfg: &ExperimentConfig, beta: f64, n_coarse: usize) -> Result<Setup> {
    let rc = coefficient(cfg, beta)?;
    let hier = hierarchy(&rc, n_coarse, cfg.fine)?;
    let coeff = ElementCoefficient::from_raster(&rc, &hier);
    let beta = if cfg.experiment == Experiment::Raster { rc.contrast() } else { beta };
    Ok(Setup { beta, hier, coeff })
}

fn triangle_rows(cfg: &ExperimentConfig, s: &Setup, n_coarse: usize) -> Vec<TriangleRow> {
    let nt = s.hier.coarse().num_triangles();
    let geometry: Vec<(String, f64, String)> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let kind = classify_quasi_monotone(&s.coeff, &s.hier, t, 1.0);
            let cp =
                s.hier.element_neighborhood(t).and_then(|p| estimate_poincare(&s.coeff, &s.hier, &p, cfg.poincare));
            match (kind, cp) {
                (Ok(k), Ok(c)) => (k.kind.to_string(), c.c_p, String::new()),
                (Err(e), _) | (_, Err(e)) => (String::new(), f64::NAN, e.to_string()),
            }
        })
        .collect();
    let mut rows = Vec::new();
    for &kind in &cfg.operators {
        let base = |triangle, reason: String| TriangleRow {
            experiment: cfg.experiment,
            operator: kind.to_string(),
            beta: s.beta,
            n_coarse,
            triangle,
            quasi_monotone: String::new(),
            c_p: f64::NAN,
            qi3: f64::NAN,
            c_inv1: f64::NAN,
            c_inv2: f64::NAN,
            reason,
        };
        let qi = build_operator(kind, &s.hier, &s.coeff).and_then(|op| estimate_qi3(&op, &s.hier, &s.coeff, None));
        match qi {
            Err(e) => rows.push(base(None, format!("QI3 estimate: {e}"))),
            Ok(q) => {
                for (i, &t) in q.triangles.iter().enumerate() {
                    let (qm, cp, reason) = geometry[t].clone();
                    rows.push(TriangleRow {
                        quasi_monotone: qm,
                        c_p: cp,
                        qi3: q.per_triangle[i],
                        c_inv1: q.c_inv1[i],
                        c_inv2: q.c_inv2[i],
                        ..base(Some(t), reason)
                    });
                }
            }
        }
    }
    rows
}

fn decay_rows(cfg: &ExperimentConfig, s: &Setup, n_coarse: usize) -> Vec<DecayRow> {
    let nodes = if cfg.decay_nodes.is_empty() { vec![(n_coarse / 2, n_coarse / 2)] } else { cfg.decay_nodes.clone() };
    let ks: Vec<usize> = (1..=cfg.decay_max_k).collect();
    let mut rows = Vec::new();
    for &kind in &cfg.operators {
        let op = build_operator(kind, &s.hier, &s.coeff);
        for &(i, j) in &nodes {
            let row = |k, tail_energy, relative_tail, reason| DecayRow {
                experiment: cfg.experiment,
                operator: kind.to_string(),
                beta: s.beta,
                n_coarse,
                node: (i, j),
                k,
                tail_energy,
                relative_tail,
                reason,
            };
            let profile = op.as_ref().map_err(|e| e.to_string()).and_then(|op| {
                if i > n_coarse || j > n_coarse {
                    return Err(format!("node {i}:{j} outside the {n_coarse}x{n_coarse} coarse grid"));
                }
                let lod = LodProblem::new(&s.hier, &s.coeff, op).map_err(|e| e.to_string())?;
                let z = s.hier.coarse().vertex_index(i, j);
                lod.decay_profile(z, &ks).map_err(|e| e.to_string())
            });
            match profile {
                Ok(p) => rows.extend(p.tails.iter().map(|&(k, t)| row(k, t, t / p.total_energy, String::new()))),
                Err(e) => rows.push(row(0, f64::NAN, f64::NAN, e)),
            }
        }
    }
    rows
}

pub fn diagnose(cfg: &ExperimentConfig) -> Result<Diagnostics> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().context("building thread pool")?;
    let betas = if cfg.experiment == Experiment::Raster { vec![f64::NAN] } else { cfg.betas.clone() };
    let mut out = Diagnostics::default();
    pool.install(|| {
        for &beta in &betas {
            for &n_coarse in &cfg.coarse {
                match setup(cfg, beta, n_coarse) {
                    Ok(s) => {
                        out.triangles.extend(triangle_rows(cfg, &s, n_coarse));
                        out.decay.extend(decay_rows(cfg, &s, n_coarse));
                    }
                    Err(e) => out.triangles.push(TriangleRow {
                        experiment: cfg.experiment,
                        operator: String::new(),
                        beta,
                        n_coarse,
                        triangle: None,
                        quasi_monotone: String::new(),
                        c_p: f64::NAN,
                        qi3: f64::NAN,
                        c_inv1: f64::NAN,
                        c_inv2: f64::NAN,
                        reason: format!("{e:#}"),
                    }),
                }
            }
        }
    });
    Ok(out)
}
