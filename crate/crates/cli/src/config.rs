//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use lodlab_core::{KPolicy, Localization, OperatorKind, PoincareVariant};

pub const DESK_FINE: usize = 128;
pub const FULL_FINE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Blocks,
    Channels,
    Raster,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Blocks => "blocks",
            Experiment::Channels => "channels",
            Experiment::Raster => "raster",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(Experiment::Blocks),
            "channels" => Ok(Experiment::Channels),
            "raster" => Ok(Experiment::Raster),
            other => bail!("unknown experiment `{other}` (expected blocks, channels or raster)"),
        }
    }
}

/// Corrector orders to sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum KSpec {
    Fixed(Vec<usize>),
    Policy(KPolicy),
}

impl KSpec {
    pub fn policies(&self) -> Vec<KPolicy> {
        match self {
            KSpec::Fixed(ks) => ks.iter().map(|&k| KPolicy::Fixed(k)).collect(),
            KSpec::Policy(p) => vec![*p],
        }
    }
}

impl FromStr for KSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            let ks: Vec<usize> = parse_list(s)?;
            if ks.is_empty() || ks.contains(&0) {
                bail!("fixed k values must be positive");
            }
            Ok(KSpec::Fixed(ks))
        } else {
            s.parse::<KPolicy>().map(KSpec::Policy).map_err(|e| anyhow!("{e}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub raster_path: Option<PathBuf>,
    pub operators: Vec<OperatorKind>,
    pub betas: Vec<f64>,
    pub coarse: Vec<usize>,
    pub fine: usize,
    pub k: KSpec,
    pub localization: Localization,
    /// `half-step`, `spe-corners` or a RASTER path
    pub source: String,
    pub out: Option<PathBuf>,
    pub workers: usize,
    /// coarse grid indices `(i, j)` for decay profiles
    pub decay_nodes: Vec<(usize, usize)>,
    pub decay_max_k: usize,
    pub poincare: PoincareVariant,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Blocks,
            raster_path: None,
            operators: OperatorKind::ALL.to_vec(),
            betas: vec![1.0, 1e3, 1e6],
            coarse: vec![4, 8, 16, 32],
            fine: DESK_FINE,
            k: KSpec::Policy(KPolicy::Tied),
            localization: Localization::Nodal,
            source: "half-step".into(),
            out: None,
            workers: 1,
            decay_nodes: Vec::new(),
            decay_max_k: 5,
            poincare: PoincareVariant::Mean,
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| anyhow!("bad list entry `{x}`: {e}")))
        .collect()
}

fn parse_node(s: &str) -> Result<(usize, usize)> {
    let (i, j) = s.split_once(':').ok_or_else(|| anyhow!("node `{s}` must be written i:j"))?;
    Ok((i.trim().parse()?, j.trim().parse()?))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        // relative paths are taken from the config's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.raster_path, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if !matches!(cfg.source.as_str(), "half-step" | "spe-corners") && Path::new(&cfg.source).is_relative() {
            cfg.source = base.join(&cfg.source).to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            cfg.set(key.trim(), value.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.parse()?,
            "raster" | "raster_path" => self.raster_path = Some(PathBuf::from(value)),
            "operator" | "operators" => self.operators = parse_list(value)?,
            "beta" => self.betas = parse_list(value)?,
            "n_H" | "nH" => self.coarse = parse_list(value)?,
            "n_h" | "nh" => self.fine = value.parse()?,
            "preset" => {
                self.fine = match value {
                    "desk" => DESK_FINE,
                    "full" => FULL_FINE,
                    other => bail!("unknown preset `{other}` (expected desk or full)"),
                }
            }
            "k" => self.k = value.parse()?,
            "localization" => self.localization = value.parse().map_err(|e| anyhow!("{e}"))?,
            "source" => self.source = value.to_string(),
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = value.parse()?,
            "decay_nodes" => {
                self.decay_nodes =
                    value.split(',').filter(|s| !s.trim().is_empty()).map(parse_node).collect::<Result<_>>()?
            }
            "decay_k" => self.decay_max_k = value.parse()?,
            "poincare" => {
                self.poincare = match value {
                    "mean" => PoincareVariant::Mean,
                    "friedrichs" => PoincareVariant::Friedrichs,
                    other => bail!("unknown Poincaré variant `{other}`"),
                }
            }
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            bail!("beta list is empty");
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            bail!("beta must be positive and finite, got {b}");
        }
        if self.operators.is_empty() {
            bail!("operator list is empty");
        }
        if self.coarse.is_empty() {
            bail!("n_H list is empty");
        }
        for &nc in &self.coarse {
            if nc == 0 || self.fine % nc != 0 {
                bail!("n_H = {nc} does not divide n_h = {}", self.fine);
            }
        }
        if self.experiment == Experiment::Raster && self.raster_path.is_none() {
            bail!("raster experiment needs `raster = <path>`");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# sweep\nexperiment = channels\noperator = clement, aw-proj\nbeta = 1, 1e3\nn_H = 4,8\nn_h = 64\nk = 1,2 # fixed\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Channels);
        assert_eq!(cfg.operators, vec![OperatorKind::Clement, OperatorKind::AwProj]);
        assert_eq!(cfg.betas, vec![1.0, 1e3]);
        assert_eq!(cfg.coarse, vec![4, 8]);
        assert_eq!(cfg.fine, 64);
        assert_eq!(cfg.k, KSpec::Fixed(vec![1, 2]));
    }

    #[test]
    fn k_policies() {
        assert_eq!("tied".parse::<KSpec>().unwrap(), KSpec::Policy(KPolicy::Tied));
        assert_eq!("theory".parse::<KSpec>().unwrap(), KSpec::Policy(KPolicy::Theory));
        assert_eq!("3".parse::<KSpec>().unwrap(), KSpec::Fixed(vec![3]));
        assert!("0".parse::<KSpec>().is_err());
        assert!("sometimes".parse::<KSpec>().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("beta =\n").is_err());
        assert!(ExperimentConfig::parse("n_H = 3\n").is_err());
        assert!(ExperimentConfig::parse("experiment = raster\n").is_err());
        assert!(ExperimentConfig::parse("colour = blue\n").is_err());
        assert!(ExperimentConfig::parse("beta 1\n").is_err());
        assert!(ExperimentConfig::parse("operator = nearest\n").is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(ExperimentConfig::parse("").unwrap().fine, DESK_FINE);
        assert_eq!(ExperimentConfig::parse("preset = full\n").unwrap().fine, FULL_FINE);
    }

    #[test]
    fn decay_nodes() {
        let cfg = ExperimentConfig::parse("decay_nodes = 1:2, 4:4\n").unwrap();
        assert_eq!(cfg.decay_nodes, vec![(1, 2), (4, 4)]);
        assert!(ExperimentConfig::parse("decay_nodes = 12\n").is_err());
    }
}
