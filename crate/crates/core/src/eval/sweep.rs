use std::fmt::Write as _;
use std::time::Instant;

use crate::config::{run_training, RunConfig};
use crate::dataset::SkeletonDataset;
use crate::error::{Error, Result};
use crate::train::Hooks;

use super::{evaluate, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Lambda,
    Steps,
    TextGuidance,
    Strategy,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "T" | "steps" => Ok(Self::Steps),
            "text_guidance" => Ok(Self::TextGuidance),
            "strategy" => Ok(Self::Strategy),
            _ => Err(Error::config("axis", format!("unknown sweep axis `{s}`"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lambda => "lambda",
            Self::Steps => "T",
            Self::TextGuidance => "text_guidance",
            Self::Strategy => "strategy",
        })
    }
}

impl SweepAxis {
    /// The grid used when none is given.
    pub fn default_grid(self) -> Vec<String> {
        let g: &[&str] = match self {
            Self::Lambda => &["0.8", "0.075", "0.01", "0.002", "0.001"],
            Self::Steps => &["10", "20", "25", "30", "35", "40"],
            Self::TextGuidance => &["none", "fine", "coarse", "both"],
            Self::Strategy => &["pretrain_both", "neither", "diffusion_only"],
        };
        g.iter().map(|s| s.to_string()).collect()
    }

    /// Substitute `value` into `cfg`.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        match self {
            Self::Lambda => cfg.set("lambda", value),
            Self::Steps => cfg.set("T", value),
            Self::TextGuidance => cfg.set("text_guidance", value),
            Self::Strategy => {
                let (gcn, diff) = match value {
                    "pretrain_both" => (true, true),
                    "neither" => (false, false),
                    "diffusion_only" => (false, true),
                    "gcn_only" => (true, false),
                    _ => return Err(Error::config("strategy", format!("unknown strategy `{value}`"))),
                };
                cfg.train.pretrain_encoder = gcn;
                cfg.train.pretrain_diffusion = diff;
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<String>,
    pub seeds: Vec<u64>,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub seed: u64,
    pub outcome: std::result::Result<MetricReport, String>,
    pub wall_seconds: f64,
}

/// One full training run per grid value and seed, evaluated on `test`.
/// Failed cells become error rows.
pub fn run_sweep(spec: &SweepSpec, train: &SkeletonDataset, test: &SkeletonDataset) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.grid.len() * spec.seeds.len());
    for value in &spec.grid {
        for &seed in &spec.seeds {
            let start = Instant::now();
            let outcome = run_cell(spec, value, seed, train, test).map_err(|e| format!("{}: {e}", e.kind()));
            rows.push(SweepRow {
                axis: spec.axis,
                value: value.clone(),
                seed,
                outcome,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

fn run_cell(spec: &SweepSpec, value: &str, seed: u64, train: &SkeletonDataset, test: &SkeletonDataset) -> Result<MetricReport> {
    let mut cfg = spec.base.clone();
    let data_seed = cfg.data.seed;
    cfg.set_seed(seed);
    cfg.data.seed = data_seed;
    spec.axis.apply(&mut cfg, value)?;
    let ck = run_training(&cfg, train, None, false, None, &mut Hooks::default())?
        .ok_or_else(|| Error::Metric("run halted".into()))?;
    evaluate(&ck, test, cfg.div_options())
}

pub const SWEEP_HEADER: &str = "axis,value,seed,status,top1,top5,div,error";

/// Deterministic results table; wall times go to [`sweep_timing_csv`].
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(s, "{},{},{},ok,{:.8e},{:.8e},{:.8e},", r.axis, r.value, r.seed, m.top1, m.top5, m.div);
            }
            Err(e) => {
                let msg: String = e.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
                let _ = writeln!(s, "{},{},{},error,,,,{msg}", r.axis, r.value, r.seed);
            }
        }
    }
    s
}

pub fn sweep_timing_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,seed,wall_seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.3}", r.axis, r.value, r.seed, r.wall_seconds);
    }
    s
}
