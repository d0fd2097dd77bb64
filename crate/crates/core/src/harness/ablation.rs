use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::train;
use crate::error::Result;
use crate::nets::Metric;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `K = 0`: no auxiliary task at all.
    BaselineWithoutPred,
    /// Forward prediction only.
    Baseline,
    /// Forward prediction plus a backward model trained on real segments.
    BaselineBdm,
    /// Prediction and cycle consistency over virtual trajectories.
    PlayVirtual,
    /// As [`Variant::PlayVirtual`] but the cycle loss leaves the forward
    /// model untouched.
    PlayVirtualNd,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaselineWithoutPred,
        Variant::Baseline,
        Variant::BaselineBdm,
        Variant::PlayVirtual,
        Variant::PlayVirtualNd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaselineWithoutPred => "baseline-w/o-pred",
            Variant::Baseline => "baseline",
            Variant::BaselineBdm => "baseline+bdm",
            Variant::PlayVirtual => "playvirtual",
            Variant::PlayVirtualNd => "playvirtual-nd",
        }
    }

    /// Applies the variant on top of `base`, keeping its `K`, `M`, weights
    /// and metric otherwise.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.backward_prediction = false;
        cfg.aux.nd_mode = false;
        match self {
            Variant::BaselineWithoutPred => cfg.aux.k = 0,
            Variant::Baseline => cfg.aux.lambda_cyc = 0.0,
            Variant::BaselineBdm => {
                cfg.aux.lambda_cyc = 0.0;
                cfg.backward_prediction = true;
            }
            Variant::PlayVirtual => {}
            Variant::PlayVirtualNd => cfg.aux.nd_mode = true,
        }
        cfg
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    /// `K` over {0, 3, 6, 9, 12} for baseline and playvirtual.
    K,
    /// `M` over {1, 2, 5, 10, 20} for playvirtual.
    M,
    Variant,
    Metric,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "k" => Ok(Sweep::K),
            "m" => Ok(Sweep::M),
            "variant" => Ok(Sweep::Variant),
            "metric" => Ok(Sweep::Metric),
            other => Err(format!("unknown sweep '{other}' (expected k|m|variant|metric)")),
        }
    }
}

/// One labelled configuration of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub label: String,
    pub variant: Variant,
    pub config: RunConfig,
}

impl Sweep {
    pub fn settings(self, base: &RunConfig) -> Vec<Setting> {
        let setting = |variant: Variant, cfg: RunConfig| {
            let config = variant.apply(&cfg);
            let name = variant.name().replace("w/o", "wo").replace('+', "-");
            Setting {
                label: format!(
                    "{name}-k{}-m{}-{}",
                    config.aux.k,
                    config.aux.m,
                    metric_name(config.aux.metric)
                ),
                variant,
                config,
            }
        };
        match self {
            Sweep::K => [0, 3, 6, 9, 12]
                .into_iter()
                .flat_map(|k| {
                    let mut cfg = base.clone();
                    cfg.aux.k = k;
                    [Variant::Baseline, Variant::PlayVirtual].map(|v| setting(v, cfg.clone()))
                })
                .collect(),
            Sweep::M => [1, 2, 5, 10, 20]
                .into_iter()
                .map(|m| {
                    let mut cfg = base.clone();
                    cfg.aux.m = m;
                    setting(Variant::PlayVirtual, cfg)
                })
                .collect(),
            Sweep::Variant => Variant::ALL.into_iter().map(|v| setting(v, base.clone())).collect(),
            Sweep::Metric => [Metric::Projection, Metric::Latent]
                .into_iter()
                .map(|metric| {
                    let mut cfg = base.clone();
                    cfg.aux.metric = metric;
                    setting(Variant::PlayVirtual, cfg)
                })
                .collect(),
        }
    }
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Projection => "projection",
        Metric::Latent => "latent",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    pub k: usize,
    pub m: usize,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    /// Final greedy eval return per seed, in `seeds` order.
    pub final_returns: Vec<f64>,
    pub aucs: Vec<f64>,
    pub median_final: f64,
    pub median_auc: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Trains every (setting, seed) pair, in parallel when cores allow, and
/// aggregates medians over seeds. Each run writes into
/// `out_dir/<label>/seed<s>/` and the table goes to `out_dir/results.csv`.
pub fn ablation_run<R: Real>(settings: &[Setting], seeds: &[u64], out_dir: Option<&Path>) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(usize, u64)> = settings
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let mut cfg = settings[i].config.clone();
            cfg.seed = seed;
            let dir = out_dir.map(|d| d.join(&settings[i].label).join(format!("seed{seed}")));
            let out = train::<R>(&cfg, dir.as_deref())?;
            Ok((out.final_eval.mean, out.area_under_curve()))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<AblationRow> = settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let runs = &results[i * seeds.len()..(i + 1) * seeds.len()];
            let final_returns: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let aucs: Vec<f64> = runs.iter().map(|r| r.1).collect();
            AblationRow {
                label: s.label.clone(),
                variant: s.variant,
                k: s.config.aux.k,
                m: s.config.aux.m,
                metric: s.config.aux.metric,
                seeds: seeds.to_vec(),
                median_final: median(&final_returns),
                median_auc: median(&aucs),
                final_returns,
                aucs,
            }
        })
        .collect();

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
        w.write_record([
            "label",
            "variant",
            "k",
            "m",
            "metric",
            "seeds",
            "median_final",
            "median_auc",
        ])?;
        for r in &rows {
            w.write_record([
                r.label.clone(),
                r.variant.name().to_string(),
                r.k.to_string(),
                r.m.to_string(),
                metric_name(r.metric).to_string(),
                r.seeds.len().to_string(),
                r.median_final.to_string(),
                r.median_auc.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(rows)
}
