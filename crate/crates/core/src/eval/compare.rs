//! Model comparison across datasets, input variants and split seeds.

use std::io::Write;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::{AucAverage, MetricsReport};
use super::split::{eval_fix_split, EvalFixSplit};
use crate::dataset::{DriftDataset, Samples};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Exec};
use crate::model::IclModel;
use crate::rng::stream;
use crate::stats::mean_ci95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// All pre-boundary rows as context, domain indices supplied.
    #[serde(rename = "all_w_ind")]
    AllWithIndex,
    /// All pre-boundary rows as context, domain indices replaced by a constant.
    #[serde(rename = "all_wo_ind")]
    AllWithoutIndex,
    /// Only rows of the boundary domain as context, constant domain index.
    #[serde(rename = "last_wo_ind")]
    LastWithoutIndex,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::AllWithIndex, Variant::AllWithoutIndex, Variant::LastWithoutIndex];

    pub fn name(self) -> &'static str {
        match self {
            Variant::AllWithIndex => "all_w_ind",
            Variant::AllWithoutIndex => "all_wo_ind",
            Variant::LastWithoutIndex => "last_wo_ind",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub seeds: Vec<u64>,
    pub ece_bins: usize,
    pub auc_average: AucAverage,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { seeds: vec![11, 22, 33], ece_bins: 10, auc_average: AucAverage::Macro }
    }
}

/// A model under evaluation. With `domain_as_feature` the domain index is
/// also appended as a plain feature column when indices are supplied.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub name: &'a str,
    pub model: &'a IclModel,
    pub domain_as_feature: bool,
}

/// Context and query rows for one variant of a split.
pub fn variant_inputs(ds: &DriftDataset, split: &EvalFixSplit, variant: Variant, domain_as_feature: bool) -> (Samples, Samples, Samples) {
    let ctx_rows: Vec<usize> = match variant {
        Variant::LastWithoutIndex => split.train.iter().copied().filter(|&r| ds.domains()[r] == split.boundary).collect(),
        _ => split.train.clone(),
    };
    let prepare = |rows: &[usize]| {
        let mut s = ds.select(rows);
        match variant {
            Variant::AllWithIndex if domain_as_feature => {
                let col = Array2::from_shape_vec((s.len(), 1), s.c.clone()).expect("column shape");
                s.x = concatenate(Axis(1), &[s.x.view(), col.view()]).expect("same row count");
            }
            Variant::AllWithIndex => {}
            Variant::AllWithoutIndex | Variant::LastWithoutIndex => s.c.iter_mut().for_each(|c| *c = 0.0),
        }
        s
    };
    (prepare(&ctx_rows), prepare(&split.id_test), prepare(&split.ood_test))
}

/// ID and OOD metrics of one model on one split variant.
pub fn evaluate_split(
    cand: &Candidate,
    ds: &DriftDataset,
    split: &EvalFixSplit,
    variant: Variant,
    opts: &EvalOptions,
) -> Result<(MetricsReport, MetricsReport)> {
    let (ctx, id, ood) = variant_inputs(ds, split, variant, cand.domain_as_feature);
    let score = |q: &Samples| -> Result<MetricsReport> {
        let probs = cand.model.predict_proba(&ctx, q.x.view(), &q.c)?;
        MetricsReport::compute(&q.y, probs.view(), opts.ece_bins, opts.auc_average)
    };
    Ok((score(&id)?, score(&ood)?))
}

/// The Eval-Fix split used for `dataset_index` under `seed`; shared by all
/// models and variants.
pub fn comparison_split(ds: &DriftDataset, dataset_index: usize, seed: u64) -> Result<EvalFixSplit> {
    eval_fix_split(ds, &mut stream(seed, &[dataset_index as u64]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    /// `<model>/<variant>`.
    pub variant: String,
    /// `id` or `ood`.
    pub split: String,
    pub metric: String,
    pub mean: f64,
    pub ci95: f64,
    pub n_seeds: usize,
}

pub const REPORT_HEADER: [&str; 7] = ["dataset", "variant", "split", "metric", "mean", "ci95", "n_seeds"];

/// Per-seed values behind one report row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellValues {
    pub dataset: String,
    pub model: String,
    pub variant: Variant,
    pub split: &'static str,
    pub metric: &'static str,
    pub values: Vec<f64>,
}

/// Evaluate every candidate on every dataset, variant and split seed.
pub fn run_comparison_cells(
    candidates: &[Candidate],
    datasets: &[(String, DriftDataset)],
    variants: &[Variant],
    opts: &EvalOptions,
    exec: Exec,
) -> Result<Vec<CellValues>> {
    if opts.seeds.is_empty() {
        return Err(Error::Config("at least one split seed is required".into()));
    }
    let splits: Vec<Vec<EvalFixSplit>> = datasets
        .iter()
        .enumerate()
        .map(|(i, (_, ds))| opts.seeds.iter().map(|&s| comparison_split(ds, i, s)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (di, _) in datasets.iter().enumerate() {
        for (ci, _) in candidates.iter().enumerate() {
            for &v in variants {
                for si in 0..opts.seeds.len() {
                    jobs.push((di, ci, v, si));
                }
            }
        }
    }
    let results = map_slice(&jobs, exec, |&(di, ci, v, si)| {
        evaluate_split(&candidates[ci], &datasets[di].1, &splits[di][si], v, opts)
    });
    let results: Vec<(MetricsReport, MetricsReport)> = results.into_iter().collect::<Result<_>>()?;
    let mut cells: Vec<CellValues> = Vec::new();
    let per = opts.seeds.len();
    for (chunk, job) in results.chunks(per).zip(jobs.chunks(per)) {
        let (di, ci, v, _) = job[0];
        for (split, pick) in [("id", 0usize), ("ood", 1)] {
            let reports: Vec<&MetricsReport> = chunk.iter().map(|r| if pick == 0 { &r.0 } else { &r.1 }).collect();
            for (mi, (metric, _)) in reports[0].entries().into_iter().enumerate() {
                let values: Vec<f64> = reports.iter().filter_map(|r| r.entries()[mi].1).collect();
                cells.push(CellValues {
                    dataset: datasets[di].0.clone(),
                    model: candidates[ci].name.to_string(),
                    variant: v,
                    split,
                    metric,
                    values,
                });
            }
        }
    }
    Ok(cells)
}

/// Aggregate cells into report rows (mean and 95% t-interval over seeds).
pub fn summarize(cells: &[CellValues]) -> Vec<ReportRow> {
    cells
        .iter()
        .map(|c| {
            let (mean, ci95) = mean_ci95(&c.values);
            ReportRow {
                dataset: c.dataset.clone(),
                variant: format!("{}/{}", c.model, c.variant.name()),
                split: c.split.to_string(),
                metric: c.metric.to_string(),
                mean,
                ci95,
                n_seeds: c.values.len(),
            }
        })
        .collect()
}

pub fn run_comparison(
    candidates: &[Candidate],
    datasets: &[(String, DriftDataset)],
    variants: &[Variant],
    opts: &EvalOptions,
    exec: Exec,
) -> Result<Vec<ReportRow>> {
    Ok(summarize(&run_comparison_cells(candidates, datasets, variants, opts, exec)?))
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.variant.clone(),
            r.split.clone(),
            r.metric.clone(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.ci95),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
