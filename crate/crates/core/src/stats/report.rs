//! Writes the report directory: one CSV per table and one JSON plot-data
//! file per figure.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::*;
use crate::harness::{accuracy, Evaluation};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no record sets to report on")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Buckets shown in the attractor figure; `3+` is tabulated but not plotted.
pub const PLOT_BUCKETS: [&str; 3] = ["0", "1", "2"];

pub const ERROR_ESTIMATOR: &str = "std/sqrt(n); n = scorers for model series, items for human series";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotSeries {
    pub name: String,
    pub means: Vec<Option<f64>>,
    pub std_errors: Vec<Option<f64>>,
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotData {
    pub figure: String,
    pub x: Vec<String>,
    pub series: Vec<PlotSeries>,
    pub error_estimator: String,
}

fn series_from(name: String, cells: &[AccuracyCell<f64>], n_of: impl Fn(&AccuracyCell<f64>) -> usize) -> PlotSeries {
    let mut s = PlotSeries { name, means: vec![], std_errors: vec![], n: vec![] };
    for b in PLOT_BUCKETS {
        match cells.iter().find(|c| c.key == b) {
            Some(c) => {
                let n = n_of(c);
                s.means.push(Some(c.mean));
                s.std_errors.push(Some(c.std / (n as f64).sqrt()));
                s.n.push(n);
            }
            None => {
                s.means.push(None);
                s.std_errors.push(None);
                s.n.push(0);
            }
        }
    }
    s
}

/// Accuracy by number of attractors, per kind, for models and (optionally)
/// humans. Only buckets 0, 1 and 2 are emitted.
pub fn attractor_plot_data(record_sets: &[&[EvalRecord]], judgments: Option<&[Judgment]>) -> PlotData {
    let mut series = Vec::new();
    for kind in [ItemKind::Original, ItemKind::Nonce] {
        let filtered: Vec<Vec<EvalRecord>> =
            record_sets.iter().map(|rs| rs.iter().filter(|r| r.kind == kind).cloned().collect()).collect();
        let refs: Vec<&[EvalRecord]> = filtered.iter().map(Vec::as_slice).collect();
        let cells: Vec<AccuracyCell<f64>> = accuracy_by(&refs, Grouping::Attractors);
        series.push(series_from(format!("model/{}", kind), &cells, |c| c.n_scorers));
    }
    if let Some(judgments) = judgments {
        let meta = item_meta(record_sets);
        for kind in [ItemKind::Original, ItemKind::Nonce] {
            let cells: Vec<AccuracyCell<f64>> = human_accuracy(judgments, |item| {
                meta.get(item).filter(|m| m.0 == kind).map(|m| attractor_bucket(m.1).to_owned())
            });
            series.push(series_from(format!("human/{}", kind), &cells, |c| c.n_items));
        }
    }
    PlotData {
        figure: "accuracy_by_attractors".into(),
        x: PLOT_BUCKETS.iter().map(|s| s.to_string()).collect(),
        series,
        error_estimator: ERROR_ESTIMATOR.into(),
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReportOptions {
    pub judgments: Option<Vec<Judgment>>,
    /// Control filler ids; every filler counts when absent.
    pub control_fillers: Option<HashSet<String>>,
    pub permutations: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScorerSummary {
    pub scorer: String,
    pub perplexity: Option<f64>,
    pub n_records: usize,
    pub n_errored: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Correlations {
    /// Pearson between validation perplexity and overall accuracy across
    /// scorers that report a perplexity.
    pub perplexity_accuracy: Option<Correlation<f64>>,
    pub human_model_original: Option<Correlation<f64>>,
    pub human_model_nonce: Option<Correlation<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub scorers: Vec<ScorerSummary>,
    pub std_estimator: String,
    pub correlations: Correlations,
    pub removed_subjects: Vec<String>,
    pub unchecked_subjects: Vec<String>,
    pub files: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, ReportError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|source| ReportError::Io { path, source })?;
        self.files.push(name.to_owned());
        Ok(BufWriter::new(f))
    }

    fn io<T>(&self, name: &str, r: io::Result<T>) -> Result<T, ReportError> {
        r.map_err(|source| ReportError::Io { path: self.dir.join(name), source })
    }

    fn cells(&mut self, name: &str, cells: &[AccuracyCell<f64>]) -> Result<(), ReportError> {
        let mut w = self.create(name)?;
        let r = (|| {
            writeln!(w, "group,mean,std,n_items,n_scorers")?;
            for c in cells {
                writeln!(w, "{},{},{},{},{}", csv_field(&c.key), c.mean, c.std, c.n_items, c.n_scorers)?;
            }
            w.flush()
        })();
        self.io(name, r)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        let mut w = self.create(name)?;
        let r = serde_json::to_writer_pretty(&mut w, value)
            .map_err(io::Error::from)
            .and_then(|_| writeln!(w))
            .and_then(|_| w.flush());
        self.io(name, r)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Writes all tables and figure data for a set of evaluations into `dir`.
pub fn write_report(
    dir: &Path,
    evaluations: &[Evaluation],
    opts: &ReportOptions,
) -> Result<ReportSummary, ReportError> {
    if evaluations.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_owned(), source })?;
    let mut out = Out { dir, files: Vec::new() };
    let sets: Vec<&[EvalRecord]> = evaluations.iter().map(|e| e.records.as_slice()).collect();

    for (grouping, name) in [
        (Grouping::Overall, "accuracy_overall.csv"),
        (Grouping::Kind, "accuracy_by_kind.csv"),
        (Grouping::Construction, "accuracy_by_construction.csv"),
        (Grouping::Attractors, "accuracy_by_attractors.csv"),
    ] {
        out.cells(name, &accuracy_by(&sets, grouping))?;
    }

    let scorers: Vec<ScorerSummary> = evaluations
        .iter()
        .map(|e| ScorerSummary {
            scorer: e.scorer.clone(),
            perplexity: e.perplexity,
            n_records: e.records.len(),
            n_errored: e.errored.len(),
            accuracy: accuracy(&e.records),
        })
        .collect();
    {
        let name = "per_scorer.csv";
        let mut w = out.create(name)?;
        let r = (|| {
            writeln!(w, "scorer,perplexity,accuracy,n_records,n_errored")?;
            for s in &scorers {
                let ppl = s.perplexity.map(|p| p.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{},{}", csv_field(&s.scorer), ppl, s.accuracy, s.n_records, s.n_errored)?;
            }
            w.flush()
        })();
        out.io(name, r)?;
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = scorers.iter().filter_map(|s| s.perplexity.map(|p| (p, s.accuracy))).unzip();
    let perplexity_accuracy = pearson_test(&xs, &ys, opts.permutations, opts.seed).ok();

    let mut correlations = Correlations { perplexity_accuracy, human_model_original: None, human_model_nonce: None };
    let mut summary_subjects = (Vec::new(), Vec::new());
    let mut kept_judgments = None;

    if let Some(judgments) = &opts.judgments {
        let filter = filter_subjects(judgments, opts.control_fillers.as_ref(), MAX_FILLER_ERROR_RATE);
        let meta = item_meta(&sets);
        let by_kind: Vec<AccuracyCell<f64>> =
            human_accuracy(&filter.kept, |i| meta.get(i).map(|m| m.0.as_str().to_owned()));
        out.cells("human_accuracy_by_kind.csv", &by_kind)?;
        let by_construction: Vec<AccuracyCell<f64>> =
            human_accuracy(&filter.kept, |i| meta.get(i).map(|m| format!("{}/{}", m.2, m.0)));
        out.cells("human_accuracy_by_construction.csv", &by_construction)?;

        match human_model_alignment::<f64>(&filter.kept, &sets, opts.permutations, opts.seed) {
            Ok(al) => {
                let name = "alignment.csv";
                let mut w = out.create(name)?;
                let r = (|| {
                    writeln!(w, "item_id,kind,human_margin,model_margin")?;
                    for row in &al.rows {
                        writeln!(
                            w,
                            "{},{},{},{}",
                            csv_field(&row.item_id),
                            row.kind,
                            row.human_margin,
                            row.model_margin
                        )?;
                    }
                    w.flush()
                })();
                out.io(name, r)?;
                correlations.human_model_original = al.original;
                correlations.human_model_nonce = al.nonce;
            }
            Err(StatsError::NoOverlap) => log::warn!("judgments share no items with the records; alignment skipped"),
            Err(e) => return Err(e.into()),
        }
        summary_subjects = (filter.removed_subjects.clone(), filter.unchecked_subjects.clone());
        kept_judgments = Some(filter.kept);
    }

    out.json("fig_attractors.json", &attractor_plot_data(&sets, kept_judgments.as_deref()))?;
    out.json("correlations.json", &correlations)?;

    let mut summary = ReportSummary {
        scorers,
        std_estimator: "population (divide by n) across scorers".into(),
        correlations,
        removed_subjects: summary_subjects.0,
        unchecked_subjects: summary_subjects.1,
        files: Vec::new(),
    };
    summary.files = out.files.clone();
    summary.files.push("report.json".into());
    out.json("report.json", &summary)?;
    Ok(summary)
}
