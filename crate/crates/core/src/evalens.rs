//! Prediction sets, weighted ensembling and the MSE metric suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{write_file, Dataset, EngagementLevel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub modality: Option<String>,
    pub split: Option<String>,
    pub checkpoint: Option<String>,
}

/// Video-level predictions keyed by video id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

impl PredictionSet {
    pub fn new(predictions: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((id, _)) = predictions.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prediction for `{id}`")));
        }
        Ok(PredictionSet {
            predictions,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<f64> {
        self.predictions.get(video_id).copied()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.predictions.keys().map(String::as_str).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,prediction\n");
        for (id, p) in &self.predictions {
            let _ = writeln!(out, "{id},{p}");
        }
        out
    }
}

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<()> {
    write_file(path, set.to_csv().as_bytes())
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Csv { path: path.into(), source: e })?;
    if header.iter().collect::<Vec<_>>() != ["video_id", "prediction"] {
        return Err(Error::MalformedRow {
            path: path.into(),
            row: 0,
            reason: "header must be video_id,prediction".into(),
        });
    }
    let mut predictions = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv { path: path.into(), source: e })?;
        let value: f64 = record[1].parse().map_err(|_| Error::MalformedRow {
            path: path.into(),
            row: i + 1,
            reason: format!("bad prediction `{}`", &record[1]),
        })?;
        if predictions.insert(record[0].to_string(), value).is_some() {
            return Err(Error::DuplicateVideoId(record[0].to_string()));
        }
    }
    PredictionSet::new(predictions)
}

fn check_coverage(sets: &[PredictionSet]) -> Result<()> {
    let first = sets[0].ids();
    for other in &sets[1..] {
        let ids = other.ids();
        if ids != first {
            let diff = first
                .symmetric_difference(&ids)
                .map(|s| s.to_string())
                .collect();
            return Err(Error::CoverageMismatch(diff));
        }
    }
    Ok(())
}

/// Per-video weighted mean of prediction sets covering the same videos.
/// Uniform weights when `weights` is `None`.
pub fn ensemble(sets: &[PredictionSet], weights: Option<&[f64]>) -> Result<PredictionSet> {
    if sets.is_empty() {
        return Err(Error::Empty("prediction sets"));
    }
    check_coverage(sets)?;
    let uniform = vec![1.0; sets.len()];
    let weights = weights.unwrap_or(&uniform);
    if weights.len() != sets.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} prediction sets",
            weights.len(),
            sets.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidWeights("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidWeights("weights sum to zero".into()));
    }
    let predictions = sets[0]
        .predictions
        .keys()
        .map(|id| {
            let sum: f64 = sets
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w != 0.0)
                .map(|(s, w)| w * s.predictions[id])
                .sum();
            (id.clone(), sum / total)
        })
        .collect();
    PredictionSet::new(predictions)
}

/// Affine map sending the observed minimum to 0 and maximum to 1.
///
/// Returns the input unchanged when the range is below `1e-8`, and also
/// (with the flag set) when there are fewer than two predictions.
pub fn normalize_predictions(set: &PredictionSet) -> (PredictionSet, bool) {
    if set.len() < 2 {
        return (set.clone(), true);
    }
    let (lo, hi) = set
        .predictions
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-8 {
        return (set.clone(), false);
    }
    let mut out = set.clone();
    for v in out.predictions.values_mut() {
        *v = (*v - lo) / (hi - lo);
    }
    (out, false)
}

/// Overall, per-level and normalized MSE.
///
/// "Normalized MSE" here is the MSE after [`normalize_predictions`]; it
/// is this crate's own definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_mse: f64,
    /// NE, BE, E, SE; `None` where no video has that label.
    pub per_level_mse: [Option<f64>; 4],
    pub normalized_mse: f64,
    pub counts: [usize; 4],
    pub quantized: bool,
    pub normalized_mse_definition: String,
}

pub const NORMALIZED_MSE_DEFINITION: &str =
    "MSE after min-max rescaling of the prediction set to [0, 1]";

fn squared_errors(set: &PredictionSet, dataset: &Dataset, quantize: bool) -> Result<Vec<(EngagementLevel, f64)>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            let mut p = set
                .get(s.video_id())
                .ok_or_else(|| Error::MissingPrediction(s.video_id().to_string()))?;
            if quantize {
                p = EngagementLevel::nearest(p).value();
            }
            Ok((s.label(), (p - s.label().value()).powi(2)))
        })
        .collect()
}

/// Scores `predictions` against every video in `dataset`. Predictions for
/// videos outside the dataset are ignored.
pub fn evaluate(predictions: &PredictionSet, dataset: &Dataset, quantize: bool) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let errors = squared_errors(predictions, dataset, quantize)?;
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for (level, e) in &errors {
        sums[level.index()] += e;
        counts[level.index()] += 1;
    }
    let overall_mse = errors.iter().map(|(_, e)| e).sum::<f64>() / errors.len() as f64;
    let per_level_mse = std::array::from_fn(|l| (counts[l] > 0).then(|| sums[l] / counts[l] as f64));

    let covered = PredictionSet::new(
        dataset
            .samples()
            .iter()
            .map(|s| (s.video_id().to_string(), predictions.predictions[s.video_id()]))
            .collect(),
    )?;
    let (normalized, _) = normalize_predictions(&covered);
    let norm_errors = squared_errors(&normalized, dataset, quantize)?;
    let normalized_mse = norm_errors.iter().map(|(_, e)| e).sum::<f64>() / norm_errors.len() as f64;

    Ok(EvalReport {
        overall_mse,
        per_level_mse,
        normalized_mse,
        counts,
        quantized: quantize,
        normalized_mse_definition: NORMALIZED_MSE_DEFINITION.to_string(),
    })
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16}{:>12}{:>8}", "metric", "mse", "count");
        let _ = writeln!(
            out,
            "{:<16}{:>12.6}{:>8}",
            "overall",
            self.overall_mse,
            self.counts.iter().sum::<usize>()
        );
        for level in EngagementLevel::ALL {
            let i = level.index();
            let mse = self.per_level_mse[i].map_or("-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{:<16}{:>12}{:>8}", level.short_name(), mse, self.counts[i]);
        }
        let _ = writeln!(out, "{:<16}{:>12.6}", "normalized*", self.normalized_mse);
        let _ = writeln!(out, "* {}", self.normalized_mse_definition);
        out
    }
}

fn set_mse(set: &PredictionSet, labels: &BTreeMap<String, f64>) -> Result<f64> {
    let mut sum = 0.0;
    for (id, y) in labels {
        let p = set.get(id).ok_or_else(|| Error::MissingPrediction(id.clone()))?;
        sum += (p - y).powi(2);
    }
    Ok(sum / labels.len() as f64)
}

/// Whether the uniform ensemble's MSE is at most the mean member MSE
/// (plus `1e-12`). Convexity of the squared error makes this always hold.
pub fn jensen_check(sets: &[PredictionSet], labels: &BTreeMap<String, f64>) -> Result<bool> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let ens = ensemble(sets, None)?;
    let ens_mse = set_mse(&ens, labels)?;
    let mut member_sum = 0.0;
    for s in sets {
        member_sum += set_mse(s, labels)?;
    }
    Ok(ens_mse <= member_sum / sets.len() as f64 + 1e-12)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    json.push('\n');
    write_file(path, json.as_bytes())
}
