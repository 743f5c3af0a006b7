//! Regression and ranked-center objectives.
//!
//! The ranked-center loss keeps one center per engagement level in the
//! embedding space and asks that centers two levels apart sit at least
//! `delta` farther from each other than adjacent ones, and the two extreme
//! centers at least `2 * delta` farther. A standard center loss pulls each
//! embedding toward its level's center.

use serde::{Deserialize, Serialize};

use crate::data::EngagementLevel;
use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Mean squared error and its gradient w.r.t. the predictions.
pub fn mse_loss(predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("mse batch"));
    }
    let n = predictions.len() as f64;
    let loss = predictions
        .iter()
        .zip(labels)
        .map(|(r, y)| (y - r).powi(2))
        .sum::<f64>()
        / n;
    let grad = predictions
        .iter()
        .zip(labels)
        .map(|(r, y)| 2.0 * (r - y) / n)
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub delta: f64,
    pub lambda_crl: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            delta: DEFAULT_DELTA,
            lambda_crl: DEFAULT_LAMBDA,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta", "must be positive"));
        }
        if !(self.lambda_crl.is_finite() && self.lambda_crl >= 0.0) {
            return Err(Error::config("lambda_crl", "must be non-negative"));
        }
        Ok(())
    }
}

/// One center per engagement level, updated by a moving average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterBank {
    pub centers: [Vec<f64>; 4],
    pub alpha: f64,
}

impl CenterBank {
    /// Zero centers of dimension `dim`.
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1]"));
        }
        Ok(CenterBank {
            centers: std::array::from_fn(|_| vec![0.0; dim]),
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn center(&self, level: EngagementLevel) -> &[f64] {
        &self.centers[level.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.centers.iter().any(|c| c.len() != dim) {
            return Err(Error::config("center_bank", "centers differ in dimension"));
        }
        if self.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("center bank".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Moves each level's center toward the embeddings of that level in
    /// the batch: `C_j -= alpha * sum_i (C_j - e_i) / (1 + n_j)`. Levels with
    /// no sample in the batch stay put.
    pub fn update(&mut self, embeddings: &[Vec<f64>], labels: &[EngagementLevel]) -> Result<()> {
        check_batch(embeddings, labels, self.dim())?;
        for level in EngagementLevel::ALL {
            let j = level.index();
            let mut diff = vec![0.0; self.dim()];
            let mut count = 0usize;
            for (e, l) in embeddings.iter().zip(labels) {
                if *l == level {
                    count += 1;
                    for ((d, c), x) in diff.iter_mut().zip(&self.centers[j]).zip(e) {
                        *d += c - x;
                    }
                }
            }
            if count == 0 {
                continue;
            }
            let step = self.alpha / (1.0 + count as f64);
            for (c, d) in self.centers[j].iter_mut().zip(&diff) {
                *c -= step * d;
            }
        }
        Ok(())
    }
}

/// Functional form of [`CenterBank::update`].
pub fn update_centers(
    bank: &CenterBank,
    embeddings: &[Vec<f64>],
    labels: &[EngagementLevel],
) -> Result<CenterBank> {
    let mut next = bank.clone();
    next.update(embeddings, labels)?;
    Ok(next)
}

fn check_batch(embeddings: &[Vec<f64>], labels: &[EngagementLevel], dim: usize) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::Empty("embedding batch"));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: embeddings.len(),
            right: labels.len(),
        });
    }
    if let Some(bad) = embeddings.iter().find(|e| e.len() != dim) {
        return Err(Error::LengthMismatch {
            left: dim,
            right: bad.len(),
        });
    }
    Ok(())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Distances between level centers one, two and three levels apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterDistances {
    pub d1: [f64; 3],
    pub d2: [f64; 2],
    pub d3: [f64; 1],
}

impl CenterDistances {
    pub fn mean_d1(&self) -> f64 {
        self.d1.iter().sum::<f64>() / 3.0
    }

    pub fn mean_d2(&self) -> f64 {
        self.d2.iter().sum::<f64>() / 2.0
    }

    pub fn mean_d3(&self) -> f64 {
        self.d3[0]
    }
}

pub fn center_distances(bank: &CenterBank) -> CenterDistances {
    let c = &bank.centers;
    CenterDistances {
        d1: std::array::from_fn(|i| distance(&c[i], &c[i + 1])),
        d2: std::array::from_fn(|i| distance(&c[i], &c[i + 2])),
        d3: [distance(&c[0], &c[3])],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankLosses {
    pub rank1: f64,
    pub rank2: f64,
    /// Gradient of `rank1 + rank2` w.r.t. each center.
    pub center_grads: [Vec<f64>; 4],
}

/// Adds `scale * d||C_a - C_b|| / dC` into the gradients of both centers.
/// The norm's subgradient at coincidence is taken as zero.
fn add_distance_grad(grads: &mut [Vec<f64>; 4], bank: &CenterBank, a: usize, b: usize, scale: f64) {
    let dist = distance(&bank.centers[a], &bank.centers[b]);
    if dist == 0.0 {
        return;
    }
    for p in 0..bank.dim() {
        let u = (bank.centers[a][p] - bank.centers[b][p]) / dist;
        grads[a][p] += scale * u;
        grads[b][p] -= scale * u;
    }
}

/// The two margin-ranking hinge sums over center distances.
///
/// `rank1 = sum_{i<2, j<3} max(0, delta - (d2_i - d1_j))` and
/// `rank2 = sum_{j<3} max(0, 2 delta - (d3_0 - d1_j))`. Hinges sitting
/// exactly at zero contribute no gradient.
pub fn rank_losses(bank: &CenterBank, delta: f64) -> RankLosses {
    let dist = center_distances(bank);
    let mut grads: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; bank.dim()]);
    let mut rank1 = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            let arg = delta - (dist.d2[i] - dist.d1[j]);
            if arg > 0.0 {
                rank1 += arg;
                add_distance_grad(&mut grads, bank, i, i + 2, -1.0);
                add_distance_grad(&mut grads, bank, j, j + 1, 1.0);
            }
        }
    }
    let mut rank2 = 0.0;
    for j in 0..3 {
        let arg = 2.0 * delta - (dist.d3[0] - dist.d1[j]);
        if arg > 0.0 {
            rank2 += arg;
            add_distance_grad(&mut grads, bank, 0, 3, -1.0);
            add_distance_grad(&mut grads, bank, j, j + 1, 1.0);
        }
    }
    RankLosses {
        rank1,
        rank2,
        center_grads: grads,
    }
}

/// `sum_i ||e_i - C_{y_i}||^2 / (2 n)` and its gradient w.r.t. each embedding.
pub fn center_loss(
    embeddings: &[Vec<f64>],
    labels: &[EngagementLevel],
    bank: &CenterBank,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_batch(embeddings, labels, bank.dim())?;
    let n = embeddings.len() as f64;
    let mut loss = 0.0;
    let grads = embeddings
        .iter()
        .zip(labels)
        .map(|(e, l)| {
            let c = bank.center(*l);
            e.iter()
                .zip(c)
                .map(|(x, y)| {
                    loss += (x - y).powi(2);
                    (x - y) / n
                })
                .collect()
        })
        .collect();
    Ok((loss / (2.0 * n), grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlLoss {
    pub center: f64,
    pub rank1: f64,
    pub rank2: f64,
    pub d_embeddings: Vec<Vec<f64>>,
    /// Rank-term gradients w.r.t. the centers; diagnostic only, the bank
    /// moves through [`CenterBank::update`].
    pub d_centers: [Vec<f64>; 4],
}

impl CrlLoss {
    pub fn total(&self) -> f64 {
        self.center + self.rank1 + self.rank2
    }
}

/// Center loss plus both rank hinges.
pub fn crl_loss(
    embeddings: &[Vec<f64>],
    labels: &[EngagementLevel],
    bank: &CenterBank,
    delta: f64,
) -> Result<CrlLoss> {
    let (center, d_embeddings) = center_loss(embeddings, labels, bank)?;
    let rank = rank_losses(bank, delta);
    Ok(CrlLoss {
        center,
        rank1: rank.rank1,
        rank2: rank.rank2,
        d_embeddings,
        d_centers: rank.center_grads,
    })
}

pub fn total_loss(mse: f64, crl: f64, lambda: f64) -> f64 {
    mse + lambda * crl
}
