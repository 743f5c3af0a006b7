//! Subject-independent train/validation splits, bootstrap resampling and
//! empirical level distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_file, Dataset, EngagementLevel};
use crate::error::{Error, Result};
use crate::numcore::seeded_rng;

/// Official train:validation video ratio, 147:48.
pub const OFFICIAL_RATIO: f64 = 147.0 / 195.0;
pub const DEFAULT_SPLITS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub name: String,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
}

impl SplitSpec {
    /// Checks disjointness, membership and subject independence.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if let Some(id) = self.train_ids.intersection(&self.val_ids).next() {
            return Err(Error::config(
                "split",
                format!("video `{id}` appears on both sides of {}", self.name),
            ));
        }
        let subjects = |ids: &BTreeSet<String>| -> Result<BTreeSet<String>> {
            ids.iter()
                .map(|id| {
                    dataset
                        .get(id)
                        .map(|s| s.subject_id().to_string())
                        .ok_or_else(|| Error::UnknownVideo(id.clone()))
                })
                .collect()
        };
        let train = subjects(&self.train_ids)?;
        let val = subjects(&self.val_ids)?;
        if let Some(s) = train.intersection(&val).next() {
            return Err(Error::config(
                "split",
                format!("subject `{s}` appears on both sides of {}", self.name),
            ));
        }
        Ok(())
    }

    pub fn train_fraction(&self) -> f64 {
        let n = self.train_ids.len() + self.val_ids.len();
        self.train_ids.len() as f64 / n as f64
    }
}

pub fn write_split(spec: &SplitSpec, path: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(spec).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    json.push('\n');
    write_file(path, json.as_bytes())
}

pub fn read_split(path: &Path) -> Result<SplitSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOptions {
    pub n_splits: usize,
    /// Target fraction of videos on the training side.
    pub ratio: f64,
    pub seed: u64,
    /// Videos whose subjects must land on the training side.
    pub must_train_ids: BTreeSet<String>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            n_splits: DEFAULT_SPLITS,
            ratio: OFFICIAL_RATIO,
            seed: 0,
            must_train_ids: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct SubjectGroup {
    ids: Vec<String>,
    levels: [usize; 4],
}

impl SubjectGroup {
    fn size(&self) -> usize {
        self.ids.len()
    }
}

fn group_subjects(dataset: &Dataset) -> Vec<SubjectGroup> {
    let mut groups: BTreeMap<&str, SubjectGroup> = BTreeMap::new();
    for s in dataset.samples() {
        let g = groups.entry(s.subject_id()).or_insert_with(|| SubjectGroup {
            ids: Vec::new(),
            levels: [0; 4],
        });
        g.ids.push(s.video_id().to_string());
        g.levels[s.label().index()] += 1;
    }
    groups.into_values().collect()
}

/// Train size closest to `target` reachable by a subject subset that
/// contains every forced subject and leaves both sides non-empty.
fn closest_achievable(sizes: &[usize], forced: &[bool], target: f64) -> Option<usize> {
    let n: usize = sizes.iter().sum();
    let base: usize = sizes.iter().zip(forced).filter(|(_, f)| **f).map(|(s, _)| s).sum();
    let mut reach = vec![false; n + 1];
    reach[base] = true;
    for (s, f) in sizes.iter().zip(forced) {
        if *f {
            continue;
        }
        for t in (0..=n - s).rev() {
            if reach[t] {
                reach[t + s] = true;
            }
        }
    }
    (1..n)
        .filter(|&t| reach[t])
        .min_by(|a, b| {
            let da = (*a as f64 - target).abs();
            let db = (*b as f64 - target).abs();
            da.total_cmp(&db).then(a.cmp(b))
        })
}

fn greedy_split(groups: &[SubjectGroup], forced: &[bool], target: f64, seed: u64) -> Vec<bool> {
    let mut rng = seeded_rng(seed);
    let mut in_train = forced.to_vec();
    let mut train_size: usize = groups.iter().zip(forced).filter(|(_, f)| **f).map(|(g, _)| g.size()).sum();
    let mut train_levels = [0usize; 4];
    for (g, _) in groups.iter().zip(forced).filter(|(_, f)| **f) {
        for l in 0..4 {
            train_levels[l] += g.levels[l];
        }
    }

    // shuffled, then largest first
    let mut remaining: Vec<usize> = (0..groups.len()).filter(|&i| !forced[i]).collect();
    remaining.shuffle(&mut rng);
    remaining.sort_by(|a, b| groups[*b].size().cmp(&groups[*a].size()));
    let mut level_order = [0usize, 1, 2, 3];
    level_order.shuffle(&mut rng);

    while (train_size as f64) < target && remaining.len() > 1 {
        let gap = target - train_size as f64;
        let candidates: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| (train_size as f64 + groups[i].size() as f64 - target).abs() < gap)
            .collect();
        if candidates.is_empty() {
            break;
        }
        // level lagging furthest behind its even share of the target
        let share = target / 4.0;
        let lagging = *level_order
            .iter()
            .max_by(|a, b| {
                let da = share - train_levels[**a] as f64;
                let db = share - train_levels[**b] as f64;
                da.total_cmp(&db).then(b.cmp(a))
            })
            .expect("four levels");
        let pick = *candidates
            .iter()
            .rev()
            .max_by_key(|&&i| groups[i].levels[lagging])
            .expect("non-empty candidates");
        remaining.retain(|&i| i != pick);
        in_train[pick] = true;
        train_size += groups[pick].size();
        for l in 0..4 {
            train_levels[l] += groups[pick].levels[l];
        }
    }
    if train_size == 0 {
        if let Some(&smallest) = remaining.iter().min_by_key(|&&i| groups[i].size()) {
            in_train[smallest] = true;
        }
    }
    in_train
}

/// Generates `n_splits` subject-disjoint splits with training fraction near
/// `ratio`, balancing engagement levels on the training side greedily.
pub fn make_splits(dataset: &Dataset, options: &SplitOptions) -> Result<Vec<SplitSpec>> {
    if !(options.ratio > 0.0 && options.ratio < 1.0) {
        return Err(Error::config("ratio", "must lie strictly between 0 and 1"));
    }
    if options.n_splits == 0 {
        return Err(Error::config("n_splits", "must be at least 1"));
    }
    let groups = group_subjects(dataset);
    if groups.len() < 2 {
        return Err(Error::config("dataset", "needs at least two subjects"));
    }
    for id in &options.must_train_ids {
        if dataset.get(id).is_none() {
            return Err(Error::UnknownVideo(id.clone()));
        }
    }
    let forced: Vec<bool> = groups
        .iter()
        .map(|g| g.ids.iter().any(|id| options.must_train_ids.contains(id)))
        .collect();

    let n = dataset.len();
    let target = options.ratio * n as f64;
    let sizes: Vec<usize> = groups.iter().map(SubjectGroup::size).collect();
    let mean_size = n as f64 / groups.len() as f64;
    let closest = closest_achievable(&sizes, &forced, target);
    match closest {
        Some(c) if (c as f64 - target).abs() <= mean_size / 2.0 => {}
        other => {
            return Err(Error::InfeasibleRatio {
                ratio: options.ratio,
                closest: other.unwrap_or(0) as f64 / n as f64,
            })
        }
    }

    let mut specs: Vec<SplitSpec> = Vec::with_capacity(options.n_splits);
    for s in 0..options.n_splits {
        let mut attempt = 0u64;
        let spec = loop {
            let seed = options
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((s as u64) << 16)
                .wrapping_add(attempt);
            let in_train = greedy_split(&groups, &forced, target, seed);
            let mut spec = SplitSpec {
                name: format!("split_{}", s + 1),
                train_ids: BTreeSet::new(),
                val_ids: BTreeSet::new(),
            };
            for (g, t) in groups.iter().zip(&in_train) {
                let side = if *t { &mut spec.train_ids } else { &mut spec.val_ids };
                side.extend(g.ids.iter().cloned());
            }
            let duplicate = specs
                .iter()
                .any(|p| p.train_ids == spec.train_ids);
            attempt += 1;
            if !duplicate || attempt >= 32 {
                break spec;
            }
        };
        specs.push(spec);
    }
    Ok(specs)
}

/// Draws `train_ids.len()` ids uniformly with replacement.
pub fn bootstrap_resample(train_ids: &[String], seed: u64) -> Result<Vec<String>> {
    if train_ids.is_empty() {
        return Err(Error::Empty("bootstrap input"));
    }
    let mut rng = seeded_rng(seed);
    Ok((0..train_ids.len())
        .map(|_| train_ids[rng.random_range(0..train_ids.len())].clone())
        .collect())
}

/// Proportion of each engagement level, counting multiplicity.
pub fn empirical_level_distribution<I>(levels: I) -> Result<[f64; 4]>
where
    I: IntoIterator<Item = EngagementLevel>,
{
    let mut counts = [0usize; 4];
    for l in levels {
        counts[l.index()] += 1;
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::Empty("level distribution input"));
    }
    Ok(counts.map(|c| c as f64 / n as f64))
}

/// Level distribution of the listed ids (a set or bootstrap multiset).
pub fn id_level_distribution<'a, I>(dataset: &Dataset, ids: I) -> Result<[f64; 4]>
where
    I: IntoIterator<Item = &'a str>,
{
    let samples = dataset.select(ids)?;
    empirical_level_distribution(samples.iter().map(|s| s.label()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    fn ds(subjects: usize, per: usize, seed: u64) -> Dataset {
        synth_generate(
            &SynthConfig {
                n_subjects: subjects,
                videos_per_subject: per,
                k: 2,
                frame_rate_hint: 2.0,
                noise_scale: 0.1,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn two_subjects_half() {
        let d = ds(2, 4, 1);
        let specs = make_splits(
            &d,
            &SplitOptions {
                n_splits: 1,
                ratio: 0.5,
                ..SplitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(specs[0].train_ids.len(), 4);
        assert_eq!(specs[0].val_ids.len(), 4);
        specs[0].validate(&d).unwrap();
    }

    #[test]
    fn infeasible_ratio_reports_closest() {
        let d = ds(3, 5, 2);
        let err = make_splits(
            &d,
            &SplitOptions {
                ratio: 0.99,
                ..SplitOptions::default()
            },
        )
        .unwrap_err();
        match err {
            Error::InfeasibleRatio { closest, .. } => assert!((closest - 10.0 / 15.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(err_msg_contains(&d, 0.99, "0.6667"));
    }

    fn err_msg_contains(d: &Dataset, ratio: f64, needle: &str) -> bool {
        let opts = SplitOptions {
            ratio,
            ..SplitOptions::default()
        };
        make_splits(d, &opts).unwrap_err().to_string().contains(needle)
    }

    #[test]
    fn must_train_subjects_stay_in_train() {
        let d = ds(8, 5, 3);
        let forced: BTreeSet<String> = ["s002_v000".to_string(), "s005_v003".to_string()].into();
        let specs = make_splits(
            &d,
            &SplitOptions {
                must_train_ids: forced.clone(),
                ..SplitOptions::default()
            },
        )
        .unwrap();
        for s in &specs {
            for subj in ["s002", "s005"] {
                assert!(s.train_ids.iter().filter(|id| id.starts_with(subj)).count() == 5);
            }
        }
    }

    #[test]
    fn bootstrap_basics() {
        let one = vec!["a".to_string()];
        assert_eq!(bootstrap_resample(&one, 4).unwrap(), one);
        assert!(bootstrap_resample(&[], 4).is_err());
        let ids: Vec<String> = (0..50).map(|i| format!("v{i}")).collect();
        assert_eq!(bootstrap_resample(&ids, 9).unwrap(), bootstrap_resample(&ids, 9).unwrap());
    }

    #[test]
    fn level_distribution_cases() {
        use EngagementLevel::*;
        assert_eq!(
            empirical_level_distribution([NotEngaged, BarelyEngaged, Engaged, HighlyEngaged]).unwrap(),
            [0.25; 4]
        );
        assert_eq!(empirical_level_distribution([Engaged, Engaged]).unwrap(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            empirical_level_distribution([Engaged, Engaged, NotEngaged]).unwrap()[2],
            2.0 / 3.0
        );
        assert!(empirical_level_distribution([]).is_err());
    }

    #[test]
    fn split_json_is_sorted_and_strict() {
        let spec = SplitSpec {
            name: "split_1".into(),
            train_ids: ["b", "a"].iter().map(|s| s.to_string()).collect(),
            val_ids: ["c".to_string()].into(),
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"name":"split_1","train_ids":["a","b"],"val_ids":["c"]}"#);
        assert!(serde_json::from_str::<SplitSpec>(
            r#"{"name":"x","train_ids":[],"val_ids":[],"extra":1}"#
        )
        .is_err());
    }
}
