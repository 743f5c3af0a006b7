//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any enforced criterion fails.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use engage_mil::cli::{cmd_split, cmd_synth, cmd_train, SplitArgs, SynthArgs, TrainArgs};
use engage_mil::data::{synth_generate, Dataset, EngagementLevel, ModalityTag, SynthConfig, VideoSample};
use engage_mil::evalens::{ensemble, PredictionSet};
use engage_mil::losses::{mse_loss, rank_losses, CenterBank};
use engage_mil::model::{init_model, HeadMode, ModelDims};
use engage_mil::numcore::seeded_rng;
use engage_mil::splits::{bootstrap_resample, make_splits, SplitOptions};
use engage_mil::training::{lr_at, predict_all, train_modality, OptimConfig, TrainConfig};
use engage_mil::verify::{grad_suite, thirty_subject_dataset};
use rand::Rng;

struct Outcome {
    name: &'static str,
    passed: bool,
    enforced: bool,
    detail: String,
}

fn line(o: &Outcome) {
    let tag = if o.passed { "PASS" } else { "FAIL" };
    let note = if o.enforced { "" } else { " [reported, not enforced]" };
    println!("{tag} {}: {}{note}", o.name, o.detail);
}

fn gradient() -> Vec<Outcome> {
    let start = Instant::now();
    let checks = grad_suite(5).expect("grad suite runs");
    let secs = start.elapsed().as_secs_f64();
    let strict = &checks[0];
    let aware = &checks[1];
    vec![
        Outcome {
            name: "gradient correctness (strict per-element relative error)",
            passed: strict.passed && secs < 10.0,
            enforced: false,
            detail: format!("{}; {secs:.2}s", strict.detail),
        },
        Outcome {
            name: "gradient correctness (round-off-aware)",
            passed: aware.passed && secs < 10.0,
            enforced: true,
            detail: format!("{}; {secs:.2}s", aware.detail),
        },
    ]
}

/// Hinge pair sums written out over explicit index lists.
fn rank_oracle(bank: &CenterBank, delta: f64) -> (f64, f64) {
    let dist = |a: usize, b: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..bank.centers[a].len() {
            let d = bank.centers[a][t] - bank.centers[b][t];
            s += d * d;
        }
        s.sqrt()
    };
    let adjacent = [(0, 1), (1, 2), (2, 3)];
    let two_apart = [(0, 2), (1, 3)];
    let mut r1 = 0.0;
    for &(a, b) in &two_apart {
        for &(c, d) in &adjacent {
            let v = delta - (dist(a, b) - dist(c, d));
            if v > 0.0 {
                r1 += v;
            }
        }
    }
    let mut r2 = 0.0;
    for &(c, d) in &adjacent {
        let v = 2.0 * delta - (dist(0, 3) - dist(c, d));
        if v > 0.0 {
            r2 += v;
        }
    }
    (r1, r2)
}

fn rank_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(314);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..8);
        let scale = rng.random_range(0.1..3.0);
        let bank = CenterBank {
            centers: std::array::from_fn(|_| (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect()),
            alpha: 0.5,
        };
        let delta = rng.random_range(0.01..2.0);
        let got = rank_losses(&bank, delta);
        let (r1, r2) = rank_oracle(&bank, delta);
        worst = worst.max((got.rank1 - r1).abs()).max((got.rank2 - r2).abs());
    }
    let mut special = true;
    for delta in [0.25, 1.0, 3.0] {
        let bank = CenterBank {
            centers: std::array::from_fn(|_| vec![1.5, -0.5, 2.0]),
            alpha: 0.5,
        };
        let r = rank_losses(&bank, delta);
        special &= r.rank1 == 6.0 * delta && r.rank2 == 6.0 * delta;
    }
    let collinear = CenterBank {
        centers: [vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]],
        alpha: 0.5,
    };
    let r = rank_losses(&collinear, 0.5);
    special &= r.rank1 == 0.0 && r.rank2 == 0.0;
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        name: "rank-loss oracle equivalence",
        passed: worst <= 1e-12 && special && secs < 5.0,
        enforced: true,
        detail: format!("1000 banks, max diff {worst:.2e}, special cases {special}; {secs:.2}s"),
    }
}

fn mil_contract() -> Outcome {
    let mut worst = 0.0f64;
    let dims = ModelDims { hidden: 5, h1: 7, h2: 3 };
    let mut rng = seeded_rng(5);
    for seed in 0..20 {
        let model = init_model(ModalityTag::Pose, dims, seed).unwrap();
        let mut last = model.clone();
        last.set_head_mode(HeadMode::LastStep);
        let k = rng.random_range(1..12);
        let seq: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..ModalityTag::Pose.dims()).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut segs = BTreeMap::new();
        segs.insert(ModalityTag::Pose, seq.clone());
        let video = VideoSample::new("v", "s", EngagementLevel::Engaged, segs).unwrap();
        let got = model.predict_video(&video).unwrap();
        // r_t is the last-step score of the prefix ending at t
        let mut sum = 0.0;
        for t in 1..=k {
            let mut prefix = BTreeMap::new();
            prefix.insert(ModalityTag::Pose, seq[..t].to_vec());
            let p = VideoSample::new("p", "s", EngagementLevel::Engaged, prefix).unwrap();
            sum += last.predict_video(&p).unwrap();
        }
        worst = worst.max((got - sum / k as f64).abs());
    }
    let (a, _) = mse_loss(&[0.5, 0.5], &[0.33, 0.66]).unwrap();
    let (b, _) = mse_loss(&[0.0, 1.0, 0.25], &[0.33, 0.66, 1.0]).unwrap();
    let b_hand = (0.1089 + 0.1156 + 0.5625) / 3.0;
    let passed = worst <= 1e-12 && (a - 0.02725).abs() <= 1e-12 && (b - b_hand).abs() <= 1e-12;
    Outcome {
        name: "MIL contract",
        passed,
        enforced: true,
        detail: format!("mean-of-steps max diff {worst:.2e}, mse hand cases {a} / {b}"),
    }
}

fn synth_args(dir: &std::path::Path, subjects: usize, videos: usize, k: usize, seed: u64) -> SynthArgs {
    SynthArgs {
        out: dir.to_path_buf(),
        subjects,
        videos_per_subject: videos,
        k,
        noise: 0.1,
        fps: 5.0,
        seed,
    }
}

fn small_train_args(root: &std::path::Path, out: &str, epochs: usize) -> TrainArgs {
    TrainArgs {
        data: root.join("data"),
        split: root.join("splits").join("split_1.json"),
        modality: ModalityTag::Gaze,
        config: None,
        out: root.join(out),
        epochs: Some(epochs),
        seed: Some(11),
        lr0: None,
        batch_size: None,
        hidden_dim: Some(8),
        h1: Some(16),
        h2: Some(8),
        lambda_crl: None,
        bootstrap: false,
    }
}

fn prepare_small(root: &std::path::Path) {
    cmd_synth(&synth_args(&root.join("data"), 6, 6, 4, 3)).unwrap();
    cmd_split(&SplitArgs {
        data: root.join("data"),
        n: 1,
        ratio: 0.75,
        seed: 0,
        out: root.join("splits"),
    })
    .unwrap();
}

fn schedule(root: &std::path::Path) -> Outcome {
    let cfg = OptimConfig::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * b.abs().max(1e-300);
    let points = [(0, 0.01), (19, 0.01), (20, 0.001), (39, 0.001), (40, 0.0001), (59, 0.0001)];
    let mut ok = points.iter().all(|&(e, v)| close(lr_at(e, &cfg).unwrap(), v));
    cmd_train(&small_train_args(root, "sched", 60)).unwrap();
    let csv = std::fs::read_to_string(root.join("sched").join("history.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    ok &= rows.len() == 60;
    let mut mismatches = 0;
    for (e, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        let lr: f64 = fields[1].parse().unwrap();
        let expected = 0.01 * 0.1f64.powi((e / 20) as i32);
        if fields[0] != e.to_string() || lr != lr_at(e, &cfg).unwrap() || !close(lr, expected) {
            mismatches += 1;
        }
    }
    Outcome {
        name: "schedule exactness",
        passed: ok && mismatches == 0,
        enforced: true,
        detail: format!("lr_at(0/20/40) checked, {} history rows, {mismatches} lr mismatches", rows.len()),
    }
}

fn split_properties() -> Outcome {
    let start = Instant::now();
    let dataset = thirty_subject_dataset(7).unwrap();
    let subject_of: BTreeMap<&str, &str> = dataset
        .samples()
        .iter()
        .map(|s| (s.video_id(), s.subject_id()))
        .collect();
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for s in subject_of.values() {
        *sizes.entry(s).or_default() += 1;
    }
    let largest = *sizes.values().max().unwrap() as f64;
    let target = 147.0 / 195.0 * dataset.len() as f64;
    let mut disjoint_violations = 0;
    let mut ratio_violations = 0;
    for seed in 0..100 {
        let opts = SplitOptions { seed, ..SplitOptions::default() };
        for spec in make_splits(&dataset, &opts).unwrap() {
            let train_subjects: BTreeSet<&str> = spec.train_ids.iter().map(|id| subject_of[id.as_str()]).collect();
            let val_subjects: BTreeSet<&str> = spec.val_ids.iter().map(|id| subject_of[id.as_str()]).collect();
            let covered: BTreeSet<&str> = spec.train_ids.iter().chain(&spec.val_ids).map(String::as_str).collect();
            if train_subjects.intersection(&val_subjects).next().is_some()
                || covered.len() != dataset.len()
                || spec.train_ids.len() + spec.val_ids.len() != dataset.len()
            {
                disjoint_violations += 1;
            }
            if (spec.train_ids.len() as f64 - target).abs() > largest {
                ratio_violations += 1;
            }
        }
    }
    let ids: Vec<String> = (0..1000).map(|i| format!("id{i}")).collect();
    let draw = bootstrap_resample(&ids, 2718).unwrap();
    let distinct = draw.iter().collect::<BTreeSet<_>>().len() as f64 / 1000.0;
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        name: "split properties",
        passed: disjoint_violations == 0 && ratio_violations == 0 && (0.60..=0.67).contains(&distinct),
        enforced: true,
        detail: format!(
            "{} videos / {} subjects, 100 seeds: {disjoint_violations} disjointness violations, \
             {ratio_violations} outside +-{largest} videos; bootstrap distinct {distinct:.3}; {secs:.2}s",
            dataset.len(),
            sizes.len()
        ),
    }
}

fn mse_of(set: &PredictionSet, labels: &BTreeMap<String, f64>) -> f64 {
    labels.iter().map(|(id, y)| (set.predictions[id] - y).powi(2)).sum::<f64>() / labels.len() as f64
}

fn jensen() -> Outcome {
    let mut rng = seeded_rng(1618);
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let labels: BTreeMap<String, f64> = (0..n)
            .map(|i| (format!("v{i}"), EngagementLevel::ALL[rng.random_range(0..4)].value()))
            .collect();
        let mut member = || {
            PredictionSet::new(labels.keys().map(|id| (id.clone(), rng.random_range(-1.0..2.0))).collect()).unwrap()
        };
        let a = member();
        let b = member();
        let ens = ensemble(&[a.clone(), b.clone()], None).unwrap();
        if mse_of(&ens, &labels) > (mse_of(&a, &labels) + mse_of(&b, &labels)) / 2.0 + 1e-12 {
            violations += 1;
        }
    }
    Outcome {
        name: "ensemble Jensen property",
        passed: violations == 0,
        enforced: true,
        detail: format!("100 random pairs, {violations} violations"),
    }
}

struct SeedRun {
    baseline: f64,
    gaze: f64,
    pose: f64,
    ensemble: f64,
    ordered: [bool; 2],
    mean_d: [[f64; 3]; 2],
}

fn center_means(bank: &CenterBank) -> [f64; 3] {
    let dist = |a: usize, b: usize| -> f64 {
        bank.centers[a]
            .iter()
            .zip(&bank.centers[b])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    [
        (dist(0, 1) + dist(1, 2) + dist(2, 3)) / 3.0,
        (dist(0, 2) + dist(1, 3)) / 2.0,
        dist(0, 3),
    ]
}

fn learn_one(seed: u64) -> SeedRun {
    let cfg = SynthConfig {
        n_subjects: 10,
        videos_per_subject: 20,
        ..SynthConfig::default()
    };
    let dataset: Dataset = synth_generate(&cfg, seed).unwrap();
    let spec = make_splits(&dataset, &SplitOptions { n_splits: 1, seed, ..SplitOptions::default() })
        .unwrap()
        .remove(0);
    let train = dataset.select(spec.train_ids.iter().map(String::as_str)).unwrap();
    let val = dataset.select(spec.val_ids.iter().map(String::as_str)).unwrap();
    let labels: BTreeMap<String, f64> = val.iter().map(|s| (s.video_id().to_string(), s.label().value())).collect();
    let train_mean = train.iter().map(|s| s.label().value()).sum::<f64>() / train.len() as f64;
    let baseline = labels.values().map(|y| (y - train_mean).powi(2)).sum::<f64>() / labels.len() as f64;

    let mut train_cfg = TrainConfig::default();
    train_cfg.optim.seed = seed;
    let mut sets = Vec::new();
    let mut ordered = [false; 2];
    let mut mean_d = [[0.0; 3]; 2];
    for (m, modality) in [ModalityTag::Gaze, ModalityTag::Pose].into_iter().enumerate() {
        let outcome = train_modality(&train, &val, modality, &train_cfg).unwrap();
        let preds = predict_all(&outcome.model, &val).unwrap();
        sets.push(
            PredictionSet::new(val.iter().map(|s| s.video_id().to_string()).zip(preds).collect()).unwrap(),
        );
        let d = center_means(&outcome.bank);
        ordered[m] = d[2] > d[1] && d[1] > d[0];
        mean_d[m] = d;
    }
    let ens = ensemble(&sets, None).unwrap();
    SeedRun {
        baseline,
        gaze: mse_of(&sets[0], &labels),
        pose: mse_of(&sets[1], &labels),
        ensemble: mse_of(&ens, &labels),
        ordered,
        mean_d,
    }
}

fn learnability_and_crl() -> Vec<Outcome> {
    let start = Instant::now();
    let runs: Vec<SeedRun> = (1..=5).map(learn_one).collect();
    let secs = start.elapsed().as_secs_f64();
    let mut learned = 0;
    let mut ens_ok = 0;
    let mut details = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        if r.gaze < 0.5 * r.baseline && r.pose < 0.5 * r.baseline {
            learned += 1;
        }
        if r.ensemble <= r.gaze.max(r.pose) {
            ens_ok += 1;
        }
        details.push(format!(
            "seed {}: base {:.4} gaze {:.4} pose {:.4} ens {:.4}",
            i + 1,
            r.baseline,
            r.gaze,
            r.pose,
            r.ensemble
        ));
    }
    for d in &details {
        println!("  {d}");
    }
    let mut crl = [0; 2];
    for (i, r) in runs.iter().enumerate() {
        for m in 0..2 {
            crl[m] += r.ordered[m] as usize;
        }
        println!(
            "  seed {}: gaze d1/d2/d3 {:.3?} pose d1/d2/d3 {:.3?}",
            i + 1,
            r.mean_d[0],
            r.mean_d[1]
        );
    }
    vec![
        Outcome {
            name: "synthetic learnability",
            passed: learned >= 4 && ens_ok == 5 && secs < 300.0,
            enforced: true,
            detail: format!(
                "{learned}/5 seeds below half the mean baseline on both modalities, \
                 ensemble <= worse modality on {ens_ok}/5; {secs:.1}s for 10 trainings"
            ),
        },
        Outcome {
            name: "ranked-center ordering d3 > d2 > d1",
            passed: crl[0] >= 4 && crl[1] >= 4,
            enforced: true,
            detail: format!("gaze {}/5 seeds, pose {}/5 seeds", crl[0], crl[1]),
        },
    ]
}

fn determinism(root: &std::path::Path) -> Outcome {
    let mut a = small_train_args(root, "det_a", 4);
    a.h1 = Some(64);
    a.h2 = Some(32);
    a.hidden_dim = Some(16);
    let mut b = a.clone();
    b.out = root.join("det_b");
    cmd_train(&a).unwrap();
    cmd_train(&b).unwrap();
    let mut same = true;
    for file in ["checkpoint.json", "history.csv"] {
        let x = std::fs::read(a.out.join(file)).unwrap();
        let y = std::fs::read(b.out.join(file)).unwrap();
        same &= x == y;
    }
    Outcome {
        name: "determinism",
        passed: same,
        enforced: true,
        detail: "two cmd_train runs, checkpoint.json and history.csv byte-identical".into(),
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_small(tmp.path());

    let mut outcomes = gradient();
    outcomes.push(rank_oracle_equivalence());
    outcomes.push(mil_contract());
    outcomes.push(schedule(tmp.path()));
    outcomes.push(split_properties());
    outcomes.push(jensen());
    outcomes.push(determinism(tmp.path()));
    outcomes.extend(learnability_and_crl());

    println!();
    println!("acceptance summary");
    for o in &outcomes {
        line(o);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| o.enforced && !o.passed).map(|o| o.name).collect();
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
