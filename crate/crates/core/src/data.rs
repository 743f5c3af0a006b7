//! Labels, modalities, per-segment feature statistics, dataset containers,
//! the manifest/CSV on-disk format and the synthetic dataset generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numcore::{seeded_rng, DetRng};

pub const GAZE_DIM: usize = 6;
pub const HEAD_DIM: usize = 6;
pub const POSE_KEYPOINTS: usize = 14;
pub const POSE_DIM: usize = POSE_KEYPOINTS * 2;
pub const C3D_DIM: usize = 768;

/// Default number of segments per video.
pub const DEFAULT_SEGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EngagementLevel {
    NotEngaged,
    BarelyEngaged,
    Engaged,
    HighlyEngaged,
}

impl EngagementLevel {
    pub const ALL: [EngagementLevel; 4] = [
        EngagementLevel::NotEngaged,
        EngagementLevel::BarelyEngaged,
        EngagementLevel::Engaged,
        EngagementLevel::HighlyEngaged,
    ];
    pub const VALUES: [f64; 4] = [0.0, 0.33, 0.66, 1.0];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn value(self) -> f64 {
        Self::VALUES[self.index()]
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Exact inverse of [`value`](Self::value), allowing only float-parsing slack.
    pub fn from_value(value: f64) -> Result<Self> {
        Self::VALUES
            .iter()
            .position(|v| (v - value).abs() < 1e-9)
            .map(|i| Self::ALL[i])
            .ok_or(Error::InvalidLabel(value))
    }

    /// Level whose value is closest to `x`.
    pub fn nearest(x: f64) -> Self {
        let mut best = EngagementLevel::NotEngaged;
        for level in Self::ALL {
            if (level.value() - x).abs() < (best.value() - x).abs() {
                best = level;
            }
        }
        best
    }

    pub fn short_name(self) -> &'static str {
        ["NE", "BE", "E", "SE"][self.index()]
    }
}

impl Serialize for EngagementLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for EngagementLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        EngagementLevel::from_value(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityTag {
    Gaze,
    Head,
    Pose,
    C3d,
}

impl ModalityTag {
    pub const ALL: [ModalityTag; 4] = [
        ModalityTag::Gaze,
        ModalityTag::Head,
        ModalityTag::Pose,
        ModalityTag::C3d,
    ];

    pub fn dims(self) -> usize {
        match self {
            ModalityTag::Gaze => GAZE_DIM,
            ModalityTag::Head => HEAD_DIM,
            ModalityTag::Pose => POSE_DIM,
            ModalityTag::C3d => C3D_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityTag::Gaze => "gaze",
            ModalityTag::Head => "head",
            ModalityTag::Pose => "pose",
            ModalityTag::C3d => "c3d",
        }
    }
}

impl fmt::Display for ModalityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModalityTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModalityTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownModality(s.to_string()))
    }
}

/// One labelled video: per modality, a sequence of `k` segment feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    video_id: String,
    subject_id: String,
    label: EngagementLevel,
    segments: BTreeMap<ModalityTag, Vec<Vec<f64>>>,
}

impl VideoSample {
    pub fn new(
        video_id: impl Into<String>,
        subject_id: impl Into<String>,
        label: EngagementLevel,
        segments: BTreeMap<ModalityTag, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        let mut k = None;
        for (tag, seq) in &segments {
            if seq.is_empty() || *k.get_or_insert(seq.len()) != seq.len() {
                return Err(Error::InconsistentSegments(video_id));
            }
            for (step, v) in seq.iter().enumerate() {
                if v.len() != tag.dims() {
                    return Err(Error::InputDimension {
                        step,
                        expected: tag.dims(),
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "{tag} segment {step} of video `{video_id}`"
                    )));
                }
            }
        }
        Ok(VideoSample {
            video_id,
            subject_id: subject_id.into(),
            label,
            segments,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> EngagementLevel {
        self.label
    }

    /// Segments per modality (0 if the sample carries no modality at all).
    pub fn k(&self) -> usize {
        self.segments.values().next().map_or(0, Vec::len)
    }

    pub fn modalities(&self) -> impl Iterator<Item = ModalityTag> + '_ {
        self.segments.keys().copied()
    }

    pub fn features(&self, tag: ModalityTag) -> Result<&[Vec<f64>]> {
        self.segments
            .get(&tag)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingModality {
                video_id: self.video_id.clone(),
                modality: tag.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<VideoSample>,
}

impl Dataset {
    pub fn new(samples: Vec<VideoSample>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if !seen.insert(s.video_id.as_str()) {
                return Err(Error::DuplicateVideoId(s.video_id.clone()));
            }
        }
        Ok(Dataset { samples })
    }

    pub fn samples(&self) -> &[VideoSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoSample> {
        self.samples.iter().find(|s| s.video_id == video_id)
    }

    pub fn level_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.subject_id.as_str()).collect()
    }

    pub fn has_modality(&self, tag: ModalityTag) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.segments.contains_key(&tag))
    }

    /// Samples whose ids are listed, in the listed order; repeated ids yield
    /// repeated samples (bootstrap multisets). Unknown ids are an error.
    pub fn select<'a, I>(&self, ids: I) -> Result<Vec<&VideoSample>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let index: BTreeMap<&str, &VideoSample> = self
            .samples
            .iter()
            .map(|s| (s.video_id.as_str(), s))
            .collect();
        ids.into_iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownVideo(id.to_string()))
            })
            .collect()
    }

    /// A new dataset holding the distinct listed ids.
    pub fn subset<'a, I>(&self, ids: I) -> Result<Dataset>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let wanted: BTreeSet<&str> = ids.into_iter().collect();
        let samples: Vec<VideoSample> = self
            .samples
            .iter()
            .filter(|s| wanted.contains(s.video_id.as_str()))
            .cloned()
            .collect();
        if samples.len() != wanted.len() {
            let have: BTreeSet<&str> = samples.iter().map(|s| s.video_id.as_str()).collect();
            let missing = wanted.difference(&have).next().copied().unwrap_or_default();
            return Err(Error::UnknownVideo(missing.to_string()));
        }
        Ok(Dataset { samples })
    }
}

/// Splits `frames` into `k` contiguous, order-preserving runs whose lengths
/// differ by at most one; the first `len % k` runs get the extra frame.
pub fn segment_frames<T>(frames: &[T], k: usize) -> Result<Vec<&[T]>> {
    let t = frames.len();
    if k == 0 || k > t {
        return Err(Error::InvalidSegmentation { frames: t, k });
    }
    let base = t / k;
    let extra = t % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(&frames[start..start + len]);
        start += len;
    }
    Ok(out)
}

/// Per-component population variance (Welford).
fn component_variance<const N: usize>(frames: &[[f64; N]]) -> Result<[f64; N]> {
    if frames.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut mean = [0.0; N];
    let mut m2 = [0.0; N];
    for (n, frame) in frames.iter().enumerate() {
        let count = (n + 1) as f64;
        for c in 0..N {
            let delta = frame[c] - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (frame[c] - mean[c]);
        }
    }
    let n = frames.len() as f64;
    Ok(m2.map(|v| (v / n).max(0.0)))
}

/// Variance of each of the 6 gaze channels over one segment.
pub fn gaze_stat(frames: &[[f64; GAZE_DIM]]) -> Result<[f64; GAZE_DIM]> {
    component_variance(frames)
}

/// Variance of the 3 translation and 3 orientation channels over one segment.
pub fn head_stat(frames: &[[f64; HEAD_DIM]]) -> Result<[f64; HEAD_DIM]> {
    component_variance(frames)
}

/// Standard deviation of each keypoint coordinate over one segment, laid out
/// as `[kp0.x, kp0.y, kp1.x, kp1.y, ...]`.
pub fn pose_stat(frames: &[[[f64; 2]; POSE_KEYPOINTS]]) -> Result<[f64; POSE_DIM]> {
    let flat: Vec<[f64; POSE_DIM]> = frames
        .iter()
        .map(|kps| {
            let mut out = [0.0; POSE_DIM];
            for (i, [x, y]) in kps.iter().enumerate() {
                out[2 * i] = *x;
                out[2 * i + 1] = *y;
            }
            out
        })
        .collect();
    Ok(component_variance(&flat)?.map(f64::sqrt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub videos_per_subject: usize,
    pub k: usize,
    /// Frames per second of the simulated capture; only sets frame counts.
    pub frame_rate_hint: f64,
    pub noise_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 10,
            videos_per_subject: 20,
            k: DEFAULT_SEGMENTS,
            frame_rate_hint: 5.0,
            noise_scale: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::config("n_subjects", "must be at least 2"));
        }
        if self.videos_per_subject < 1 {
            return Err(Error::config("videos_per_subject", "must be at least 1"));
        }
        if self.k < 1 {
            return Err(Error::config("k", "must be at least 1"));
        }
        if !(self.frame_rate_hint.is_finite() && self.frame_rate_hint > 0.0) {
            return Err(Error::config("frame_rate_hint", "must be positive"));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::config("noise_scale", "must be non-negative"));
        }
        Ok(())
    }
}

fn normal(rng: &mut DetRng) -> f64 {
    rng.sample(StandardNormal)
}

fn jitter(rng: &mut DetRng, amplitude: f64, noise: f64) -> f64 {
    let mut v = amplitude * rng.random_range(-1.0..1.0);
    if noise > 0.0 {
        v += noise * normal(rng);
    }
    v
}

/// Generates a multimodal dataset whose motion statistics shrink as the
/// engagement level rises.
///
/// Per video, every gaze, head and keypoint channel moves about a
/// subject-specific rest position with amplitude `(1 - level) * m_subject`
/// plus Gaussian jitter of std `noise_scale`. C3D vectors are a per-level
/// random prototype plus noise of std `0.5 * amplitude + noise_scale`.
/// Videos last 8 to 12 seconds at `frame_rate_hint`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let prototypes: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..C3D_DIM).map(|_| normal(&mut rng)).collect())
        .collect();
    let noise = config.noise_scale;
    let mut samples = Vec::with_capacity(config.n_subjects * config.videos_per_subject);

    for s in 0..config.n_subjects {
        let subject_id = format!("subject_{s:03}");
        let motion_scale = rng.random_range(0.75..1.25);
        let gaze_rest: [f64; GAZE_DIM] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let head_rest: [f64; HEAD_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let pose_rest: [[f64; 2]; POSE_KEYPOINTS] =
            std::array::from_fn(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]);

        for v in 0..config.videos_per_subject {
            let level = EngagementLevel::ALL[rng.random_range(0..4)];
            let amplitude = (1.0 - level.value()) * motion_scale;
            let seconds = rng.random_range(8.0..12.0);
            let frames = ((seconds * config.frame_rate_hint) as usize).max(config.k);

            let gaze: Vec<[f64; GAZE_DIM]> = (0..frames)
                .map(|_| std::array::from_fn(|c| gaze_rest[c] + jitter(&mut rng, amplitude, noise)))
                .collect();
            let head: Vec<[f64; HEAD_DIM]> = (0..frames)
                .map(|_| std::array::from_fn(|c| head_rest[c] + jitter(&mut rng, amplitude, noise)))
                .collect();
            let pose: Vec<[[f64; 2]; POSE_KEYPOINTS]> = (0..frames)
                .map(|_| {
                    std::array::from_fn(|p| {
                        [
                            pose_rest[p][0] + jitter(&mut rng, amplitude, noise),
                            pose_rest[p][1] + jitter(&mut rng, amplitude, noise),
                        ]
                    })
                })
                .collect();

            let c3d_noise = 0.5 * amplitude + noise;
            let proto = &prototypes[level.index()];
            let mut segments = BTreeMap::new();
            segments.insert(
                ModalityTag::Gaze,
                segment_frames(&gaze, config.k)?
                    .into_iter()
                    .map(|seg| gaze_stat(seg).map(|a| a.to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            );
            segments.insert(
                ModalityTag::Head,
                segment_frames(&head, config.k)?
                    .into_iter()
                    .map(|seg| head_stat(seg).map(|a| a.to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            );
            segments.insert(
                ModalityTag::Pose,
                segment_frames(&pose, config.k)?
                    .into_iter()
                    .map(|seg| pose_stat(seg).map(|a| a.to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            );
            segments.insert(
                ModalityTag::C3d,
                (0..config.k)
                    .map(|_| proto.iter().map(|p| p + c3d_noise * normal(&mut rng)).collect())
                    .collect(),
            );
            samples.push(VideoSample::new(
                format!("s{s:03}_v{v:03}"),
                subject_id.clone(),
                level,
                segments,
            )?);
        }
    }
    Dataset::new(samples)
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    videos: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    video_id: String,
    subject_id: String,
    label: EngagementLevel,
    features: BTreeMap<String, String>,
}

fn feature_csv(seq: &[Vec<f64>], dims: usize) -> String {
    let mut out = String::from("seg");
    for f in 0..dims {
        out.push_str(&format!(",f{f}"));
    }
    out.push('\n');
    for (i, v) in seq.iter().enumerate() {
        out.push_str(&i.to_string());
        for x in v {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `dir/manifest.json` plus one CSV per (video, modality) under
/// `dir/features/`, returning the manifest path.
pub fn write_manifest(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let mut videos = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        let mut features = BTreeMap::new();
        for (tag, seq) in &s.segments {
            let rel = format!("features/{}.{}.csv", s.video_id, tag);
            write_file(&dir.join(&rel), feature_csv(seq, tag.dims()).as_bytes())?;
            features.insert(tag.to_string(), rel);
        }
        videos.push(ManifestEntry {
            video_id: s.video_id.clone(),
            subject_id: s.subject_id.clone(),
            label: s.label,
            features,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&ManifestFile { videos })
        .map_err(|e| Error::Json { path: path.clone(), source: e })?;
    json.push('\n');
    write_file(&path, json.as_bytes())?;
    Ok(path)
}

fn read_feature_csv(path: &Path, dims: usize) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Csv { path: path.into(), source: e })?
        .clone();
    let header_ok = header.len() == dims + 1
        && &header[0] == "seg"
        && header.iter().skip(1).enumerate().all(|(i, h)| h == format!("f{i}"));
    if !header_ok {
        return Err(Error::MalformedRow {
            path: path.into(),
            row: 0,
            reason: format!("header must be seg,f0..f{}", dims - 1),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv { path: path.into(), source: e })?;
        if record.len() != dims + 1 {
            return Err(Error::DimensionMismatch {
                path: path.into(),
                row,
                expected: dims,
                found: record.len().saturating_sub(1),
            });
        }
        let malformed = |reason: String| Error::MalformedRow {
            path: path.into(),
            row,
            reason,
        };
        let seg: usize = record[0]
            .parse()
            .map_err(|_| malformed(format!("bad segment index `{}`", &record[0])))?;
        if seg != i {
            return Err(malformed(format!("segment index {seg}, expected {i}")));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(malformed(format!("bad value `{v}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::MalformedRow {
            path: path.into(),
            row: 1,
            reason: "no segment rows".into(),
        });
    }
    Ok(rows)
}

/// Reads a dataset from a manifest file, or from a directory holding
/// `manifest.json`. Feature paths resolve relative to the manifest.
pub fn read_manifest(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    let mut samples = Vec::with_capacity(manifest.videos.len());
    let mut seen = BTreeSet::new();
    for entry in manifest.videos {
        if !seen.insert(entry.video_id.clone()) {
            return Err(Error::DuplicateVideoId(entry.video_id));
        }
        let mut segments = BTreeMap::new();
        for (tag, rel) in &entry.features {
            let tag: ModalityTag = tag.parse()?;
            segments.insert(tag, read_feature_csv(&base.join(rel), tag.dims())?);
        }
        samples.push(VideoSample::new(
            entry.video_id,
            entry.subject_id,
            entry.label,
            segments,
        )?);
    }
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pass_variance(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn level_bijection() {
        for level in EngagementLevel::ALL {
            assert_eq!(EngagementLevel::from_value(level.value()).unwrap(), level);
            assert_eq!(EngagementLevel::from_index(level.index()), Some(level));
        }
        assert!(EngagementLevel::from_value(0.5).is_err());
        assert_eq!(EngagementLevel::nearest(0.4), EngagementLevel::BarelyEngaged);
    }

    #[test]
    fn modality_dims_and_names() {
        let dims: Vec<usize> = ModalityTag::ALL.iter().map(|t| t.dims()).collect();
        assert_eq!(dims, vec![6, 6, 28, 768]);
        assert_eq!("c3d".parse::<ModalityTag>().unwrap(), ModalityTag::C3d);
        assert!("face".parse::<ModalityTag>().is_err());
    }

    #[test]
    fn segmentation_lengths() {
        let lens = |t: usize, k: usize| -> Vec<usize> {
            let frames: Vec<usize> = (0..t).collect();
            segment_frames(&frames, k).unwrap().iter().map(|s| s.len()).collect()
        };
        assert_eq!(lens(10, 2), vec![5, 5]);
        assert_eq!(lens(11, 2), vec![6, 5]);
        assert_eq!(lens(7, 3), vec![3, 2, 2]);
        let frames = [1, 2, 3];
        assert!(segment_frames(&frames, 4).is_err());
        assert!(segment_frames(&frames, 0).is_err());
    }

    #[test]
    fn gaze_and_head_variance() {
        let constant = [[0.3; 6]; 5];
        assert_eq!(gaze_stat(&constant).unwrap(), [0.0; 6]);
        let mut a = [0.0; 6];
        let mut b = [0.0; 6];
        a[2] = 0.0;
        b[2] = 2.0;
        let v = gaze_stat(&[a, b]).unwrap();
        assert_eq!(v[2], 1.0);
        let mut lo = [0.0; 6];
        let mut hi = [0.0; 6];
        lo[4] = -1.0;
        hi[4] = 1.0;
        let h = head_stat(&[lo, hi]).unwrap();
        assert_eq!(h, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(gaze_stat(&[]), Err(Error::EmptySegment)));
        assert!(matches!(head_stat(&[]), Err(Error::EmptySegment)));
    }

    #[test]
    fn gaze_matches_two_pass_oracle() {
        let mut rng = seeded_rng(3);
        let frames: Vec<[f64; 6]> = (0..17)
            .map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0)))
            .collect();
        let got = gaze_stat(&frames).unwrap();
        for c in 0..6 {
            let col: Vec<f64> = frames.iter().map(|f| f[c]).collect();
            assert!((got[c] - two_pass_variance(&col)).abs() < 1e-12);
        }
    }

    #[test]
    fn pose_std() {
        let rest = [[1.0, 2.0]; POSE_KEYPOINTS];
        assert_eq!(pose_stat(&[rest, rest, rest]).unwrap(), [0.0; POSE_DIM]);
        let mut left = rest;
        let mut right = rest;
        left[5][0] -= 1.0;
        right[5][0] += 1.0;
        let s = pose_stat(&[left, right]).unwrap();
        assert!((s[10] - 1.0).abs() < 1e-15);
        assert_eq!(s.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(matches!(pose_stat(&[]), Err(Error::EmptySegment)));
    }

    #[test]
    fn pose_matches_sqrt_variance_oracle() {
        let mut rng = seeded_rng(5);
        let frames: Vec<[[f64; 2]; POSE_KEYPOINTS]> = (0..9)
            .map(|_| std::array::from_fn(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)]))
            .collect();
        let got = pose_stat(&frames).unwrap();
        for kp in 0..POSE_KEYPOINTS {
            for axis in 0..2 {
                let col: Vec<f64> = frames.iter().map(|f| f[kp][axis]).collect();
                let want = two_pass_variance(&col).sqrt();
                assert!((got[2 * kp + axis] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synth_rejects_bad_config() {
        let cfg = SynthConfig { n_subjects: 1, ..SynthConfig::default() };
        let err = synth_generate(&cfg, 0).unwrap_err();
        assert!(err.to_string().contains("n_subjects"));
        let cfg = SynthConfig { k: 0, ..SynthConfig::default() };
        assert!(synth_generate(&cfg, 0).is_err());
        let cfg = SynthConfig { noise_scale: -1.0, ..SynthConfig::default() };
        assert!(synth_generate(&cfg, 0).is_err());
    }

    #[test]
    fn synth_shapes() {
        let cfg = SynthConfig {
            n_subjects: 2,
            videos_per_subject: 3,
            k: 4,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, 1).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.subjects().len(), 2);
        for s in ds.samples() {
            assert_eq!(s.k(), 4);
            for tag in ModalityTag::ALL {
                assert!(s.features(tag).unwrap().iter().all(|v| v.len() == tag.dims()));
            }
        }
    }

    #[test]
    fn sample_rejects_mismatched_k_and_dims() {
        let mut seg = BTreeMap::new();
        seg.insert(ModalityTag::Gaze, vec![vec![0.0; 6]; 2]);
        seg.insert(ModalityTag::Head, vec![vec![0.0; 6]; 3]);
        assert!(VideoSample::new("v", "s", EngagementLevel::Engaged, seg).is_err());
        let mut seg = BTreeMap::new();
        seg.insert(ModalityTag::Gaze, vec![vec![0.0; 5]]);
        assert!(VideoSample::new("v", "s", EngagementLevel::Engaged, seg).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut seg = BTreeMap::new();
        seg.insert(ModalityTag::Gaze, vec![vec![0.0; 6]]);
        let a = VideoSample::new("v", "s", EngagementLevel::Engaged, seg.clone()).unwrap();
        let b = VideoSample::new("v", "t", EngagementLevel::Engaged, seg).unwrap();
        assert!(matches!(Dataset::new(vec![a, b]), Err(Error::DuplicateVideoId(_))));
    }
}
