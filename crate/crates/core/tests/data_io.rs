use std::fs;

use engage_mil::data::{read_manifest, synth_generate, write_manifest, SynthConfig, MANIFEST_FILE};
use engage_mil::error::Error;

fn tiny() -> engage_mil::data::Dataset {
    synth_generate(
        &SynthConfig { n_subjects: 3, videos_per_subject: 4, k: 3, frame_rate_hint: 2.0, noise_scale: 0.1 },
        5,
    )
    .unwrap()
}

#[test]
fn manifest_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny();
    let path = write_manifest(&ds, dir.path()).unwrap();
    assert_eq!(path, dir.path().join(MANIFEST_FILE));
    let from_dir = read_manifest(dir.path()).unwrap();
    let from_file = read_manifest(&path).unwrap();
    assert_eq!(from_dir, ds);
    assert_eq!(from_file, ds);
}

#[test]
fn short_pose_row_names_file_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny();
    write_manifest(&ds, dir.path()).unwrap();
    let id = ds.samples()[0].video_id();
    let pose = dir.path().join("features").join(format!("{id}.pose.csv"));
    let text = fs::read_to_string(&pose).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<&str> = lines[2].split(',').collect();
    fields.pop();
    assert_eq!(fields.len() - 1, 27);
    lines[2] = fields.join(",");
    fs::write(&pose, lines.join("\n") + "\n").unwrap();

    match read_manifest(dir.path()).unwrap_err() {
        Error::DimensionMismatch { path, row, expected, found } => {
            assert_eq!(path, pose);
            assert_eq!((row, expected, found), (2, 28, 27));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn missing_feature_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny();
    write_manifest(&ds, dir.path()).unwrap();
    let gone = dir.path().join("features").join(format!("{}.gaze.csv", ds.samples()[1].video_id()));
    fs::remove_file(&gone).unwrap();
    let err = read_manifest(dir.path()).unwrap_err();
    assert!(matches!(&err, Error::MissingFile(p) if *p == gone), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn missing_manifest_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_manifest(dir.path()).unwrap_err(), Error::MissingFile(_)));

    let ds = tiny();
    write_manifest(&ds, dir.path()).unwrap();
    let head = dir.path().join("features").join(format!("{}.head.csv", ds.samples()[2].video_id()));
    let text = fs::read_to_string(&head).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen(",", ",oops", 1);
    fs::write(&head, lines.join("\n")).unwrap();
    match read_manifest(dir.path()).unwrap_err() {
        Error::MalformedRow { row, reason, .. } => {
            assert_eq!(row, 1);
            assert!(reason.contains("oops"), "{reason}");
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn unknown_manifest_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(&tiny(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen("{", "{\"extra\": 1,", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(read_manifest(dir.path()).unwrap_err(), Error::Json { .. }));
}
