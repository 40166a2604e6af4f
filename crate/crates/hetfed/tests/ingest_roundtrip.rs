//! Loader fixtures for the three dataset file formats: parse checks on
//! hand-built byte fixtures, byte-identical round trips through each
//! writer, and rejection of malformed files.

use std::fs;
use std::path::{Path, PathBuf};

use hetfed::ingest::{
    load_cifar10_binary, load_csv, load_idx, write_cifar10_binary, write_csv, write_idx,
};

fn cifar_file(dir: &Path, name: &str, records: &[(u8, &[u8])]) -> PathBuf {
    let mut bytes = Vec::new();
    for (label, pixels) in records {
        assert_eq!(pixels.len(), 3072, "fixture record must hold 3072 pixel bytes");
        bytes.push(*label);
        bytes.extend_from_slice(pixels);
    }
    let path = dir.join(name);
    fs::write(&path, bytes).unwrap();
    path
}

fn idx_pair(dir: &Path, h: u32, w: u32, images: &[&[u8]], labels: &[u8]) -> (PathBuf, PathBuf) {
    let mut img = Vec::new();
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&h.to_be_bytes());
    img.extend_from_slice(&w.to_be_bytes());
    for pixels in images {
        assert_eq!(pixels.len(), (h * w) as usize);
        img.extend_from_slice(pixels);
    }
    let mut lab = Vec::new();
    lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    let image_path = dir.join("images.idx");
    let label_path = dir.join("labels.idx");
    fs::write(&image_path, img).unwrap();
    fs::write(&label_path, lab).unwrap();
    (image_path, label_path)
}

// ── CIFAR-10 binary ─────────────────────────────────────────────────────

#[test]
fn cifar_records_parse_labels_and_scaled_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let ramp: Vec<u8> = (0..3072).map(|i| (i % 256) as u8).collect();
    let zeros = vec![0u8; 3072];
    let path = cifar_file(dir.path(), "batch.bin", &[(3, &ramp), (0, &zeros)]);

    let view = load_cifar10_binary(&[path]).unwrap();
    assert_eq!(view.name(), "cifar10");
    assert_eq!(view.train_len(), 2);
    assert_eq!(view.train_labels(), &[3, 0]);
    assert_eq!(view.image_shape(), (32, 32, 3));
    let first = view.train_features().row(0);
    for (i, &v) in first.iter().enumerate() {
        assert_eq!(v, f64::from((i % 256) as u8) / 255.0);
    }
    assert!(view.train_features().row(1).iter().all(|&v| v == 0.0));
}

#[test]
fn cifar_files_concatenate_in_argument_order() {
    let dir = tempfile::tempdir().unwrap();
    let pixels = vec![7u8; 3072];
    let a = cifar_file(dir.path(), "a.bin", &[(1, &pixels)]);
    let b = cifar_file(dir.path(), "b.bin", &[(2, &pixels), (9, &pixels)]);

    let view = load_cifar10_binary(&[b.clone(), a.clone()]).unwrap();
    assert_eq!(view.train_labels(), &[2, 9, 1]);
    let view = load_cifar10_binary(&[a, b]).unwrap();
    assert_eq!(view.train_labels(), &[1, 2, 9]);
}

#[test]
fn cifar_roundtrip_reproduces_every_byte_value() {
    let dir = tempfile::tempdir().unwrap();
    let ramp: Vec<u8> = (0..3072).map(|i| (i % 256) as u8).collect();
    let reversed: Vec<u8> = ramp.iter().rev().copied().collect();
    let original = cifar_file(dir.path(), "in.bin", &[(5, &ramp), (8, &reversed)]);

    let view = load_cifar10_binary(&[original.clone()]).unwrap();
    let rewritten = dir.path().join("out.bin");
    write_cifar10_binary(&view, &rewritten).unwrap();
    assert_eq!(fs::read(&original).unwrap(), fs::read(&rewritten).unwrap());
}

#[test]
fn cifar_truncated_record_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.bin");
    fs::write(&path, vec![0u8; 3072]).unwrap();
    let err = load_cifar10_binary(&[path]).unwrap_err().to_string();
    assert!(err.contains("truncated record"), "got: {err}");
}

#[test]
fn cifar_label_byte_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let pixels = vec![0u8; 3072];
    let path = cifar_file(dir.path(), "bad.bin", &[(10, &pixels)]);
    let err = load_cifar10_binary(&[path]).unwrap_err().to_string();
    assert!(err.contains("label byte 10"), "got: {err}");
}

// ── IDX pairs ───────────────────────────────────────────────────────────

#[test]
fn idx_pair_parses_shape_labels_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labs) = idx_pair(dir.path(), 2, 2, &[&[0, 51, 102, 255]], &[4]);

    let view = load_idx(&imgs, &labs, "tiny", 10).unwrap();
    assert_eq!(view.name(), "tiny");
    assert_eq!(view.train_len(), 1);
    assert_eq!(view.image_shape(), (2, 2, 1));
    assert_eq!(view.train_labels(), &[4]);
    assert_eq!(view.train_features().row(0), &[0.0, 0.2, 0.4, 1.0]);
}

#[test]
fn idx_honors_declared_image_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let pixels = vec![128u8; 28 * 28];
    let (imgs, labs) = idx_pair(dir.path(), 28, 28, &[&pixels], &[0]);

    let view = load_idx(&imgs, &labs, "mnistlike", 10).unwrap();
    assert_eq!(view.image_shape(), (28, 28, 1));
    assert_eq!(view.feature_dim(), 784);
}

#[test]
fn idx_roundtrip_reproduces_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let ramp: Vec<u8> = (0..=255).collect();
    let (imgs, labs) = idx_pair(dir.path(), 16, 16, &[&ramp, &ramp], &[9, 2]);

    let view = load_idx(&imgs, &labs, "ramp", 10).unwrap();
    let img_out = dir.path().join("images_out.idx");
    let lab_out = dir.path().join("labels_out.idx");
    write_idx(&view, &img_out, &lab_out).unwrap();
    assert_eq!(fs::read(&imgs).unwrap(), fs::read(&img_out).unwrap());
    assert_eq!(fs::read(&labs).unwrap(), fs::read(&lab_out).unwrap());
}

#[test]
fn idx_wrong_image_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labs) = idx_pair(dir.path(), 2, 2, &[&[0, 0, 0, 0]], &[0]);
    let mut bytes = fs::read(&imgs).unwrap();
    bytes[3] = 0x01;
    fs::write(&imgs, bytes).unwrap();
    let err = load_idx(&imgs, &labs, "x", 10).unwrap_err().to_string();
    assert!(err.contains("image magic"), "got: {err}");
}

#[test]
fn idx_wrong_label_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labs) = idx_pair(dir.path(), 2, 2, &[&[0, 0, 0, 0]], &[0]);
    let mut bytes = fs::read(&labs).unwrap();
    bytes[3] = 0x03;
    fs::write(&labs, bytes).unwrap();
    let err = load_idx(&imgs, &labs, "x", 10).unwrap_err().to_string();
    assert!(err.contains("label magic"), "got: {err}");
}

#[test]
fn idx_image_label_count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labs) = idx_pair(dir.path(), 2, 2, &[&[0, 0, 0, 0], &[1, 1, 1, 1]], &[0]);
    let err = load_idx(&imgs, &labs, "x", 10).unwrap_err().to_string();
    assert!(err.contains("1 labels") && err.contains("2 images"), "got: {err}");
}

#[test]
fn idx_pixel_payload_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (imgs, labs) = idx_pair(dir.path(), 2, 2, &[&[0, 0, 0, 0]], &[0]);
    let mut bytes = fs::read(&imgs).unwrap();
    bytes.pop();
    fs::write(&imgs, bytes).unwrap();
    let err = load_idx(&imgs, &labs, "x", 10).unwrap_err().to_string();
    assert!(err.contains("pixel bytes"), "got: {err}");
}

// ── CSV fallback ────────────────────────────────────────────────────────

#[test]
fn csv_unit_scale_rows_pass_through_unscaled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    fs::write(&path, "0,0.0,0.25,0.5,1.0\n2,1.0,0.75,0.5,0.0\n1,0.1,0.2,0.3,0.4\n").unwrap();

    let view = load_csv(&path, "unit", 3, (2, 2, 1)).unwrap();
    assert_eq!(view.train_len(), 3);
    assert_eq!(view.train_labels(), &[0, 2, 1]);
    assert_eq!(view.train_features().row(0), &[0.0, 0.25, 0.5, 1.0]);
    assert_eq!(view.train_features().row(2), &[0.1, 0.2, 0.3, 0.4]);
}

#[test]
fn csv_byte_scale_is_detected_and_divided() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bytes.csv");
    fs::write(&path, "0,0,51,128,255\n1,255,0,0,0\n").unwrap();

    let view = load_csv(&path, "bytes", 2, (2, 2, 1)).unwrap();
    assert_eq!(view.train_features().row(0), &[0.0, 0.2, 128.0 / 255.0, 1.0]);
    assert_eq!(view.train_features().row(1), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn csv_accepts_usps_style_256_pixel_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("usps.csv");
    let pixels: Vec<String> = (0..256).map(|i| format!("{}", i % 2)).collect();
    fs::write(&path, format!("7,{}\n", pixels.join(","))).unwrap();

    let view = load_csv(&path, "usps", 10, (16, 16, 1)).unwrap();
    assert_eq!(view.feature_dim(), 256);
    assert_eq!(view.train_labels(), &[7]);
}

#[test]
fn csv_roundtrip_preserves_labels_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.csv");
    fs::write(&path, "0,0.125,0.0078125,0.33,1.0\n3,0.9,0.8,0.7,0.6\n").unwrap();

    let view = load_csv(&path, "rt", 4, (2, 2, 1)).unwrap();
    let out = dir.path().join("out.csv");
    write_csv(&view, &out).unwrap();
    let again = load_csv(&out, "rt", 4, (2, 2, 1)).unwrap();
    assert_eq!(again.train_labels(), view.train_labels());
    for s in 0..view.train_len() {
        assert_eq!(again.train_features().row(s), view.train_features().row(s));
    }
}

#[test]
fn csv_ragged_row_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ragged.csv");
    fs::write(&path, "0,0.1,0.2,0.3,0.4\n1,0.5,0.6\n").unwrap();
    let err = load_csv(&path, "x", 2, (2, 2, 1)).unwrap_err().to_string();
    assert!(err.contains("expected 1 label + 4 pixels"), "got: {err}");
}

#[test]
fn csv_label_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("badlabel.csv");
    fs::write(&path, "5,0.1,0.2,0.3,0.4\n").unwrap();
    let err = load_csv(&path, "x", 5, (2, 2, 1)).unwrap_err().to_string();
    assert!(err.contains("label 5 >= 5"), "got: {err}");
}

#[test]
fn csv_empty_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    let err = load_csv(&path, "x", 2, (2, 2, 1)).unwrap_err().to_string();
    assert!(err.contains("no rows"), "got: {err}");
}
