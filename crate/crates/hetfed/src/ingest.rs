//! Dataset file loaders and their inverse writers.
//!
//! Three on-disk formats are supported: the CIFAR-10 binary batch format
//! (3073-byte records), the IDX ubyte pair used by MNIST-family datasets,
//! and a generic label-then-pixels CSV fallback. Every loader has a writer
//! that reproduces the input bytes, so fixtures can be round-tripped.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use hetfed_core::dataset::DatasetView;
use hetfed_core::numerics::Matrix;

// ── CIFAR-10 binary batches ─────────────────────────────────────────────

const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;
const CIFAR_SHAPE: (usize, usize, usize) = (32, 32, 3);

fn parse_cifar_records(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    if bytes.len() % CIFAR_RECORD != 0 {
        bail!(
            "{}: truncated record ({} bytes is not a multiple of {})",
            path.display(),
            bytes.len(),
            CIFAR_RECORD
        );
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut features = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = record[0];
        if label >= 10 {
            bail!("{}: record {} has label byte {} >= 10", path.display(), r, label);
        }
        labels.push(label as usize);
        features.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((features, labels))
}

/// Loads CIFAR-10 binary batch files. Each record is one label byte followed
/// by 3072 pixel bytes, channel-planar R, G, B; pixels are scaled by 1/255.
/// Sample order is file order, files in the order given.
pub fn load_cifar10_binary(paths: &[impl AsRef<Path>]) -> Result<DatasetView> {
    if paths.is_empty() {
        bail!("no CIFAR-10 batch files given");
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let (f, l) = parse_cifar_records(&bytes, p)?;
        features.extend(f);
        labels.extend(l);
    }
    let matrix = Matrix::new(labels.len(), CIFAR_PIXELS, features)?;
    Ok(DatasetView::new("cifar10".into(), matrix, labels, None, 10, CIFAR_SHAPE)?)
}

/// Writes the training split back to one CIFAR-10 binary batch file,
/// inverting `load_cifar10_binary` byte for byte.
pub fn write_cifar10_binary(view: &DatasetView, path: impl AsRef<Path>) -> Result<()> {
    if view.image_shape() != CIFAR_SHAPE {
        bail!("view shape {:?} is not the CIFAR shape {:?}", view.image_shape(), CIFAR_SHAPE);
    }
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    for (s, &label) in view.train_labels().iter().enumerate() {
        out.write_all(&[label as u8])?;
        let row = view.train_features().row(s);
        let bytes: Vec<u8> = row.iter().map(|&v| (v * 255.0).round() as u8).collect();
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

// ── IDX ubyte pairs ─────────────────────────────────────────────────────

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        bail!("{}: header truncated at byte {}", path.display(), offset);
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image/label file pair (the MNIST ubyte layout): big-endian
/// magics 0x00000803 and 0x00000801, then counts and dimensions, then raw
/// bytes. Produces a grayscale H×W×1 view with pixels scaled by 1/255.
pub fn load_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    name: &str,
    num_classes: usize,
) -> Result<DatasetView> {
    let (image_path, label_path) = (image_path.as_ref(), label_path.as_ref());
    let img = fs::read(image_path).with_context(|| format!("reading {}", image_path.display()))?;
    let lab = fs::read(label_path).with_context(|| format!("reading {}", label_path.display()))?;

    let magic = read_be_u32(&img, 0, image_path)?;
    if magic != IDX_IMAGE_MAGIC {
        bail!("{}: image magic {:#010x}, expected {:#010x}", image_path.display(), magic, IDX_IMAGE_MAGIC);
    }
    let count = read_be_u32(&img, 4, image_path)? as usize;
    let height = read_be_u32(&img, 8, image_path)? as usize;
    let width = read_be_u32(&img, 12, image_path)? as usize;
    let pixels = &img[16..];
    if pixels.len() != count * height * width {
        bail!(
            "{}: {} pixel bytes for {} images of {}x{}",
            image_path.display(),
            pixels.len(),
            count,
            height,
            width
        );
    }

    let magic = read_be_u32(&lab, 0, label_path)?;
    if magic != IDX_LABEL_MAGIC {
        bail!("{}: label magic {:#010x}, expected {:#010x}", label_path.display(), magic, IDX_LABEL_MAGIC);
    }
    let label_count = read_be_u32(&lab, 4, label_path)? as usize;
    if label_count != count {
        bail!(
            "{} has {} labels but {} has {} images",
            label_path.display(),
            label_count,
            image_path.display(),
            count
        );
    }
    let raw_labels = &lab[8..];
    if raw_labels.len() != count {
        bail!("{}: {} label bytes for {} entries", label_path.display(), raw_labels.len(), count);
    }

    let features: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let matrix = Matrix::new(count, height * width, features)?;
    Ok(DatasetView::new(
        name.into(),
        matrix,
        labels,
        None,
        num_classes,
        (height, width, 1),
    )?)
}

/// Writes the training split as an IDX image/label file pair, inverting
/// `load_idx` byte for byte.
pub fn write_idx(
    view: &DatasetView,
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<()> {
    let (h, w, c) = view.image_shape();
    if c != 1 {
        bail!("IDX holds grayscale images; view has {} channels", c);
    }
    let count = view.train_len() as u32;

    let mut img = BufWriter::new(fs::File::create(image_path.as_ref())?);
    img.write_all(&IDX_IMAGE_MAGIC.to_be_bytes())?;
    img.write_all(&count.to_be_bytes())?;
    img.write_all(&(h as u32).to_be_bytes())?;
    img.write_all(&(w as u32).to_be_bytes())?;
    for s in 0..view.train_len() {
        let bytes: Vec<u8> =
            view.train_features().row(s).iter().map(|&v| (v * 255.0).round() as u8).collect();
        img.write_all(&bytes)?;
    }
    img.flush()?;

    let mut lab = BufWriter::new(fs::File::create(label_path.as_ref())?);
    lab.write_all(&IDX_LABEL_MAGIC.to_be_bytes())?;
    lab.write_all(&count.to_be_bytes())?;
    let bytes: Vec<u8> = view.train_labels().iter().map(|&l| l as u8).collect();
    lab.write_all(&bytes)?;
    lab.flush()?;
    Ok(())
}

// ── CSV fallback ────────────────────────────────────────────────────────

/// Loads a headerless CSV where each row is a label followed by H·W·C pixel
/// values. Pixel scale is auto-detected: if any value exceeds 1, the file is
/// taken to be in [0, 255] and divided by 255; otherwise values pass through
/// unscaled.
pub fn load_csv(
    path: impl AsRef<Path>,
    name: &str,
    num_classes: usize,
    image_shape: (usize, usize, usize),
) -> Result<DatasetView> {
    let path = path.as_ref();
    let (h, w, c) = image_shape;
    let dim = h * w * c;
    // Flexible so ragged rows reach the field-count check below, which
    // names the expected layout.
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;

    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut max_value = 0.0f64;
    for (r, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{} row {}", path.display(), r))?;
        if record.len() != dim + 1 {
            bail!(
                "{} row {}: {} fields, expected 1 label + {} pixels",
                path.display(),
                r,
                record.len(),
                dim
            );
        }
        let label: usize = record[0]
            .parse()
            .with_context(|| format!("{} row {}: label {:?}", path.display(), r, &record[0]))?;
        if label >= num_classes {
            bail!("{} row {}: label {} >= {}", path.display(), r, label, num_classes);
        }
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .with_context(|| format!("{} row {}: pixel {:?}", path.display(), r, field))?;
            max_value = max_value.max(v);
            features.push(v);
        }
    }
    if labels.is_empty() {
        bail!("{}: no rows", path.display());
    }
    if max_value > 1.0 {
        for v in &mut features {
            *v /= 255.0;
        }
    }
    let matrix = Matrix::new(labels.len(), dim, features)?;
    Ok(DatasetView::new(name.into(), matrix, labels, None, num_classes, image_shape)?)
}

/// Writes the training split as a label-then-pixels CSV in [0, 1] scale.
pub fn write_csv(view: &DatasetView, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path.as_ref())?;
    for (s, &label) in view.train_labels().iter().enumerate() {
        let mut row = Vec::with_capacity(view.feature_dim() + 1);
        row.push(label.to_string());
        row.extend(view.train_features().row(s).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
