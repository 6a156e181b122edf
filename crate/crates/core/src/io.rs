//! Dataset and embedding serialization: CSV, a raw little-endian binary
//! format, big-endian IDX files, and an SVG scatter plot.
//!
//! The raw format is the lossless interchange format: a `TSNE` magic, three
//! little-endian `u32` fields (points, dimensions, flags), row-major `f32`
//! values, and — when flag bit 0 is set — one `i32` label per point. Writing
//! and re-reading it reproduces every payload byte exactly.
//!
//! CSV files use `,` separators and `.` decimals. A header line is detected
//! by failing to parse as numbers; when its last column is named `label`
//! (any case), that column is read as integer labels. IDX files follow the
//! usual big-endian layout (unsigned-byte element type only); pixel values
//! are rescaled to `[0, 1]`, and an images file picks up labels from a
//! sidecar whose name swaps `images` for `labels` and `idx3` for `idx1`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::{DataMatrix, LabeledDataset};
use crate::error::{Result, TsneError};

const RAW_MAGIC: &[u8; 4] = b"TSNE";
const RAW_FLAG_LABELS: u32 = 1;
const IDX_TYPE_UBYTE: u8 = 0x08;

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    RawF32,
    Idx,
}

impl FromStr for FileFormat {
    type Err = TsneError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "raw" | "bin" => Ok(FileFormat::RawF32),
            "idx" => Ok(FileFormat::Idx),
            other => Err(TsneError::InvalidParameter(format!(
                "unknown format {other:?} (expected csv, raw, or idx)"
            ))),
        }
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileFormat::Csv => "csv",
            FileFormat::RawF32 => "raw",
            FileFormat::Idx => "idx",
        })
    }
}

/// Guesses the format from a file name; IDX covers the conventional
/// `-ubyte` suffixes.
pub fn infer_format(path: &Path) -> Option<FileFormat> {
    let name = path.file_name()?.to_str()?.to_ascii_lowercase();
    if name.ends_with(".csv") {
        Some(FileFormat::Csv)
    } else if name.ends_with(".raw") || name.ends_with(".bin") {
        Some(FileFormat::RawF32)
    } else if name.contains("idx") || name.ends_with("-ubyte") {
        Some(FileFormat::Idx)
    } else {
        None
    }
}

fn resolve_format(path: &Path, format: Option<FileFormat>) -> Result<FileFormat> {
    format.or_else(|| infer_format(path)).ok_or_else(|| {
        TsneError::InvalidParameter(format!(
            "cannot infer the format of {}; pass it explicitly",
            path.display()
        ))
    })
}

fn malformed(path: &Path, message: impl Into<String>) -> TsneError {
    TsneError::Malformed {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Loads a dataset, inferring the format from the name when not given.
pub fn load_dataset(path: &Path, format: Option<FileFormat>) -> Result<LabeledDataset> {
    match resolve_format(path, format)? {
        FileFormat::Csv => load_csv(path),
        FileFormat::RawF32 => load_raw(path),
        FileFormat::Idx => load_idx(path),
    }
}

/// Saves a dataset as CSV or raw binary (IDX output is not supported).
pub fn save_dataset(path: &Path, dataset: &LabeledDataset, format: Option<FileFormat>) -> Result<()> {
    let labels = dataset.labels.as_deref();
    match resolve_format(path, format)? {
        FileFormat::Csv => {
            let names: Vec<String> = (0..dataset.data.d()).map(|j| format!("x{j}")).collect();
            write_csv(path, dataset.data.values(), dataset.data.d(), &names, labels)
        }
        FileFormat::RawF32 => write_raw(path, dataset.data.values(), dataset.data.d(), labels),
        FileFormat::Idx => Err(TsneError::InvalidParameter(
            "writing IDX files is not supported".into(),
        )),
    }
}

/// Saves planar coordinates (and labels, when present) as CSV or raw binary.
pub fn save_embedding(
    path: &Path,
    coords: &[f32],
    labels: Option<&[i32]>,
    format: Option<FileFormat>,
) -> Result<()> {
    assert_eq!(coords.len() % 2, 0, "coords must be (x, y) pairs");
    if let Some(l) = labels {
        assert_eq!(l.len() * 2, coords.len(), "one label per point");
    }
    match resolve_format(path, format)? {
        FileFormat::Csv => write_csv(path, coords, 2, &["x".into(), "y".into()], labels),
        FileFormat::RawF32 => write_raw(path, coords, 2, labels),
        FileFormat::Idx => Err(TsneError::InvalidParameter(
            "writing IDX files is not supported".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// CSV

fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .peekable();

    let (_, first) = lines
        .peek()
        .copied()
        .ok_or_else(|| malformed(path, "file is empty"))?;
    let first_fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let is_header = first_fields.iter().any(|f| f.parse::<f64>().is_err());
    let has_labels = is_header
        && first_fields
            .last()
            .is_some_and(|f| f.eq_ignore_ascii_case("label"));
    let columns = first_fields.len();
    if is_header {
        lines.next();
    }

    let d = columns - usize::from(has_labels);
    let mut values: Vec<f32> = Vec::new();
    let mut labels: Vec<i32> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns {
            return Err(malformed(
                path,
                format!(
                    "line {lineno}: expected {columns} fields, found {}",
                    fields.len()
                ),
            ));
        }
        for &f in &fields[..d] {
            let v: f32 = f.parse().map_err(|_| {
                malformed(path, format!("line {lineno}: {f:?} is not a number"))
            })?;
            values.push(v);
        }
        if has_labels {
            let f = fields[columns - 1];
            let l: i32 = f.parse().map_err(|_| {
                malformed(path, format!("line {lineno}: {f:?} is not an integer label"))
            })?;
            labels.push(l);
        }
    }

    let n = values.len().checked_div(d).unwrap_or(0);
    let data = DataMatrix::new(n, d, values)?;
    LabeledDataset::new(data, has_labels.then_some(labels))
}

fn write_csv(
    path: &Path,
    values: &[f32],
    d: usize,
    names: &[String],
    labels: Option<&[i32]>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&names.join(","));
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in values.chunks_exact(d).enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        if let Some(l) = labels {
            out.push_str(&format!(",{}", l[i]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Raw binary

fn load_raw(path: &Path) -> Result<LabeledDataset> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(malformed(
            path,
            format!("header needs 16 bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(malformed(path, "bad magic (expected \"TSNE\")"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let flags = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if flags & !RAW_FLAG_LABELS != 0 {
        return Err(malformed(path, format!("unknown flag bits {flags:#x}")));
    }
    let has_labels = flags & RAW_FLAG_LABELS != 0;

    let value_bytes = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| malformed(path, "size fields overflow"))?;
    let label_bytes = if has_labels { n * 4 } else { 0 };
    let expected = 16 + value_bytes + label_bytes;
    if bytes.len() != expected {
        return Err(malformed(
            path,
            format!("expected {expected} bytes for {n}x{d}, found {}", bytes.len()),
        ));
    }

    let values: Vec<f32> = bytes[16..16 + value_bytes]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = has_labels.then(|| {
        bytes[16 + value_bytes..]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<i32>>()
    });

    LabeledDataset::new(DataMatrix::new(n, d, values)?, labels)
}

fn write_raw(path: &Path, values: &[f32], d: usize, labels: Option<&[i32]>) -> Result<()> {
    let n = values.len().checked_div(d).unwrap_or(0);
    let mut bytes = Vec::with_capacity(16 + values.len() * 4 + labels.map_or(0, |l| l.len() * 4));
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    bytes.extend_from_slice(&if labels.is_some() { RAW_FLAG_LABELS } else { 0 }.to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = labels {
        for l in labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// IDX

/// Reads an unsigned-byte IDX file: `(dimensions, payload)`.
fn read_idx_ubyte(path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(malformed(path, "missing magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(malformed(path, "bad magic (first two bytes must be zero)"));
    }
    if bytes[2] != IDX_TYPE_UBYTE {
        return Err(malformed(
            path,
            format!("unsupported element type {:#04x} (only unsigned byte)", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(malformed(path, "zero-dimensional file"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(malformed(
            path,
            format!("header needs {header} bytes, file has {}", bytes.len()),
        ));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        })
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |a, &b| a.checked_mul(b))
        .ok_or_else(|| malformed(path, "dimension product overflows"))?;
    if bytes.len() != header + count {
        return Err(malformed(
            path,
            format!(
                "expected {} payload bytes for dimensions {dims:?}, found {}",
                count,
                bytes.len() - header
            ),
        ));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// Derives the conventional labels-file name for an images file.
fn idx_label_sidecar(path: &Path) -> Option<std::path::PathBuf> {
    let name = path.file_name()?.to_str()?;
    let swapped = name.replace("images", "labels").replace("idx3", "idx1");
    if swapped == name {
        return None;
    }
    Some(path.with_file_name(swapped))
}

fn load_idx(path: &Path) -> Result<LabeledDataset> {
    let (dims, payload) = read_idx_ubyte(path)?;
    if dims.len() < 2 {
        return Err(malformed(
            path,
            format!("a dataset needs at least 2 dimensions, found {}", dims.len()),
        ));
    }
    let n = dims[0];
    let d: usize = dims[1..].iter().product();
    let values: Vec<f32> = payload.iter().map(|&b| f32::from(b) / 255.0).collect();
    let data = DataMatrix::new(n, d, values)?;

    let labels = match idx_label_sidecar(path).filter(|p| p.exists()) {
        Some(sidecar) => {
            let (ldims, lpayload) = read_idx_ubyte(&sidecar)?;
            if ldims.len() != 1 || ldims[0] != n {
                return Err(malformed(
                    &sidecar,
                    format!("expected {n} labels, found dimensions {ldims:?}"),
                ));
            }
            Some(lpayload.into_iter().map(i32::from).collect())
        }
        None => None,
    };
    LabeledDataset::new(data, labels)
}

// ---------------------------------------------------------------------------
// SVG plot

const SVG_SIZE: f64 = 800.0;
const SVG_PADDING: f64 = 0.05;
/// Fill colors cycled by label; chosen for pairwise contrast.
const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896",
    "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

/// Writes a scatter plot of planar coordinates. Output bytes are a pure
/// function of the input, so identical embeddings plot identically.
pub fn plot_svg(path: &Path, coords: &[f32], labels: Option<&[i32]>) -> Result<()> {
    assert_eq!(coords.len() % 2, 0, "coords must be (x, y) pairs");
    let n = coords.len() / 2;
    if let Some(l) = labels {
        assert_eq!(l.len(), n, "one label per point");
    }
    if n == 0 {
        return Err(TsneError::InvalidParameter("nothing to plot".into()));
    }

    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for (e, &c) in coords.iter().enumerate() {
        let c = c as f64;
        min[e % 2] = min[e % 2].min(c);
        max[e % 2] = max[e % 2].max(c);
    }
    let pad = SVG_SIZE * SVG_PADDING;
    let inner = SVG_SIZE - 2.0 * pad;
    let scale = |v: f64, axis: usize| -> f64 {
        let span = max[axis] - min[axis];
        let t = if span > 0.0 { (v - min[axis]) / span } else { 0.5 };
        // SVG's y axis grows downward; flip it so the plot reads normally.
        match axis {
            0 => pad + t * inner,
            _ => SVG_SIZE - pad - t * inner,
        }
    };

    let mut svg = String::with_capacity(64 * n + 256);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" \
         viewBox=\"0 0 {0} {0}\">\n<rect width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n",
        SVG_SIZE
    ));
    for i in 0..n {
        let x = scale(coords[2 * i] as f64, 0);
        let y = scale(coords[2 * i + 1] as f64, 1);
        let color = match labels {
            Some(l) => PALETTE[(l[i].rem_euclid(PALETTE.len() as i32)) as usize],
            None => PALETTE[0],
        };
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{color}\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}
