//! Loading feature matrices from CSV and IDX files, synthetic benchmark data,
//! and per-column min-max scaling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Samples as rows of `x`, with optional ground-truth class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DenseMatrix, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(invalid(format!("{} labels for {} samples", l.len(), x.rows())));
            }
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                stage: "dataset loading".into(),
            });
        }
        Ok(Self {
            x,
            labels,
            name: name.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Number of distinct classes, when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    /// Column holding the class label, removed from the features.
    pub label_col: Option<usize>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_col: None,
            delimiter: b',',
        }
    }
}

/// One sample per row. A first row whose feature cells are all non-numeric is
/// taken as a header and skipped. Label values are mapped to ids `0, 1, ...`
/// in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut values = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;

    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(format!(
                "row {} has {} fields, expected {expected}",
                line + 1,
                record.len()
            )));
        }
        if let Some(c) = opts.label_col {
            if c >= expected {
                return Err(parse_err(format!("label column {c} out of range for {expected} columns")));
            }
        }
        let features = record.iter().enumerate().filter(|(j, _)| Some(*j) != opts.label_col);
        let parsed: Vec<std::result::Result<f64, _>> = features.clone().map(|(_, s)| s.parse::<f64>()).collect();
        if rows == 0 && line == 0 && !parsed.is_empty() && parsed.iter().all(|p| p.is_err()) {
            continue;
        }
        for ((col, cell), p) in features.zip(parsed) {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(parse_err(format!(
                        "row {}, column {col}: '{cell}' is not a finite number",
                        line + 1
                    )))
                }
            }
        }
        if let Some(c) = opts.label_col {
            let next = label_ids.len();
            labels.push(*label_ids.entry(record[c].to_string()).or_insert(next));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err("no data rows".into()));
    }
    let d = width.expect("at least one row") - usize::from(opts.label_col.is_some());
    if d == 0 {
        return Err(parse_err("no feature columns".into()));
    }
    let x = DenseMatrix::from_vec(rows, d, values)?;
    let name = path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, opts.label_col.map(|_| labels), name)
}

/// Writes `x` with one sample per row, optionally followed by a label column.
/// Values use the shortest representation that parses back exactly.
pub fn write_csv<W: Write>(mut out: W, x: &DenseMatrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(invalid(format!("{} labels for {} rows", l.len(), x.rows())));
        }
    }
    let mut line = String::new();
    for (i, row) in x.row_iter().enumerate() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        if let Some(l) = labels {
            line.push(',');
            line.push_str(&l[i].to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// MNIST-style IDX image and label files. Pixels are flattened row-major and
/// divided by 255.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let img = std::fs::read(images)?;
    let lab = std::fs::read(labels)?;
    let err = |path: &Path, message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };

    match be_u32(&img, 0) {
        Some(IDX_IMAGES) => {}
        Some(m) => return Err(err(images, format!("magic {m:#010x}, expected {IDX_IMAGES:#010x}"))),
        None => return Err(err(images, "file too short".into())),
    }
    match be_u32(&lab, 0) {
        Some(IDX_LABELS) => {}
        Some(m) => return Err(err(labels, format!("magic {m:#010x}, expected {IDX_LABELS:#010x}"))),
        None => return Err(err(labels, "file too short".into())),
    }
    let header = |bytes: &[u8], path: &Path, count: usize| -> Result<Vec<usize>> {
        (0..count)
            .map(|i| {
                be_u32(bytes, 4 + 4 * i)
                    .map(|v| v as usize)
                    .ok_or_else(|| err(path, "truncated header".into()))
            })
            .collect()
    };
    let dims = header(&img, images, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let n_labels = header(&lab, labels, 1)?[0];
    if n != n_labels {
        return Err(err(images, format!("{n} images but {n_labels} labels in {}", labels.display())));
    }
    let d = rows * cols;
    let pixels = img
        .get(16..16 + n * d)
        .ok_or_else(|| err(images, format!("expected {} pixel bytes", n * d)))?;
    let classes = lab
        .get(8..8 + n)
        .ok_or_else(|| err(labels, format!("expected {n} label bytes")))?;
    let x = DenseMatrix::from_vec(n, d, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let name = images.file_stem().map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(x, Some(classes.iter().map(|&c| usize::from(c)).collect()), name)
}

/// Stacks datasets with the same feature width, e.g. a train and a test split.
pub fn concat(parts: &[Dataset], name: impl Into<String>) -> Result<Dataset> {
    let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
    let d = first.n_features();
    let mut values = Vec::new();
    let mut labels = Some(Vec::new());
    for p in parts {
        if p.n_features() != d {
            return Err(invalid(format!("feature widths {d} and {} differ", p.n_features())));
        }
        values.extend_from_slice(p.x.as_slice());
        labels = match (labels, &p.labels) {
            (Some(mut acc), Some(l)) => {
                acc.extend_from_slice(l);
                Some(acc)
            }
            _ => None,
        };
    }
    let n = values.len() / d;
    Dataset::new(DenseMatrix::from_vec(n, d, values)?, labels, name)
}

/// `c` isotropic unit-variance Gaussian blobs of near-equal size.
///
/// When `c ≤ d` the centers sit at `separation/√2 · e_j`, so every pair of
/// centers is exactly `separation` apart. Otherwise the centers are drawn from
/// `N(0, separation²/2 · I)`, which gives the same expected spacing.
pub fn make_blobs(n: usize, d: usize, c: usize, separation: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if c == 0 || c > n || d == 0 {
        return Err(invalid(format!("cannot make {c} blobs of {n} points in {d} dimensions")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(invalid(format!("separation must be positive, got {separation}")));
    }
    let scale = separation * std::f64::consts::FRAC_1_SQRT_2;
    let centers = if c <= d {
        DenseMatrix::from_fn(c, d, |j, l| if j == l { scale } else { 0.0 })
    } else {
        DenseMatrix::from_fn(c, d, |_, _| scale * rng.normal())
    };
    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();
    let x = DenseMatrix::from_fn(n, d, |i, l| centers[(labels[i], l)] + rng.normal());
    Dataset::new(x, Some(labels), format!("blobs-{c}"))
}

/// Two interleaved half circles with Gaussian noise of standard deviation
/// `noise`. The first `⌈n/2⌉` points form the upper moon (label 0).
pub fn make_two_moons(n: usize, noise: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid(format!("two moons need at least 2 points, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid(format!("noise must be nonnegative, got {noise}")));
    }
    let upper = n.div_ceil(2);
    let lower = n - upper;
    let angle = |i: usize, count: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..upper {
        let t = angle(i, upper);
        values.extend([t.cos() + noise * rng.normal(), t.sin() + noise * rng.normal()]);
        labels.push(0);
    }
    for i in 0..lower {
        let t = angle(i, lower);
        values.extend([1.0 - t.cos() + noise * rng.normal(), 0.5 - t.sin() + noise * rng.normal()]);
        labels.push(1);
    }
    Dataset::new(DenseMatrix::from_vec(n, 2, values)?, Some(labels), "two-moons")
}

/// Maps each column affinely onto `[0, 1]`; constant columns become 0.
pub fn minmax_scale(x: &DenseMatrix) -> DenseMatrix {
    let ranges = x.column_ranges();
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        let (lo, hi) = ranges[j];
        if hi > lo {
            (x[(i, j)] - lo) / (hi - lo)
        } else {
            0.0
        }
    })
}
