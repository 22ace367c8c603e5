//! Dataset ingestion and synthesis.
//!
//! Loaders transpose row-per-instance files into the columns-as-samples
//! convention used everywhere else. Generators are deterministic per seed
//! (ChaCha8 uniform stream, ziggurat Gaussian via `rand_distr`).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::seq::index::sample as index_sample;
use rand_distr::Normal;

use crate::cluster::LabelVector;
use crate::error::{Error, Result};
use crate::matrix::validate_matrix;
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

/// A data matrix (m features × n samples) with per-sample class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset<F> {
    pub x: Array2<F>,
    pub labels: LabelVector,
    /// Original label strings in first-appearance order; index = label value.
    pub label_names: Vec<String>,
    pub name: String,
}

/// Which column of a row-per-instance file holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
}

/// Additive Gaussian noise, mean fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<F> {
    pub sigma: F,
    pub seed: u64,
}

/// Loads a row-per-instance CSV into the features×samples layout.
///
/// Lines starting with `#` are skipped. String labels map to integers in
/// first-appearance order.
pub fn load_csv<F: Scalar>(
    path: &Path,
    label_column: LabelColumn,
    delimiter: u8,
) -> Result<LabeledDataset<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(false)
        .from_path(path)?;

    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {row_idx}: {e}")))?;
        let width = record.len();
        if width < 2 {
            return Err(Error::Data(format!(
                "row {row_idx} has {width} fields; need at least one feature and a label"
            )));
        }
        let label_idx = match label_column {
            LabelColumn::Last => width - 1,
            LabelColumn::Index(i) => {
                if i >= width {
                    return Err(Error::Data(format!(
                        "label column {i} out of range for {width} fields"
                    )));
                }
                i
            }
        };
        let mut features = Vec::with_capacity(width - 1);
        for (col_idx, field) in record.iter().enumerate() {
            if col_idx == label_idx {
                let name = field.trim().to_string();
                let next_id = label_names.len();
                let id = *label_ids.entry(name.clone()).or_insert_with(|| {
                    label_names.push(name);
                    next_id
                });
                labels.push(id);
            } else {
                let value = F::parse_str(field).ok_or_else(|| {
                    Error::Data(format!(
                        "row {row_idx}, column {col_idx}: cannot parse {field:?} as a number"
                    ))
                })?;
                features.push(value);
            }
        }
        rows.push(features);
    }

    if rows.is_empty() {
        return Err(Error::Data(format!("{} contains no data rows", path.display())));
    }
    let n = rows.len();
    let m = rows[0].len();

    // transpose to features × samples
    let mut x = Array2::zeros((m, n));
    for (j, row) in rows.iter().enumerate() {
        for (i, &value) in row.iter().enumerate() {
            x[[i, j]] = value;
        }
    }
    validate_matrix(&x, "dataset")?;

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let num_classes = label_names.len();
    Ok(LabeledDataset {
        x,
        labels: LabelVector::new(labels, num_classes)?,
        label_names,
        name,
    })
}

/// Writes a dataset back to row-per-instance CSV (features, then the label
/// name). Reloading reproduces the dataset bit-exactly.
pub fn write_dataset_csv<F: Scalar>(path: &Path, ds: &LabeledDataset<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# dataset={} classes={}", ds.name, ds.labels.num_classes())?;
    let (m, n) = (ds.x.nrows(), ds.x.ncols());
    for j in 0..n {
        let mut fields = Vec::with_capacity(m + 1);
        for i in 0..m {
            fields.push(format!("{}", ds.x[[i, j]]));
        }
        fields.push(ds.label_names[ds.labels.labels()[j]].clone());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Returns `x` plus i.i.d. N(0, sigma²) noise; `sigma = 0` returns the input
/// unchanged bit-for-bit. The original is untouched.
pub fn add_gaussian_noise<F: Scalar>(x: &Array2<F>, spec: &NoiseSpec<F>) -> Array2<F> {
    if spec.sigma == F::zero() {
        return x.clone();
    }
    let mut rng = seeded(spec.seed, streams::NOISE);
    let normal = Normal::new(0.0, spec.sigma.to_f64().expect("finite sigma"))
        .expect("sigma validated nonnegative");
    let mut out = x.clone();
    for e in out.iter_mut() {
        *e += F::real(normal.sample(&mut rng));
    }
    out
}

/// Draws `floor(fraction · n)` samples without replacement, preserving the
/// original sample order. Labels travel with their columns.
pub fn subsample<F: Scalar>(
    ds: &LabeledDataset<F>,
    fraction: f64,
    seed: u64,
) -> Result<LabeledDataset<F>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = ds.x.ncols();
    let count = (fraction * n as f64).floor() as usize;
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "subsampling {n} samples at fraction {fraction} selects nothing"
        )));
    }
    let mut rng = seeded(seed, streams::SUBSAMPLE);
    let mut chosen: Vec<usize> = index_sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();

    let m = ds.x.nrows();
    let mut x = Array2::zeros((m, count));
    let mut labels = Vec::with_capacity(count);
    for (new_j, &old_j) in chosen.iter().enumerate() {
        x.column_mut(new_j).assign(&ds.x.column(old_j));
        labels.push(ds.labels.labels()[old_j]);
    }
    Ok(LabeledDataset {
        x,
        labels: LabelVector::new(labels, ds.labels.num_classes())?,
        label_names: ds.label_names.clone(),
        name: ds.name.clone(),
    })
}

/// Uniform i.i.d. matrix on `[lo, hi]`, deterministic per seed.
pub fn random_matrix<F: Scalar>(m: usize, n: usize, lo: F, hi: F, seed: u64) -> Result<Array2<F>> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    let mut rng = seeded(seed, streams::UNIFORM_MATRIX);
    let dist = Uniform::new_inclusive(
        lo.to_f64().expect("finite bound"),
        hi.to_f64().expect("finite bound"),
    )
    .map_err(|e| Error::InvalidParameter(format!("bad uniform range: {e}")))?;
    let mut values = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        values.push(F::real(dist.sample(&mut rng)));
    }
    Ok(Array2::from_shape_vec((m, n), values).expect("shape matches length"))
}

/// An exact low-rank instance: X = U_true · V_trueᵀ with mixed-sign U and
/// nonnegative V, so the factorization objective can reach zero.
#[derive(Debug, Clone)]
pub struct SyntheticInstance<F> {
    pub x: Array2<F>,
    pub u_true: Array2<F>,
    pub v_true: Array2<F>,
}

pub fn synthetic_exact<F: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<SyntheticInstance<F>> {
    if k == 0 || k >= m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k < min(m, n), got k={k}, m={m}, n={n}"
        )));
    }
    let mut rng = seeded(seed, streams::SYNTHETIC);
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64, len: usize| {
        let dist = Uniform::new_inclusive(lo, hi).expect("valid range");
        (0..len).map(|_| F::real(dist.sample(rng))).collect::<Vec<F>>()
    };
    let u_true = Array2::from_shape_vec((m, k), uniform(&mut rng, -1.0, 1.0, m * k))
        .expect("shape matches length");
    let v_true = Array2::from_shape_vec((n, k), uniform(&mut rng, 0.0, 1.0, n * k))
        .expect("shape matches length");
    let x = u_true.dot(&v_true.t());
    Ok(SyntheticInstance { x, u_true, v_true })
}

/// Writes a matrix as CSV with a `# rows=<m> cols=<n>` header and
/// round-trip-exact decimal entries.
pub fn write_matrix_csv<F: Scalar>(path: &Path, m: &Array2<F>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# rows={} cols={}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<F: Scalar>(path: &Path) -> Result<Array2<F>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))??;
    let dims = parse_matrix_header(&header)
        .ok_or_else(|| Error::Data(format!("{}: bad header {header:?}", path.display())))?;
    let (rows, cols) = dims;
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Data(format!(
                "{}: row {i} has {} fields, expected {cols}",
                path.display(),
                fields.len()
            )));
        }
        for field in fields {
            values.push(F::parse_str(field).ok_or_else(|| {
                Error::Data(format!("{}: cannot parse {field:?}", path.display()))
            })?);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::Data(format!(
            "{}: expected {rows}x{cols} entries, found {}",
            path.display(),
            values.len()
        )));
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("validated shape"))
}

fn parse_matrix_header(header: &str) -> Option<(usize, usize)> {
    let rest = header.trim().strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    Some((rows?, cols?))
}
