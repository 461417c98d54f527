//! Dataset ingestion and preparation: CSV and IDX loaders, min-max feature
//! scaling, and class-stratified subsampling. Loaders reject malformed input
//! with row/column diagnostics instead of coercing.

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;
use std::io::Read;
use std::path::Path;

/// A loaded dataset: row-major features, optional labels, and the scaling
/// ranges once `scale_minmax` has run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Tensor,
    pub y: Option<Vec<usize>>,
    /// Original label values in class-index order, when labels were
    /// factorized from a CSV column.
    pub label_names: Option<Vec<String>>,
    pub feature_min: Option<Vec<f64>>,
    pub feature_max: Option<Vec<f64>>,
}

impl Dataset {
    pub fn from_parts(name: impl Into<String>, x: Tensor, y: Option<Vec<usize>>) -> Result<Self> {
        if let Some(labels) = &y {
            if labels.len() != x.rows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    x.rows()
                )));
            }
        }
        Ok(Dataset { name: name.into(), x, y, label_names: None, feature_min: None, feature_max: None })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of classes: one past the largest label.
    pub fn class_count(&self) -> Option<usize> {
        self.y.as_ref().map(|y| y.iter().max().map_or(0, |&m| m + 1))
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

/// Load a rectangular numeric CSV with a header row. `label_column` names a
/// header whose values become factorized class labels (first occurrence =
/// class 0), removed from the feature matrix.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::format(format!(
                "{}: no column named {name:?} (header: {})",
                path.display(),
                headers.join(", ")
            ))
        })?),
        None => None,
    };

    let mut data: Vec<f64> = Vec::new();
    let mut label_values: Vec<String> = Vec::new();
    let mut rows = 0usize;
    for (ri, record) in reader.records().enumerate() {
        let row_no = ri + 1; // 1-based data row, header excluded
        let record = record.map_err(|e| Error::format(format!("{}: row {row_no}: {e}", path.display())))?;
        for (ci, cell) in record.iter().enumerate() {
            if Some(ci) == label_idx {
                label_values.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::format(format!(
                    "{}: row {row_no}, column {:?}: not a number: {cell:?}",
                    path.display(),
                    headers[ci]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::format(format!(
                    "{}: row {row_no}, column {:?}: non-finite value {cell:?}",
                    path.display(),
                    headers[ci]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    let n = headers.len() - usize::from(label_idx.is_some());
    if rows == 0 || n == 0 {
        return Err(Error::format(format!("{}: no data", path.display())));
    }
    let x = Tensor::matrix(rows, n, data)?;

    if label_idx.is_none() {
        return Dataset::from_parts(file_stem(path), x, None);
    }
    let mut names: Vec<String> = Vec::new();
    let y = label_values
        .into_iter()
        .map(|v| {
            names.iter().position(|n| *n == v).unwrap_or_else(|| {
                names.push(v);
                names.len() - 1
            })
        })
        .collect();
    let mut dataset = Dataset::from_parts(file_stem(path), x, Some(y))?;
    dataset.label_names = Some(names);
    Ok(dataset)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(format!("truncated IDX file while reading {what}")));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().expect("window is 4 bytes")))
}

/// Load an IDX image/label file pair (the de-facto MNIST distribution
/// format): big-endian headers, pixel bytes scaled to [0,1] by 255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let read_all = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        std::fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::format(format!("{}: {e}", p.display())))?;
        Ok(buf)
    };
    let images = read_all(images_path)?;
    let labels = read_all(labels_path)?;

    let magic = read_be_u32(&images, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "{}: bad image magic {magic:#010x}, want {IDX_IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let m = read_be_u32(&images, 4, "image count")? as usize;
    let rows = read_be_u32(&images, 8, "image rows")? as usize;
    let cols = read_be_u32(&images, 12, "image cols")? as usize;
    let n = rows * cols;
    if images.len() != 16 + m * n {
        return Err(Error::format(format!(
            "{}: header promises {m} images of {rows}x{cols} ({} bytes), file has {}",
            images_path.display(),
            16 + m * n,
            images.len()
        )));
    }

    let lmagic = read_be_u32(&labels, 0, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "{}: bad label magic {lmagic:#010x}, want {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lm = read_be_u32(&labels, 4, "label count")? as usize;
    if lm != m {
        return Err(Error::format(format!("{m} images but {lm} labels")));
    }
    if labels.len() != 8 + lm {
        return Err(Error::format(format!(
            "{}: header promises {lm} labels, file has {} payload bytes",
            labels_path.display(),
            labels.len().saturating_sub(8)
        )));
    }

    let data: Vec<f64> = images[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    let y: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    Dataset::from_parts(file_stem(images_path), Tensor::matrix(m, n, data)?, Some(y))
}

/// Scale a raw matrix with stored ranges, clamping to [0,1] so out-of-sample
/// values cannot leave the training cube. Constant features map to 0.
pub fn apply_minmax(x: &Tensor, feature_min: &[f64], feature_max: &[f64]) -> Result<Tensor> {
    if x.cols() != feature_min.len() || x.cols() != feature_max.len() {
        return Err(Error::invalid(format!(
            "scaling ranges cover {} features, data has {}",
            feature_min.len(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let span = feature_max[j] - feature_min[j];
            let v = if span > 0.0 { ((x.at2(i, j) - feature_min[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            out.set2(i, j, v);
        }
    }
    Ok(out)
}

/// Per-feature min-max scaling to [0,1], recording the ranges on the dataset
/// for out-of-sample reuse.
pub fn scale_minmax(dataset: Dataset) -> Dataset {
    let x = &dataset.x;
    let mut feature_min = vec![f64::INFINITY; x.cols()];
    let mut feature_max = vec![f64::NEG_INFINITY; x.cols()];
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            feature_min[j] = feature_min[j].min(*v);
            feature_max[j] = feature_max[j].max(*v);
        }
    }
    let scaled = apply_minmax(x, &feature_min, &feature_max).expect("ranges came from this matrix");
    Dataset {
        x: scaled,
        feature_min: Some(feature_min),
        feature_max: Some(feature_max),
        ..dataset
    }
}

/// Uniform sample of `target` rows without replacement; class-stratified
/// with largest-remainder quotas when labels are present. Row order of the
/// sample follows the original dataset.
pub fn subsample(dataset: &Dataset, target: usize, seed: u64) -> Result<Dataset> {
    let m = dataset.rows();
    if target > m {
        return Err(Error::invalid(format!("cannot sample {target} of {m} rows")));
    }
    let mut rng = stream(seed, "subsample");
    let mut chosen: Vec<usize> = match &dataset.y {
        Some(y) => {
            let k = dataset.class_count().expect("labels are present");
            if target < k {
                return Err(Error::invalid(format!(
                    "sample of {target} cannot cover {k} classes; raise the target"
                )));
            }
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in y.iter().enumerate() {
                per_class[l].push(i);
            }
            // largest-remainder quotas, ties to the lower class index
            let quotas: Vec<f64> =
                per_class.iter().map(|c| target as f64 * c.len() as f64 / m as f64).collect();
            let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let mut leftover = target - counts.iter().sum::<usize>();
            let mut by_remainder: Vec<usize> = (0..k).collect();
            by_remainder.sort_by(|&a, &b| {
                (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b))
            });
            for &c in &by_remainder {
                if leftover == 0 {
                    break;
                }
                if counts[c] < per_class[c].len() {
                    counts[c] += 1;
                    leftover -= 1;
                }
            }
            let mut picks = Vec::with_capacity(target);
            for (c, members) in per_class.iter().enumerate() {
                let mut pool = members.clone();
                partial_shuffle(&mut pool, counts[c], &mut rng);
                picks.extend_from_slice(&pool[..counts[c]]);
            }
            picks
        }
        None => {
            let mut pool: Vec<usize> = (0..m).collect();
            partial_shuffle(&mut pool, target, &mut rng);
            pool[..target].to_vec()
        }
    };
    chosen.sort_unstable();

    let mut data = Vec::with_capacity(chosen.len() * dataset.dim());
    for &i in &chosen {
        data.extend_from_slice(dataset.x.row(i));
    }
    Ok(Dataset {
        name: dataset.name.clone(),
        x: Tensor::matrix(chosen.len(), dataset.dim(), data)?,
        y: dataset.y.as_ref().map(|y| chosen.iter().map(|&i| y[i]).collect()),
        label_names: dataset.label_names.clone(),
        feature_min: dataset.feature_min.clone(),
        feature_max: dataset.feature_max.clone(),
    })
}

/// Fisher-Yates, stopped after the first `take` slots are settled.
fn partial_shuffle(pool: &mut [usize], take: usize, rng: &mut impl rand::Rng) {
    for i in 0..take.min(pool.len().saturating_sub(1)) {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
}
