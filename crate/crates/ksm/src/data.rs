//! Datasets: the two-moons benchmark, IDX image files, minibatch sampling.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{KsmError, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// An immutable collection of input vectors (rows of `x`), optionally labeled.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// T×M matrix; row t is the input vector x^t.
    pub x: DMatrix<f64>,
    /// Per-row class labels, when the source provides them.
    pub labels: Option<Vec<u32>>,
    pub name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, labels: Option<Vec<u32>>, name: impl Into<String>) -> Result<Dataset> {
        let d = Dataset {
            x,
            labels,
            name: name.into(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Number of samples T.
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Input dimension M.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 || self.x.ncols() == 0 {
            return Err(KsmError::InvalidArgument(format!(
                "dataset {}: needs T >= 1 and M >= 1, got {}x{}",
                self.name,
                self.x.nrows(),
                self.x.ncols()
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(KsmError::InvalidArgument(format!(
                "dataset {}: non-finite entry",
                self.name
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.x.nrows() {
                return Err(KsmError::dim(
                    "dataset labels vs rows",
                    labels.len(),
                    self.x.nrows(),
                ));
            }
        }
        Ok(())
    }

    /// Uniform subsample of `count` rows without replacement (labels follow).
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Dataset> {
        if count == 0 || count > self.len() {
            return Err(KsmError::InvalidArgument(format!(
                "subsample: count {count} out of range 1..={}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, self.len(), count).into_vec();
        idx.sort_unstable(); // keep original row order; selection is what's random
        let x = DMatrix::from_fn(count, self.dim(), |r, c| self.x[(idx[r], c)]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Dataset::new(x, labels, self.name.clone())
    }

    /// Splits into `(train, test)` with `round(T · test_fraction)` test rows
    /// (at least one row on each side), drawn uniformly without replacement.
    /// Both halves keep the original row order and labels.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(KsmError::InvalidArgument(format!(
                "split: test_fraction must be in (0, 1), got {test_fraction}"
            )));
        }
        let t = self.len();
        if t < 2 {
            return Err(KsmError::InvalidArgument(format!(
                "split: need at least 2 rows, got {t}"
            )));
        }
        let count = ((t as f64 * test_fraction).round() as usize).clamp(1, t - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_test = vec![false; t];
        for i in rand::seq::index::sample(&mut rng, t, count) {
            in_test[i] = true;
        }
        let take = |keep: bool, suffix: &str| -> Result<Dataset> {
            let idx: Vec<usize> = (0..t).filter(|&i| in_test[i] == keep).collect();
            let x = DMatrix::from_fn(idx.len(), self.dim(), |r, c| self.x[(idx[r], c)]);
            let labels = self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect());
            Dataset::new(x, labels, format!("{}-{suffix}", self.name))
        };
        Ok((take(false, "train")?, take(true, "test")?))
    }

    /// Writes the dataset as CSV with header `x0,...,x{M-1},label`
    /// (label column left empty when absent).
    pub fn to_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for t in 0..self.len() {
            let row: Vec<String> = self.x.row(t).iter().map(|v| v.to_string()).collect();
            match &self.labels {
                Some(l) => writeln!(out, "{},{}", row.join(","), l[t])?,
                None => writeln!(out, "{},", row.join(","))?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Half moons
// ---------------------------------------------------------------------------

/// Two noisy interleaving half circles with unit radius.
///
/// The upper moon traces (cos θ, sin θ) and carries label 0; the lower moon
/// traces (1 − cos θ, 0.5 − sin θ) and carries label 1, with θ on a
/// deterministic uniform grid over [0, π] per moon and i.i.d. Gaussian noise
/// of standard deviation `noise_std` added per coordinate. Odd counts give
/// the upper moon the extra point.
pub fn make_half_moons(count: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(KsmError::InvalidArgument(format!(
            "make_half_moons: need count >= 2, got {count}"
        )));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(KsmError::InvalidArgument(format!(
            "make_half_moons: noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let n_upper = count / 2 + count % 2;
    let n_lower = count / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");

    let theta = |j: usize, n: usize| -> f64 {
        if n == 1 {
            0.0
        } else {
            std::f64::consts::PI * j as f64 / (n - 1) as f64
        }
    };

    let mut x = DMatrix::zeros(count, 2);
    let mut labels = Vec::with_capacity(count);
    for j in 0..n_upper {
        let t = theta(j, n_upper);
        x[(j, 0)] = t.cos() + noise.sample(&mut rng);
        x[(j, 1)] = t.sin() + noise.sample(&mut rng);
        labels.push(0);
    }
    for j in 0..n_lower {
        let t = theta(j, n_lower);
        let r = n_upper + j;
        x[(r, 0)] = 1.0 - t.cos() + noise.sample(&mut rng);
        x[(r, 1)] = 0.5 - t.sin() + noise.sample(&mut rng);
        labels.push(1);
    }
    Dataset::new(x, Some(labels), "half_moons")
}

// ---------------------------------------------------------------------------
// IDX image files
// ---------------------------------------------------------------------------

/// Loads grayscale images (and optionally labels) from IDX files, center-crops
/// each image by `crop` pixels per side, scales pixels to [0, 1] by dividing
/// by 255, and flattens row-major.
pub fn load_idx_images(
    images_path: &Path,
    labels_path: Option<&Path>,
    crop: usize,
) -> Result<Dataset> {
    let idx_err = |path: &Path, reason: String| KsmError::IdxFormat {
        path: path.display().to_string(),
        reason,
    };

    let mut r = BufReader::new(File::open(images_path)?);
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header".to_string()))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(idx_err(
            images_path,
            format!("bad magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header".to_string()))? as usize;
    let h = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header".to_string()))? as usize;
    let w = r
        .read_u32::<BigEndian>()
        .map_err(|_| idx_err(images_path, "truncated header".to_string()))? as usize;
    if count == 0 {
        return Err(idx_err(images_path, "zero images".to_string()));
    }
    if h <= 2 * crop || w <= 2 * crop {
        return Err(KsmError::InvalidArgument(format!(
            "crop {crop} leaves no pixels of a {h}x{w} image"
        )));
    }
    let mut pixels = vec![0u8; count * h * w];
    r.read_exact(&mut pixels).map_err(|_| {
        idx_err(
            images_path,
            format!("truncated: expected {} pixel bytes", count * h * w),
        )
    })?;

    let ch = h - 2 * crop;
    let cw = w - 2 * crop;
    let m = ch * cw;
    let mut x = DMatrix::zeros(count, m);
    for t in 0..count {
        let img = &pixels[t * h * w..(t + 1) * h * w];
        let mut col = 0;
        for row in crop..h - crop {
            for cc in crop..w - crop {
                x[(t, col)] = img[row * w + cc] as f64 / 255.0;
                col += 1;
            }
        }
    }

    let labels = match labels_path {
        None => None,
        Some(lp) => {
            let mut r = BufReader::new(File::open(lp)?);
            let magic = r
                .read_u32::<BigEndian>()
                .map_err(|_| idx_err(lp, "truncated header".to_string()))?;
            if magic != IDX_LABELS_MAGIC {
                return Err(idx_err(
                    lp,
                    format!("bad magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
                ));
            }
            let lcount = r
                .read_u32::<BigEndian>()
                .map_err(|_| idx_err(lp, "truncated header".to_string()))?
                as usize;
            if lcount != count {
                return Err(KsmError::dim("IDX images vs labels", count, lcount));
            }
            let mut bytes = vec![0u8; lcount];
            r.read_exact(&mut bytes)
                .map_err(|_| idx_err(lp, format!("truncated: expected {lcount} label bytes")))?;
            Some(bytes.into_iter().map(u32::from).collect())
        }
    };

    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    Dataset::new(x, labels, name)
}

// ---------------------------------------------------------------------------
// Minibatch sampling
// ---------------------------------------------------------------------------

/// Samples `batch_size` distinct rows uniformly without replacement.
/// Deterministic given the RNG state; the training loop owns the RNG.
pub fn sample_minibatch(
    d: &Dataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    if batch_size == 0 || batch_size > d.len() {
        return Err(KsmError::InvalidArgument(format!(
            "sample_minibatch: batch_size {batch_size} out of range 1..={}",
            d.len()
        )));
    }
    let idx = rand::seq::index::sample(rng, d.len(), batch_size);
    let mut batch = DMatrix::zeros(batch_size, d.dim());
    for (r, i) in idx.iter().enumerate() {
        batch.row_mut(r).copy_from(&d.x.row(i));
    }
    Ok(batch)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
