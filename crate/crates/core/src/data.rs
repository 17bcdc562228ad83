//! Uniform inputs on the unit sphere, noisy teacher labels, and CSV
//! persistence of datasets.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TeacherParams;
use crate::rng::{stream_rng, Stream};

/// Accepted deviation of an input row norm from one.
pub const UNIT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    UniformBounded,
}

/// Centered label noise with variance `sigma^2`. The uniform law lives on
/// `[-sigma sqrt(3), sigma sqrt(3)]`, so `|eps|` never exceeds that bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseConfig {
    pub const DEFAULT_SIGMA: f64 = 0.1;

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
        }
    }

    pub fn uniform(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            kind: NoiseKind::UniformBounded,
            sigma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NoiseKind::UniformBounded {
            Self::uniform(self.sigma)?;
        }
        Ok(())
    }

    /// Almost-sure bound `U` on `|eps|`.
    pub fn bound(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::UniformBounded => self.sigma * 3f64.sqrt(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::UniformBounded => {
                let u = self.bound();
                if u == 0.0 {
                    0.0
                } else {
                    rng.random_range(-u..=u)
                }
            }
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::UniformBounded,
            sigma: Self::DEFAULT_SIGMA,
        }
    }
}

/// Provenance recorded next to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub teacher_hash: String,
}

/// `n` samples `(x_i, y_i)` with unit-norm inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    meta: Option<DatasetMeta>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        check_unit_rows(x.view())?;
        Ok(Self { x, y, meta: None })
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    /// Draws `n` sphere inputs and noisy teacher labels from the data stream of `seed`.
    pub fn generate(teacher: &TeacherParams, n: usize, noise: NoiseConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Data);
        let x = sample_sphere(n, teacher.dim(), &mut rng);
        let y = gen_labels(teacher, x.view(), noise, &mut rng);
        Self {
            x,
            y,
            meta: Some(DatasetMeta {
                d: teacher.dim(),
                n,
                seed,
                noise,
                teacher_hash: teacher.fingerprint(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn meta(&self) -> Option<&DatasetMeta> {
        self.meta.as_ref()
    }

    /// Splits rows into two datasets: rows with `mask[i]` first, the rest second.
    pub fn partition(&self, mask: &[bool]) -> (Dataset, Dataset) {
        assert_eq!(mask.len(), self.len());
        let pick = |keep: bool| {
            let idx: Vec<usize> = (0..self.len()).filter(|&i| mask[i] == keep).collect();
            Dataset {
                x: self.x.select(ndarray::Axis(0), &idx),
                y: self.y.select(ndarray::Axis(0), &idx),
                meta: None,
            }
        };
        (pick(true), pick(false))
    }
}

fn check_unit_rows(x: ArrayView2<'_, f64>) -> Result<()> {
    for (row, xi) in x.rows().into_iter().enumerate() {
        let norm = xi.dot(&xi).sqrt();
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::NonUnitRow { row, norm });
        }
    }
    Ok(())
}

/// `n` i.i.d. uniform points on the unit sphere in `R^d` (normalized
/// Gaussians; rows with norm below `1e-12` are redrawn).
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((n, d));
    for mut row in x.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = row.dot(&row).sqrt();
            if norm >= 1e-12 {
                row /= norm;
                break;
            }
        }
    }
    x
}

/// One uniform point on the unit sphere.
pub fn sample_sphere_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array1<f64> {
    sample_sphere(1, d, rng).row(0).to_owned()
}

/// `y_i = f(x_i) + eps_i` for the teacher network `f`.
pub fn gen_labels<R: Rng + ?Sized>(
    teacher: &TeacherParams,
    x: ArrayView2<'_, f64>,
    noise: NoiseConfig,
    rng: &mut R,
) -> Array1<f64> {
    let clean = teacher.net().eval_batch(x);
    clean.mapv(|f| f + noise.sample(rng))
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes `x_1,...,x_d,y` rows with 17 significant digits, plus a JSON
/// sidecar when the dataset carries metadata.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (1..=data.dim())
        .map(|j| format!("x_{j}"))
        .chain(std::iter::once("y".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (xi, yi) in data.x.rows().into_iter().zip(data.y.iter()) {
        let fields: Vec<String> = xi
            .iter()
            .chain(std::iter::once(yi))
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    if let Some(meta) = &data.meta {
        let file = File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(file, meta)?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.last() != Some(&"y") {
        return Err(Error::Schema("missing y column".into()));
    }
    let d = cols.len() - 1;
    if d == 0 {
        return Err(Error::Schema("no input columns".into()));
    }
    for (j, name) in cols[..d].iter().enumerate() {
        if *name != format!("x_{}", j + 1) {
            return Err(Error::Schema(format!(
                "header mismatch at column {}: expected x_{}, found {name}",
                j + 1,
                j + 1
            )));
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != d + 1 {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                d + 1
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Schema(format!(
                    "row {row}, column {}: not a number: {field:?}",
                    j + 1
                ))
            })?;
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, d), xs).expect("row lengths checked");
    let mut data = Dataset::new(x, Array1::from(ys))?;

    let side = sidecar_path(path);
    if side.exists() {
        let meta: DatasetMeta = serde_json::from_reader(File::open(side)?)?;
        if meta.d != d || meta.n != n {
            return Err(Error::Schema(format!(
                "header mismatch: sidecar records d={}, n={} but file has d={d}, n={n}",
                meta.d, meta.n
            )));
        }
        data.meta = Some(meta);
    }
    Ok(data)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("malformed csv: {other:?}")),
    }
}
