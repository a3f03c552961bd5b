//! Sampling distributions for the design matrices `X_i`.
//!
//! Samples are kept in a compact form (an entry index, a single column, a
//! dense matrix or a regression row) and the trace inner product
//! `tr(X_i^T A)` is evaluated without materializing sparse designs.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Uniform sampling of single entries (`e_j e_k^T`).
    UsrCompletion,
    /// One non-zero column chosen uniformly, filled with standard Gaussians.
    ColumnMask,
    /// Every entry i.i.d. standard Gaussian.
    GaussianFull,
    /// Every entry i.i.d. Rademacher.
    RademacherFull,
    /// Fixed `l x m1` predictor matrix of a matrix regression.
    RegressionFixed,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::UsrCompletion => "usr_completion",
            DesignKind::ColumnMask => "column_mask",
            DesignKind::GaussianFull => "gaussian_full",
            DesignKind::RademacherFull => "rademacher_full",
            DesignKind::RegressionFixed => "regression_fixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignSpec {
    kind: DesignKind,
    m1: usize,
    m2: usize,
    fixed_design: Option<Matrix>,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, m1: usize, m2: usize, fixed_design: Option<Matrix>) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::InvalidInput(format!(
                "design dimensions must be positive, got {m1}x{m2}"
            )));
        }
        match (kind, &fixed_design) {
            (DesignKind::RegressionFixed, None) => {
                return Err(Error::InvalidInput(
                    "regression design requires a fixed design matrix".into(),
                ))
            }
            (DesignKind::RegressionFixed, Some(v)) if v.cols() != m1 => {
                return Err(Error::DimensionMismatch(format!(
                    "fixed design has {} columns, expected m1 = {m1}",
                    v.cols()
                )))
            }
            (DesignKind::RegressionFixed, Some(_)) => {}
            (_, Some(_)) => {
                return Err(Error::InvalidInput(format!(
                    "{} design does not take a fixed design matrix",
                    kind.name()
                )))
            }
            (_, None) => {}
        }
        Ok(Self {
            kind,
            m1,
            m2,
            fixed_design,
        })
    }

    pub fn usr(m1: usize, m2: usize) -> Result<Self> {
        Self::new(DesignKind::UsrCompletion, m1, m2, None)
    }

    pub fn regression(v: Matrix, m2: usize) -> Result<Self> {
        let m1 = v.cols();
        Self::new(DesignKind::RegressionFixed, m1, m2, Some(v))
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn fixed_design(&self) -> Option<&Matrix> {
        self.fixed_design.as_ref()
    }
}

/// Compact encoding of one design matrix `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSample {
    EntryIndex { row: usize, col: usize },
    ColumnVector { col: usize, vector: Vec<f64> },
    Dense(Matrix),
    RegressionRow { row_index: usize },
}

/// One observation `(X_i, Y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub design: DesignSample,
    pub response: f64,
}

impl Observation {
    pub fn new(design: DesignSample, response: f64) -> Self {
        Self { design, response }
    }
}

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Two instances built from the same pair produce bit-identical sequences.
/// The stream also counts how many designs it has produced, which drives the
/// row cycle of fixed regression designs.
#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    stream_id: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            draws: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Isometry constant `mu^2` for which `||A||_{L2(Pi)}^2 = ||A||_2^2 / mu^2`.
pub fn mu_squared(spec: &DesignSpec) -> Result<f64> {
    match spec.kind {
        DesignKind::UsrCompletion => Ok((spec.m1 * spec.m2) as f64),
        DesignKind::ColumnMask => Ok(spec.m2 as f64),
        DesignKind::GaussianFull | DesignKind::RademacherFull => Ok(1.0),
        DesignKind::RegressionFixed => Err(Error::UnsupportedDesign(
            "fixed regression designs have no isometry constant".into(),
        )),
    }
}

pub fn sample_design(spec: &DesignSpec, rng: &mut StreamRng) -> DesignSample {
    let draw = rng.draws;
    rng.draws += 1;
    match spec.kind {
        DesignKind::UsrCompletion => DesignSample::EntryIndex {
            row: rng.random_range(0..spec.m1),
            col: rng.random_range(0..spec.m2),
        },
        DesignKind::ColumnMask => {
            let col = rng.random_range(0..spec.m2);
            let vector = (0..spec.m1).map(|_| rng.standard_normal()).collect();
            DesignSample::ColumnVector { col, vector }
        }
        DesignKind::GaussianFull => {
            let mut entries = Vec::with_capacity(spec.m1 * spec.m2);
            for _ in 0..spec.m1 * spec.m2 {
                entries.push(rng.standard_normal());
            }
            DesignSample::Dense(Matrix::from_fn(spec.m1, spec.m2, |r, c| entries[r * spec.m2 + c]))
        }
        DesignKind::RademacherFull => {
            let mut entries = Vec::with_capacity(spec.m1 * spec.m2);
            for _ in 0..spec.m1 * spec.m2 {
                entries.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
            }
            DesignSample::Dense(Matrix::from_fn(spec.m1, spec.m2, |r, c| entries[r * spec.m2 + c]))
        }
        DesignKind::RegressionFixed => {
            let rows = spec.fixed_design.as_ref().map_or(1, Matrix::rows) as u64;
            DesignSample::RegressionRow {
                row_index: (draw % rows) as usize,
            }
        }
    }
}

fn check_sample_shape(sample: &DesignSample, m1: usize, m2: usize) -> Result<()> {
    let ok = match sample {
        DesignSample::EntryIndex { row, col } => *row < m1 && *col < m2,
        DesignSample::ColumnVector { col, vector } => *col < m2 && vector.len() == m1,
        DesignSample::Dense(x) => x.shape() == (m1, m2),
        DesignSample::RegressionRow { .. } => {
            return Err(Error::UnsupportedDesign(
                "regression rows are handled by the matrix-regression estimator".into(),
            ))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "design sample {sample:?} does not fit a {m1}x{m2} matrix"
        )))
    }
}

/// `tr(X^T A)` for a compactly encoded `X`.
pub fn trace_inner(sample: &DesignSample, a: &Matrix) -> Result<f64> {
    check_sample_shape(sample, a.rows(), a.cols())?;
    Ok(match sample {
        DesignSample::EntryIndex { row, col } => a[(*row, *col)],
        DesignSample::ColumnVector { col, vector } => vector.iter().enumerate().map(|(r, v)| v * a[(r, *col)]).sum(),
        DesignSample::Dense(x) => x.inner(a),
        DesignSample::RegressionRow { .. } => unreachable!("rejected by shape check"),
    })
}

/// Adds `weight * X` into `target` in place.
pub(crate) fn add_design(target: &mut Matrix, sample: &DesignSample, weight: f64) {
    match sample {
        DesignSample::EntryIndex { row, col } => target.add_at(*row, *col, weight),
        DesignSample::ColumnVector { col, vector } => target.column_axpy(*col, weight, vector),
        DesignSample::Dense(x) => target.add_scaled(weight, x),
        DesignSample::RegressionRow { .. } => {}
    }
}

/// Surrogate matrix `(mu^2 / n) * sum_i Y_i X_i`.
pub fn accumulate_surrogate(observations: &[Observation], m1: usize, m2: usize, mu_sq: f64) -> Result<Matrix> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("surrogate needs at least one observation".into()));
    }
    if !(mu_sq > 0.0 && mu_sq.is_finite()) {
        return Err(Error::param("mu_sq", format!("must be positive, got {mu_sq}")));
    }
    let mut sum = Matrix::zeros(m1, m2);
    for obs in observations {
        check_sample_shape(&obs.design, m1, m2)?;
        if !obs.response.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite response {}", obs.response)));
        }
        add_design(&mut sum, &obs.design, obs.response);
    }
    Ok(sum.scale(mu_sq / observations.len() as f64))
}
