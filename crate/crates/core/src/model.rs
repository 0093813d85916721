//! Factor and core matrices, element prediction and persistence.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::tensor_store::SparseTensor;

/// Magic prefix of the binary model format.
pub const MODEL_MAGIC: &[u8] = b"FTKP1\n";

/// Largest dense core [`Model::materialize_core`] will build.
pub const DENSE_CELL_LIMIT: usize = 1_000_000;

/// A FastTucker model: `A(n)` is `I_n x J_n`, `B(n)` is `J_n x R`, both
/// row-major single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    dims: Vec<usize>,
    ranks: Vec<usize>,
    rank: usize,
    factors: Vec<Vec<f32>>,
    cores: Vec<Vec<f32>>,
}

impl Model {
    /// An all-zero model of the given shape.
    pub fn zeros(dims: &[usize], ranks: &[usize], rank: usize) -> Result<Self> {
        check_shape(dims, ranks, rank)?;
        Ok(Self {
            dims: dims.to_vec(),
            ranks: ranks.to_vec(),
            rank,
            factors: dims
                .iter()
                .zip(ranks)
                .map(|(&i, &j)| vec![0.0; i * j])
                .collect(),
            cores: ranks.iter().map(|&j| vec![0.0; j * rank]).collect(),
        })
    }

    /// Entries i.i.d. uniform on `[0, scale)`, deterministic under `seed`.
    pub fn init(dims: &[usize], ranks: &[usize], rank: usize, seed: u64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("init scale must be positive, got {scale}")));
        }
        let mut model = Self::zeros(dims, ranks, rank)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = scale as f32;
        for m in model.factors.iter_mut().chain(model.cores.iter_mut()) {
            for v in m.iter_mut() {
                *v = rng.random::<f32>() * scale;
            }
        }
        Ok(model)
    }

    pub fn from_parts(
        dims: &[usize],
        ranks: &[usize],
        rank: usize,
        factors: Vec<Vec<f32>>,
        cores: Vec<Vec<f32>>,
    ) -> Result<Self> {
        check_shape(dims, ranks, rank)?;
        if factors.len() != dims.len() || cores.len() != dims.len() {
            return Err(Error::ShapeMismatch("one factor and one core per mode".into()));
        }
        for n in 0..dims.len() {
            if factors[n].len() != dims[n] * ranks[n] {
                return Err(Error::ShapeMismatch(format!(
                    "factor {n} has {} entries, expected {}x{}",
                    factors[n].len(),
                    dims[n],
                    ranks[n]
                )));
            }
            if cores[n].len() != ranks[n] * rank {
                return Err(Error::ShapeMismatch(format!(
                    "core {n} has {} entries, expected {}x{rank}",
                    cores[n].len(),
                    ranks[n]
                )));
            }
        }
        if factors.iter().chain(&cores).flatten().any(|v| !v.is_finite()) {
            return Err(invalid("model entries must be finite"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            ranks: ranks.to_vec(),
            rank,
            factors,
            cores,
        })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Per-mode ranks `J_n`.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Kruskal rank `R` of the core approximation.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn factor(&self, n: usize) -> &[f32] {
        &self.factors[n]
    }

    pub fn factor_mut(&mut self, n: usize) -> &mut [f32] {
        &mut self.factors[n]
    }

    pub fn factor_row(&self, n: usize, i: usize) -> &[f32] {
        let j = self.ranks[n];
        &self.factors[n][i * j..(i + 1) * j]
    }

    pub fn core(&self, n: usize) -> &[f32] {
        &self.cores[n]
    }

    pub fn core_mut(&mut self, n: usize) -> &mut [f32] {
        &mut self.cores[n]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [Vec<f32>], &mut [Vec<f32>]) {
        (&mut self.factors, &mut self.cores)
    }

    pub fn is_finite(&self) -> bool {
        self.factors
            .iter()
            .chain(&self.cores)
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Squared Frobenius norms `(sum_n ||A(n)||^2, sum_n ||B(n)||^2)`.
    pub fn squared_norms(&self) -> (f64, f64) {
        let sq = |ms: &[Vec<f32>]| {
            ms.iter()
                .flatten()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
        };
        (sq(&self.factors), sq(&self.cores))
    }

    /// Checks that `idx` addresses a cell of the modelled tensor.
    pub fn check_index(&self, idx: &[u32]) -> Result<()> {
        if idx.len() != self.order() {
            return Err(Error::ShapeMismatch(format!(
                "index of order {} for a model of order {}",
                idx.len(),
                self.order()
            )));
        }
        for (n, (&i, &d)) in idx.iter().zip(&self.dims).enumerate() {
            if i as usize >= d {
                return Err(Error::IndexOutOfRange(format!(
                    "index {i} in mode {n} >= dimension {d}"
                )));
            }
        }
        Ok(())
    }

    /// `x_hat = sum_r prod_n (a(n)[i_n,:] . b(n)[:,r])`, evaluated in double
    /// precision. `idx` is zero-based.
    pub fn predict(&self, idx: &[u32]) -> Result<f64> {
        self.check_index(idx)?;
        Ok(self.predict_unchecked(idx))
    }

    pub(crate) fn predict_unchecked(&self, idx: &[u32]) -> f64 {
        let mut prod = vec![1.0f64; self.rank];
        for (n, &i) in idx.iter().enumerate() {
            let j = self.ranks[n];
            let row = self.factor_row(n, i as usize);
            let core = &self.cores[n];
            for (r, p) in prod.iter_mut().enumerate() {
                let mut c = 0.0f64;
                for (jj, &a) in row.iter().enumerate().take(j) {
                    c += a as f64 * core[jj * self.rank + r] as f64;
                }
                *p *= c;
            }
        }
        prod.iter().sum()
    }

    /// The dense core `G = sum_r b(1)[:,r] o .. o b(N)[:,r]` (`J_1 x .. x J_N`).
    pub fn materialize_core(&self) -> Result<DenseTensor> {
        let cells = self.ranks.iter().try_fold(1usize, |acc, &j| acc.checked_mul(j));
        let cells = match cells {
            Some(c) if c <= DENSE_CELL_LIMIT => c,
            _ => {
                return Err(Error::TooLarge {
                    cells: cells.unwrap_or(usize::MAX),
                    limit: DENSE_CELL_LIMIT,
                })
            }
        };
        let mut data = vec![0.0f64; cells];
        let mut idx = vec![0usize; self.order()];
        for cell in data.iter_mut() {
            let mut sum = 0.0;
            for r in 0..self.rank {
                let mut p = 1.0f64;
                for (n, &j) in idx.iter().enumerate() {
                    p *= self.cores[n][j * self.rank + r] as f64;
                }
                sum += p;
            }
            *cell = sum;
            advance(&mut idx, &self.ranks);
        }
        DenseTensor::new(self.ranks.clone(), data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path.as_ref())?)
    }

    /// Serializes as `FTKP1\n`, an ASCII header `N R J_1..J_N I_1..I_N\n` and
    /// little-endian `f32` data: `A(1)..A(N)` then `B(1)..B(N)`, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_parameters() * 4 + 64);
        out.extend_from_slice(MODEL_MAGIC);
        let mut header = format!("{} {}", self.order(), self.rank);
        for j in &self.ranks {
            header.push_str(&format!(" {j}"));
        }
        for i in &self.dims {
            header.push_str(&format!(" {i}"));
        }
        header.push('\n');
        out.write_all(header.as_bytes()).expect("writing to a Vec");
        for v in self.factors.iter().chain(&self.cores).flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MODEL_MAGIC)
            .ok_or_else(|| Error::CorruptModel("missing FTKP1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::CorruptModel("unterminated header".into()))?;
        let header = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::CorruptModel("header is not ASCII".into()))?;
        let nums: Vec<usize> = header
            .split_ascii_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::CorruptModel(format!("malformed header {header:?}")))?;
        let order = *nums
            .first()
            .ok_or_else(|| Error::CorruptModel("empty header".into()))?;
        if order == 0 || nums.len() != 2 + 2 * order {
            return Err(Error::CorruptModel(format!(
                "header {header:?} does not describe an order-{order} model"
            )));
        }
        let rank = nums[1];
        let ranks = nums[2..2 + order].to_vec();
        let dims = nums[2 + order..].to_vec();
        check_shape(&dims, &ranks, rank).map_err(|e| Error::CorruptModel(e.to_string()))?;

        let data = &rest[nl + 1..];
        let expected: usize = dims.iter().zip(&ranks).map(|(i, j)| i * j).sum::<usize>()
            + ranks.iter().map(|j| j * rank).sum::<usize>();
        if data.len() != expected * 4 {
            return Err(Error::CorruptModel(format!(
                "expected {} data bytes, found {}",
                expected * 4,
                data.len()
            )));
        }
        let mut floats = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = |len: usize| -> Vec<f32> { floats.by_ref().take(len).collect() };
        let factors: Vec<Vec<f32>> = dims.iter().zip(&ranks).map(|(i, j)| take(i * j)).collect();
        let cores: Vec<Vec<f32>> = ranks.iter().map(|j| take(j * rank)).collect();
        Self::from_parts(&dims, &ranks, rank, factors, cores)
            .map_err(|e| Error::CorruptModel(e.to_string()))
    }

    pub fn num_parameters(&self) -> usize {
        self.factors.iter().chain(&self.cores).map(Vec::len).sum()
    }
}

fn check_shape(dims: &[usize], ranks: &[usize], rank: usize) -> Result<()> {
    if dims.is_empty() || dims.len() != ranks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} dimensions but {} ranks",
            dims.len(),
            ranks.len()
        )));
    }
    if dims.contains(&0) || ranks.contains(&0) || rank == 0 {
        return Err(invalid("dimensions and ranks must be positive"));
    }
    Ok(())
}

/// Row-major odometer step over `dims`.
fn advance(idx: &mut [usize], dims: &[usize]) {
    for n in (0..idx.len()).rev() {
        idx[n] += 1;
        if idx[n] < dims[n] {
            return;
        }
        idx[n] = 0;
    }
}

/// Scale for [`Model::init`] chosen so that the expected initial prediction
/// matches the mean absolute value of `train`.
///
/// With entries uniform on `[0, s)` each `a . b` has mean `J_n s^2 / 4`, so
/// `E[x_hat] = R prod_n (J_n s^2 / 4)`.
pub fn default_init_scale(train: &SparseTensor, ranks: &[usize], rank: usize) -> f64 {
    let target = train.mean_abs().max(f64::MIN_POSITIVE);
    let n = ranks.len() as f64;
    let spread: f64 = ranks.iter().map(|&j| j as f64 / 4.0).product::<f64>() * rank as f64;
    (target / spread).powf(1.0 / (2.0 * n))
}

/// A small dense tensor in row-major order, used as a reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut off = 0;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            off = off * d + i;
        }
        self.data[off]
    }

    /// n-mode product `G x_(n) A` with `A` given row-major as `rows x dims[n]`.
    /// The result has `rows` in place of `dims[n]`.
    pub fn mode_product(&self, n: usize, a: &[f64], rows: usize) -> Result<DenseTensor> {
        let jn = *self
            .dims
            .get(n)
            .ok_or_else(|| invalid(format!("mode {n} out of range")))?;
        if a.len() != rows * jn {
            return Err(Error::ShapeMismatch(format!(
                "matrix of {} entries is not {rows}x{jn}",
                a.len()
            )));
        }
        let outer: usize = self.dims[..n].iter().product();
        let inner: usize = self.dims[n + 1..].iter().product();
        let mut out = vec![0.0; outer * rows * inner];
        for o in 0..outer {
            for i in 0..rows {
                for j in 0..jn {
                    let w = a[i * jn + j];
                    let src = &self.data[(o * jn + j) * inner..(o * jn + j + 1) * inner];
                    let dst = &mut out[(o * rows + i) * inner..(o * rows + i + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims[n] = rows;
        DenseTensor::new(dims, out)
    }
}

/// Learning rates, regularization and schedule for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub lr_a: f32,
    pub lr_b: f32,
    pub reg_a: f32,
    pub reg_b: f32,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr_a: 1e-3,
            lr_b: 1e-3,
            reg_a: 1e-4,
            reg_b: 1e-4,
            epochs: 50,
            batch_size: 16,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_a > 0.0 && self.lr_b > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !(self.reg_a >= 0.0 && self.reg_b >= 0.0) {
            return Err(invalid("regularization must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}
