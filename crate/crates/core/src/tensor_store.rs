//! Sparse COO storage, text ingestion, train/test splitting and the batch
//! samplers used by the three training schemes.
//!
//! Indices are 1-based on disk and 0-based in memory.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Smallest supported tensor order.
pub const MIN_ORDER: usize = 3;

/// An order-`N` sparse tensor stored as a coordinate list.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    dims: Vec<usize>,
    /// `nnz * order` zero-based indices, entry-major.
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseTensor {
    /// Builds a tensor from entry-major zero-based `indices` and `values`.
    ///
    /// Rejects out-of-range indices, non-finite values and duplicate tuples.
    pub fn new(dims: Vec<usize>, indices: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        let tensor = Self::new_unchecked(dims, indices, values)?;
        tensor.validate()?;
        Ok(tensor)
    }

    fn new_unchecked(dims: Vec<usize>, indices: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        if dims.len() < MIN_ORDER {
            return Err(invalid(format!(
                "tensor order must be at least {MIN_ORDER}, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(invalid(format!("dimensions must be in 1..=u32::MAX, got {dims:?}")));
        }
        if indices.len() != values.len() * dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} indices for {} values of order {}",
                indices.len(),
                values.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, indices, values })
    }

    /// Builds a tensor from `(index tuple, value)` pairs with zero-based indices.
    pub fn from_entries<I>(dims: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f32)>,
    {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (idx, v) in entries {
            if idx.len() != dims.len() {
                return Err(Error::ShapeMismatch(format!(
                    "index tuple of length {} for order {}",
                    idx.len(),
                    dims.len()
                )));
            }
            indices.extend_from_slice(&idx);
            values.push(v);
        }
        Self::new(dims, indices, values)
    }

    fn validate(&self) -> Result<()> {
        let n = self.order();
        for (e, idx) in self.indices.chunks_exact(n).enumerate() {
            for (mode, (&i, &d)) in idx.iter().zip(&self.dims).enumerate() {
                if i as usize >= d {
                    return Err(Error::IndexOutOfRange(format!(
                        "entry {e}: index {i} in mode {mode} >= dimension {d}"
                    )));
                }
            }
        }
        if let Some(e) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("entry {e} has a non-finite value")));
        }
        if let Some((_, later)) = self.find_duplicate() {
            return Err(Error::DuplicateEntry {
                line: later + 1,
                tuple: self.index(later).iter().map(|&i| i as usize + 1).collect(),
            });
        }
        Ok(())
    }

    /// Returns a pair of entry positions `(first, later)` sharing one index tuple.
    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<u32> = (0..self.nnz() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            self.index(a as usize)
                .cmp(self.index(b as usize))
                .then(a.cmp(&b))
        });
        order.windows(2).find_map(|w| {
            let (a, b) = (w[0] as usize, w[1] as usize);
            (self.index(a) == self.index(b)).then_some((a, b))
        })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-based index tuple of entry `e`.
    #[inline]
    pub fn index(&self, e: usize) -> &[u32] {
        let n = self.dims.len();
        &self.indices[e * n..(e + 1) * n]
    }

    #[inline]
    pub fn value(&self, e: usize) -> f32 {
        self.values[e]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f32)> + '_ {
        self.indices
            .chunks_exact(self.order())
            .zip(self.values.iter().copied())
    }

    /// A new tensor with the same dimensions holding the given entries.
    pub fn subset(&self, positions: &[u32]) -> SparseTensor {
        let n = self.order();
        let mut indices = Vec::with_capacity(positions.len() * n);
        let mut values = Vec::with_capacity(positions.len());
        for &p in positions {
            indices.extend_from_slice(self.index(p as usize));
            values.push(self.values[p as usize]);
        }
        SparseTensor {
            dims: self.dims.clone(),
            indices,
            values,
        }
    }

    pub fn mean_abs(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.abs() as f64).sum::<f64>() / self.nnz() as f64
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.nnz() as f64
    }

    /// Population standard deviation of the stored values.
    pub fn std_dev(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / self.nnz() as f64;
        var.sqrt()
    }
}

/// Reads a whitespace-separated COO text file of the given order.
///
/// Each data line is `i_1 .. i_N value` with 1-based indices. Lines starting
/// with `#` are comments; a `# dims: I_1 .. I_N` comment fixes the dimensions,
/// otherwise they are the per-mode maxima of the observed indices.
pub fn load_coo(path: impl AsRef<Path>, order: usize) -> Result<SparseTensor> {
    let file = File::open(path.as_ref())?;
    read_coo(BufReader::new(file), order)
}

/// Order of a COO file, from its `# dims:` header or its first data line.
pub fn sniff_order(path: impl AsRef<Path>) -> Result<usize> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("dims:") {
                return Ok(rest.split_ascii_whitespace().count());
            }
            continue;
        }
        let tokens = line.split_ascii_whitespace().count();
        if tokens == 0 {
            continue;
        }
        if tokens < 2 {
            return Err(Error::Parse {
                line: n + 1,
                msg: "a data line needs indices and a value".into(),
            });
        }
        return Ok(tokens - 1);
    }
    Err(Error::EmptyTensor)
}

/// [`load_coo`] over any buffered reader.
pub fn read_coo<R: BufRead>(mut reader: R, order: usize) -> Result<SparseTensor> {
    if order < MIN_ORDER {
        return Err(invalid(format!("order must be at least {MIN_ORDER}, got {order}")));
    }
    let mut declared: Option<Vec<usize>> = None;
    let mut observed = vec![0usize; order];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("dims:") {
                if declared.is_none() && values.is_empty() {
                    declared = Some(parse_dims(rest, order, line_no)?);
                }
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
        if tokens.len() != order + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "order mismatch: expected {} tokens ({order} indices and a value), found {}",
                    order + 1,
                    tokens.len()
                ),
            });
        }
        for (t, tok) in tokens[..order].iter().enumerate() {
            let i: i64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("index token {tok:?} is not an integer"),
            })?;
            if i <= 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("index {i} must be >= 1"),
                });
            }
            if i > u32::MAX as i64 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("index {i} is too large"),
                });
            }
            observed[t] = observed[t].max(i as usize);
            indices.push((i - 1) as u32);
        }
        let tok = tokens[order];
        let v: f32 = tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("value token {tok:?} is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: "value is not finite".into(),
            });
        }
        values.push(v);
        lines.push(line_no);
    }
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let dims = match declared {
        Some(d) => {
            if let Some(mode) = (0..order).find(|&m| observed[m] > d[m]) {
                return Err(Error::IndexOutOfRange(format!(
                    "mode {mode}: index {} exceeds declared dimension {}",
                    observed[mode], d[mode]
                )));
            }
            d
        }
        None => observed,
    };
    let tensor = SparseTensor::new_unchecked(dims, indices, values)?;
    if let Some((_, later)) = tensor.find_duplicate() {
        return Err(Error::DuplicateEntry {
            line: lines[later],
            tuple: tensor.index(later).iter().map(|&i| i as usize + 1).collect(),
        });
    }
    Ok(tensor)
}

fn parse_dims(text: &str, order: usize, line: usize) -> Result<Vec<usize>> {
    let dims: Vec<usize> = text
        .split_ascii_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line,
            msg: "malformed dims header".into(),
        })?;
    if dims.len() != order || dims.contains(&0) {
        return Err(Error::Parse {
            line,
            msg: format!("dims header must list {order} positive dimensions"),
        });
    }
    Ok(dims)
}

/// Writes `tensor` in the COO text format, with a `# dims:` header.
pub fn write_coo(path: impl AsRef<Path>, tensor: &SparseTensor) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_coo_to(&mut out, tensor)?;
    out.flush()?;
    Ok(())
}

pub fn write_coo_to<W: Write>(out: &mut W, tensor: &SparseTensor) -> Result<()> {
    write!(out, "# dims:")?;
    for d in tensor.dims() {
        write!(out, " {d}")?;
    }
    writeln!(out)?;
    for (idx, v) in tensor.iter() {
        for i in idx {
            write!(out, "{} ", i + 1)?;
        }
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Randomly partitions the entries into a train and a test tensor.
///
/// The test part holds `round(test_fraction * nnz)` entries, clamped so that
/// neither side is empty.
pub fn split_train_test(
    t: &SparseTensor,
    test_fraction: f64,
    seed: u64,
) -> Result<(SparseTensor, SparseTensor)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if t.nnz() < 2 {
        return Err(invalid("splitting needs at least two entries"));
    }
    let n_test = ((test_fraction * t.nnz() as f64).round() as usize).clamp(1, t.nnz() - 1);
    let mut order: Vec<u32> = (0..t.nnz() as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at_mut(n_test);
    // Keep file order inside each part.
    test.sort_unstable();
    train.sort_unstable();
    Ok((t.subset(train), t.subset(test)))
}

/// Which indices are held fixed inside one bucket of a [`ModeIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keying {
    /// Buckets `Omega^(n)_{i_n}`: entries sharing the mode-`n` index.
    FixedMode,
    /// Buckets `Omega^(n)_{i_1..i_{n-1},i_{n+1}..i_N}`: entries sharing every
    /// index except the mode-`n` one (a mode-`n` fiber).
    FixedComplement,
}

/// Entry positions grouped by a per-mode key.
#[derive(Debug, Clone)]
pub struct ModeIndex {
    mode: usize,
    keying: Keying,
    nnz: usize,
    key_len: usize,
    keys: Vec<u32>,
    offsets: Vec<usize>,
    positions: Vec<u32>,
}

impl ModeIndex {
    pub fn build(t: &SparseTensor, mode: usize, keying: Keying) -> Result<Self> {
        let order = t.order();
        if mode >= order {
            return Err(invalid(format!("mode {mode} out of range for order {order}")));
        }
        let key_of = |e: usize| -> KeyRef<'_> {
            let idx = t.index(e);
            match keying {
                Keying::FixedMode => KeyRef::Single(idx[mode]),
                Keying::FixedComplement => KeyRef::Skip(idx, mode),
            }
        };
        let mut positions: Vec<u32> = (0..t.nnz() as u32).collect();
        positions.sort_by(|&a, &b| key_of(a as usize).cmp(&key_of(b as usize)));

        let key_len = match keying {
            Keying::FixedMode => 1,
            Keying::FixedComplement => order - 1,
        };
        let mut keys = Vec::new();
        let mut offsets = vec![0];
        for (p, &e) in positions.iter().enumerate() {
            let starts_bucket = p == 0
                || key_of(positions[p - 1] as usize).cmp(&key_of(e as usize)) != Ordering::Equal;
            if starts_bucket {
                if p > 0 {
                    offsets.push(p);
                }
                key_of(e as usize).extend_into(&mut keys);
            }
        }
        if !positions.is_empty() {
            offsets.push(positions.len());
        }
        Ok(Self {
            mode,
            keying,
            nnz: t.nnz(),
            key_len,
            keys,
            offsets,
            positions,
        })
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn keying(&self) -> Keying {
        self.keying
    }

    pub fn num_buckets(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Entry positions of bucket `b`.
    pub fn bucket(&self, b: usize) -> &[u32] {
        &self.positions[self.offsets[b]..self.offsets[b + 1]]
    }

    /// The fixed indices shared by bucket `b`: `[i_n]` or the complement tuple.
    pub fn key(&self, b: usize) -> &[u32] {
        &self.keys[b * self.key_len..(b + 1) * self.key_len]
    }

    pub fn largest_bucket(&self) -> usize {
        (0..self.num_buckets())
            .map(|b| self.bucket(b).len())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy)]
enum KeyRef<'a> {
    Single(u32),
    Skip(&'a [u32], usize),
}

impl KeyRef<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (KeyRef::Single(a), KeyRef::Single(b)) => a.cmp(b),
            (KeyRef::Skip(a, m), KeyRef::Skip(b, _)) => {
                let left = a[..*m].iter().chain(&a[m + 1..]);
                let right = b[..*m].iter().chain(&b[m + 1..]);
                left.cmp(right)
            }
            _ => unreachable!("keys of one index share a kind"),
        }
    }

    fn extend_into(&self, out: &mut Vec<u32>) {
        match self {
            KeyRef::Single(i) => out.push(*i),
            KeyRef::Skip(idx, m) => {
                out.extend_from_slice(&idx[..*m]);
                out.extend_from_slice(&idx[m + 1..]);
            }
        }
    }
}

/// One epoch of batch descriptors: a permutation of entry positions cut into
/// consecutive ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    batch_size: usize,
    order: Vec<u32>,
    bounds: Vec<usize>,
    buckets: Vec<u32>,
}

impl EpochPlan {
    /// Wraps explicit batches, in the given order.
    pub fn from_batches(batch_size: usize, batches: &[Vec<u32>]) -> Self {
        let mut order = Vec::new();
        let mut bounds = vec![0];
        for b in batches {
            order.extend_from_slice(b);
            bounds.push(order.len());
        }
        Self {
            batch_size,
            order,
            bounds,
            buckets: Vec::new(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_batches(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.num_batches() == 0
    }

    /// Entry positions of batch `i`.
    pub fn batch(&self, i: usize) -> &[u32] {
        &self.order[self.bounds[i]..self.bounds[i + 1]]
    }

    /// Bucket of the source [`ModeIndex`] that batch `i` was drawn from.
    pub fn bucket_of(&self, i: usize) -> Option<usize> {
        self.buckets.get(i).map(|&b| b as usize)
    }

    pub fn batches(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.num_batches()).map(move |i| self.batch(i))
    }

    /// Every position of the epoch, in processing order.
    pub fn positions(&self) -> &[u32] {
        &self.order
    }
}

/// Global sampling: a random permutation of all entries cut into batches of
/// `batch_size`; the last batch may be short.
pub fn sample_batches_global(t: &SparseTensor, batch_size: usize, seed: u64) -> Result<EpochPlan> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let mut order: Vec<u32> = (0..t.nnz() as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut bounds: Vec<usize> = (0..order.len()).step_by(batch_size).collect();
    bounds.push(order.len());
    if order.is_empty() {
        bounds = vec![0];
    }
    Ok(EpochPlan {
        batch_size,
        order,
        bounds,
        buckets: Vec::new(),
    })
}

/// Bucketed sampling: buckets are visited in a shuffled order, each bucket's
/// entries are shuffled and cut into batches of at most `batch_size`.
pub fn sample_batches_mode(
    t: &SparseTensor,
    index: &ModeIndex,
    batch_size: usize,
    seed: u64,
) -> Result<EpochPlan> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    if index.mode >= t.order() || index.nnz != t.nnz() {
        return Err(invalid("mode index was not built for this tensor"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bucket_order: Vec<u32> = (0..index.num_buckets() as u32).collect();
    bucket_order.shuffle(&mut rng);

    let mut order = Vec::with_capacity(t.nnz());
    let mut bounds = vec![0];
    let mut buckets = Vec::new();
    for &b in &bucket_order {
        let start = order.len();
        order.extend_from_slice(index.bucket(b as usize));
        order[start..].shuffle(&mut rng);
        let end = order.len();
        let mut lo = start;
        while lo < end {
            lo = (lo + batch_size).min(end);
            bounds.push(lo);
            buckets.push(b);
        }
    }
    Ok(EpochPlan {
        batch_size,
        order,
        bounds,
        buckets,
    })
}

/// A materialized batch: values and per-mode index columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub positions: Vec<u32>,
    pub values: Vec<f32>,
    pub index_columns: Vec<Vec<u32>>,
}

impl Batch {
    pub fn gather(t: &SparseTensor, positions: &[u32]) -> Self {
        let mut index_columns = vec![Vec::with_capacity(positions.len()); t.order()];
        let mut values = Vec::with_capacity(positions.len());
        for &p in positions {
            for (col, &i) in index_columns.iter_mut().zip(t.index(p as usize)) {
                col.push(i);
            }
            values.push(t.value(p as usize));
        }
        Self {
            positions: positions.to_vec(),
            values,
            index_columns,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseTensor {
        read_coo("1 1 1 5.0\n2 3 1 1.0\n".as_bytes(), 3).unwrap()
    }

    fn random_tensor(nnz: usize, dims: &[usize], seed: u64) -> SparseTensor {
        use rand::Rng;
        assert!(nnz <= dims.iter().product::<usize>());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        let mut entries = Vec::new();
        while entries.len() < nnz {
            let idx: Vec<u32> = dims.iter().map(|&d| rng.random_range(0..d as u32)).collect();
            if seen.insert(idx.clone()) {
                entries.push((idx, rng.random::<f32>()));
            }
        }
        SparseTensor::from_entries(dims.to_vec(), entries).unwrap()
    }

    #[test]
    fn parses_two_lines() {
        let t = small();
        assert_eq!(t.order(), 3);
        assert_eq!(t.dims(), &[2, 3, 1]);
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.index(1), &[1, 2, 0]);
        assert_eq!(t.value(0), 5.0);
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = read_coo("".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::EmptyTensor));
        assert_eq!(err.to_string(), "empty tensor");
        assert!(matches!(
            read_coo("# only a comment\n\n".as_bytes(), 3),
            Err(Error::EmptyTensor)
        ));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = read_coo("1 1 1 1.0\n1 x 1 2.0\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let err = read_coo("1 1 1 1.0\n\n1 1 2.0\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("order mismatch"));

        let err = read_coo("0 1 1 1.0\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));

        let err = read_coo("1 1 1 nan\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = read_coo("1 2 3 1.0\n2 2 2 1.0\n1 2 3 4.0\n".as_bytes(), 3).unwrap_err();
        match err {
            Error::DuplicateEntry { line, tuple } => {
                assert_eq!(line, 3);
                assert_eq!(tuple, vec![1, 2, 3]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dims_header_overrides_inference() {
        let t = read_coo("# dims: 4 5 6\n# note\n1 1 1 2.5\n".as_bytes(), 3).unwrap();
        assert_eq!(t.dims(), &[4, 5, 6]);
        let err = read_coo("# dims: 1 1 1\n2 1 1 2.5\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange(_)));
    }

    #[test]
    fn write_then_read_round_trips() {
        let t = random_tensor(50, &[7, 8, 9], 3);
        let mut buf = Vec::new();
        write_coo_to(&mut buf, &t).unwrap();
        let back = read_coo(buf.as_slice(), 3).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn split_counts_and_determinism() {
        let t = random_tensor(100, &[10, 10, 10], 1);
        let (train, test) = split_train_test(&t, 0.2, 7).unwrap();
        assert_eq!(train.nnz(), 80);
        assert_eq!(test.nnz(), 20);
        let mut all: Vec<Vec<u32>> = train.iter().chain(test.iter()).map(|(i, _)| i.to_vec()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);

        let again = split_train_test(&t, 0.2, 7).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, test);

        assert!(split_train_test(&t, 0.0, 7).is_err());
        assert!(split_train_test(&t, 1.0, 7).is_err());
    }

    #[test]
    fn netflix_test_fraction() {
        let frac = 1_408_395.0 / (99_072_112.0 + 1_408_395.0);
        assert!((frac - 0.014_f64).abs() < 5e-4, "{frac}");
    }

    #[test]
    fn global_batches_cover_the_epoch() {
        let t = random_tensor(100, &[10, 10, 10], 2);
        let plan = sample_batches_global(&t, 16, 5).unwrap();
        assert_eq!(plan.num_batches(), 7);
        let sizes: Vec<usize> = plan.batches().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![16, 16, 16, 16, 16, 16, 4]);

        let t16 = random_tensor(16, &[10, 10, 10], 2);
        let plan = sample_batches_global(&t16, 16, 5).unwrap();
        assert_eq!(plan.num_batches(), 1);
        let mut b = plan.batch(0).to_vec();
        b.sort_unstable();
        assert_eq!(b, (0..16).collect::<Vec<u32>>());

        assert_eq!(plan, sample_batches_global(&t16, 16, 5).unwrap());
        assert!(sample_batches_global(&t, 0, 5).is_err());
    }

    #[test]
    fn fixed_mode_bucket_yields_short_batch() {
        // Mode 0 index 5 (1-based) holds three entries.
        let mut entries = vec![
            (vec![4, 0, 0], 1.0),
            (vec![4, 1, 2], 2.0),
            (vec![4, 3, 3], 3.0),
        ];
        for i in 0..4u32 {
            entries.push((vec![i, i, i], 1.0));
        }
        let t = SparseTensor::from_entries(vec![6, 4, 4], entries).unwrap();
        let idx = ModeIndex::build(&t, 0, Keying::FixedMode).unwrap();
        let b = (0..idx.num_buckets()).find(|&b| idx.key(b) == [4]).unwrap();
        assert_eq!(idx.bucket(b).len(), 3);

        let plan = sample_batches_mode(&t, &idx, 16, 1).unwrap();
        let from_bucket: Vec<usize> = (0..plan.num_batches())
            .filter(|&i| plan.bucket_of(i) == Some(b))
            .collect();
        assert_eq!(from_bucket.len(), 1);
        assert_eq!(plan.batch(from_bucket[0]).len(), 3);
    }

    #[test]
    fn complement_buckets_share_other_indices() {
        let t = random_tensor(100, &[6, 5, 4], 9);
        for mode in 0..3 {
            let idx = ModeIndex::build(&t, mode, Keying::FixedComplement).unwrap();
            let plan = sample_batches_mode(&t, &idx, 4, 3).unwrap();
            for i in 0..plan.num_batches() {
                let key = idx.key(plan.bucket_of(i).unwrap());
                for &p in plan.batch(i) {
                    let tuple = t.index(p as usize);
                    let rest: Vec<u32> = (0..3).filter(|&k| k != mode).map(|k| tuple[k]).collect();
                    assert_eq!(rest, key);
                }
            }
        }
        assert!(ModeIndex::build(&t, 3, Keying::FixedMode).is_err());
    }

    #[test]
    fn mode_index_round_trip() {
        let t = random_tensor(150, &[5, 6, 7], 4);
        for mode in 0..3 {
            for keying in [Keying::FixedMode, Keying::FixedComplement] {
                let idx = ModeIndex::build(&t, mode, keying).unwrap();
                let mut seen = vec![false; t.nnz()];
                for b in 0..idx.num_buckets() {
                    for &p in idx.bucket(b) {
                        assert!(!seen[p as usize]);
                        seen[p as usize] = true;
                        let tuple = t.index(p as usize);
                        match keying {
                            Keying::FixedMode => assert_eq!(idx.key(b), &[tuple[mode]]),
                            Keying::FixedComplement => {
                                let rest: Vec<u32> =
                                    (0..3).filter(|&k| k != mode).map(|k| tuple[k]).collect();
                                assert_eq!(idx.key(b), rest.as_slice());
                            }
                        }
                    }
                }
                assert!(seen.into_iter().all(|s| s));
            }
        }
    }

    #[test]
    fn batch_gather_columns() {
        let t = small();
        let b = Batch::gather(&t, &[1, 0]);
        assert_eq!(b.len(), 2);
        assert_eq!(b.values, vec![1.0, 5.0]);
        assert_eq!(b.index_columns[1], vec![2, 0]);
    }
}
