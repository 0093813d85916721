//! Per-sample update rules written directly from their scalar definitions.
//!
//! These are the reference the batched kernels are checked against. They are
//! generic so the same code runs in `f32` (working precision) and `f64`.
//!
//! Each sample is described by its factor rows `a(k)[i_k,:]` and the full core
//! matrices `B(k)` (row-major `J_k x R`). Gradients follow the half-gradient
//! convention: for `f = (x - x_hat)^2 + reg ||w||^2` they return `df/dw / 2`.

use num_traits::Float;

/// `c = a . B`, length `R`.
pub fn c_row<T: Float>(a: &[T], b: &[T], rank: usize) -> Vec<T> {
    let mut c = vec![T::zero(); rank];
    for (j, &av) in a.iter().enumerate() {
        for (r, cr) in c.iter_mut().enumerate() {
            *cr = *cr + av * b[j * rank + r];
        }
    }
    c
}

/// `d(n) = prod_{k != n} c(k)`, elementwise.
pub fn d_row<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, n: usize) -> Vec<T> {
    let mut d = vec![T::one(); rank];
    for k in (0..rows.len()).filter(|&k| k != n) {
        for (dr, cr) in d.iter_mut().zip(c_row(rows[k], cores[k], rank)) {
            *dr = *dr * cr;
        }
    }
    d
}

pub fn predict<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize) -> T {
    let c = c_row(rows[0], cores[0], rank);
    let d = d_row(rows, cores, rank, 0);
    dot(&c, &d)
}

fn dot<T: Float>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |s, (&a, &b)| s + a * b)
}

/// `d B^T`, length `J_n`.
fn d_bt<T: Float>(d: &[T], b: &[T], rank: usize) -> Vec<T> {
    b.chunks_exact(rank).map(|brow| dot(brow, d)).collect()
}

/// Gradient of the single-sample factor objective with respect to
/// `a(n)[i_n,:]`: `-(x - x_hat) d B^T + reg a`.
pub fn factor_gradient<T: Float>(
    rows: &[&[T]],
    cores: &[&[T]],
    rank: usize,
    x: T,
    n: usize,
    reg: T,
) -> Vec<T> {
    let resid = x - predict(rows, cores, rank);
    let d = d_row(rows, cores, rank, n);
    d_bt(&d, cores[n], rank)
        .into_iter()
        .zip(rows[n])
        .map(|(g, &a)| -resid * g + reg * a)
        .collect()
}

/// Gradient of the single-sample core objective with respect to `B(n)`:
/// `-(x - x_hat) a^T d + reg B`, row-major `J_n x R`.
pub fn core_gradient<T: Float>(
    rows: &[&[T]],
    cores: &[&[T]],
    rank: usize,
    x: T,
    n: usize,
    reg: T,
) -> Vec<T> {
    let resid = x - predict(rows, cores, rank);
    let d = d_row(rows, cores, rank, n);
    let mut g = Vec::with_capacity(cores[n].len());
    for (j, &a) in rows[n].iter().enumerate() {
        for r in 0..rank {
            g.push(-resid * a * d[r] + reg * cores[n][j * rank + r]);
        }
    }
    g
}

/// Simultaneous factor step: every mode's new row, all computed from the
/// same snapshot. `a(n) + lr ((x - x_hat) d(n) B(n)^T - reg a(n))`.
pub fn factor_update_all<T: Float>(
    rows: &[&[T]],
    cores: &[&[T]],
    rank: usize,
    x: T,
    lr: T,
    reg: T,
) -> Vec<Vec<T>> {
    (0..rows.len())
        .map(|n| {
            factor_gradient(rows, cores, rank, x, n, reg)
                .into_iter()
                .zip(rows[n])
                .map(|(g, &a)| a - lr * g)
                .collect()
        })
        .collect()
}

/// Simultaneous core step: `B(n) + lr ((x - x_hat) a(n)^T d(n) - reg B(n))`
/// for every mode.
pub fn core_update_all<T: Float>(
    rows: &[&[T]],
    cores: &[&[T]],
    rank: usize,
    x: T,
    lr: T,
    reg: T,
) -> Vec<Vec<T>> {
    (0..rows.len())
        .map(|n| {
            core_gradient(rows, cores, rank, x, n, reg)
                .into_iter()
                .zip(cores[n])
                .map(|(g, &b)| b - lr * g)
                .collect()
        })
        .collect()
}

fn sq_norm<T: Float>(v: &[T]) -> T {
    dot(v, v)
}

fn sq_err<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, x: T) -> T {
    let r = x - predict(rows, cores, rank);
    r * r
}

/// `(x - x_hat)^2 + reg ||a(n)[i_n,:]||^2`.
pub fn factor_objective<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, x: T, n: usize, reg: T) -> T {
    sq_err(rows, cores, rank, x) + reg * sq_norm(rows[n])
}

/// `(x - x_hat)^2 + reg ||B(n)||^2`.
pub fn core_objective<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, x: T, n: usize, reg: T) -> T {
    sq_err(rows, cores, rank, x) + reg * sq_norm(cores[n])
}

/// `(x - x_hat)^2 + reg sum_n ||a(n)[i_n,:]||^2`.
pub fn joint_factor_objective<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, x: T, reg: T) -> T {
    sq_err(rows, cores, rank, x) + reg * rows.iter().fold(T::zero(), |s, r| s + sq_norm(r))
}

/// `(x - x_hat)^2 + reg sum_n ||B(n)||^2`.
pub fn joint_core_objective<T: Float>(rows: &[&[T]], cores: &[&[T]], rank: usize, x: T, reg: T) -> T {
    sq_err(rows, cores, rank, x) + reg * cores.iter().fold(T::zero(), |s, b| s + sq_norm(b))
}
