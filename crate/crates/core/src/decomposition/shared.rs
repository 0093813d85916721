//! Lock-free shared view of a model for concurrent batch workers.
//!
//! Workers read and write parameters through relaxed atomic loads and stores.
//! Writes are read-add-store without a compare loop, so two workers adding to
//! the same row at once may lose one of the additions. That race is accepted:
//! it is the Hogwild contract, and convergence rather than bitwise equality is
//! what multi-worker runs promise.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::model::Model;

fn as_atomic(v: &mut [f32]) -> &[AtomicU32] {
    // SAFETY: AtomicU32 has the size and alignment of u32, which match f32,
    // and the exclusive borrow guarantees no non-atomic access aliases it.
    unsafe { &*(v as *mut [f32] as *const [AtomicU32]) }
}

#[inline]
fn load(a: &AtomicU32) -> f32 {
    f32::from_bits(a.load(Ordering::Relaxed))
}

#[inline]
fn store(a: &AtomicU32, v: f32) {
    a.store(v.to_bits(), Ordering::Relaxed)
}

/// A model borrowed for the duration of one phase.
pub struct SharedModel<'a> {
    dims: Vec<usize>,
    ranks: Vec<usize>,
    rank: usize,
    factors: Vec<&'a [AtomicU32]>,
    cores: Vec<&'a [AtomicU32]>,
}

impl<'a> SharedModel<'a> {
    pub fn new(model: &'a mut Model) -> Self {
        let dims = model.dims().to_vec();
        let ranks = model.ranks().to_vec();
        let rank = model.rank();
        let (f, c) = model.parts_mut();
        Self {
            dims,
            ranks,
            rank,
            factors: f.iter_mut().map(|v| as_atomic(v)).collect(),
            cores: c.iter_mut().map(|v| as_atomic(v)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Copies `A(n)[i,:]` into `out`.
    #[inline]
    pub fn read_factor_row(&self, n: usize, i: usize, out: &mut [f32]) {
        let j = self.ranks[n];
        for (o, a) in out.iter_mut().zip(&self.factors[n][i * j..(i + 1) * j]) {
            *o = load(a);
        }
    }

    /// `A(n)[i,:] += delta`.
    #[inline]
    pub fn add_factor_row(&self, n: usize, i: usize, delta: &[f32]) {
        let j = self.ranks[n];
        for (a, &d) in self.factors[n][i * j..(i + 1) * j].iter().zip(delta) {
            store(a, load(a) + d);
        }
    }

    /// Copies `B(n)` (row-major) into `out`.
    pub fn read_core(&self, n: usize, out: &mut [f32]) {
        for (o, b) in out.iter_mut().zip(self.cores[n]) {
            *o = load(b);
        }
    }

    /// `B(n) += delta`.
    pub fn add_core(&self, n: usize, delta: &[f32]) {
        for (b, &d) in self.cores[n].iter().zip(delta) {
            store(b, load(b) + d);
        }
    }
}
