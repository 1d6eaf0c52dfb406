//! Lazily evaluated symmetric matrices. The fast model only needs a few
//! sub-blocks of K; a source hands those out and keeps count of how many
//! entries it had to produce.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// A matrix that can be evaluated block by block.
pub trait EntrySource: Sync {
    fn shape(&self) -> (usize, usize);

    /// `A[rows, cols]`.
    fn block(&self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix>;

    /// Every entry.
    fn full(&self) -> Result<DenseMatrix> {
        let (m, n) = self.shape();
        let rows: Vec<usize> = (0..m).collect();
        let cols: Vec<usize> = (0..n).collect();
        self.block(&rows, &cols)
    }

    /// `A[:, cols]`.
    fn columns(&self, cols: &[usize]) -> Result<DenseMatrix> {
        let rows: Vec<usize> = (0..self.shape().0).collect();
        self.block(&rows, cols)
    }

    /// `A[rows, :]`.
    fn rows(&self, rows: &[usize]) -> Result<DenseMatrix> {
        let cols: Vec<usize> = (0..self.shape().1).collect();
        self.block(rows, &cols)
    }
}

/// A symmetric `n x n` source.
pub trait SymmetricSource: EntrySource {
    fn dim(&self) -> usize {
        self.shape().0
    }
}

pub(crate) fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= dim) {
        Some(&index) => Err(Error::IndexOutOfRange { index, dim }),
        None => Ok(()),
    }
}

/// Monotone count of evaluated entries, safe to bump from worker threads.
#[derive(Debug, Default)]
pub struct EntryCounter(AtomicU64);

impl EntryCounter {
    pub fn add(&self, entries: usize) {
        self.0.fetch_add(entries as u64, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// Plain matrices are sources too; nothing is counted.
impl EntrySource for DenseMatrix {
    fn shape(&self) -> (usize, usize) {
        DenseMatrix::shape(self)
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
        check_indices(rows, self.rows())?;
        check_indices(cols, self.cols())?;
        Ok(self.select_rows(rows).select_cols(cols))
    }

    fn full(&self) -> Result<DenseMatrix> {
        Ok(self.clone())
    }
}

impl SymmetricSource for DenseMatrix {}

/// A materialized matrix that counts the entries read through it.
#[derive(Debug)]
pub struct CountingMatrix {
    matrix: DenseMatrix,
    counter: EntryCounter,
}

impl CountingMatrix {
    pub fn new(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            counter: EntryCounter::default(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn entries(&self) -> u64 {
        self.counter.get()
    }

    pub fn reset_entries(&self) {
        self.counter.reset();
    }
}

impl EntrySource for CountingMatrix {
    fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
        let out = self.matrix.block(rows, cols)?;
        self.counter.add(rows.len() * cols.len());
        Ok(out)
    }
}

impl SymmetricSource for CountingMatrix {}

/// Fails unless `src` is square.
pub(crate) fn check_square<S: EntrySource + ?Sized>(src: &S) -> Result<usize> {
    let (m, n) = src.shape();
    if m != n {
        return Err(Error::DimensionMismatch {
            op: "symmetric source",
            expected: m,
            got: n,
        });
    }
    Ok(m)
}
