//! Numeric kernels with a rayon data-parallel path and a sequential fallback.
//!
//! With the `parallel` feature (on by default) the heavy loops split their
//! output into fixed-size, disjoint chunks and hand them to rayon. Chunk
//! boundaries never depend on the thread count and no reduction crosses a
//! chunk, so both paths produce bit-identical results. The parallel path can
//! also be switched off at runtime with [`set_exec`], which is how the bench
//! suite compares the two.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for the kernels in this module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

static EXEC_OVERRIDE: AtomicU8 = AtomicU8::new(0);

/// Forces an execution strategy process-wide. `Parallel` is a no-op without
/// the `parallel` feature.
pub fn set_exec(exec: Exec) {
    let v = match exec {
        Exec::Sequential => 1,
        Exec::Parallel => 2,
    };
    EXEC_OVERRIDE.store(v, Ordering::Relaxed);
}

pub fn current_exec() -> Exec {
    if !cfg!(feature = "parallel") {
        return Exec::Sequential;
    }
    match EXEC_OVERRIDE.load(Ordering::Relaxed) {
        1 => Exec::Sequential,
        _ => Exec::Parallel,
    }
}

/// Work (in multiply-adds or elements) below which the parallel path is not
/// worth the scheduling overhead.
const PAR_MIN_WORK: usize = 1 << 15;

#[inline]
fn go_parallel(work: usize) -> bool {
    work >= PAR_MIN_WORK && current_exec() == Exec::Parallel
}

/// Runs `f(chunk_index, chunk)` over consecutive `chunk_len`-sized pieces of
/// `data`. `work` is the caller's estimate of total cost.
pub fn for_each_chunk<F>(data: &mut [f64], chunk_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if go_parallel(work) {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = work;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Elementwise `out[i] = f(a[i])`.
pub fn map_into(out: &mut [f64], a: &[f64], f: impl Fn(f64) -> f64 + Send + Sync) {
    const CHUNK: usize = 4096;
    for_each_chunk(out, CHUNK, a.len(), |ci, o| {
        let base = ci * CHUNK;
        for (j, v) in o.iter_mut().enumerate() {
            *v = f(a[base + j]);
        }
    });
}

/// Elementwise `out[i] = f(a[i], b[i])`.
pub fn zip_into(out: &mut [f64], a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Send + Sync) {
    const CHUNK: usize = 4096;
    for_each_chunk(out, CHUNK, a.len(), |ci, o| {
        let base = ci * CHUNK;
        for (j, v) in o.iter_mut().enumerate() {
            *v = f(a[base + j], b[base + j]);
        }
    });
}

/// Strided operand for [`gemm`]: element `(i, j)` lives at
/// `data[i * row_stride + j * col_stride]`.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// Row-major `[rows, cols]` view.
    pub fn new(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major `[rows, cols]` buffer.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }
}

/// `C[m×n] = alpha·A[m×k]·B[k×n] + beta·C`, with `C` row-major and contiguous.
///
/// The parallel path splits `C` into blocks of rows; each block is an
/// independent gemm, so results match the sequential path exactly.
pub fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    const ROW_BLOCK: usize = 32;
    let block = |row0: usize, c_block: &mut [f64]| {
        let rows = c_block.len() / n;
        if k == 0 {
            for v in c_block.iter_mut() {
                *v *= beta;
            }
            return;
        }
        // SAFETY: the strides describe in-bounds elements of the borrowed
        // slices for rows row0..row0+rows of A and all of B, and c_block is an
        // exclusive contiguous row-major slab of C.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                alpha,
                a.data.as_ptr().offset(row0 as isize * a.row_stride),
                a.row_stride,
                a.col_stride,
                b.data.as_ptr(),
                b.row_stride,
                b.col_stride,
                beta,
                c_block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };
    if m > ROW_BLOCK && go_parallel(m * n * k) {
        for_each_chunk(c, ROW_BLOCK * n, usize::MAX, |ci, cb| block(ci * ROW_BLOCK, cb));
    } else {
        block(0, c);
    }
}

/// Row-major `A·B` into a fresh buffer.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, 1.0, MatRef::new(a, k), MatRef::new(b, n), 0.0, &mut c);
    c
}
