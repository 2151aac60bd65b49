//! Scalar-generic math kernels.
//!
//! The raster statistics and similarity math are written once over [`Real`]
//! (satisfied by `f32` and `f64`) so callers can pick precision; the pipeline
//! itself uses the crate-root [`crate::Scalar`] alias.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the math kernels.
pub trait Real: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {}

/// Mean of `values[i]` over indices where `keep[i]` is set.
///
/// Returns `None` when no index is kept. Accumulates in input order so two
/// callers iterating the same data agree bit-for-bit.
pub fn masked_mean<R: Real>(keep: &[bool], values: &[R]) -> Option<R> {
    debug_assert_eq!(keep.len(), values.len());
    let mut sum = R::zero();
    let mut n: u64 = 0;
    for (bit, v) in keep.iter().zip(values) {
        if *bit {
            sum = sum + *v;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    Some(sum / R::from_u64(n).expect("count fits in scalar"))
}

/// Min-max rescale of `values` onto `[0, 1]`.
///
/// A constant slice has no spread to express, so every element maps to 0.5.
pub fn min_max_rescale<R: Real>(values: &[R]) -> Vec<R> {
    let Some(lo) = values.iter().copied().reduce(R::min) else {
        return Vec::new();
    };
    let hi = values.iter().copied().reduce(R::max).expect("nonempty");
    if lo == hi {
        let half = R::from_f64(0.5).expect("0.5 representable");
        return vec![half; values.len()];
    }
    values.iter().map(|v| (*v - lo) / (hi - lo)).collect()
}

/// Cosine similarity between two equal-length vectors.
///
/// Computed as `dot(a, b) / sqrt(dot(a, a) * dot(b, b))` with one shared
/// left-fold accumulation, so identical inputs yield exactly 1 (IEEE sqrt of a
/// rounded perfect square returns the root exactly). Returns `None` when either
/// vector has zero norm.
pub fn cosine<R: Real>(a: &[R], b: &[R]) -> Option<R> {
    debug_assert_eq!(a.len(), b.len());
    let dot = fold_dot(a, b);
    let na2 = fold_dot(a, a);
    let nb2 = fold_dot(b, b);
    if na2 == R::zero() || nb2 == R::zero() {
        return None;
    }
    Some(dot / (na2 * nb2).sqrt())
}

fn fold_dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter()
        .zip(b)
        .fold(R::zero(), |acc, (x, y)| acc + *x * *y)
}
