//! Scalar math helpers. Transcendentals route through `libm` so results are
//! identical on hosted and bare-metal builds.

use alloc::vec::Vec;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln(p / (1 - p))` for `p` in (0, 1).
#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    ln(p) - ln(1.0 - p)
}

/// Stable softmax. Output sums to 1 for any finite input.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Stable log-softmax.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + ln(logits.iter().map(|&v| exp(v - max)).sum::<f64>());
    logits.iter().map(|&v| v - lse).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

/// Cosine similarity; 0.0 when either vector has zero norm.
pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// `out = w x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        out[r] = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out = w^T g` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_transpose(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let gr = g[r];
        for c in 0..cols {
            out[c] += row[c] * gr;
        }
    }
}

/// `acc += g x^T` accumulated into a row-major `rows x cols` matrix.
pub(crate) fn outer_acc(acc: &mut [f64], rows: usize, cols: usize, g: &[f64], x: &[f64]) {
    debug_assert_eq!(acc.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        let row = &mut acc[r * cols..(r + 1) * cols];
        let gr = g[r];
        for c in 0..cols {
            row[c] += gr * x[c];
        }
    }
}
