//! Adaptive quadrature and series summation used by the normalization and
//! moment checks.

use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("quadrature did not converge: estimate {estimate}, error bound {error} after {intervals} intervals")]
    NoConvergence {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("series did not converge after {0} terms")]
    SeriesNoConvergence(u64),
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 5000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite(x))
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[j] * pair;
        // Gauss nodes are the odd-indexed Kronrod nodes.
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` over the finite
/// interval `[a, b]`, refined until the summed error bound drops below
/// `tol`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b)?;
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    while err > tol {
        if heap.len() >= MAX_INTERVALS {
            return Err(QuadratureError::NoConvergence {
                estimate: total,
                error: err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&f, worst.a, mid)?;
        let right = gk15(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Recompute from the leaves to shed accumulated update round-off.
    Ok(heap.iter().map(|s| s.value).sum())
}

/// Integral of `f` over `[a, ∞)` via the map `x = a + scale·t/(1-t)`.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    integrate(
        |t| {
            let u = 1.0 - t;
            let x = a + scale * t / u;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * scale / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integral of `f` over the whole real line via `x = c + s·t/(1-t²)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    scale: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    integrate(
        |t| {
            let u = 1.0 - t * t;
            let x = center + scale * t / u;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * scale * (1.0 + t * t) / (u * u)
            }
        },
        -1.0,
        1.0,
        tol,
    )
}

const MAX_TERMS: u64 = 50_000_000;

/// Sums `term(k)` for `k = start, start+1, ...` for a unimodal nonnegative
/// series. Stops once past `mode` and the geometric tail estimate falls
/// below `tail_tol`. Returns `(sum, last_k)`.
pub fn sum_series<F: Fn(u64) -> f64>(
    term: F,
    start: u64,
    mode: f64,
    tail_tol: f64,
) -> Result<(f64, u64), QuadratureError> {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    let mut prev = f64::NAN;
    let mut k = start;
    loop {
        let t = term(k);
        if !t.is_finite() {
            return Err(QuadratureError::NonFinite(k as f64));
        }
        // Kahan summation keeps 1e-12 checks meaningful for long series.
        let y = t - compensation;
        let s = sum + y;
        compensation = (s - sum) - y;
        sum = s;
        if (k as f64) > mode && prev.is_finite() && t <= prev {
            let ratio = if prev > 0.0 { t / prev } else { 0.0 };
            let tail = if ratio < 1.0 {
                t * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if tail < tail_tol && t < tail_tol {
                return Ok((sum, k));
            }
        }
        prev = t;
        k += 1;
        if k - start > MAX_TERMS {
            return Err(QuadratureError::SeriesNoConvergence(k - start));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_real_line() {
        let v = integrate_real_line(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn exponential_tail() {
        let v = integrate_upper_tail(|x| (-x).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sqrt_singularity_at_endpoint() {
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-9).unwrap();
        assert!((v - 2.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn geometric_series() {
        let (s, _) = sum_series(|k| 0.5f64.powi(k as i32 + 1), 0, 0.0, 1e-15).unwrap();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-9);
        assert!(matches!(r, Err(QuadratureError::NonFinite(_))));
    }
}
