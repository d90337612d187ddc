//! Composite trapezoid quadrature used by the metric and probability helpers.

use crate::Scalar;

/// Composite trapezoid rule over `[a, b]` with `points` evaluation nodes
/// (`points >= 2`). Summation order is fixed, so results are deterministic.
pub fn trapezoid<T: Scalar>(mut f: impl FnMut(T) -> T, a: T, b: T, points: usize) -> T {
    assert!(points >= 2, "trapezoid needs at least two nodes");
    let n = T::of_usize(points - 1);
    let h = (b - a) / n;
    let mut acc = (f(a) + f(b)) * T::of(0.5);
    for i in 1..points - 1 {
        let x = a + h * T::of_usize(i);
        acc += f(x);
    }
    acc * h
}

/// Trapezoid rule applied segment by segment between consecutive breakpoints.
///
/// Placing known discontinuities of the integrand on segment boundaries keeps
/// the composite error at the smooth-integrand rate.
pub fn trapezoid_segments<T: Scalar>(
    mut f: impl FnMut(T) -> T,
    breakpoints: &[T],
    points_per_segment: usize,
) -> T {
    assert!(breakpoints.len() >= 2, "need at least one segment");
    let mut acc = T::zero();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            acc += trapezoid(&mut f, w[0], w[1], points_per_segment);
        }
    }
    acc
}
