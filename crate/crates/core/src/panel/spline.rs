//! Uniform periodic B-spline basis.

/// Cardinal B-spline of the given degree, supported on `[0, degree + 1)`.
fn cardinal_bspline(degree: usize, x: f64) -> f64 {
    if x < 0.0 || x >= (degree + 1) as f64 {
        return 0.0;
    }
    if degree == 0 {
        return 1.0;
    }
    let p = degree as f64;
    (x * cardinal_bspline(degree - 1, x) + (p + 1.0 - x) * cardinal_bspline(degree - 1, x - 1.0)) / p
}

/// Evaluates `count` periodic B-splines of the given degree with uniformly
/// spaced knots at `phase` (a fraction of the period, wrapped into `[0, 1)`).
///
/// Basis `j` starts at knot `j` and wraps around the period. For
/// `count > degree` the values are nonnegative and sum to one.
pub fn periodic_bspline_basis(phase: f64, count: usize, degree: usize) -> Vec<f64> {
    assert!(count > degree, "periodic spline basis needs count > degree");
    let x = phase.rem_euclid(1.0) * count as f64;
    let n = count as f64;
    (0..count)
        .map(|j| cardinal_bspline(degree, (x - j as f64).rem_euclid(n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    // truncated-power representation of the cardinal B-spline
    fn truncated_power(degree: usize, x: f64) -> f64 {
        let fact: f64 = (1..=degree).map(|v| v as f64).product();
        (0..=degree + 1)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let d = x - k as f64;
                if d > 0.0 {
                    sign * binom(degree + 1, k) * d.powi(degree as i32)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / fact
    }

    #[test]
    fn recursion_matches_truncated_power_form() {
        for degree in 1..=3 {
            for step in 0..200 {
                let x = step as f64 * 0.0237;
                let a = cardinal_bspline(degree, x);
                let b = truncated_power(degree, x);
                assert!((a - b).abs() < 1e-10, "degree {degree} x {x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn partition_of_unity_and_nonnegative() {
        for step in 0..1000 {
            let phase = step as f64 / 997.0;
            let b = periodic_bspline_basis(phase, 20, 2);
            assert!(b.iter().all(|&v| v >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_in_phase() {
        let a = periodic_bspline_basis(0.13, 20, 2);
        let b = periodic_bspline_basis(1.13, 20, 2);
        let c = periodic_bspline_basis(-0.87, 20, 2);
        for j in 0..20 {
            assert!((a[j] - b[j]).abs() < 1e-12);
            assert!((a[j] - c[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_knot_values() {
        // at an integer knot a quadratic cardinal spline contributes 1/2, 1/2
        let b = periodic_bspline_basis(0.0, 4, 2);
        assert!((b[0] - 0.0).abs() < 1e-15);
        assert!((b[3] - 0.5).abs() < 1e-15);
        assert!((b[2] - 0.5).abs() < 1e-15);
    }
}
