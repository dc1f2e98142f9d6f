//! Small numerical building blocks shared by the physics modules.

pub mod ode;

use num_complex::Complex64;

/// Finite-difference weights for the first derivative at `x0` from the nodes
/// `xs` (Fornberg's recursion). Works for arbitrary, non-uniform nodes.
pub fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 2, "need at least two nodes");
    let m = 1usize;
    // c[j][k]: weight of node j for derivative order k.
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[1]).collect()
}

/// Indices of the `width` nodes of `xs[range]` nearest to index `i`, as a
/// contiguous window clipped to the range.
pub fn stencil(i: usize, width: usize, range: std::ops::Range<usize>) -> std::ops::Range<usize> {
    let len = range.end - range.start;
    let width = width.min(len);
    let half = width / 2;
    let mut lo = i.saturating_sub(half).max(range.start);
    if lo + width > range.end {
        lo = range.end - width;
    }
    lo..lo + width
}

/// Lagrange interpolation of complex samples at `x` using the nodes `xs`.
pub fn lagrange(x: f64, xs: &[f64], ys: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &xj) in xs.iter().enumerate() {
        let mut w = 1.0;
        for (m, &xm) in xs.iter().enumerate() {
            if m != j {
                w *= (x - xm) / (xj - xm);
            }
        }
        acc += ys[j] * w;
    }
    acc
}

/// Index of the first element of the sorted slice `xs[range]` that is
/// greater than `x` (clipped to the range).
pub fn upper_index(xs: &[f64], range: std::ops::Range<usize>, x: f64) -> usize {
    let slice = &xs[range.clone()];
    range.start + slice.partition_point(|&v| v <= x)
}

/// Composite trapezoid rule on arbitrary nodes.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn trapezoid_complex(xs: &[f64], ys: &[Complex64]) -> Complex64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[0] + y[1]) * (0.5 * (x[1] - x[0])))
        .sum()
}

/// Ordinary least-squares line through `(xs, ys)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len();
    assert!(n >= 2 && n == ys.len());
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
    }
}

/// Componentwise median of complex values.
pub fn complex_median(values: &[Complex64]) -> Complex64 {
    let med = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    Complex64::new(
        med(values.iter().map(|z| z.re).collect()),
        med(values.iter().map(|z| z.im).collect()),
    )
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let h = (end - start) / (n - 1) as f64;
            (0..n).map(|i| start + h * i as f64).collect()
        }
    }
}

/// Geometric sequence of `n` values from `start` to `end` inclusive.
pub fn geomspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    assert!(start > 0.0 && end > 0.0);
    linspace(start.ln(), end.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_weights_uniform() {
        let w = derivative_weights(0.0, &[-1.0, 0.0, 1.0]);
        assert!((w[0] + 0.5).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
        let w = derivative_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_exact_on_polynomials_nonuniform() {
        let xs = [0.0, 0.3, 0.45, 1.1, 1.7];
        let w = derivative_weights(0.5, &xs);
        // Exact for polynomials up to degree 4.
        let d: f64 = xs.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((d - 4.0 * 0.5f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn stencil_clips_at_edges() {
        assert_eq!(stencil(0, 5, 0..10), 0..5);
        assert_eq!(stencil(9, 5, 0..10), 5..10);
        assert_eq!(stencil(5, 5, 0..10), 3..8);
        assert_eq!(stencil(1, 5, 0..3), 0..3);
    }

    #[test]
    fn lagrange_reproduces_cubic() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let f = |x: f64| Complex64::new(x.powi(3) - x, 2.0 * x);
        let ys: Vec<_> = xs.iter().map(|&x| f(x)).collect();
        assert!((lagrange(1.7, &xs, &ys) - f(1.7)).norm() < 1e-13);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs = linspace(0.0, 10.0, 11);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys);
        assert!((fit.slope - 3.0).abs() < 1e-12 && (fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }
}
