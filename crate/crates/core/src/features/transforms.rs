//! Patch transforms: orthonormal 2-D DCT-II, level-1 Haar approximation and
//! central-difference gradient magnitude.

use super::matrix::RealMatrix;

fn dct_basis(n: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            basis[k * n + i] = scale
                * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    basis
}

/// Orthonormal 2-D DCT-II, applied separably (rows, then columns).
pub fn dct2(m: &RealMatrix) -> RealMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let row_basis = dct_basis(cols);
    let col_basis = dct_basis(rows);
    let mut tmp = RealMatrix::zeros(rows, cols);
    for r in 0..rows {
        for k in 0..cols {
            let mut acc = 0.0;
            for i in 0..cols {
                acc += row_basis[k * cols + i] * m.get(r, i);
            }
            tmp.set(r, k, acc);
        }
    }
    RealMatrix::from_fn(rows, cols, |k, c| {
        let mut acc = 0.0;
        for i in 0..rows {
            acc += col_basis[k * rows + i] * tmp.get(i, c);
        }
        acc
    })
}

/// Level-1 Haar approximation with sum-normalized scaling: each output is
/// the sum of a 2x2 block divided by 2, so a constant `c` maps to `2c`.
/// Odd sides are extended by repeating the last row/column.
pub fn haar_approximation(m: &RealMatrix) -> RealMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let at = |r: usize, c: usize| m.get(r.min(rows - 1), c.min(cols - 1));
    RealMatrix::from_fn(rows.div_ceil(2), cols.div_ceil(2), |r, c| {
        let (r2, c2) = (2 * r, 2 * c);
        (at(r2, c2) + at(r2, c2 + 1) + at(r2 + 1, c2) + at(r2 + 1, c2 + 1)) / 2.0
    })
}

/// Gradient magnitude with central differences inside and one-sided
/// differences on the border.
pub fn gradient_magnitude(m: &RealMatrix) -> RealMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let diff = |n: usize, i: usize, get: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            0.0
        } else if i == 0 {
            get(1) - get(0)
        } else if i == n - 1 {
            get(n - 1) - get(n - 2)
        } else {
            (get(i + 1) - get(i - 1)) / 2.0
        }
    };
    RealMatrix::from_fn(rows, cols, |r, c| {
        let gx = diff(cols, c, &|j| m.get(r, j));
        let gy = diff(rows, r, &|i| m.get(i, c));
        (gx * gx + gy * gy).sqrt()
    })
}

/// The three transforms computed from one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStack {
    pub dct: RealMatrix,
    pub approximation: RealMatrix,
    pub gradient: RealMatrix,
}

pub fn transform_stack(patch: &RealMatrix) -> TransformStack {
    TransformStack {
        dct: dct2(patch),
        approximation: haar_approximation(patch),
        gradient: gradient_magnitude(patch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_patch() {
        let c = 7.5;
        let p = RealMatrix::from_fn(6, 5, |_, _| c);
        let t = transform_stack(&p);
        let dc = t.dct.get(0, 0);
        assert!((dc - c * (30f64).sqrt()).abs() < 1e-9);
        for (i, &v) in t.dct.values().iter().enumerate() {
            if i != 0 {
                assert!(v.abs() < 1e-9);
            }
        }
        assert!(t.gradient.values().iter().all(|&v| v == 0.0));
        assert_eq!((t.approximation.rows(), t.approximation.cols()), (3, 3));
        assert!(t.approximation.values().iter().all(|&v| v == 2.0 * c));
    }

    #[test]
    fn haar_two_by_two() {
        let p = RealMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let a = haar_approximation(&p);
        assert_eq!((a.rows(), a.cols()), (1, 1));
        assert_eq!(a.get(0, 0), 5.0);
    }

    #[test]
    fn gradient_of_ramp() {
        let p = RealMatrix::from_fn(4, 5, |_, c| 3.0 * c as f64);
        let g = gradient_magnitude(&p);
        assert!(g.values().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn dct_preserves_energy() {
        let p = RealMatrix::from_fn(5, 7, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let d = dct2(&p);
        let e0: f64 = p.values().iter().map(|v| v * v).sum();
        let e1: f64 = d.values().iter().map(|v| v * v).sum();
        assert!((e0 - e1).abs() < 1e-9 * e0);
    }
}
