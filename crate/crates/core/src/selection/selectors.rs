//! The five unsupervised selectors. All of them see z-scored columns and
//! return exactly `k` distinct column indices; ties in a score go to the
//! lower index.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::SelectorConfig;
use crate::error::{Error, Result};

/// Columns centered and scaled to unit sample variance. Constant columns
/// become zero.
pub fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let var = if n > 1 {
            col.norm_squared() / (n - 1) as f64
        } else {
            0.0
        };
        if var > 0.0 {
            col /= var.sqrt();
        } else {
            col.fill(0.0);
        }
    }
    out
}

fn check(x: &DMatrix<f64>, k: usize) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::param("feature selection needs at least two rows"));
    }
    if k == 0 || k > x.ncols() {
        return Err(Error::param(format!(
            "cannot select {k} of {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

/// The `k` indices with the smallest scores (NaN counts as worst).
fn lowest_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => sa.total_cmp(&sb),
        }
        .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

fn sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| (x.row(i) - x.row(j)).norm_squared())
}

/// Heat-kernel width: twice the squared mean pairwise distance.
fn heat_width(d2: &DMatrix<f64>) -> f64 {
    let n = d2.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += d2[(i, j)].sqrt();
        }
    }
    let sigma = sum / (n * (n - 1) / 2) as f64;
    let t = 2.0 * sigma * sigma;
    if t > 0.0 {
        t
    } else {
        1.0
    }
}

/// Symmetric k-nearest-neighbour graph with heat-kernel weights.
fn knn_graph(x: &DMatrix<f64>, knn: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let d2 = sq_distances(x);
    let t = heat_width(&d2);
    let knn = knn.min(n - 1);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..knn] {
            let v = (-d2[(i, j)] / t).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

fn full_rbf_graph(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d2 = sq_distances(x);
    let t = heat_width(&d2);
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-d2[(i, j)] / t).exp() })
}

/// Laplacian score of every column over a k-NN heat-kernel graph; smaller
/// means the column better preserves local structure.
pub fn laplacian_scores(x: &DMatrix<f64>, knn: usize) -> Vec<f64> {
    let w = knn_graph(x, knn);
    let d: DVector<f64> = w.column_sum();
    let dsum = d.sum();
    x.column_iter()
        .map(|f| {
            let mean = f.dot(&d) / dsum;
            let ft = f.map(|v| v - mean);
            let denom: f64 = ft.iter().zip(d.iter()).map(|(a, b)| a * a * b).sum();
            if denom <= 1e-300 {
                return f64::NAN;
            }
            // f'Lf = f'Df - f'Wf
            let fwf = ft.dot(&(&w * &ft));
            (denom - fwf) / denom
        })
        .collect()
}

pub fn fs_laplacian(x: &DMatrix<f64>, k: usize, cfg: &SelectorConfig) -> Result<Vec<usize>> {
    check(x, k)?;
    Ok(lowest_k(&laplacian_scores(&standardize(x), cfg.knn), k))
}

/// Spectral relevance of every column on a fully connected RBF graph:
/// normalized-Laplacian smoothness with the trivial component removed.
/// Smaller is better.
pub fn spectral_scores(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let w = full_rbf_graph(x);
    let d: DVector<f64> = w.column_sum();
    let dh = d.map(f64::sqrt);
    let dih = d.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let norm_w = DMatrix::from_fn(n, n, |i, j| dih[i] * w[(i, j)] * dih[j]);
    let xi = {
        let v = dh.clone();
        let nv = v.norm();
        v / nv
    };
    x.column_iter()
        .map(|f| {
            let mut g: DVector<f64> = f.component_mul(&dh);
            let gn = g.norm();
            if gn <= 1e-300 {
                return f64::NAN;
            }
            g /= gn;
            // g'(I - D^-1/2 W D^-1/2)g with |g| = 1
            let num = 1.0 - g.dot(&(&norm_w * &g));
            let align = g.dot(&xi);
            let denom = 1.0 - align * align;
            if denom <= 1e-12 {
                f64::NAN
            } else {
                num / denom
            }
        })
        .collect()
}

pub fn fs_spectral(x: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    check(x, k)?;
    Ok(lowest_k(&spectral_scores(&standardize(x)), k))
}

fn soft(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Coordinate-descent lasso path for `0.5 |y - Xa|^2 + lambda |a|_1`,
/// from `lambda_max` down to `1e-4 lambda_max` over 100 log-spaced steps.
/// Stops at the first step with at least `target` nonzero coefficients.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, target: usize) -> DVector<f64> {
    let p = x.ncols();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let xty = x.tr_mul(y);
    let lambda_max = xty.amax();
    let mut a = DVector::zeros(p);
    if lambda_max <= 0.0 {
        return a;
    }
    let mut r = y.clone();
    const STEPS: usize = 100;
    for s in 0..STEPS {
        let lambda = lambda_max * 1e-4f64.powf(s as f64 / (STEPS - 1) as f64);
        for _ in 0..1000 {
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                if norms[j] <= 0.0 {
                    continue;
                }
                let col = x.column(j);
                let old = a[j];
                let rho = col.dot(&r) + norms[j] * old;
                let new = soft(rho, lambda) / norms[j];
                if new != old {
                    r.axpy(old - new, &col, 1.0);
                    a[j] = new;
                    max_delta = max_delta.max((new - old).abs());
                }
            }
            if max_delta < 1e-9 {
                break;
            }
        }
        if a.iter().filter(|v| **v != 0.0).count() >= target {
            break;
        }
    }
    a
}

/// Multi-cluster scores: the column's largest absolute lasso coefficient
/// over the leading nontrivial spectral-embedding vectors of the k-NN graph.
/// `None` when the eigensolver does not converge.
pub fn mcfs_scores(x: &DMatrix<f64>, k: usize, cfg: &SelectorConfig) -> Option<Vec<f64>> {
    let n = x.nrows();
    let w = knn_graph(x, cfg.knn);
    let d: DVector<f64> = w.column_sum();
    let dih = d.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let a = DMatrix::from_fn(n, n, |i, j| dih[i] * w[(i, j)] * dih[j]);
    let eig = a.try_symmetric_eigen(1e-12, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let clusters = cfg.mcfs_clusters.min(n - 1);
    let mut scores = vec![0.0f64; x.ncols()];
    for &e in order.iter().skip(1).take(clusters) {
        let mut y: DVector<f64> = eig.eigenvectors.column(e).component_mul(&dih);
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        let coef = lasso_path(x, &y, k);
        for (s, c) in scores.iter_mut().zip(coef.iter()) {
            *s = s.max(c.abs());
        }
    }
    Some(scores)
}

pub fn fs_mcfs(x: &DMatrix<f64>, k: usize, cfg: &SelectorConfig) -> Result<Vec<usize>> {
    check(x, k)?;
    let z = standardize(x);
    let scores = mcfs_scores(&z, k, cfg).ok_or(Error::Numerical {
        context: "multi-cluster eigendecomposition did not converge".into(),
    })?;
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    Ok(lowest_k(&neg, k))
}

/// Maximal information compression index of two columns: the smaller
/// eigenvalue of their 2x2 covariance matrix.
pub fn mici(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut vab, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        vab += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    let denom = (n - 1.0).max(1.0);
    let (va, vb, vab) = (va / denom, vb / denom, vab / denom);
    let tr = va + vb;
    let det = va * vb - vab * vab;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr - disc) / 2.0).max(0.0)
}

/// Feature-similarity clustering: repeatedly keep the column whose
/// `kk`-th nearest remaining neighbour (by MICI) is closest and discard those
/// `kk` neighbours. `kk` starts at `round((D - k) / k)`. The representatives
/// are then cut or padded (farthest from the kept set first) to exactly `k`.
pub fn fs_feature_similarity(x: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    check(x, k)?;
    let z = standardize(x);
    let p = z.ncols();
    let cols: Vec<Vec<f64>> = z.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut dist = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let v = mici(&cols[i], &cols[j]);
            dist[i][j] = v;
            dist[j][i] = v;
        }
    }

    let mut kk = ((p - k) as f64 / k as f64).round() as usize;
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut kept: Vec<usize> = Vec::new();
    while !remaining.is_empty() {
        kk = kk.min(remaining.len() - 1);
        if kk == 0 {
            kept.append(&mut remaining);
            break;
        }
        let neighbours = |i: usize| {
            let mut others: Vec<usize> = remaining.iter().copied().filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
            others.truncate(kk);
            others
        };
        let (best, _) = remaining
            .iter()
            .map(|&i| (i, dist[i][*neighbours(i).last().unwrap()]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        let drop = neighbours(best);
        kept.push(best);
        remaining.retain(|&j| j != best && !drop.contains(&j));
    }

    kept.truncate(k);
    while kept.len() < k {
        let next = (0..p)
            .filter(|j| !kept.contains(j))
            .map(|j| {
                let d = kept
                    .iter()
                    .map(|&s| dist[j][s])
                    .fold(f64::INFINITY, f64::min);
                (j, d)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        kept.push(next);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Greedy column subset selection minimizing the reconstruction residual
/// `|A - P_S A|_F`. Each step picks the column `j` maximizing
/// `|E' e_j|^2 / |e_j|^2` for the current residual `E`, then deflates. Once
/// the residual vanishes, remaining slots are filled in column order.
pub fn fs_greedy(x: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    check(x, k)?;
    let mut e = standardize(x);
    let scale = e.norm_squared().max(1.0);
    let p = e.ncols();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let g = e.tr_mul(&e);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if chosen.contains(&j) {
                continue;
            }
            let nj = g[(j, j)];
            if nj <= 1e-12 * scale {
                continue;
            }
            let gain = g.column(j).norm_squared() / nj;
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((j, gain));
            }
        }
        let Some((j, _)) = best else { break };
        chosen.push(j);
        let ej = e.column(j).clone_owned();
        let coef = e.tr_mul(&ej) / ej.norm_squared();
        e -= &ej * coef.transpose();
    }
    for j in 0..p {
        if chosen.len() == k {
            break;
        }
        if !chosen.contains(&j) {
            chosen.push(j);
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_k_breaks_ties_by_index() {
        assert_eq!(lowest_k(&[1.0, 0.5, 1.0, f64::NAN, 0.5], 3), vec![1, 4, 0]);
    }

    #[test]
    fn standardized_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let z = standardize(&x);
        assert_eq!(z.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mici_of_identical_and_orthogonal_columns() {
        let a = [1.0, -1.0, 1.0, -1.0];
        assert!(mici(&a, &a).abs() < 1e-12);
        let b = [1.0, 1.0, -1.0, -1.0];
        // Uncorrelated with equal variance 4/3: smaller eigenvalue = 4/3.
        assert!((mici(&a, &b) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lasso_recovers_a_sparse_signal() {
        let x = DMatrix::from_fn(40, 5, |r, c| ((r * (c + 3) * 7 + c) % 11) as f64 - 5.0);
        let x = standardize(&x);
        let y = x.column(2) * 3.0;
        let a = lasso_path(&x, &y.clone_owned(), 1);
        assert_eq!(a.iamax(), 2);
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 1);
    }
}
