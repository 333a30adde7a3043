//! First-order Takagi-Sugeno rule bases learned from (feature row, optimal
//! threshold) pairs, and their evolution from user feedback.

mod cluster;
mod fusion;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::STATISTIC_COUNT;

pub use cluster::{potentials, subtractive_clustering, RuleConfig};
pub use fusion::{fuse_output, zmf, FusedOutput};

/// Default pruning distance in z-scored joint space.
pub const DEFAULT_PRUNE_DISTANCE: f64 = 1.0;

/// Total firing strength below which inference falls back to the nearest
/// rule.
pub const MIN_FIRING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsRule {
    pub centers: Vec<f64>,
    /// Gaussian standard deviations, one per input; all positive.
    pub widths: Vec<f64>,
    /// Affine consequent: one weight per input, then the bias.
    pub coefficients: Vec<f64>,
}

impl TsRule {
    fn log_firing(&self, x: &[f64]) -> f64 {
        -0.5 * x
            .iter()
            .zip(&self.centers)
            .zip(&self.widths)
            .map(|((v, c), s)| ((v - c) / s).powi(2))
            .sum::<f64>()
    }

    pub fn firing(&self, x: &[f64]) -> f64 {
        self.log_firing(x).exp()
    }

    pub fn consequent(&self, x: &[f64]) -> f64 {
        let n = x.len();
        self.coefficients[n]
            + x.iter()
                .zip(&self.coefficients[..n])
                .map(|(v, a)| v * a)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub version: u64,
    pub input_names: Vec<String>,
    pub rules: Vec<TsRule>,
    /// Store rows the rules were generated from.
    pub training_rows: usize,
    pub cluster: RuleConfig,
    /// The consequent least-squares system was rank deficient and solved
    /// in the minimum-norm sense.
    pub rank_deficient: bool,
    /// The last evolution kept no new rows.
    pub noop: bool,
}

impl RuleBase {
    pub fn dim(&self) -> usize {
        self.input_names.len()
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_atomic(path.as_ref(), &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Per-column z-score parameters for the joint (inputs, output) vector used
/// by pruning. Fixed when the store is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointNormalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: f64,
    pub output_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl JointNormalizer {
    /// Input statistics from `inputs`, output statistics from `outputs`;
    /// zero spreads are replaced by 1.
    pub fn fit(inputs: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        let dim = inputs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("normalizer needs input rows".into()))?;
        let (input_mean, input_std) = (0..dim)
            .map(|c| mean_std(inputs.iter().map(move |r| r[c])))
            .unzip();
        let (output_mean, output_std) = mean_std(outputs.iter().copied());
        Ok(Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn apply(&self, x: &[f64], y: f64) -> Vec<f64> {
        let mut z: Vec<f64> = x
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        z.push((y - self.output_mean) / self.output_std);
        z
    }
}

/// Input rows `M` and their optimal thresholds `O`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStore {
    pub input_names: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub normalizer: JointNormalizer,
}

impl TrainingStore {
    pub fn new(input_names: Vec<String>, normalizer: JointNormalizer) -> Result<Self> {
        if normalizer.dim() != input_names.len() {
            return Err(Error::param("normalizer dimension differs from the input names"));
        }
        Ok(Self {
            input_names,
            inputs: Vec::new(),
            outputs: Vec::new(),
            normalizer,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.input_names.len()
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::param(format!(
                "row has {} inputs, store has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.check_row(&x)?;
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    /// Writes `M.csv`, `O.csv` and `normalizer.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut m = csv::Writer::from_writer(Vec::new());
        m.write_record(&self.input_names)?;
        for row in &self.inputs {
            m.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        let mut o = csv::Writer::from_writer(Vec::new());
        o.write_record(["threshold"])?;
        for v in &self.outputs {
            o.write_record([format!("{v:e}")])?;
        }
        let into_bytes = |w: csv::Writer<Vec<u8>>| {
            w.into_inner()
                .map_err(|e| Error::io(dir, e.into_error()))
        };
        crate::write_atomic(&dir.join("M.csv"), &into_bytes(m)?)?;
        crate::write_atomic(&dir.join("O.csv"), &into_bytes(o)?)?;
        crate::write_atomic(
            &dir.join("normalizer.json"),
            &serde_json::to_vec_pretty(&self.normalizer)?,
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let parse = |path: &Path, s: &str| {
            s.parse::<f64>().map_err(|e| Error::Artifact {
                path: path.to_path_buf(),
                reason: format!("bad number {s:?}: {e}"),
            })
        };
        let m_path = dir.join("M.csv");
        let mut m = csv::Reader::from_path(&m_path)?;
        let input_names: Vec<String> = m.headers()?.iter().map(str::to_string).collect();
        let mut inputs = Vec::new();
        for rec in m.records() {
            inputs.push(rec?.iter().map(|s| parse(&m_path, s)).collect::<Result<Vec<_>>>()?);
        }
        let o_path = dir.join("O.csv");
        let mut o = csv::Reader::from_path(&o_path)?;
        let mut outputs = Vec::new();
        for rec in o.records() {
            let rec = rec?;
            outputs.push(parse(&o_path, rec.get(0).unwrap_or_default())?);
        }
        if inputs.len() != outputs.len() {
            return Err(Error::Artifact {
                path: dir.to_path_buf(),
                reason: format!("{} input rows but {} outputs", inputs.len(), outputs.len()),
            });
        }
        let n_path = dir.join("normalizer.json");
        let bytes = std::fs::read(&n_path).map_err(|e| Error::io(&n_path, e))?;
        let normalizer = serde_json::from_slice(&bytes)?;
        let mut store = Self::new(input_names, normalizer)?;
        for (x, y) in inputs.into_iter().zip(outputs) {
            store.push(x, y)?;
        }
        Ok(store)
    }
}

/// Min-max scaling of each joint column; zero ranges become 1.
fn joint_bounds(store: &TrainingStore) -> (Vec<f64>, Vec<f64>) {
    let dim = store.dim() + 1;
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for (x, &y) in store.inputs.iter().zip(&store.outputs) {
        for (c, &v) in x.iter().chain(std::iter::once(&y)).enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    let range = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { h - l } else { 1.0 })
        .collect();
    (lo, range)
}

/// Minimum-norm least squares via SVD. Returns the solution and whether
/// the system was rank deficient.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let x = svd.solve(b, tol).map_err(|e| Error::Numerical {
        context: format!("consequent least squares: {e}"),
    })?;
    Ok((x, rank < a.ncols()))
}

/// Minimizes `|A theta - b|^2 + lambda |slopes|^2` where each block of `p`
/// columns holds `dim` slopes then one unpenalized bias. The biases are
/// projected out and the slopes solved in dual form, so the cost grows with
/// the row count rather than the parameter count.
fn slope_ridge(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rules: usize,
    dim: usize,
    lambda: f64,
) -> Result<(DVector<f64>, bool)> {
    let n = a.nrows();
    let p = dim + 1;
    let bias = DMatrix::from_fn(n, rules, |i, k| a[(i, k * p + dim)]);
    let slopes = DMatrix::from_fn(n, rules * dim, |i, j| a[(i, (j / dim) * p + j % dim)]);

    let svd = bias.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * n.max(rules) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let pinv = svd.pseudo_inverse(tol).map_err(|e| Error::Numerical {
        context: format!("consequent bias projection: {e}"),
    })?;
    let slopes_res = &slopes - &bias * (&pinv * &slopes);
    let b_res = b - &bias * (&pinv * b);

    let mut kernel = &slopes_res * slopes_res.transpose();
    for i in 0..n {
        kernel[(i, i)] += lambda;
    }
    let chol = kernel.cholesky().ok_or_else(|| Error::Numerical {
        context: "consequent ridge kernel is not positive definite".into(),
    })?;
    let alpha = slopes_res.transpose() * chol.solve(&b_res);
    let beta = &pinv * (b - &slopes * &alpha);

    let mut theta = DVector::zeros(rules * p);
    for k in 0..rules {
        for c in 0..dim {
            theta[k * p + c] = alpha[k * dim + c];
        }
        theta[k * p + dim] = beta[k];
    }
    Ok((theta, rank < rules))
}

/// Builds a rule base from the whole store: one rule per subtractive
/// cluster center in the min-max normalized joint space, Gaussian widths
/// `radius * range / sqrt(8)`, and affine consequents fit jointly by least
/// squares on the normalized firing strengths.
pub fn generate_rules(store: &TrainingStore, cfg: &RuleConfig, version: u64) -> Result<RuleBase> {
    if store.is_empty() {
        return Err(Error::EmptyInput("cannot generate rules from an empty store".into()));
    }
    if !(cfg.radius > 0.0 && cfg.radius <= 1.0) {
        return Err(Error::param(format!("radius must be in (0, 1], got {}", cfg.radius)));
    }
    if !(cfg.slope_ridge >= 0.0 && cfg.slope_ridge.is_finite()) {
        return Err(Error::param(format!(
            "slope ridge must be finite and nonnegative, got {}",
            cfg.slope_ridge
        )));
    }
    let n = store.len();
    let dim = store.dim();
    let (lo, range) = joint_bounds(store);
    let points: Vec<Vec<f64>> = store
        .inputs
        .iter()
        .zip(&store.outputs)
        .map(|(x, &y)| {
            x.iter()
                .chain(std::iter::once(&y))
                .enumerate()
                .map(|(c, v)| (v - lo[c]) / range[c])
                .collect()
        })
        .collect();
    let centers = subtractive_clustering(&points, cfg);

    let sigma_unit = cfg.radius / 8f64.sqrt();
    let mut rules: Vec<TsRule> = centers
        .iter()
        .map(|&i| TsRule {
            centers: store.inputs[i].clone(),
            widths: range[..dim].iter().map(|r| sigma_unit * r).collect(),
            coefficients: vec![0.0; dim + 1],
        })
        .collect();

    // Regressors use normalized inputs for conditioning.
    let r = rules.len();
    let p = dim + 1;
    let mut a = DMatrix::zeros(n, r * p);
    for (row, x) in store.inputs.iter().enumerate() {
        let w = normalized_firing(&rules, x);
        let z: Vec<f64> = x.iter().enumerate().map(|(c, v)| (v - lo[c]) / range[c]).collect();
        for (k, wk) in w.iter().enumerate() {
            for c in 0..dim {
                a[(row, k * p + c)] = wk * z[c];
            }
            a[(row, k * p + dim)] = *wk;
        }
    }
    let b = DVector::from_column_slice(&store.outputs);
    let (theta, rank_deficient) = if cfg.slope_ridge > 0.0 {
        slope_ridge(&a, &b, r, dim, cfg.slope_ridge)?
    } else {
        least_squares(&a, &b)?
    };
    if rank_deficient {
        log::debug!("consequent system rank deficient; minimum-norm solution used");
    }
    for (k, rule) in rules.iter_mut().enumerate() {
        let t = &theta.as_slice()[k * p..(k + 1) * p];
        let mut bias = t[dim];
        for c in 0..dim {
            rule.coefficients[c] = t[c] / range[c];
            bias -= t[c] * lo[c] / range[c];
        }
        rule.coefficients[dim] = bias;
    }

    Ok(RuleBase {
        version,
        input_names: store.input_names.clone(),
        rules,
        training_rows: n,
        cluster: *cfg,
        rank_deficient,
        noop: false,
    })
}

/// Firing strengths normalized to sum to 1, computed in log space so that
/// distant points still weight their nearest rules.
fn normalized_firing(rules: &[TsRule], x: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = rules.iter().map(|r| r.log_firing(x)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub value: f64,
    /// Total firing was below [`MIN_FIRING`]; the nearest rule answered.
    pub nearest_rule_fallback: bool,
}

/// Firing-weighted average of the rule consequents at `x`.
pub fn infer(rb: &RuleBase, x: &[f64]) -> Result<Inference> {
    if x.len() != rb.dim() {
        return Err(Error::param(format!(
            "input has {} features, rule base expects {}",
            x.len(),
            rb.dim()
        )));
    }
    if rb.rules.is_empty() {
        return Err(Error::EmptyInput("rule base has no rules".into()));
    }
    let firing: Vec<f64> = rb.rules.iter().map(|r| r.firing(x)).collect();
    let total: f64 = firing.iter().sum();
    if total < MIN_FIRING {
        let nearest = rb
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.log_firing(x)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Ok(Inference {
            value: rb.rules[nearest].consequent(x),
            nearest_rule_fallback: true,
        });
    }
    let value = rb
        .rules
        .iter()
        .zip(&firing)
        .map(|(r, w)| w * r.consequent(x))
        .sum::<f64>()
        / total;
    Ok(Inference {
        value,
        nearest_rule_fallback: false,
    })
}

/// One output per statistic row of an image block.
pub fn infer_block(rb: &RuleBase, rows: &[Vec<f64>]) -> Result<Vec<Inference>> {
    if rows.len() != STATISTIC_COUNT {
        return Err(Error::param(format!(
            "image block has {} rows, expected {STATISTIC_COUNT}",
            rows.len()
        )));
    }
    rows.iter().map(|x| infer(rb, x)).collect()
}

/// Indices of candidate rows far enough from the store to be added.
///
/// A candidate survives when its normalized joint distance to every stored
/// row, and to every earlier surviving candidate, is at least `d_min`. An
/// empty store accepts the whole batch.
pub fn prune_rows(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    store: &TrainingStore,
    d_min: f64,
) -> Result<Vec<usize>> {
    if inputs.len() != outputs.len() {
        return Err(Error::param("candidate inputs and outputs differ in length"));
    }
    for x in inputs {
        store.check_row(x)?;
    }
    if store.is_empty() {
        return Ok((0..inputs.len()).collect());
    }
    let norm = &store.normalizer;
    let mut reference: Vec<Vec<f64>> = store
        .inputs
        .iter()
        .zip(&store.outputs)
        .map(|(x, &y)| norm.apply(x, y))
        .collect();
    let d2_min = d_min * d_min;
    let mut kept = Vec::new();
    for (i, (x, &y)) in inputs.iter().zip(outputs).enumerate() {
        let z = norm.apply(x, y);
        let far = reference.iter().all(|r| {
            r.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= d2_min
        });
        if far {
            kept.push(i);
            reference.push(z);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub rule_base: RuleBase,
    pub store: TrainingStore,
    /// Indices of the block rows that were added.
    pub kept: Vec<usize>,
}

/// Adds the novel rows of an image block (each paired with `t_best`) to
/// the store and regenerates every rule from the updated store. The version
/// always advances; with nothing kept the rules are carried over unchanged
/// and marked as a no-op.
pub fn evolve(
    rb: &RuleBase,
    store: &TrainingStore,
    block: &[Vec<f64>],
    t_best: f64,
    d_min: f64,
) -> Result<Evolution> {
    let outputs = vec![t_best; block.len()];
    let kept = prune_rows(block, &outputs, store, d_min)?;
    let version = rb.version + 1;
    if kept.is_empty() {
        let mut rule_base = rb.clone();
        rule_base.version = version;
        rule_base.noop = true;
        return Ok(Evolution {
            rule_base,
            store: store.clone(),
            kept,
        });
    }
    let mut store = store.clone();
    for &i in &kept {
        store.push(block[i].clone(), t_best)?;
    }
    let rule_base = generate_rules(&store, &rb.cluster, version)?;
    Ok(Evolution {
        rule_base,
        store,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(rows: &[(Vec<f64>, f64)]) -> TrainingStore {
        let inputs: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let outputs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let names = (0..inputs[0].len()).map(|i| format!("f{i}")).collect();
        let mut s = TrainingStore::new(names, JointNormalizer::fit(&inputs, &outputs).unwrap()).unwrap();
        for (x, y) in rows {
            s.push(x.clone(), *y).unwrap();
        }
        s
    }

    #[test]
    fn single_row_is_interpolated() {
        let s = store_with(&[(vec![3.5, -2.0, 10.0], 87.0)]);
        let rb = generate_rules(&s, &RuleConfig::default(), 1).unwrap();
        assert_eq!(rb.rule_count(), 1);
        let y = infer(&rb, &[3.5, -2.0, 10.0]).unwrap();
        assert!((y.value - 87.0).abs() < 1e-9, "{}", y.value);
    }

    #[test]
    fn widths_are_positive_even_for_constant_columns() {
        let s = store_with(&[(vec![1.0, 0.0], 10.0), (vec![1.0, 1.0], 20.0)]);
        let rb = generate_rules(&s, &RuleConfig::default(), 1).unwrap();
        assert!(rb.rules.iter().all(|r| r.widths.iter().all(|&w| w > 0.0)));
    }

    #[test]
    fn dimension_is_checked() {
        let s = store_with(&[(vec![1.0, 2.0], 5.0)]);
        let rb = generate_rules(&s, &RuleConfig::default(), 1).unwrap();
        assert!(infer(&rb, &[1.0]).is_err());
        assert!(infer_block(&rb, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn duplicate_is_pruned_and_empty_store_keeps_all() {
        let s = store_with(&[(vec![0.0, 0.0], 50.0), (vec![1.0, 1.0], 100.0)]);
        let kept = prune_rows(&[vec![0.0, 0.0], vec![5.0, 5.0]], &[50.0, 200.0], &s, 0.3).unwrap();
        assert_eq!(kept, vec![1]);

        let empty = TrainingStore::new(s.input_names.clone(), s.normalizer.clone()).unwrap();
        let all = prune_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[1.0, 1.0], &empty, 0.3).unwrap();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn store_round_trip() {
        let s = store_with(&[(vec![0.25, -1e-7], 50.0), (vec![1.0, 3.0], 99.5)]);
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        assert_eq!(TrainingStore::load(dir.path()).unwrap(), s);
    }
}
