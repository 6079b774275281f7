use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{DataTable, EmpiricalJoint};
use crate::error::{Error, Result};

/// Importance-weight estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    None,
    Nonparametric,
    Logistic,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::None => "none",
            Estimator::Nonparametric => "nonparametric",
            Estimator::Logistic => "logistic",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Estimator::None),
            "nonparametric" => Ok(Estimator::Nonparametric),
            "logistic" => Ok(Estimator::Logistic),
            other => Err(Error::Usage(format!(
                "unknown shift estimator '{other}' (expected none, nonparametric or logistic)"
            ))),
        }
    }
}

/// Per-record importance weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftWeights {
    pub weights: Vec<f64>,
    pub estimator: Estimator,
    pub normalized: bool,
    pub warnings: Vec<String>,
}

impl ShiftWeights {
    /// Unit weights for `n` records.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            estimator: Estimator::None,
            normalized: true,
            warnings: Vec::new(),
        }
    }

    /// Rescales the weights to mean one.
    pub fn normalize(mut self) -> Result<Self> {
        let mean = self.weights.iter().sum::<f64>() / self.weights.len() as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::Degenerate("weights have no mass to normalize".into()));
        }
        self.weights.iter_mut().for_each(|w| *w /= mean);
        self.normalized = true;
        Ok(self)
    }
}

fn key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Density ratio `q̂(v)/p̂(v)` at every support point of a source joint.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportWeights {
    ratios: HashMap<Vec<u64>, f64>,
    /// Target support points absent from the source.
    pub unsupported_target: usize,
    pub warnings: Vec<String>,
}

impl SupportWeights {
    /// Ratio at value tuple `row`, zero outside the source support.
    pub fn ratio(&self, row: &[f64]) -> f64 {
        self.ratios.get(&key(row)).copied().unwrap_or(0.0)
    }

    /// Weights of the records of `source`, optionally rescaled to mean one.
    pub fn per_record(&self, source: &DataTable, normalize: bool) -> Result<ShiftWeights> {
        let w = ShiftWeights {
            weights: source.rows().map(|r| self.ratio(r)).collect(),
            estimator: Estimator::Nonparametric,
            normalized: false,
            warnings: self.warnings.clone(),
        };
        if normalize {
            w.normalize()
        } else {
            Ok(w)
        }
    }
}

/// Empirical density ratio between a target and a source joint. Points
/// matched by value; target mass outside the source support cannot be
/// reached by reweighting and is only reported.
pub fn nonparametric_weights(source: &EmpiricalJoint, target: &EmpiricalJoint) -> Result<SupportWeights> {
    if source.dims() != target.dims() {
        return Err(Error::Shape {
            expected: source.dims(),
            got: target.dims(),
        });
    }
    let mut target_pmf: HashMap<Vec<u64>, f64> = HashMap::new();
    for (tuple, p) in target.pmf() {
        target_pmf.insert(key(&target.value_of(tuple)), p);
    }
    let mut ratios = HashMap::new();
    for (tuple, p) in source.pmf() {
        let k = key(&source.value_of(tuple));
        let q = target_pmf.get(&k).copied().unwrap_or(0.0);
        ratios.insert(k, q / p);
    }
    let unsupported_target = target_pmf.keys().filter(|k| !ratios.contains_key(*k)).count();
    let mut warnings = Vec::new();
    if unsupported_target > 0 {
        warnings.push(format!(
            "{unsupported_target} target support points never occur in the source and cannot be reweighted"
        ));
    }
    Ok(SupportWeights {
        ratios,
        unsupported_target,
        warnings,
    })
}

/// IRLS settings for the logistic discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Stop when the log-likelihood changes by less than this.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8 }
    }
}

/// Fitted source-versus-target discriminator and the weights it implies
/// for the source records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Intercept first, then one slope per feature.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub weights: ShiftWeights,
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic-regression density ratio.
///
/// `features` holds the pooled records and `is_target` their population.
/// The log-odds are linear in the features; the weight of a source record
/// is `P(target|x)/P(source|x) · n_source/n_target`, then rescaled to mean
/// one over the source records.
pub fn logistic_weights(features: &[Vec<f64>], is_target: &[bool], options: LogisticOptions) -> Result<LogisticFit> {
    let n = features.len();
    if is_target.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: is_target.len(),
        });
    }
    let n_target = is_target.iter().filter(|&&t| t).count();
    let n_source = n - n_target;
    if n_target == 0 || n_source == 0 {
        return Err(Error::Domain("both populations must be present".into()));
    }
    let d = features[0].len();
    let p = d + 1;
    let mut x = DMatrix::<f64>::zeros(n, p);
    for (i, row) in features.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape { expected: d, got: row.len() });
        }
        x[(i, 0)] = 1.0;
        for (j, v) in row.iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    let y: Vec<f64> = is_target.iter().map(|&t| f64::from(u8::from(t))).collect();

    let log_lik = |beta: &DVector<f64>| -> (DVector<f64>, f64) {
        let eta = &x * beta;
        let ll = eta.iter().zip(&y).map(|(e, yi)| yi * e - log1p_exp(*e)).sum();
        (eta, ll)
    };
    let mut beta = DVector::<f64>::zeros(p);
    beta[0] = (n_target as f64 / n_source as f64).ln();
    let (mut eta, mut ll) = log_lik(&beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtr = DVector::<f64>::zeros(p);
        for i in 0..n {
            let w = probs[i] * (1.0 - probs[i]);
            let row = x.row(i);
            for a in 0..p {
                xtr[a] += row[a] * (y[i] - probs[i]);
                for b in a..p {
                    xtwx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let step = xtwx
            .clone()
            .cholesky()
            .map(|c| c.solve(&xtr))
            .or_else(|| xtwx.lu().solve(&xtr))
            .ok_or_else(|| {
                Error::Convergence(format!(
                    "information matrix became singular after {iterations} iterations; the populations may be perfectly separated"
                ))
            })?;
        // step halving keeps the log-likelihood from decreasing
        let mut scale = 1.0;
        let (next_beta, next_eta, next_ll) = loop {
            let cand = &beta + &step * scale;
            let (e, l) = log_lik(&cand);
            if l >= ll - 1e-12 || scale < 1e-10 {
                break (cand, e, l);
            }
            scale *= 0.5;
        };
        let change = (next_ll - ll).abs();
        beta = next_beta;
        eta = next_eta;
        ll = next_ll;
        if ll > -1e-6 * n as f64 || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Convergence(format!(
                "the populations are perfectly separated by the features (log-likelihood {ll:.3e} after {iterations} iterations)"
            )));
        }
        if change < options.tol {
            converged = true;
            break;
        }
    }
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "logistic fit did not converge in {} iterations; using the last iterate",
            options.max_iter
        ));
    }
    let prior = n_source as f64 / n_target as f64;
    let source_weights: Vec<f64> = eta
        .iter()
        .zip(is_target)
        .filter(|(_, &t)| !t)
        .map(|(&e, _)| e.exp() * prior)
        .collect();
    let weights = ShiftWeights {
        weights: source_weights,
        estimator: Estimator::Logistic,
        normalized: false,
        warnings,
    }
    .normalize()?;
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        iterations,
        converged,
        log_likelihood: ll,
        weights,
    })
}

/// Pooled multi-task training data with per-task target covariate laws.
#[derive(Debug, Clone)]
pub struct TransferSpec {
    /// Training records; the response is part of the joint `(x, y)`.
    pub train: DataTable,
    /// Task label of every training record.
    pub tasks: Vec<usize>,
    /// Target covariate law `q̂_{X|t}` per task.
    pub targets: BTreeMap<usize, EmpiricalJoint>,
}

impl TransferSpec {
    pub fn new(train: DataTable, tasks: Vec<usize>, targets: BTreeMap<usize, EmpiricalJoint>) -> Result<Self> {
        if tasks.len() != train.n() {
            return Err(Error::Shape {
                expected: train.n(),
                got: tasks.len(),
            });
        }
        Ok(Self { train, tasks, targets })
    }

    /// Task priors `p̂_t = n_t / n`; positive and summing to one.
    pub fn priors(&self) -> BTreeMap<usize, f64> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &t in &self.tasks {
            *counts.entry(t).or_insert(0) += 1;
        }
        let n = self.tasks.len() as f64;
        counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect()
    }
}

/// Transfer weight `w(x, y | t)` of every pooled training record.
///
/// The first factor `p̂_{X,Y|t} / Σ_{t'} p̂_{t'} p̂_{X,Y|t'}` moves the pooled
/// sample toward task `t`; the second `q̂_{X|t} / p̂_{X|t}` corrects its
/// covariate shift. Records whose `(x, y)` never occurs in task `t` get zero.
pub fn transfer_weights(spec: &TransferSpec, t: usize) -> Result<ShiftWeights> {
    let target = spec
        .targets
        .get(&t)
        .ok_or_else(|| Error::Domain(format!("no target distribution for task {t}")))?;
    let n_t = spec.tasks.iter().filter(|&&s| s == t).count();
    if n_t == 0 {
        return Err(Error::Domain(format!("task {t} has no training records")));
    }
    let n = spec.train.n();
    let xy_key = |i: usize| {
        let mut k = key(spec.train.row(i));
        k.push(spec.train.response()[i].to_bits());
        k
    };
    let mut pooled_xy: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut task_xy: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut task_x: HashMap<Vec<u64>, usize> = HashMap::new();
    for i in 0..n {
        let k = xy_key(i);
        *pooled_xy.entry(k.clone()).or_insert(0) += 1;
        if spec.tasks[i] == t {
            *task_xy.entry(k).or_insert(0) += 1;
            *task_x.entry(key(spec.train.row(i))).or_insert(0) += 1;
        }
    }
    let mut q: HashMap<Vec<u64>, f64> = HashMap::new();
    for (tuple, p) in target.pmf() {
        q.insert(key(&target.value_of(tuple)), p);
    }
    let weights = (0..n)
        .map(|i| {
            let k = xy_key(i);
            let own = task_xy.get(&k).copied().unwrap_or(0);
            if own == 0 {
                return 0.0;
            }
            let first = (own as f64 / n_t as f64) / (pooled_xy[&k] as f64 / n as f64);
            let xk = key(spec.train.row(i));
            let px = task_x[&xk] as f64 / n_t as f64;
            first * q.get(&xk).copied().unwrap_or(0.0) / px
        })
        .collect();
    Ok(ShiftWeights {
        weights,
        estimator: Estimator::Nonparametric,
        normalized: false,
        warnings: Vec::new(),
    })
}
