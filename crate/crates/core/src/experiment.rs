//! Synthetic experiment driver.
//!
//! A training sample is drawn from the source population and a test sample
//! from the target. For every k, the training quasi-identifiers are
//! anonymized with each method; importance weights are estimated between
//! the released training sample and the test sample; a weighted regression
//! is fitted under each coding and scored on the test sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_empirical_joint, DataTable};
use crate::dither::DEFAULT_ALPHA;
use crate::error::{Error, Result};
use crate::pipeline::{Anonymizer, Method};
use crate::reid::reid_trials;
use crate::shiftlearn::{
    fit_regression, histogram_intersection, logistic_weights, nonparametric_weights, r_squared, relative_bias,
    tuple_pmf, Coding, Estimator, LogisticOptions, ShiftWeights, DEFAULT_RIDGE,
};
use crate::synth::{Population, SynthConfig};

/// Version of the metrics JSON layout.
pub const SPEC_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub synth: SynthConfig,
    pub k_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub estimators: Vec<Estimator>,
    pub codings: Vec<Coding>,
    pub alpha: f64,
    pub w: f64,
    pub ridge: f64,
    /// Reidentification trials per (k, method); zero skips the attack.
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 2000,
            synth: SynthConfig::default(),
            k_grid: vec![2, 10, 50, 200],
            methods: Method::ALL.to_vec(),
            estimators: vec![Estimator::None, Estimator::Nonparametric],
            codings: vec![Coding::Dummy, Coding::Numeric],
            alpha: DEFAULT_ALPHA,
            w: 1.0,
            ridge: DEFAULT_RIDGE,
            trials: 10,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::Usage("the k grid is empty".into()));
        }
        if self.methods.is_empty() || self.estimators.is_empty() || self.codings.is_empty() {
            return Err(Error::Usage("at least one method, estimator and coding is required".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k < 2) {
            return Err(Error::Usage(format!("k must be at least 2, got {k}")));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Usage(format!("alpha must be positive, got {}", self.alpha)));
        }
        self.synth.validate()
    }
}

/// Scores of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitScore {
    pub estimator: Estimator,
    pub coding: Coding,
    pub relative_bias: Option<f64>,
    pub r_squared: Option<f64>,
    /// Histogram intersection of the weighted released training PMF and the
    /// test PMF.
    pub similarity: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub k: usize,
    pub method: Method,
    pub reid_average: Option<f64>,
    pub reid_band: Option<f64>,
    pub scores: Vec<FitScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec_version: String,
    pub config: ExperimentConfig,
    /// Scores without anonymization.
    pub baseline: Vec<FitScore>,
    pub results: Vec<MethodResult>,
}

impl ExperimentReport {
    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// Flat table with one row per (k, method, estimator, coding); the
    /// baseline appears with k = 1 and method `none`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "k",
            "method",
            "estimator",
            "coding",
            "relative_bias",
            "r_squared",
            "similarity",
            "reid_average",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.baseline {
            wtr.write_record([
                "1".to_string(),
                "none".to_string(),
                s.estimator.to_string(),
                s.coding.to_string(),
                opt(s.relative_bias),
                opt(s.r_squared),
                opt(s.similarity),
                String::new(),
            ])?;
        }
        for r in &self.results {
            for s in &r.scores {
                wtr.write_record([
                    r.k.to_string(),
                    r.method.to_string(),
                    s.estimator.to_string(),
                    s.coding.to_string(),
                    opt(s.relative_bias),
                    opt(s.r_squared),
                    opt(s.similarity),
                    opt(r.reid_average),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Replaces every value by the nearest level observed in `reference`
/// (per dimension, ties to the lower level).
pub fn snap_to_levels(table: &DataTable, reference: &DataTable) -> Result<DataTable> {
    let levels: Vec<Vec<f64>> = (0..reference.d())
        .map(|j| {
            let mut v = reference.column(j);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let qi = table
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(&levels)
                .map(|(&x, lv)| {
                    let p = lv.partition_point(|&l| l < x);
                    match (p.checked_sub(1).map(|i| lv[i]), lv.get(p)) {
                        (Some(lo), Some(&hi)) => {
                            if hi - x < x - lo {
                                hi
                            } else {
                                lo
                            }
                        }
                        (Some(lo), None) => lo,
                        (None, Some(&hi)) => hi,
                        (None, None) => x,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    table.with_qi(qi)
}

fn estimate_weights(estimator: Estimator, train: &DataTable, test: &DataTable) -> Result<ShiftWeights> {
    match estimator {
        Estimator::None => Ok(ShiftWeights::uniform(train.n())),
        Estimator::Nonparametric => {
            nonparametric_weights(&build_empirical_joint(train), &build_empirical_joint(test))?.per_record(train, true)
        }
        Estimator::Logistic => {
            let mut features: Vec<Vec<f64>> = train.rows().map(<[f64]>::to_vec).collect();
            features.extend(test.rows().map(<[f64]>::to_vec));
            let labels: Vec<bool> = (0..train.n() + test.n()).map(|i| i >= train.n()).collect();
            Ok(logistic_weights(&features, &labels, LogisticOptions::default())?.weights)
        }
    }
}

/// Scores every (estimator, coding) pair for one released training table.
///
/// `discrete` is the release snapped to observed levels; it is used for
/// weights, similarity and dummy coding. `numeric` enters numeric coding.
fn score_release(
    config: &ExperimentConfig,
    discrete: &DataTable,
    numeric: &DataTable,
    test: &DataTable,
) -> Vec<FitScore> {
    let test_pmf = tuple_pmf(test.rows(), None);
    let mut out = Vec::new();
    for &estimator in &config.estimators {
        let weights = estimate_weights(estimator, discrete, test);
        for &coding in &config.codings {
            let mut score = FitScore {
                estimator,
                coding,
                relative_bias: None,
                r_squared: None,
                similarity: None,
                warnings: Vec::new(),
                error: None,
            };
            let result = (|| -> Result<()> {
                let weights = weights.as_ref().map_err(|e| Error::Convergence(e.to_string()))?;
                score.warnings.extend(weights.warnings.iter().cloned());
                let train_pmf = tuple_pmf(discrete.rows(), Some(&weights.weights))?;
                let test_pmf = test_pmf.as_ref().map_err(|e| Error::Internal(e.to_string()))?;
                score.similarity = Some(histogram_intersection(&train_pmf, test_pmf));
                let train = match coding {
                    Coding::Dummy => discrete,
                    Coding::Numeric => numeric,
                };
                let model = fit_regression(train, coding, &weights.weights, config.ridge)?;
                let (pred, warnings) = model.predict(test)?;
                score.warnings.extend(warnings);
                score.relative_bias = Some(relative_bias(&pred, test.response())?);
                score.r_squared = Some(r_squared(&pred, test.response())?);
                Ok(())
            })();
            if let Err(e) = result {
                score.error = Some(e.to_string());
            }
            out.push(score);
        }
    }
    out
}

/// Runs the full grid. Output depends only on the configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let population = if config.synth.shift == 0.0 {
        Population::Source
    } else {
        Population::Target
    };
    let train = config.synth.generate(config.n_train, Population::Source, config.seed, 0)?;
    let test = config.synth.generate(config.n_test, population, config.seed, 1)?;
    if let Some(&k) = config.k_grid.iter().find(|&&k| k > train.n()) {
        return Err(Error::Infeasible { k, n: train.n() });
    }

    let baseline = score_release(config, &train, &train, &test);
    let mut results = Vec::new();
    for &k in &config.k_grid {
        let anonymizer = Anonymizer::prepare(&train, k, config.w, config.seed)?;
        for &method in &config.methods {
            let released = anonymizer.release(method, config.alpha, config.seed)?.table;
            let discrete = if method == Method::Centroid {
                snap_to_levels(&released, &train)?
            } else {
                released.clone()
            };
            let scores = score_release(config, &discrete, &released, &test);
            let (reid_average, reid_band) = if config.trials > 0 {
                let report = reid_trials(&train, &anonymizer, method, config.alpha, config.trials, config.seed)?;
                (Some(report.average), Some(report.band))
            } else {
                (None, None)
            };
            results.push(MethodResult {
                k,
                method,
                reid_average,
                reid_band,
                scores,
            });
        }
    }
    Ok(ExperimentReport {
        spec_version: SPEC_VERSION.to_string(),
        config: config.clone(),
        baseline,
        results,
    })
}
