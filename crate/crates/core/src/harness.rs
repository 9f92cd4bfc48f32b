//! Experiment harness: repeated noise-injection / train / evaluate cycles.
//!
//! Each repetition draws its own split and noise from seeds derived off the
//! master seed, trains every configured method on the noisy training side,
//! and evaluates on the noisy test side, with a clean-attribute diagnostic
//! alongside. Aggregation reports the mean and standard error over
//! repetitions plus the raw per-repetition rows, serialized as canonical
//! (sorted-key) JSON so identical configs produce identical report bytes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{randomized_labeling, train_naive_fair, train_unconstrained};
use crate::constraints::ConstraintConfig;
use crate::data::{load_csv, split, DatasetSchema, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, empirical_rates, group_rates, omega, MetricKind};
use crate::noise::{inject_noise, NoiseMatrix};
use crate::seed::mix_seed;
use crate::solver::{SolveStatus, SolverConfig};
use crate::synth::{make_synthetic, SyntheticSpec};
use crate::train::{train_denoised, Surrogate};

/// Seed index reserved for drawing a synthetic base dataset; repetition
/// seeds use the repetition number, so the data draw sits far away from
/// them.
const DATA_SEED_INDEX: u64 = u64::MAX;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        schema: DatasetSchema,
    },
    Synthetic(SyntheticSpec),
}

/// True or assumed flipping channel, as binary flip probabilities or as
/// explicit rows. Exactly one of the two forms must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

impl NoiseSpec {
    pub fn etas(eta0: f64, eta1: f64) -> Self {
        Self {
            etas: Some((eta0, eta1)),
            rows: None,
        }
    }

    pub fn symmetric(eta: f64) -> Self {
        Self::etas(eta, eta)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self {
            etas: None,
            rows: Some(rows),
        }
    }

    pub fn build(&self) -> Result<NoiseMatrix> {
        match (self.etas, &self.rows) {
            (Some((eta0, eta1)), None) => NoiseMatrix::binary_from_etas(eta0, eta1),
            (None, Some(rows)) => NoiseMatrix::from_rows(rows),
            _ => Err(Error::Config(
                "noise needs exactly one of `etas` or `rows`".to_owned(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unconstrained,
    Naive,
    Denoised,
    Randomized,
}

/// One metric to constrain and report, with the tau grid to train at.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricPlan {
    pub metric: MetricKind,
    #[serde(default)]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Which protected attribute carries the noise and the constraints.
    pub attribute: usize,
    /// The channel that corrupts the data.
    pub noise: NoiseSpec,
    /// The channel the denoised method assumes; defaults to the true one.
    pub assumed_noise: Option<NoiseSpec>,
    pub methods: Vec<Method>,
    pub metrics: Vec<MetricPlan>,
    pub delta: f64,
    pub lambda: f64,
    pub ridge: f64,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Negative-prediction probability of the randomized baseline.
    pub alpha: f64,
    /// Solver settings; its seed field is overridden per repetition.
    pub solver: SolverConfig,
    pub surrogate: Surrogate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            attribute: 0,
            noise: NoiseSpec::etas(0.3, 0.1),
            assumed_noise: None,
            methods: vec![
                Method::Unconstrained,
                Method::Naive,
                Method::Denoised,
                Method::Randomized,
            ],
            metrics: vec![MetricPlan {
                metric: MetricKind::StatisticalRate,
                taus: vec![0.8],
            }],
            delta: 0.05,
            lambda: 0.1,
            ridge: 0.01,
            repetitions: 50,
            train_fraction: 0.7,
            seed: 0,
            alpha: 0.5,
            solver: SolverConfig::default(),
            surrogate: Surrogate::default(),
        }
    }
}

impl ExperimentConfig {
    /// The calibrated synthetic benchmark: the default generator (4000
    /// samples, two equal groups, unequal base rates and a shifted signal),
    /// flipping noise (0.3, 0.1) assumed exactly, 25 repetitions at a fixed
    /// seed. Thresholds quoted in the acceptance tests were frozen from a
    /// calibration run of this exact configuration (see calibration/).
    pub fn benchmark(metric: MetricKind, taus: Vec<f64>) -> Self {
        Self {
            metrics: vec![MetricPlan { metric, taus }],
            lambda: 0.05,
            repetitions: 25,
            seed: 17,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions", "need at least one"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(
                "train_fraction",
                format!("{} outside (0,1)", self.train_fraction),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("{} outside [0,1]", self.alpha),
            ));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::invalid("ridge", "must be nonnegative"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "need at least one"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("metrics", "need at least one"));
        }
        let constrained = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::Naive | Method::Denoised));
        for plan in &self.metrics {
            if constrained && plan.taus.is_empty() {
                return Err(Error::invalid(
                    "taus",
                    "constrained methods need at least one tau per metric",
                ));
            }
            for &tau in &plan.taus {
                // dry-run the parameter ranges both programs will use
                ConstraintConfig::new(plan.metric, self.attribute, tau, self.delta, self.lambda)?;
                if self.methods.contains(&Method::Naive) {
                    ConstraintConfig::new(plan.metric, self.attribute, tau, 0.0, 0.0)?;
                }
            }
        }
        self.noise.build()?;
        if let Some(assumed) = &self.assumed_noise {
            assumed.build()?;
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    fn solver_for(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            seed,
            ..self.solver.clone()
        }
    }
}

/// Loads the configured base dataset; synthetic data is drawn once from a
/// seed derived off the master seed, not per repetition.
pub fn load_dataset(source: &DatasetSource, master_seed: u64) -> Result<LabeledDataset> {
    match source {
        DatasetSource::Csv { path, schema } => load_csv(path, schema),
        DatasetSource::Synthetic(spec) => {
            make_synthetic(spec, mix_seed(master_seed, DATA_SEED_INDEX))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error (sample standard deviation over sqrt(k)); a
/// single value has standard error 0 by convention.
pub fn aggregate(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (variance / k).sqrt()
    };
    Some(Stat { mean, stderr })
}

/// One method evaluated in one repetition against one metric. Option fields
/// are None when the quantity was undefined (no conditioning mass anywhere)
/// or when the training run failed outright; `solver_status` records which.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRow {
    pub repetition: usize,
    pub method: Method,
    pub metric: MetricKind,
    pub tau: Option<f64>,
    pub accuracy: Option<f64>,
    pub omega_noisy: Option<f64>,
    pub omega_true: Option<f64>,
    pub group_rates_noisy: Vec<Option<f64>>,
    pub group_rates_true: Vec<Option<f64>>,
    pub feasible: Option<bool>,
    pub solver_status: Option<String>,
}

/// Aggregated summary for one (method, metric, tau) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: Method,
    pub metric: MetricKind,
    pub tau: Option<f64>,
    pub accuracy: Option<Stat>,
    pub omega_noisy: Option<Stat>,
    pub omega_true: Option<Stat>,
    /// Repetitions where the trained run left the ratio undefined.
    pub omega_noisy_undefined: usize,
    pub omega_true_undefined: usize,
    /// Mean per-group rate divided by the largest mean, so the best group
    /// reads 1.
    pub relative_rates_noisy: Vec<Option<f64>>,
    pub relative_rates_true: Vec<Option<f64>>,
    /// Repetitions whose program was flagged infeasible.
    pub infeasible: usize,
    /// Repetitions whose training errored.
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<ReportCell>,
    pub rows: Vec<RepRow>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let base = load_dataset(&config.dataset, config.seed)?;
    let true_noise = config.noise.build()?;
    let assumed_noise = match &config.assumed_noise {
        Some(spec) => spec.build()?,
        None => true_noise.clone(),
    };
    let groups = base.group_count(config.attribute)?;
    for noise in [&true_noise, &assumed_noise] {
        if noise.p() != groups {
            return Err(Error::DimensionMismatch {
                expected: groups,
                got: noise.p(),
            });
        }
    }

    let nested: Result<Vec<Vec<RepRow>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, &base, &true_noise, &assumed_noise, r))
        .collect();
    let rows: Vec<RepRow> = nested?.into_iter().flatten().collect();
    let cells = build_cells(config, &rows, groups);
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
        rows,
    })
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration_limit",
        SolveStatus::Infeasible => "infeasible",
    }
}

struct Evaluated {
    accuracy: f64,
    omega_noisy: Option<f64>,
    omega_true: Option<f64>,
    rates_noisy: Vec<Option<f64>>,
    rates_true: Vec<Option<f64>>,
}

fn ratio_or_none(rates: &[Option<f64>]) -> Result<Option<f64>> {
    match omega(rates) {
        Ok(v) => Ok(Some(v)),
        Err(Error::AllUndefined) => Ok(None),
        Err(e) => Err(e),
    }
}

fn evaluate(
    predictions: &[bool],
    noisy_test: &LabeledDataset,
    clean_test: &LabeledDataset,
    attribute: usize,
    metric: MetricKind,
) -> Result<Evaluated> {
    let accuracy = accuracy(predictions, clean_test.labels())?;
    let rates_noisy = group_rates(&empirical_rates(
        predictions,
        noisy_test,
        attribute,
        metric,
    )?);
    let rates_true = group_rates(&empirical_rates(
        predictions,
        clean_test,
        attribute,
        metric,
    )?);
    Ok(Evaluated {
        accuracy,
        omega_noisy: ratio_or_none(&rates_noisy)?,
        omega_true: ratio_or_none(&rates_true)?,
        rates_noisy,
        rates_true,
    })
}

impl RepRow {
    fn from_evaluated(
        repetition: usize,
        method: Method,
        metric: MetricKind,
        tau: Option<f64>,
        evaluated: Evaluated,
        feasible: Option<bool>,
        solver_status: Option<String>,
    ) -> Self {
        Self {
            repetition,
            method,
            metric,
            tau,
            accuracy: Some(evaluated.accuracy),
            omega_noisy: evaluated.omega_noisy,
            omega_true: evaluated.omega_true,
            group_rates_noisy: evaluated.rates_noisy,
            group_rates_true: evaluated.rates_true,
            feasible,
            solver_status,
        }
    }

    fn failed(
        repetition: usize,
        method: Method,
        metric: MetricKind,
        tau: Option<f64>,
        groups: usize,
        error: &Error,
    ) -> Self {
        Self {
            repetition,
            method,
            metric,
            tau,
            accuracy: None,
            omega_noisy: None,
            omega_true: None,
            group_rates_noisy: vec![None; groups],
            group_rates_true: vec![None; groups],
            feasible: None,
            solver_status: Some(format!("error: {error}")),
        }
    }
}

fn run_repetition(
    config: &ExperimentConfig,
    base: &LabeledDataset,
    true_noise: &NoiseMatrix,
    assumed_noise: &NoiseMatrix,
    repetition: usize,
) -> Result<Vec<RepRow>> {
    let groups = base.group_count(config.attribute)?;
    let seed_r = mix_seed(config.seed, repetition as u64);
    let (train_clean, test_clean) = split(base, config.train_fraction, mix_seed(seed_r, 1))?;
    let train_noisy = inject_noise(
        &train_clean,
        config.attribute,
        true_noise,
        mix_seed(seed_r, 2),
    )?;
    let test_noisy = inject_noise(
        &test_clean,
        config.attribute,
        true_noise,
        mix_seed(seed_r, 3),
    )?;

    let mut variant = 4u64;
    let mut next_seed = || {
        let seed = mix_seed(seed_r, variant);
        variant += 1;
        seed
    };
    let mut rows = Vec::new();

    if config.methods.contains(&Method::Unconstrained) {
        let solver = config.solver_for(next_seed());
        match train_unconstrained(&train_noisy, &solver, config.ridge) {
            Ok(model) => {
                let predictions = model.predict(test_noisy.features())?;
                for plan in &config.metrics {
                    let evaluated = evaluate(
                        &predictions,
                        &test_noisy,
                        &test_clean,
                        config.attribute,
                        plan.metric,
                    )?;
                    rows.push(RepRow::from_evaluated(
                        repetition,
                        Method::Unconstrained,
                        plan.metric,
                        None,
                        evaluated,
                        None,
                        None,
                    ));
                }
            }
            Err(e) => {
                for plan in &config.metrics {
                    rows.push(RepRow::failed(
                        repetition,
                        Method::Unconstrained,
                        plan.metric,
                        None,
                        groups,
                        &e,
                    ));
                }
            }
        }
    }

    if config.methods.contains(&Method::Randomized) {
        let predictions = randomized_labeling(&test_noisy, config.alpha, next_seed())?;
        for plan in &config.metrics {
            let evaluated = evaluate(
                &predictions,
                &test_noisy,
                &test_clean,
                config.attribute,
                plan.metric,
            )?;
            rows.push(RepRow::from_evaluated(
                repetition,
                Method::Randomized,
                plan.metric,
                None,
                evaluated,
                None,
                None,
            ));
        }
    }

    for plan in &config.metrics {
        for &tau in &plan.taus {
            if config.methods.contains(&Method::Naive) {
                let solver = config.solver_for(next_seed());
                let outcome = train_naive_fair(
                    &train_noisy,
                    plan.metric,
                    config.attribute,
                    tau,
                    &solver,
                    config.ridge,
                    config.surrogate,
                );
                rows.push(constrained_row(
                    repetition,
                    Method::Naive,
                    plan.metric,
                    tau,
                    outcome,
                    &test_noisy,
                    &test_clean,
                    config.attribute,
                    groups,
                )?);
            }
            if config.methods.contains(&Method::Denoised) {
                let solver = config.solver_for(next_seed());
                let outcome = ConstraintConfig::new(
                    plan.metric,
                    config.attribute,
                    tau,
                    config.delta,
                    config.lambda,
                )
                .and_then(|constraint| {
                    train_denoised(
                        &train_noisy,
                        &[(constraint, assumed_noise.clone())],
                        &solver,
                        config.ridge,
                        config.surrogate,
                    )
                });
                rows.push(constrained_row(
                    repetition,
                    Method::Denoised,
                    plan.metric,
                    tau,
                    outcome,
                    &test_noisy,
                    &test_clean,
                    config.attribute,
                    groups,
                )?);
            }
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn constrained_row(
    repetition: usize,
    method: Method,
    metric: MetricKind,
    tau: f64,
    outcome: Result<(crate::model::LinearClassifier, crate::solver::SolveResult)>,
    test_noisy: &LabeledDataset,
    test_clean: &LabeledDataset,
    attribute: usize,
    groups: usize,
) -> Result<RepRow> {
    match outcome {
        Ok((model, result)) => {
            let predictions = model.predict(test_noisy.features())?;
            let evaluated = evaluate(&predictions, test_noisy, test_clean, attribute, metric)?;
            Ok(RepRow::from_evaluated(
                repetition,
                method,
                metric,
                Some(tau),
                evaluated,
                Some(result.status != SolveStatus::Infeasible),
                Some(status_name(result.status).to_owned()),
            ))
        }
        Err(e) => Ok(RepRow::failed(
            repetition,
            method,
            metric,
            Some(tau),
            groups,
            &e,
        )),
    }
}

fn same_tau(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        _ => false,
    }
}

fn cell_keys(config: &ExperimentConfig) -> Vec<(Method, MetricKind, Option<f64>)> {
    let mut keys = Vec::new();
    for method in [Method::Unconstrained, Method::Randomized] {
        if config.methods.contains(&method) {
            for plan in &config.metrics {
                keys.push((method, plan.metric, None));
            }
        }
    }
    for plan in &config.metrics {
        for &tau in &plan.taus {
            for method in [Method::Naive, Method::Denoised] {
                if config.methods.contains(&method) {
                    keys.push((method, plan.metric, Some(tau)));
                }
            }
        }
    }
    keys
}

/// Mean per-group rates over the rows where the group was defined, scaled so
/// the best group reads 1 (left unscaled when every mean is zero).
fn relative_rates(rows: &[&RepRow], groups: usize, noisy: bool) -> Vec<Option<f64>> {
    let mut means = Vec::with_capacity(groups);
    for g in 0..groups {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|row| {
                let rates = if noisy {
                    &row.group_rates_noisy
                } else {
                    &row.group_rates_true
                };
                rates.get(g).copied().flatten()
            })
            .collect();
        means.push(aggregate(&values).map(|s| s.mean));
    }
    let max = means.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    if max > 0.0 {
        means.into_iter().map(|m| m.map(|v| v / max)).collect()
    } else {
        means
    }
}

fn build_cells(config: &ExperimentConfig, rows: &[RepRow], groups: usize) -> Vec<ReportCell> {
    cell_keys(config)
        .into_iter()
        .map(|(method, metric, tau)| {
            let matching: Vec<&RepRow> = rows
                .iter()
                .filter(|row| {
                    row.method == method && row.metric == metric && same_tau(row.tau, tau)
                })
                .collect();
            let collect = |f: fn(&RepRow) -> Option<f64>| -> Vec<f64> {
                matching.iter().filter_map(|row| f(row)).collect()
            };
            let ran = |row: &&RepRow| row.accuracy.is_some();
            ReportCell {
                method,
                metric,
                tau,
                accuracy: aggregate(&collect(|r| r.accuracy)),
                omega_noisy: aggregate(&collect(|r| r.omega_noisy)),
                omega_true: aggregate(&collect(|r| r.omega_true)),
                omega_noisy_undefined: matching
                    .iter()
                    .filter(|r| ran(r) && r.omega_noisy.is_none())
                    .count(),
                omega_true_undefined: matching
                    .iter()
                    .filter(|r| ran(r) && r.omega_true.is_none())
                    .count(),
                relative_rates_noisy: relative_rates(&matching, groups, true),
                relative_rates_true: relative_rates(&matching, groups, false),
                infeasible: matching
                    .iter()
                    .filter(|r| r.feasible == Some(false))
                    .count(),
                failed: matching.iter().filter(|r| !ran(r)).count(),
            }
        })
        .collect()
}

/// Canonical JSON: serde_json's default map is ordered by key, so
/// serializing through `Value` sorts every object and identical reports
/// produce identical bytes.
pub fn report_to_json(report: &ExperimentReport) -> Result<String> {
    let value = serde_json::to_value(report)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_to_json(report)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Tau,
    Eta,
    AssumedEta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Eta => "eta",
            SweepAxis::AssumedEta => "assumed_eta",
        }
    }
}

/// Runs the experiment once per axis value and merges the aggregated cells
/// into one plot-ready CSV (one line per cell per axis value).
pub fn sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<(Vec<ExperimentReport>, String)> {
    if values.is_empty() {
        return Err(Error::invalid("values", "sweep needs at least one value"));
    }
    let mut reports = Vec::with_capacity(values.len());
    for &value in values {
        let mut point = config.clone();
        match axis {
            SweepAxis::Tau => {
                for plan in &mut point.metrics {
                    plan.taus = vec![value];
                }
            }
            SweepAxis::Eta => point.noise = NoiseSpec::symmetric(value),
            SweepAxis::AssumedEta => point.assumed_noise = Some(NoiseSpec::symmetric(value)),
        }
        reports.push(run_experiment(&point)?);
    }
    let series = sweep_series(axis, values, &reports)?;
    Ok((reports, series))
}

fn sweep_series(axis: SweepAxis, values: &[f64], reports: &[ExperimentReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "axis",
        "value",
        "method",
        "metric",
        "tau",
        "accuracy_mean",
        "accuracy_stderr",
        "omega_noisy_mean",
        "omega_noisy_stderr",
        "omega_true_mean",
        "omega_true_stderr",
        "infeasible",
        "failed",
    ])?;
    let float = |v: f64| v.to_string();
    let stat_pair = |s: &Option<Stat>| match s {
        Some(stat) => (float(stat.mean), float(stat.stderr)),
        None => (String::new(), String::new()),
    };
    for (&value, report) in values.iter().zip(reports) {
        for cell in &report.cells {
            let method = serde_plain_name(&cell.method)?;
            let metric = cell.metric.name().to_owned();
            let (acc_mean, acc_err) = stat_pair(&cell.accuracy);
            let (noisy_mean, noisy_err) = stat_pair(&cell.omega_noisy);
            let (true_mean, true_err) = stat_pair(&cell.omega_true);
            writer.write_record([
                axis.name().to_owned(),
                float(value),
                method,
                metric,
                cell.tau.map(float).unwrap_or_default(),
                acc_mean,
                acc_err,
                noisy_mean,
                noisy_err,
                true_mean,
                true_err,
                cell.infeasible.to_string(),
                cell.failed.to_string(),
            ])?;
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// The snake_case name a field-less enum value serializes to.
fn serde_plain_name<T: Serialize>(value: &T) -> Result<String> {
    match serde_json::to_value(value)? {
        serde_json::Value::String(s) => Ok(s),
        other => Err(Error::Config(format!("expected string tag, got {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_solver() -> SolverConfig {
        SolverConfig {
            max_iterations: 120,
            restarts: 2,
            ..SolverConfig::default()
        }
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n: 400,
                ..SyntheticSpec::default()
            }),
            repetitions: 3,
            solver: fast_solver(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut config = tiny_config();
        config.repetitions = 0;
        assert!(config.validate().is_err());

        config = tiny_config();
        config.train_fraction = 1.0;
        assert!(config.validate().is_err());

        config = tiny_config();
        config.metrics[0].taus = vec![1.5];
        assert!(config.validate().is_err());

        config = tiny_config();
        config.metrics[0].taus.clear();
        assert!(config.validate().is_err());

        config = tiny_config();
        config.noise = NoiseSpec {
            etas: Some((0.3, 0.1)),
            rows: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_unknown_fields() {
        let text = r#"
            repetitions = 2
            seed = 7

            [dataset.synthetic]
            n = 300

            [noise]
            etas = [0.2, 0.1]

            [[metrics]]
            metric = "statistical_rate"
            taus = [0.8]
        "#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.repetitions, 2);
        assert_eq!(config.noise, NoiseSpec::etas(0.2, 0.1));
        match &config.dataset {
            DatasetSource::Synthetic(spec) => assert_eq!(spec.n, 300),
            other => panic!("unexpected source {other:?}"),
        }

        let bad = "repetitions = 2\nunknown_knob = 1\n";
        assert!(matches!(
            ExperimentConfig::from_toml_str(bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn separable_identity_run_is_near_perfect() {
        let config = ExperimentConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n: 400,
                separation: 6.0,
                positive_rates: vec![0.5, 0.5],
                group_shifts: vec![0.0, 0.0],
                ..SyntheticSpec::default()
            }),
            noise: NoiseSpec::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            methods: vec![Method::Unconstrained],
            repetitions: 1,
            solver: fast_solver(),
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        let accuracy = cell.accuracy.unwrap();
        assert!(accuracy.mean > 0.97, "{}", accuracy.mean);
        assert_eq!(accuracy.stderr, 0.0, "single repetition");
        assert_eq!(cell.failed, 0);
    }

    #[test]
    fn identity_noise_makes_noisy_and_true_views_agree() {
        let config = ExperimentConfig {
            noise: NoiseSpec::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            methods: vec![Method::Unconstrained, Method::Denoised],
            repetitions: 2,
            ..tiny_config()
        };
        let report = run_experiment(&config).unwrap();
        for row in &report.rows {
            assert_eq!(row.omega_noisy, row.omega_true);
            assert_eq!(row.group_rates_noisy, row.group_rates_true);
        }
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let config = tiny_config();
        let a = report_to_json(&run_experiment(&config).unwrap()).unwrap();
        let b = report_to_json(&run_experiment(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stderr_matches_recomputation_from_rows() {
        let mut config = tiny_config();
        config.repetitions = 4;
        config.methods = vec![Method::Denoised];
        let report = run_experiment(&config).unwrap();
        let cell = &report.cells[0];
        let values: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.method == Method::Denoised && same_tau(r.tau, cell.tau))
            .filter_map(|r| r.omega_true)
            .collect();
        let recomputed = aggregate(&values).unwrap();
        let reported = cell.omega_true.unwrap();
        assert!((recomputed.mean - reported.mean).abs() < 1e-12);
        assert!((recomputed.stderr - reported.stderr).abs() < 1e-12);
    }

    #[test]
    fn relative_rates_peak_at_one() {
        let report = run_experiment(&tiny_config()).unwrap();
        for cell in &report.cells {
            for rates in [&cell.relative_rates_noisy, &cell.relative_rates_true] {
                let defined: Vec<f64> = rates.iter().flatten().copied().collect();
                if defined.is_empty() || defined.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let max = defined.iter().fold(0.0f64, |a, &b| a.max(b));
                assert!((max - 1.0).abs() < 1e-12, "{rates:?}");
                assert!(defined.iter().all(|&v| v <= 1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn impossible_floor_is_counted_infeasible() {
        let config = ExperimentConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n: 300,
                proportions: vec![0.3, 0.7],
                group_shifts: vec![0.0, 0.0],
                ..SyntheticSpec::default()
            }),
            noise: NoiseSpec::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            methods: vec![Method::Denoised],
            delta: 0.0,
            lambda: 0.49,
            repetitions: 2,
            solver: SolverConfig {
                max_iterations: 80,
                restarts: 1,
                ..SolverConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.cells[0].infeasible, 2);
    }

    #[test]
    fn single_point_tau_sweep_matches_plain_run() {
        let mut config = tiny_config();
        config.repetitions = 2;
        config.methods = vec![Method::Unconstrained, Method::Denoised];
        let plain = report_to_json(&run_experiment(&config).unwrap()).unwrap();
        let (reports, series) = sweep(&config, SweepAxis::Tau, &[0.8]).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(report_to_json(&reports[0]).unwrap(), plain);
        let lines: Vec<&str> = series.lines().collect();
        assert_eq!(lines.len(), 1 + reports[0].cells.len());
        assert!(lines[0].starts_with("axis,value,method"));
        assert!(lines[1].contains("tau,0.8"));
    }
}
