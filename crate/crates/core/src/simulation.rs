//! Monte Carlo harness: accuracy sweeps over synthetic populations and
//! case studies over loaded datasets.
//!
//! Randomness is counter based. Trial `t` under master seed `s` always gets
//! the same generator state, no matter which worker runs it or in what order,
//! so results are bit-identical for any thread count.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detconstsort::{check_feasibility, detconstsort_with, Options, SwapRule};
use crate::error::{Error, Result};
use crate::metrics::{AttentionModel, MetricsRecord};
use crate::model::{
    empirical_distribution, sort_by_score, Candidate, Distribution, LabelSource, Ranking,
    SubgroupLabel,
};
use crate::noise::{
    accuracy_matrix, compose_matrices, perturb_labels_with, AccuracyNoise, ConfusionMatrix,
};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "FAIRRANK_THREADS";

pub const DEFAULT_N_PER_GROUP: usize = 1000;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_K: usize = 300;
pub const DEFAULT_SEED: u64 = 42;

pub const PRESET_NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// Default accuracies `0.1, 0.2, ..., 1.0`.
pub fn default_accuracies() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// A synthetic population: `n_per_group` people in each group of `target`,
/// which is also the distribution the re-ranker aims for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    pub target: Distribution,
    pub n_per_group: usize,
}

impl PopulationSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let third = 1.0 / 3.0;
        let masses: &[(&str, f64)] = match name.to_ascii_uppercase().as_str() {
            "A" => &[("White", third), ("Black", third), ("Asian", third)],
            "B" => &[("White", 0.2), ("Black", 0.3), ("Asian", 0.5)],
            "C" => &[("White", 0.1), ("Black", 0.3), ("Asian", 0.6)],
            "D" => &[("White", 0.1), ("Black", 0.2), ("Asian", 0.7)],
            "E" => &[
                ("White", 0.25),
                ("Black", 0.25),
                ("Asian", 0.25),
                ("Hispanic", 0.25),
            ],
            "F" => &[
                ("White", 0.1),
                ("Black", 0.2),
                ("Asian", 0.6),
                ("Hispanic", 0.1),
            ],
            _ => {
                return Err(Error::Config(format!(
                    "unknown distribution preset `{name}`"
                )))
            }
        };
        let target = Distribution::new(
            masses
                .iter()
                .map(|(l, p)| SubgroupLabel::parse(l).map(|l| (l, *p)))
                .collect::<Result<Vec<_>>>()?,
        )?;
        Ok(PopulationSpec {
            name: name.to_ascii_uppercase(),
            target,
            n_per_group: DEFAULT_N_PER_GROUP,
        })
    }

    pub fn custom(
        name: impl Into<String>,
        target: Distribution,
        n_per_group: usize,
    ) -> Result<Self> {
        let spec = PopulationSpec {
            name: name.into(),
            target,
            n_per_group,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_n_per_group(mut self, n: usize) -> Self {
        self.n_per_group = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_group == 0 {
            return Err(Error::Config("n_per_group must be at least 1".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<SubgroupLabel> {
        self.target.labels().cloned().collect()
    }

    pub fn total(&self) -> usize {
        self.n_per_group * self.target.len()
    }

    /// Equal head counts per group.
    pub fn population_distribution(&self) -> Distribution {
        Distribution::uniform(self.labels()).expect("non-empty label set")
    }
}

/// Per-trial seed for `trial` under `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n_per_group` candidates per group with i.i.d. uniform scores, drawn
/// group by group in label order.
pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Vec<Candidate> {
    let mut rng = stream(seed, 0);
    let width = spec.n_per_group.to_string().len();
    let mut out = Vec::with_capacity(spec.total());
    for label in spec.target.labels() {
        for i in 0..spec.n_per_group {
            let score: f64 = rng.random();
            out.push(Candidate::new(
                format!("{label}-{i:0width$}"),
                score,
                label.clone(),
            ));
        }
    }
    out
}

/// What the re-ranker is told about each candidate's group.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelNoise {
    /// True labels.
    Oracle,
    Accuracy {
        accuracy: f64,
        model: AccuracyNoise,
    },
    Matrix(ConfusionMatrix),
}

impl LabelNoise {
    fn matrix(&self, labels: &[SubgroupLabel]) -> Result<Option<ConfusionMatrix>> {
        match self {
            LabelNoise::Oracle => Ok(None),
            LabelNoise::Accuracy { accuracy, model } => {
                accuracy_matrix(*accuracy, labels.to_vec(), *model).map(Some)
            }
            LabelNoise::Matrix(m) => Ok(Some(m.clone())),
        }
    }
}

/// Scalar metrics of one list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub ndkl: f64,
    pub abr: f64,
    pub dtbr: f64,
    pub dibr: f64,
    pub ndcg: f64,
    pub marc: f64,
}

impl From<&MetricsRecord> for MetricValues {
    fn from(r: &MetricsRecord) -> Self {
        MetricValues {
            ndkl: r.ndkl,
            abr: r.abr,
            dtbr: r.dtbr,
            dibr: r.dibr,
            ndcg: r.ndcg,
            marc: r.marc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndkl,
    Abr,
    Dtbr,
    Dibr,
    Ndcg,
    Marc,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Ndkl,
        Metric::Abr,
        Metric::Dtbr,
        Metric::Dibr,
        Metric::Ndcg,
        Metric::Marc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndkl => "NDKL",
            Metric::Abr => "ABR",
            Metric::Dtbr => "DTBR",
            Metric::Dibr => "DIBR",
            Metric::Ndcg => "NDCG",
            Metric::Marc => "MARC",
        }
    }

    pub fn of(self, v: &MetricValues) -> f64 {
        match self {
            Metric::Ndkl => v.ndkl,
            Metric::Abr => v.abr,
            Metric::Dtbr => v.dtbr,
            Metric::Dibr => v.dibr,
            Metric::Ndcg => v.ndcg,
            Metric::Marc => v.marc,
        }
    }
}

/// Knobs shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub k: usize,
    pub attention: AttentionModel,
    pub swap_rule: SwapRule,
}

impl Default for TrialSettings {
    fn default() -> Self {
        TrialSettings {
            k: DEFAULT_K,
            attention: AttentionModel::default(),
            swap_rule: SwapRule::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub baseline: MetricsRecord,
    pub fair: MetricsRecord,
    /// Whether the fair list meets every prefix floor on true labels.
    pub feasible: bool,
}

/// Scores `candidates` once as-is and once after noisy re-ranking.
pub fn run_trial(
    spec: &PopulationSpec,
    noise: &LabelNoise,
    settings: &TrialSettings,
    seed: u64,
) -> Result<TrialOutcome> {
    let population = generate_population(spec, seed);
    let original = sort_by_score(population)?;
    let ctx = TrialContext::new(spec, original, settings)?;
    let baseline = ctx.baseline()?.with_seed(seed);
    let matrix = noise.matrix(&spec.labels())?;
    let (fair, feasible) = ctx.fair(matrix.as_ref(), &mut stream(seed, 1))?;
    Ok(TrialOutcome {
        baseline,
        fair: fair.with_seed(seed),
        feasible,
    })
}

/// One population, re-ranked any number of times.
struct TrialContext<'a> {
    original: Ranking,
    target: &'a Distribution,
    population: Distribution,
    settings: &'a TrialSettings,
}

impl<'a> TrialContext<'a> {
    fn new(
        spec: &'a PopulationSpec,
        original: Ranking,
        settings: &'a TrialSettings,
    ) -> Result<Self> {
        if settings.k == 0 || settings.k > original.len() {
            return Err(Error::Config(format!(
                "k = {} must be between 1 and the population size {}",
                settings.k,
                original.len()
            )));
        }
        Ok(TrialContext {
            original,
            target: &spec.target,
            population: spec.population_distribution(),
            settings,
        })
    }

    fn baseline(&self) -> Result<MetricsRecord> {
        let top = self.original.top(self.settings.k);
        MetricsRecord::compute(
            &self.original,
            &top,
            self.target,
            &self.population,
            &self.settings.attention,
        )
    }

    fn fair(
        &self,
        matrix: Option<&ConfusionMatrix>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(MetricsRecord, bool)> {
        let (ranking, labels) = match matrix {
            Some(m) => {
                let mut items = self.original.items().to_vec();
                perturb_labels_with(&mut items, m, rng)?;
                (Ranking::original(items)?, LabelSource::Inferred)
            }
            None => (self.original.clone(), LabelSource::True),
        };
        let opts = Options {
            labels,
            swap_rule: self.settings.swap_rule,
            allow_shortfall: labels == LabelSource::Inferred,
        };
        let fair = detconstsort_with(&ranking, self.target, self.settings.k, opts)?;
        let feasible = check_feasibility(&fair, self.target, self.settings.k).feasible;
        let record = MetricsRecord::compute(
            &self.original,
            &fair,
            self.target,
            &self.population,
            &self.settings.attention,
        )?;
        Ok((record, feasible))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub spec: PopulationSpec,
    pub accuracies: Vec<f64>,
    pub trials: usize,
    pub settings: TrialSettings,
    pub noise: AccuracyNoise,
    pub seed: u64,
    /// Worker cap; falls back to `FAIRRANK_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(spec: PopulationSpec) -> Self {
        SweepConfig {
            spec,
            accuracies: default_accuracies(),
            trials: DEFAULT_TRIALS,
            settings: TrialSettings::default(),
            noise: AccuracyNoise::UniformOther,
            seed: DEFAULT_SEED,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.settings.attention.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.accuracies.is_empty() {
            return Err(Error::Config("no accuracies given".into()));
        }
        if let Some(a) = self.accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("accuracy {a} outside [0, 1]")));
        }
        if self.settings.k == 0 || self.settings.k > self.spec.total() {
            return Err(Error::Config(format!(
                "k = {} must be between 1 and the population size {}",
                self.settings.k,
                self.spec.total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub accuracy: f64,
    /// Fair-list values in trial order.
    pub trials: Vec<MetricValues>,
    pub feasible_trials: usize,
}

impl SweepCell {
    pub fn mean(&self) -> MetricValues {
        mean_values(&self.trials)
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.trials.iter().map(|v| metric.of(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: String,
    pub seed: u64,
    /// Unfair top-k values in trial order.
    pub baseline: Vec<MetricValues>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn baseline_mean(&self) -> MetricValues {
        mean_values(&self.baseline)
    }

    pub fn cell(&self, accuracy: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| (c.accuracy - accuracy).abs() < 1e-9)
    }
}

fn mean_values(values: &[MetricValues]) -> MetricValues {
    let n = values.len() as f64;
    let sum = |f: fn(&MetricValues) -> f64| values.iter().map(f).sum::<f64>() / n;
    MetricValues {
        ndkl: sum(|v| v.ndkl),
        abr: sum(|v| v.abr),
        dtbr: sum(|v| v.dtbr),
        dibr: sum(|v| v.dibr),
        ndcg: sum(|v| v.ndcg),
        marc: sum(|v| v.marc),
    }
}

/// Resolved worker count: explicit value, else `FAIRRANK_THREADS`.
pub fn worker_count(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return Ok(Some(n.max(1)));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim()
                .parse::<usize>()
                .map(|n| Some(n.max(1)))
                .map_err(|_| {
                    Error::Config(format!(
                        "{THREADS_ENV} must be a positive integer, got `{v}`"
                    ))
                })
        }
        _ => Ok(None),
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every trial once per accuracy. Each trial's population is shared
/// by all accuracies, and so is its perturbation stream.
/// Baseline values, then (fair values, feasible) per accuracy.
type TrialRow = (MetricValues, Vec<(MetricValues, bool)>);

pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let labels = config.spec.labels();
    let matrices = config
        .accuracies
        .iter()
        .map(|&a| accuracy_matrix(a, labels.clone(), config.noise))
        .collect::<Result<Vec<_>>>()?;

    let per_trial: Vec<Result<TrialRow>> = with_pool(config.threads, || {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(config.seed, t);
                let original = sort_by_score(generate_population(&config.spec, seed))?;
                let ctx = TrialContext::new(&config.spec, original, &config.settings)?;
                let baseline = MetricValues::from(&ctx.baseline()?);
                let cells = matrices
                    .iter()
                    .map(|m| {
                        let (rec, ok) = ctx.fair(Some(m), &mut stream(seed, 1))?;
                        Ok((MetricValues::from(&rec), ok))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((baseline, cells))
            })
            .collect()
    })?;

    let mut baseline = Vec::with_capacity(config.trials);
    let mut cells: Vec<SweepCell> = config
        .accuracies
        .iter()
        .map(|&accuracy| SweepCell {
            accuracy,
            trials: Vec::with_capacity(config.trials),
            feasible_trials: 0,
        })
        .collect();
    for trial in per_trial {
        let (b, fair) = trial?;
        baseline.push(b);
        for (cell, (v, ok)) in cells.iter_mut().zip(fair) {
            cell.trials.push(v);
            cell.feasible_trials += ok as usize;
        }
    }
    Ok(SweepResult {
        spec: config.spec.name.clone(),
        seed: config.seed,
        baseline,
        cells,
    })
}

/// Mean and percentile-bootstrap interval of the mean.
pub fn bootstrap_mean_ci(
    values: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || resamples == 0 {
        return (mean, mean, mean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (mean, at(tail), at(1.0 - tail))
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// A named race (or composite) confusion matrix for a case study.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub name: String,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyConfig {
    pub trials: usize,
    pub settings: TrialSettings,
    pub seed: u64,
    /// Re-ranking target; defaults to the dataset's own label shares.
    pub target: Option<Distribution>,
    pub matrices: Vec<NamedMatrix>,
    /// Gender errors, composed with each race matrix. Without it gender
    /// labels pass through unchanged.
    pub gender_matrix: Option<ConfusionMatrix>,
    pub threads: Option<usize>,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            trials: DEFAULT_TRIALS,
            settings: TrialSettings::default(),
            seed: DEFAULT_SEED,
            target: None,
            matrices: Vec::new(),
            gender_matrix: None,
            threads: None,
        }
    }
}

/// Per-group medians for one row of the case-study tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMedians {
    pub skew: f64,
    pub attention: f64,
    pub treatment: f64,
    pub impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub name: String,
    pub groups: BTreeMap<SubgroupLabel, GroupMedians>,
    pub metrics: MetricValues,
    /// Trials whose list met every prefix floor on true labels.
    pub feasible_trials: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyResult {
    pub labels: Vec<SubgroupLabel>,
    pub k: usize,
    pub rows: Vec<CaseStudyRow>,
}

/// Builds the matrix over the dataset's labels. Single-attribute matrices
/// are read as race and composed with gender (identity when absent); the
/// result is restricted to labels that occur in the dataset.
pub fn dataset_matrix(
    race: &ConfusionMatrix,
    gender: Option<&ConfusionMatrix>,
    labels: &[SubgroupLabel],
) -> Result<ConfusionMatrix> {
    let arity = labels
        .first()
        .map(|l| l.parts().len())
        .ok_or(Error::EmptyPopulation)?;
    if let Some(bad) = labels.iter().find(|l| l.parts().len() != arity) {
        return Err(Error::InvalidLabel(format!(
            "`{bad}` has {} attribute values, expected {arity}",
            bad.parts().len()
        )));
    }
    let race_arity = race.labels().first().map(|l| l.parts().len()).unwrap_or(0);
    if race_arity == arity {
        return race.restrict(labels);
    }
    if !(arity == 2 && race_arity == 1) {
        return Err(Error::InvalidMatrix(format!(
            "cannot apply a {race_arity}-attribute matrix to {arity}-attribute labels"
        )));
    }
    let values = |i: usize| -> Result<Vec<SubgroupLabel>> {
        let mut v: Vec<SubgroupLabel> = labels
            .iter()
            .map(|l| SubgroupLabel::parse(&l.parts()[i]))
            .collect::<Result<_>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    };
    let races = values(0)?;
    let genders = values(1)?;
    let race = race.restrict(&races)?;
    let gender = match gender {
        Some(g) => g.restrict(&genders)?,
        None => ConfusionMatrix::identity(genders)?,
    };
    compose_matrices(&race, &gender)?.restrict(labels)
}

/// Baseline, oracle and one row per matrix, each aggregated by median.
pub fn case_study(original: &Ranking, config: &CaseStudyConfig) -> Result<CaseStudyResult> {
    if config.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    config.settings.attention.validate()?;
    let k = config.settings.k;
    if k == 0 || k > original.len() {
        return Err(Error::Config(format!(
            "k = {k} must be between 1 and the dataset size {}",
            original.len()
        )));
    }
    let population = empirical_distribution(original.items(), LabelSource::True)?;
    let target = config.target.clone().unwrap_or_else(|| population.clone());
    let labels: Vec<SubgroupLabel> = population.labels().cloned().collect();
    let model = &config.settings.attention;

    let evaluate = |list: &Ranking| -> Result<(MetricsRecord, bool)> {
        let rec = MetricsRecord::compute(original, list, &target, &population, model)?;
        Ok((rec, check_feasibility(list, &target, k).feasible))
    };

    let mut rows = Vec::new();
    let baseline = evaluate(&original.top(k))?;
    rows.push(summarize("Baseline", &labels, &[baseline]));

    let oracle_opts = Options {
        labels: LabelSource::True,
        swap_rule: config.settings.swap_rule,
        allow_shortfall: false,
    };
    let oracle = evaluate(&detconstsort_with(original, &target, k, oracle_opts)?)?;
    rows.push(summarize("Oracle", &labels, &[oracle]));

    let opts = Options {
        labels: LabelSource::Inferred,
        swap_rule: config.settings.swap_rule,
        // Noisy labels can leave a group with too few predicted members.
        allow_shortfall: true,
    };
    for (m_index, named) in config.matrices.iter().enumerate() {
        let matrix = dataset_matrix(&named.matrix, config.gender_matrix.as_ref(), &labels)?;
        let outcomes: Vec<Result<(MetricsRecord, bool)>> = with_pool(config.threads, || {
            (0..config.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(trial_seed(config.seed, t), 1 + m_index as u64);
                    let mut items = original.items().to_vec();
                    perturb_labels_with(&mut items, &matrix, &mut rng)?;
                    let noisy = Ranking::original(items)?;
                    evaluate(&detconstsort_with(&noisy, &target, k, opts)?)
                })
                .collect()
        })?;
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        rows.push(summarize(&named.name, &labels, &outcomes));
    }
    Ok(CaseStudyResult { labels, k, rows })
}

fn summarize(
    name: &str,
    labels: &[SubgroupLabel],
    outcomes: &[(MetricsRecord, bool)],
) -> CaseStudyRow {
    let med = |f: &dyn Fn(&MetricsRecord) -> f64| {
        let mut v: Vec<f64> = outcomes.iter().map(|(r, _)| f(r)).collect();
        median(&mut v)
    };
    // Groups missing from a list get zero share and zero attention.
    let groups = labels
        .iter()
        .map(|g| {
            let stat = |f: fn(&crate::metrics::GroupStat) -> f64| {
                move |r: &MetricsRecord| r.groups.get(g).map(f).unwrap_or(0.0)
            };
            let medians = GroupMedians {
                skew: med(&stat(|s| s.skew.unwrap_or(0.0))),
                attention: med(&stat(|s| s.eta)),
                treatment: med(&stat(|s| s.theta)),
                impact: med(&stat(|s| s.gamma)),
            };
            (g.clone(), medians)
        })
        .collect();
    CaseStudyRow {
        name: name.to_string(),
        groups,
        metrics: MetricValues {
            ndkl: med(&|r| r.ndkl),
            abr: med(&|r| r.abr),
            dtbr: med(&|r| r.dtbr),
            dibr: med(&|r| r.dibr),
            ndcg: med(&|r| r.ndcg),
            marc: med(&|r| r.marc),
        },
        feasible_trials: outcomes.iter().filter(|(_, ok)| *ok).count(),
        trials: outcomes.len(),
    }
}
