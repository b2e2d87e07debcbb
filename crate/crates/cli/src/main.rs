//! `fairrank` command-line front end.

mod config;

use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairrank::datasets::{
    baseline_table, case_study_tables, load_candidates_csv, sweep_long_csv, sweep_tables,
    write_ranking_csv, write_text, CandidateSet, MetricTable,
};
use fairrank::detconstsort::{detconstsort_with, Options as SortOptions};
use fairrank::metrics::{abr, group_attention_stats, ndcg, ndkl, rank_change_metrics};
use fairrank::noise::{resolve_matrix, BUILTIN_MATRICES};
use fairrank::simulation::{
    case_study, default_accuracies, sweep, CaseStudyConfig, NamedMatrix, PopulationSpec,
    SweepConfig, TrialSettings, DEFAULT_K, DEFAULT_SEED, DEFAULT_TRIALS, PRESET_NAMES,
};
use fairrank::{empirical_distribution, LabelSource, Ranking};
use thiserror::Error;

use config::{Format, Options};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fairrank::Error),

    #[error("{0}")]
    Usage(String),

    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "fairrank",
    version,
    about = "Fair top-k re-ranking under noisy group labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    options: Options,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep classifier accuracy over simulated populations.
    Simulate,
    /// Re-rank a candidate CSV to meet a target distribution.
    Rerank,
    /// Compare confusion matrices on a real dataset.
    Casestudy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli
        .options
        .with_config_file()
        .and_then(|opts| match cli.command {
            Command::Simulate => simulate(&opts),
            Command::Rerank => rerank(&opts),
            Command::Casestudy => casestudy(&opts),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn settings(opts: &Options, k: usize) -> TrialSettings {
    TrialSettings {
        k,
        attention: opts.attention_model(),
        swap_rule: opts.swap_rule.unwrap_or_default().into(),
    }
}

fn simulate(opts: &Options) -> Result<(), CliError> {
    let names = opts
        .dist
        .clone()
        .unwrap_or_else(|| PRESET_NAMES.iter().map(|s| s.to_string()).collect());
    let mut specs = names
        .iter()
        .map(|n| PopulationSpec::preset(n))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(t) = &opts.target {
        specs.push(PopulationSpec::custom(
            "Custom",
            t.resolve()?,
            fairrank::simulation::DEFAULT_N_PER_GROUP,
        )?);
    }
    if let Some(n) = opts.n_per_group {
        specs = specs.into_iter().map(|s| s.with_n_per_group(n)).collect();
    }

    let mut results = Vec::with_capacity(specs.len());
    for spec in specs {
        let name = spec.name.clone();
        let config = SweepConfig {
            accuracies: opts.accuracies.clone().unwrap_or_else(default_accuracies),
            trials: opts.trials.unwrap_or(DEFAULT_TRIALS),
            settings: settings(opts, opts.k.unwrap_or(DEFAULT_K)),
            noise: opts.noise.unwrap_or_default().into(),
            seed: opts.seed.unwrap_or(DEFAULT_SEED),
            threads: opts.threads,
            ..SweepConfig::new(spec)
        };
        eprintln!("simulating Dist {name}");
        results.push(sweep(&config)?);
    }

    let mut tables: Vec<(String, MetricTable)> = sweep_tables(&results)
        .into_iter()
        .map(|(m, t)| (m.name().to_lowercase(), t))
        .collect();
    tables.push(("baseline".into(), baseline_table(&results)));
    emit_tables(opts, &tables)?;
    if let Some(dir) = &opts.out {
        write_text(&dir.join("sweep_long.csv"), &sweep_long_csv(&results))?;
    }
    Ok(())
}

fn load_input(opts: &Options) -> Result<CandidateSet, CliError> {
    let path = opts
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("--input is required".into()))?;
    let set = load_candidates_csv(path, &opts.attribute_names())?;
    if let Some((lo, hi)) = set.normalized_from {
        eprintln!("note: scores min-max normalized from [{lo}, {hi}] to [0, 1]");
    }
    Ok(set)
}

fn list_length(opts: &Options, n: usize) -> Result<usize, CliError> {
    match opts.k {
        Some(k) if k == 0 || k > n => Err(CliError::Usage(format!(
            "k = {k} must be between 1 and the number of candidates ({n})"
        ))),
        Some(k) => Ok(k),
        None => Ok(DEFAULT_K.min(n)),
    }
}

fn rerank(opts: &Options) -> Result<(), CliError> {
    let out = opts
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("rerank needs --out for the re-ranked CSV".into()))?;
    let set = load_input(opts)?;
    let original = &set.ranking;
    let k = list_length(opts, original.len())?;
    let population = empirical_distribution(original.items(), LabelSource::True)?;
    let target = match &opts.target {
        Some(t) => t.resolve()?,
        None => population.clone(),
    };
    let sort = SortOptions {
        labels: if opts.inferred {
            LabelSource::Inferred
        } else {
            LabelSource::True
        },
        swap_rule: opts.swap_rule.unwrap_or_default().into(),
        allow_shortfall: false,
    };
    let fair = detconstsort_with(original, &target, k, sort)?;
    let change = rank_change_metrics(original, &fair)?;
    let boosts: Vec<i64> = change.boosts.iter().map(|(_, b)| *b).collect();
    write_ranking_csv(out, &fair, &opts.attribute_names(), Some(&boosts))?;

    let before = summary(opts, original, &original.top(k), &target);
    let after = summary(opts, original, &fair, &target);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<6} {:>10} {:>10}", "metric", "before", "after")?;
    for (i, name) in ["NDKL", "ABR", "NDCG", "MARC"].iter().enumerate() {
        writeln!(stdout, "{name:<6} {:>10} {:>10}", before[i], after[i])?;
    }
    Ok(())
}

/// NDKL, ABR, NDCG and MARC of `list`, with `NA` where a metric is undefined.
fn summary(
    opts: &Options,
    original: &Ranking,
    list: &Ranking,
    target: &fairrank::Distribution,
) -> [String; 4] {
    let show =
        |v: fairrank::Result<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|_| "NA".into());
    [
        show(ndkl(list, target)),
        show(
            group_attention_stats(list, &opts.attention_model(), LabelSource::True)
                .and_then(|s| abr(&s)),
        ),
        show(ndcg(list)),
        show(rank_change_metrics(original, list).map(|c| c.marc)),
    ]
}

fn casestudy(opts: &Options) -> Result<(), CliError> {
    let set = load_input(opts)?;
    let aliases = opts.aliases()?;
    let names = opts
        .matrix
        .clone()
        .unwrap_or_else(|| BUILTIN_MATRICES.iter().map(|s| s.to_string()).collect());
    let load = |name: &str| -> Result<_, CliError> {
        let m = resolve_matrix(name)?;
        Ok(if aliases.is_empty() {
            m
        } else {
            m.relabel(&aliases)?
        })
    };
    let matrices = names
        .iter()
        .map(|name| {
            Ok(NamedMatrix {
                name: matrix_title(name),
                matrix: load(name)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let config = CaseStudyConfig {
        trials: opts.trials.unwrap_or(DEFAULT_TRIALS),
        settings: settings(opts, list_length(opts, set.ranking.len())?),
        seed: opts.seed.unwrap_or(DEFAULT_SEED),
        target: opts.target.as_ref().map(|t| t.resolve()).transpose()?,
        matrices,
        gender_matrix: opts.gender_matrix.as_deref().map(load).transpose()?,
        threads: opts.threads,
    };
    let result = case_study(&set.ranking, &config)?;
    let files = ["skew", "attention", "treatment", "impact"];
    let tables: Vec<(String, MetricTable)> = files
        .iter()
        .map(|f| f.to_string())
        .zip(case_study_tables(&result))
        .collect();
    emit_tables(opts, &tables)
}

/// Row label for a matrix: the file stem for paths, the name otherwise.
fn matrix_title(name: &str) -> String {
    let path = Path::new(name);
    if path.extension().is_some() {
        if let Some(stem) = path.file_stem() {
            return stem.to_string_lossy().into_owned();
        }
    }
    name.to_string()
}

fn emit_tables(opts: &Options, tables: &[(String, MetricTable)]) -> Result<(), CliError> {
    let format = opts.format.unwrap_or_default();
    let render = |t: &MetricTable| match format {
        Format::Csv => t.to_csv_string(),
        Format::Md => t.to_markdown(),
    };
    match &opts.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
            for (stem, table) in tables {
                write_text(
                    &dir.join(format!("{stem}.{}", format.extension())),
                    &render(table),
                )?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for (i, (_, table)) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                if format == Format::Csv {
                    writeln!(stdout, "# {}", table.title)?;
                }
                stdout.write_all(render(table).as_bytes())?;
            }
        }
    }
    Ok(())
}
