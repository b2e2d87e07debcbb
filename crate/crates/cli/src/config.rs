use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fairrank::detconstsort::SwapRule;
use fairrank::metrics::AttentionModel;
use fairrank::noise::AccuracyNoise;
use fairrank::{Distribution, SubgroupLabel};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Md,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Md => "md",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attention {
    #[default]
    Geometric,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    /// Errors spread evenly over the other labels.
    #[default]
    UniformOther,
    /// A random label replaces the true one with probability 1 - accuracy.
    UniformAny,
}

impl From<Noise> for AccuracyNoise {
    fn from(n: Noise) -> Self {
        match n {
            Noise::UniformOther => AccuracyNoise::UniformOther,
            Noise::UniformAny => AccuracyNoise::UniformAny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Swap {
    #[default]
    Strict,
    AsPublished,
    Disabled,
}

impl From<Swap> for SwapRule {
    fn from(s: Swap) -> Self {
        match s {
            Swap::Strict => SwapRule::Strict,
            Swap::AsPublished => SwapRule::AsPublished,
            Swap::Disabled => SwapRule::Disabled,
        }
    }
}

/// A target distribution, given as `X=0.5,Y=0.5`, inline JSON, a JSON file,
/// or a table in the config file. Weights are normalized.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Text(String),
    Map(BTreeMap<String, f64>),
}

impl Target {
    pub fn resolve(&self) -> Result<Distribution, CliError> {
        let weights = match self {
            Target::Map(m) => m.clone(),
            Target::Text(s) => parse_target_text(s)?,
        };
        let pairs = weights
            .into_iter()
            .map(|(label, w)| Ok((SubgroupLabel::parse(&label)?, w)))
            .collect::<Result<Vec<_>, fairrank::Error>>()?;
        Ok(Distribution::from_weights(pairs)?)
    }
}

fn parse_target_text(s: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::Usage(format!("target JSON: {e}")));
    }
    if !s.contains('=') && Path::new(s).is_file() {
        let text = std::fs::read_to_string(s).map_err(|e| CliError::Usage(format!("{s}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{s}: {e}")));
    }
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (label, weight) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("target entry `{part}` is not LABEL=WEIGHT")))?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("target weight `{weight}` is not a number")))?;
        out.insert(label.trim().to_string(), weight);
    }
    Ok(out)
}

fn parse_target(s: &str) -> Result<Target, String> {
    Ok(Target::Text(s.to_string()))
}

/// Settings shared by every subcommand. Each can also come from `--config`;
/// anything given on the command line wins.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// TOML or JSON file with any of these settings.
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte Carlo trials per condition.
    #[arg(long, global = true)]
    pub trials: Option<usize>,

    /// List length.
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Attention model parameter.
    #[arg(long, global = true)]
    pub p: Option<f64>,

    /// Attention model.
    #[arg(long, global = true, value_enum)]
    pub attention: Option<Attention>,

    /// Preset population distributions to simulate (A to F).
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub dist: Option<Vec<String>>,

    /// Simulated people per group.
    #[arg(long, global = true)]
    pub n_per_group: Option<usize>,

    /// Classifier accuracies to sweep.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub accuracies: Option<Vec<f64>>,

    /// How a simulated classifier spreads its errors.
    #[arg(long, global = true, value_enum)]
    pub noise: Option<Noise>,

    /// Confusion matrix by built-in name or JSON path; repeatable.
    #[arg(long, global = true, value_delimiter = ',')]
    pub matrix: Option<Vec<String>>,

    /// Confusion matrix for the second attribute, composed with each `--matrix`.
    #[arg(long, global = true, value_name = "NAME_OR_PATH")]
    pub gender_matrix: Option<String>,

    /// Rename matrix labels to match the dataset, as `OLD=NEW`; repeatable.
    #[arg(long, global = true, value_delimiter = ',')]
    pub relabel: Option<Vec<String>>,

    /// Candidate CSV.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,

    /// Group attribute columns of the input, in label order.
    #[arg(long, global = true, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,

    /// Target distribution: `X=0.5,Y=0.5`, a JSON object, or a JSON file.
    #[arg(long, global = true, value_parser = parse_target)]
    pub target: Option<Target>,

    /// Re-rank on the input's `inferred_*` columns instead of the true labels.
    #[arg(long, global = true)]
    #[serde(default)]
    pub inferred: bool,

    /// DetConstSort swap rule.
    #[arg(long, global = true, value_enum)]
    pub swap_rule: Option<Swap>,

    /// Output directory for tables, or file for `rerank`. Tables go to stdout when unset.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Table format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads; overrides `FAIRRANK_THREADS`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl Options {
    /// Fills unset fields from the config file, if one was named.
    pub fn with_config_file(self) -> Result<Options, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: Options = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        };
        Ok(self.over(file))
    }

    fn over(self, base: Options) -> Options {
        Options {
            config: self.config,
            seed: self.seed.or(base.seed),
            trials: self.trials.or(base.trials),
            k: self.k.or(base.k),
            p: self.p.or(base.p),
            attention: self.attention.or(base.attention),
            dist: self.dist.or(base.dist),
            n_per_group: self.n_per_group.or(base.n_per_group),
            accuracies: self.accuracies.or(base.accuracies),
            noise: self.noise.or(base.noise),
            matrix: self.matrix.or(base.matrix),
            gender_matrix: self.gender_matrix.or(base.gender_matrix),
            relabel: self.relabel.or(base.relabel),
            input: self.input.or(base.input),
            attributes: self.attributes.or(base.attributes),
            target: self.target.or(base.target),
            inferred: self.inferred || base.inferred,
            swap_rule: self.swap_rule.or(base.swap_rule),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            threads: self.threads.or(base.threads),
        }
    }

    pub fn attention_model(&self) -> AttentionModel {
        let p = self.p.unwrap_or(fairrank::metrics::DEFAULT_ATTENTION_P);
        match self.attention.unwrap_or_default() {
            Attention::Geometric => AttentionModel::geometric(p),
            Attention::Logarithmic => AttentionModel::logarithmic(p),
        }
    }

    pub fn aliases(&self) -> Result<BTreeMap<String, String>, CliError> {
        self.relabel
            .iter()
            .flatten()
            .map(|pair| {
                pair.split_once('=')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| CliError::Usage(format!("relabel `{pair}` is not OLD=NEW")))
            })
            .collect()
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.clone().unwrap_or_else(|| {
            fairrank::datasets::DEFAULT_ATTRIBUTES
                .iter()
                .map(|s| s.to_string())
                .collect()
        })
    }
}
