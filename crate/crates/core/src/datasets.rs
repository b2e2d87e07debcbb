//! Candidate CSV ingestion and metric table output.
//!
//! Candidate files carry an `id` column, a `score` column and one column per
//! protected attribute. Optional `inferred_<attribute>` columns supply
//! predicted labels. Other columns are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sort_by_score, Candidate, Ranking, SubgroupLabel};
use crate::simulation::{CaseStudyResult, Metric, SweepResult};

pub const ID_COLUMN: &str = "id";
pub const SCORE_COLUMN: &str = "score";
pub const INFERRED_PREFIX: &str = "inferred_";
pub const DEFAULT_ATTRIBUTES: [&str; 2] = ["race", "gender"];

/// Digits after the decimal point in metric tables.
pub const TABLE_DECIMALS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Sorted by score, highest first, ties by id.
    pub ranking: Ranking,
    /// Raw `(min, max)` when scores fell outside `[0, 1]` and were rescaled.
    pub normalized_from: Option<(f64, f64)>,
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn load_candidates_csv<S: AsRef<str>>(path: &Path, attributes: &[S]) -> Result<CandidateSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_candidates(file, path, attributes)
}

/// Reads candidates from any reader; `path` only labels errors.
pub fn read_candidates<R: std::io::Read, S: AsRef<str>>(
    reader: R,
    path: &Path,
    attributes: &[S],
) -> Result<CandidateSet> {
    if attributes.is_empty() {
        return Err(Error::Config(
            "at least one attribute column is required".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        column(name).ok_or_else(|| parse_err(path, format!("unknown column `{name}`")))
    };
    let id_col = require(ID_COLUMN)?;
    let score_col = require(SCORE_COLUMN)?;
    let attr_cols = attributes
        .iter()
        .map(|a| require(a.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let inferred_cols: Option<Vec<usize>> = attributes
        .iter()
        .map(|a| column(&format!("{INFERRED_PREFIX}{}", a.as_ref())))
        .collect();

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(parse_err(path, format!("line {line}: empty id")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                line: Some(line),
            });
        }
        let score: f64 = field(score_col).parse().map_err(|_| {
            parse_err(
                path,
                format!("line {line}: score `{}` is not a number", field(score_col)),
            )
        })?;
        if !score.is_finite() {
            return Err(parse_err(
                path,
                format!("line {line}: score must be finite"),
            ));
        }
        let label = |cols: &[usize]| -> Result<SubgroupLabel> {
            let values: Vec<&str> = cols.iter().map(|&c| field(c)).collect();
            if let Some(i) = values.iter().position(|v| v.is_empty()) {
                return Err(parse_err(
                    path,
                    format!("line {line}: empty `{}`", &headers[cols[i]]),
                ));
            }
            SubgroupLabel::new(values).map_err(|e| parse_err(path, format!("line {line}: {e}")))
        };
        let mut candidate = Candidate::new(id, score, label(&attr_cols)?);
        if let Some(cols) = &inferred_cols {
            if cols.iter().any(|&c| !field(c).is_empty()) {
                candidate.inferred_label = Some(label(cols)?);
            }
        }
        candidates.push(candidate);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let normalized_from = normalize_scores(&mut candidates);
    Ok(CandidateSet {
        ranking: sort_by_score(candidates)?,
        normalized_from,
    })
}

/// Min-max rescales to `[0, 1]` when any score lies outside it.
fn normalize_scores(candidates: &mut [Candidate]) -> Option<(f64, f64)> {
    let (min, max) = candidates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.score), hi.max(c.score))
        });
    if min >= 0.0 && max <= 1.0 {
        return None;
    }
    let span = max - min;
    for c in candidates.iter_mut() {
        c.score = if span > 0.0 {
            (c.score - min) / span
        } else {
            1.0
        };
    }
    Some((min, max))
}

/// Writes a ranking with `rank` and, when given, a per-candidate `boost` column.
pub fn write_ranking_csv<S: AsRef<str>>(
    path: &Path,
    ranking: &Ranking,
    attributes: &[S],
    boosts: Option<&[i64]>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let with_inferred = ranking.items().iter().any(|c| c.inferred_label.is_some());
    let mut header = vec!["rank".to_string(), ID_COLUMN.into(), SCORE_COLUMN.into()];
    header.extend(attributes.iter().map(|a| a.as_ref().to_string()));
    if with_inferred {
        header.extend(
            attributes
                .iter()
                .map(|a| format!("{INFERRED_PREFIX}{}", a.as_ref())),
        );
    }
    if boosts.is_some() {
        header.push("boost".into());
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let parts = |label: &SubgroupLabel| -> Result<Vec<String>> {
        if label.parts().len() != attributes.len() {
            return Err(Error::InvalidLabel(format!(
                "`{label}` does not have {} attribute values",
                attributes.len()
            )));
        }
        Ok(label.parts().to_vec())
    };
    for (i, c) in ranking.items().iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), c.id.clone(), c.score.to_string()];
        row.extend(parts(&c.true_label)?);
        if with_inferred {
            match &c.inferred_label {
                Some(l) => row.extend(parts(l)?),
                None => row.extend(attributes.iter().map(|_| String::new())),
            }
        }
        if let Some(b) = boosts {
            row.push(b.get(i).map(|b| b.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A metric table: one labelled row per
/// condition, group columns in label order, aggregate column last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl MetricTable {
    pub fn new(
        title: impl Into<String>,
        row_header: impl Into<String>,
        columns: Vec<String>,
    ) -> Self {
        MetricTable {
            title: title.into(),
            row_header: row_header.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, name: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((name.into(), values));
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|h| h == column)?;
        self.rows.iter().find(|(r, _)| r == row).map(|(_, v)| v[c])
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.row_header.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (name, values) in &self.rows {
            let mut row = vec![name.clone()];
            row.extend(values.iter().map(|v| format_cell(*v)));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    /// Pipe table with padded columns.
    pub fn to_markdown(&self) -> String {
        let mut header = vec![self.row_header.clone()];
        header.extend(self.columns.iter().cloned());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(name, values)| {
                std::iter::once(name.clone())
                    .chain(values.iter().map(|v| format_cell(*v)))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain(std::iter::once(header[i].len()))
                    .max()
                    .unwrap_or(3)
                    .max(3)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::from("|");
            for (c, w) in cells.iter().zip(&widths) {
                let _ = write!(s, " {c:<w$} |");
            }
            s.push('\n');
            s
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "### {}\n", self.title);
        }
        out.push_str(&line(&header));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&line(&rule));
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }

    /// Inverse of [`MetricTable::to_csv_string`]; the title is not stored in CSV.
    pub fn from_csv_str(text: &str, title: impl Into<String>) -> std::result::Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let mut it = headers.iter();
        let row_header = it.next().ok_or("empty header")?.to_string();
        let mut table = MetricTable::new(title, row_header, it.map(str::to_string).collect());
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let name = record.get(0).unwrap_or("").to_string();
            let values = record
                .iter()
                .skip(1)
                .map(|v| parse_cell(v).ok_or_else(|| format!("row {}: bad number `{v}`", i + 1)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if values.len() != table.columns.len() {
                return Err(format!("row {} has {} values", i + 1, values.len()));
            }
            table.rows.push((name, values));
        }
        Ok(table)
    }
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.TABLE_DECIMALS$}")
    }
}

fn parse_cell(v: &str) -> Option<f64> {
    if v == "NA" {
        Some(f64::NAN)
    } else {
        v.parse().ok()
    }
}

pub fn write_metrics_csv(table: &MetricTable, path: &Path) -> Result<()> {
    write_text(path, &table.to_csv_string())
}

pub fn write_metrics_markdown(table: &MetricTable, path: &Path) -> Result<()> {
    write_text(path, &table.to_markdown())
}

pub fn read_metrics_csv(path: &Path) -> Result<MetricTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let title = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    MetricTable::from_csv_str(&text, title).map_err(|m| parse_err(path, m))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn accuracy_label(a: f64) -> String {
    format!("{a:.1}")
}

/// One table per metric: a row per accuracy, a column per distribution.
/// Every sweep must use the same accuracy list.
pub fn sweep_tables(results: &[SweepResult]) -> Vec<(Metric, MetricTable)> {
    let columns: Vec<String> = results.iter().map(|r| format!("Dist {}", r.spec)).collect();
    let accuracies: Vec<f64> = results
        .first()
        .map(|r| r.cells.iter().map(|c| c.accuracy).collect())
        .unwrap_or_default();
    let means: Vec<Vec<_>> = results
        .iter()
        .map(|r| r.cells.iter().map(|c| c.mean()).collect())
        .collect();
    Metric::ALL
        .iter()
        .map(|&metric| {
            let mut t = MetricTable::new(
                format!("Simulation {}", metric.name()),
                "Accuracy",
                columns.clone(),
            );
            for (i, &a) in accuracies.iter().enumerate() {
                t.push_row(
                    accuracy_label(a),
                    means
                        .iter()
                        .map(|m| m.get(i).map(|v| metric.of(v)).unwrap_or(f64::NAN))
                        .collect(),
                );
            }
            (metric, t)
        })
        .collect()
}

/// Unfair top-k means: a row per distribution, a column per metric.
pub fn baseline_table(results: &[SweepResult]) -> MetricTable {
    let columns = Metric::ALL.iter().map(|m| m.name().to_string()).collect();
    let mut t = MetricTable::new("Baseline (unfair top-k)", "Distribution", columns);
    for r in results {
        let m = r.baseline_mean();
        t.push_row(
            format!("Dist {}", r.spec),
            Metric::ALL.iter().map(|x| x.of(&m)).collect(),
        );
    }
    t
}

/// Plot-ready rows: `distribution,condition,accuracy,metric,mean,std,trials`.
pub fn sweep_long_csv(results: &[SweepResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "distribution",
        "condition",
        "accuracy",
        "metric",
        "mean",
        "std",
        "trials",
    ])
    .expect("in-memory write");
    let mut emit =
        |dist: &str, condition: &str, accuracy: &str, metric: Metric, values: Vec<f64>| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            w.write_record([
                dist.to_string(),
                condition.to_string(),
                accuracy.to_string(),
                metric.name().to_string(),
                format_cell(mean),
                format_cell(var.sqrt()),
                values.len().to_string(),
            ])
            .expect("in-memory write");
        };
    for r in results {
        for metric in Metric::ALL {
            emit(
                &r.spec,
                "baseline",
                "",
                metric,
                r.baseline.iter().map(|v| metric.of(v)).collect(),
            );
        }
        for cell in &r.cells {
            for metric in Metric::ALL {
                emit(
                    &r.spec,
                    "fair",
                    &accuracy_label(cell.accuracy),
                    metric,
                    cell.values(metric),
                );
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Skew, attention, treatment and impact tables; a row per condition,
/// group columns then the aggregate.
pub fn case_study_tables(result: &CaseStudyResult) -> Vec<MetricTable> {
    let groups: Vec<String> = result.labels.iter().map(|l| l.to_string()).collect();
    type Stat = fn(&crate::simulation::GroupMedians) -> f64;
    let specs: [(&str, &str, Stat, Metric); 4] = [
        ("Skew", "NDKL", |g| g.skew, Metric::Ndkl),
        ("Attention", "ABR", |g| g.attention, Metric::Abr),
        ("Disparate Treatment", "DTBR", |g| g.treatment, Metric::Dtbr),
        ("Disparate Impact", "DIBR", |g| g.impact, Metric::Dibr),
    ];
    specs
        .iter()
        .map(|(title, agg, stat, metric)| {
            let mut columns = groups.clone();
            columns.push(agg.to_string());
            let mut t =
                MetricTable::new(format!("{title} (top {})", result.k), "Algorithm", columns);
            for row in &result.rows {
                let mut values: Vec<f64> =
                    result.labels.iter().map(|l| stat(&row.groups[l])).collect();
                values.push(metric.of(&row.metrics));
                t.push_row(row.name.clone(), values);
            }
            t
        })
        .collect()
}
