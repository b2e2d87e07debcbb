//! Representation, attention and ranking-quality metrics.
//!
//! All functions are pure. Positions are 1-based throughout: the item at
//! index 0 of a [`Ranking`] sits at rank 1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, LabelSource, Ranking, SubgroupLabel};

pub const DEFAULT_ATTENTION_P: f64 = 0.015;
pub const DEFAULT_HORIZON: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// `100 (1-p)^(k-1) p`
    #[default]
    Geometric,
    /// `100 p / log2(k+1)`; matches the geometric curve at rank 1 but decays
    /// far more slowly. Only meant for side-by-side comparisons.
    Logarithmic,
}

/// Position-based attention. Ranks past `k_max` receive nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionModel {
    pub kind: AttentionKind,
    pub p: f64,
    pub k_max: usize,
}

impl Default for AttentionModel {
    fn default() -> Self {
        AttentionModel::geometric(DEFAULT_ATTENTION_P)
    }
}

impl AttentionModel {
    pub fn geometric(p: f64) -> Self {
        AttentionModel {
            kind: AttentionKind::Geometric,
            p,
            k_max: DEFAULT_HORIZON,
        }
    }

    pub fn logarithmic(p: f64) -> Self {
        AttentionModel {
            kind: AttentionKind::Logarithmic,
            p,
            k_max: DEFAULT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Config(format!(
                "attention p must be in (0, 1), got {}",
                self.p
            )));
        }
        if self.k_max == 0 {
            return Err(Error::Config("attention horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Attention values for ranks `1..=n`.
    pub fn profile(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|k| self.at(k)).collect()
    }

    fn at(&self, k: usize) -> f64 {
        if k > self.k_max {
            return 0.0;
        }
        match self.kind {
            AttentionKind::Geometric => 100.0 * (1.0 - self.p).powi(k as i32 - 1) * self.p,
            AttentionKind::Logarithmic => 100.0 * self.p / ((k + 1) as f64).log2(),
        }
    }
}

/// Attention received at 1-based rank `k`.
pub fn attention(model: &AttentionModel, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidRank(k));
    }
    Ok(model.at(k))
}

/// Share of `g` in the top `k` over its share in the population.
pub fn skew_at_k(
    ranking: &Ranking,
    population: &Distribution,
    g: &SubgroupLabel,
    k: usize,
) -> Result<f64> {
    if k < 1 || k > ranking.len() {
        return Err(Error::InvalidRank(k));
    }
    let base = population.get(g);
    if base <= 0.0 {
        return Err(Error::ZeroBaseProportion(g.clone()));
    }
    let in_top = ranking.items()[..k]
        .iter()
        .filter(|c| &c.true_label == g)
        .count();
    Ok(in_top as f64 / k as f64 / base)
}

fn discount(i: usize) -> f64 {
    1.0 / ((i + 1) as f64).log2()
}

/// NDKL of a ranking's true labels against `target`.
pub fn ndkl(ranking: &Ranking, target: &Distribution) -> Result<f64> {
    let labels: Vec<&SubgroupLabel> = ranking.items().iter().map(|c| &c.true_label).collect();
    ndkl_of_labels(&labels, target)
}

/// NDKL over a bare label sequence; KL in bits.
pub fn ndkl_of_labels(labels: &[&SubgroupLabel], target: &Distribution) -> Result<f64> {
    let index: HashMap<&SubgroupLabel, usize> =
        target.labels().enumerate().map(|(i, l)| (l, i)).collect();
    let mass: Vec<f64> = target.iter().map(|(_, p)| p).collect();
    let mut counts = vec![0usize; mass.len()];
    let mut z = 0.0;
    let mut total = 0.0;
    for (pos, label) in labels.iter().enumerate() {
        let i = pos + 1;
        let slot = match index.get(label) {
            Some(&s) if mass[s] > 0.0 => s,
            _ => return Err(Error::ZeroBaseProportion((*label).clone())),
        };
        counts[slot] += 1;
        let n = i as f64;
        let kl: f64 = counts
            .iter()
            .zip(&mass)
            .filter(|(c, _)| **c > 0)
            .map(|(c, p)| {
                let q = *c as f64 / n;
                q * (q / p).log2()
            })
            .sum();
        let d = discount(i);
        z += d;
        total += d * kl;
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    // Rounding can leave a tiny negative sum when every prefix matches.
    Ok((total / z).max(0.0))
}

/// Per-group attention and utility statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub count: usize,
    /// Mean attention per member.
    pub eta: f64,
    /// Mean utility per member.
    pub u_mean: f64,
    /// Utility-weighted mean attention.
    pub theta: f64,
    /// Expected actions per member: attention share times utility.
    pub gamma: f64,
    /// Set when the group's utilities sum to zero; `theta` is then 0.
    pub theta_undefined: bool,
    pub skew: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: BTreeMap<SubgroupLabel, GroupStat>,
}

impl GroupStats {
    pub fn get(&self, g: &SubgroupLabel) -> Option<&GroupStat> {
        self.groups.get(g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SubgroupLabel, &GroupStat)> {
        self.groups.iter()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Fills `skew` for every group from the share of the whole list.
    pub fn with_skew(mut self, population: &Distribution) -> Result<Self> {
        let n: usize = self.groups.values().map(|s| s.count).sum();
        for (g, stat) in self.groups.iter_mut() {
            let base = population.get(g);
            if base <= 0.0 {
                return Err(Error::ZeroBaseProportion(g.clone()));
            }
            stat.skew = Some(stat.count as f64 / n as f64 / base);
        }
        Ok(self)
    }

    fn ratio(&self, f: impl Fn(&GroupStat) -> f64) -> Result<f64> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for s in self.groups.values() {
            let v = f(s);
            min = min.min(v);
            max = max.max(v);
        }
        if max.is_nan() || max <= 0.0 {
            return Err(Error::DegenerateRatio);
        }
        Ok(min / max)
    }
}

pub fn group_attention_stats(
    ranking: &Ranking,
    model: &AttentionModel,
    which: LabelSource,
) -> Result<GroupStats> {
    group_stats_from_attention(ranking, &model.profile(ranking.len()), which)
}

/// Group statistics from an explicit per-position attention vector.
pub fn group_stats_from_attention(
    ranking: &Ranking,
    attention: &[f64],
    which: LabelSource,
) -> Result<GroupStats> {
    if ranking.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if attention.len() < ranking.len() {
        return Err(Error::InvalidRank(attention.len() + 1));
    }
    #[derive(Default)]
    struct Acc {
        n: usize,
        a: f64,
        s: f64,
        a_s: f64,
    }
    let mut acc: BTreeMap<SubgroupLabel, Acc> = BTreeMap::new();
    for (c, &a) in ranking.items().iter().zip(attention) {
        let e = acc.entry(c.require_label(which)?.clone()).or_default();
        e.n += 1;
        e.a += a;
        e.s += c.score;
        e.a_s += a * c.score;
    }
    let groups = acc
        .into_iter()
        .map(|(g, e)| {
            let n = e.n as f64;
            let theta_undefined = e.s == 0.0;
            let stat = GroupStat {
                count: e.n,
                eta: e.a / n,
                u_mean: e.s / n,
                theta: if theta_undefined { 0.0 } else { e.a_s / e.s },
                gamma: e.a_s / 100.0 / n,
                theta_undefined,
                skew: None,
            };
            (g, stat)
        })
        .collect();
    Ok(GroupStats { groups })
}

/// Attention Bias Ratio: min η over max η.
pub fn abr(stats: &GroupStats) -> Result<f64> {
    stats.ratio(|s| s.eta)
}

/// Disparate Treatment Bias Ratio: min θ over max θ.
pub fn dtbr(stats: &GroupStats) -> Result<f64> {
    stats.ratio(|s| s.theta)
}

/// Disparate Impact Bias Ratio: min γ over max γ.
pub fn dibr(stats: &GroupStats) -> Result<f64> {
    stats.ratio(|s| s.gamma)
}

/// Discounted utility normalized by the discount mass alone.
pub fn ndcg(ranking: &Ranking) -> Result<f64> {
    ndcg_of_scores(ranking.scores())
}

pub fn ndcg_of_scores(scores: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut z = 0.0;
    let mut dcg = 0.0;
    let mut n = 0;
    for (i, s) in scores.into_iter().enumerate() {
        let d = discount(i + 1);
        z += d;
        dcg += s * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    Ok(dcg / z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankChange {
    /// `(id, original rank - new rank)` in re-ranked order; positive means promoted.
    pub boosts: Vec<(String, i64)>,
    /// Mean absolute boost per true-label group.
    pub arc: BTreeMap<SubgroupLabel, f64>,
    pub marc: f64,
}

pub fn rank_change_metrics(original: &Ranking, reranked: &Ranking) -> Result<RankChange> {
    let orig_rank = original.rank_index();
    let mut boosts = Vec::with_capacity(reranked.len());
    let mut sums: BTreeMap<SubgroupLabel, (f64, usize)> = BTreeMap::new();
    for (i, c) in reranked.items().iter().enumerate() {
        let before = *orig_rank
            .get(c.id.as_str())
            .ok_or_else(|| Error::UnknownCandidate(c.id.clone()))?;
        let boost = before as i64 - (i as i64 + 1);
        let e = sums.entry(c.true_label.clone()).or_default();
        e.0 += boost.unsigned_abs() as f64;
        e.1 += 1;
        boosts.push((c.id.clone(), boost));
    }
    let arc: BTreeMap<_, _> = sums
        .into_iter()
        .map(|(g, (s, n))| (g, s / n as f64))
        .collect();
    let marc = arc.values().copied().fold(0.0, f64::max);
    Ok(RankChange { boosts, arc, marc })
}

/// Every metric for one evaluated list, measured on true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub k: usize,
    pub ndkl: f64,
    pub abr: f64,
    pub dtbr: f64,
    pub dibr: f64,
    pub ndcg: f64,
    pub marc: f64,
    pub groups: GroupStats,
    pub arc: BTreeMap<SubgroupLabel, f64>,
    pub seed: Option<u64>,
}

impl MetricsRecord {
    /// Scores `list` against the `original` ranking it was drawn from.
    /// NDKL uses `target`; skew uses `population`.
    pub fn compute(
        original: &Ranking,
        list: &Ranking,
        target: &Distribution,
        population: &Distribution,
        model: &AttentionModel,
    ) -> Result<Self> {
        let groups =
            group_attention_stats(list, model, LabelSource::True)?.with_skew(population)?;
        let change = rank_change_metrics(original, list)?;
        Ok(MetricsRecord {
            k: list.len(),
            ndkl: ndkl(list, target)?,
            abr: abr(&groups)?,
            dtbr: dtbr(&groups)?,
            dibr: dibr(&groups)?,
            ndcg: ndcg(list)?,
            marc: change.marc,
            groups,
            arc: change.arc,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}
