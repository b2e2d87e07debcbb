//! Domain types shared by every other module: subgroup labels, candidates,
//! rankings and label distributions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on `Σ p_g = 1` for a valid [`Distribution`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A composite demographic label, e.g. `White Men`.
///
/// The label is the intersection of one value per protected attribute. The
/// attribute order is fixed by whoever builds the label (race then gender by
/// default); equality, hashing and ordering all go through the canonical
/// string, so two labels built from the same values are interchangeable.
/// Cloning is a reference-count bump.
#[derive(Clone)]
pub struct SubgroupLabel(Arc<LabelInner>);

struct LabelInner {
    parts: Vec<String>,
    canonical: String,
}

impl SubgroupLabel {
    pub fn new<I, S>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let parts: Vec<String> = parts
            .into_iter()
            .map(|p| p.as_ref().trim().to_string())
            .collect();
        if parts.is_empty() {
            return Err(Error::InvalidLabel("no attribute values".into()));
        }
        if let Some(bad) = parts.iter().find(|p| p.is_empty()) {
            return Err(Error::InvalidLabel(format!(
                "empty attribute value {bad:?}"
            )));
        }
        let canonical = parts.join(" ");
        Ok(SubgroupLabel(Arc::new(LabelInner { parts, canonical })))
    }

    /// Parses a canonical string; whitespace separates attribute values.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.is_empty() {
            return Err(Error::InvalidLabel(format!("{s:?}")));
        }
        Self::new(parts)
    }

    pub fn parts(&self) -> &[String] {
        &self.0.parts
    }

    pub fn as_str(&self) -> &str {
        &self.0.canonical
    }

    /// Intersects two labels: `White` × `Men` → `White Men`.
    pub fn product(&self, other: &SubgroupLabel) -> SubgroupLabel {
        let parts = self.parts().iter().chain(other.parts()).cloned();
        // Both inputs are already validated.
        SubgroupLabel::new(parts).expect("product of valid labels")
    }
}

/// Builds the composite label for one value of each protected attribute.
pub fn subgroup_product<S: AsRef<str>>(attribute_values: &[S]) -> Result<SubgroupLabel> {
    SubgroupLabel::new(attribute_values)
}

impl PartialEq for SubgroupLabel {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.as_str() == other.as_str()
    }
}

impl Eq for SubgroupLabel {}

impl Hash for SubgroupLabel {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.as_str().hash(state);
    }
}

impl PartialOrd for SubgroupLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SubgroupLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for SubgroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for SubgroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

impl Serialize for SubgroupLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SubgroupLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        SubgroupLabel::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Which label of a candidate an operation should read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    #[default]
    True,
    Inferred,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::True => "true",
            LabelSource::Inferred => "inferred",
        }
    }
}

/// One rankable person.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    /// Utility in `[0, 1]` for simulated data; datasets may carry raw scores.
    pub score: f64,
    pub true_label: SubgroupLabel,
    pub inferred_label: Option<SubgroupLabel>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, score: f64, true_label: SubgroupLabel) -> Self {
        Candidate {
            id: id.into(),
            score,
            true_label,
            inferred_label: None,
        }
    }

    pub fn with_inferred(mut self, label: SubgroupLabel) -> Self {
        self.inferred_label = Some(label);
        self
    }

    pub fn label(&self, which: LabelSource) -> Option<&SubgroupLabel> {
        match which {
            LabelSource::True => Some(&self.true_label),
            LabelSource::Inferred => self.inferred_label.as_ref(),
        }
    }

    pub fn require_label(&self, which: LabelSource) -> Result<&SubgroupLabel> {
        self.label(which).ok_or_else(|| Error::MissingLabel {
            id: self.id.clone(),
            which: which.name(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingSource {
    Original,
    Reranked,
}

/// An ordered candidate list; index 0 is rank 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    items: Vec<Candidate>,
    source: RankingSource,
}

impl Ranking {
    /// Wraps a score-ordered list. Scores must be non-increasing and ids distinct.
    pub fn original(items: Vec<Candidate>) -> Result<Self> {
        check_unique_ids(&items)?;
        for c in &items {
            if !c.score.is_finite() {
                return Err(Error::InvalidScore { id: c.id.clone() });
            }
        }
        if let Some(pos) = items.windows(2).position(|w| w[0].score < w[1].score) {
            return Err(Error::UnsortedRanking { position: pos + 2 });
        }
        Ok(Ranking {
            items,
            source: RankingSource::Original,
        })
    }

    pub fn reranked(items: Vec<Candidate>) -> Result<Self> {
        check_unique_ids(&items)?;
        Ok(Ranking {
            items,
            source: RankingSource::Reranked,
        })
    }

    pub fn items(&self) -> &[Candidate] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Candidate> {
        self.items
    }

    pub fn source(&self) -> RankingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The first `k` items, keeping the source tag.
    pub fn top(&self, k: usize) -> Ranking {
        Ranking {
            items: self.items[..k.min(self.items.len())].to_vec(),
            source: self.source,
        }
    }

    pub fn labels(&self, which: LabelSource) -> Result<Vec<&SubgroupLabel>> {
        self.items.iter().map(|c| c.require_label(which)).collect()
    }

    pub fn scores(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.items.iter().map(|c| c.score)
    }

    /// 1-based rank of every candidate id.
    pub fn rank_index(&self) -> HashMap<&str, usize> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i + 1))
            .collect()
    }
}

fn check_unique_ids(items: &[Candidate]) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for c in items {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::DuplicateId {
                id: c.id.clone(),
                line: None,
            });
        }
    }
    Ok(())
}

/// Sorts by score, highest first; equal scores keep ascending id order.
pub fn sort_by_score(mut candidates: Vec<Candidate>) -> Result<Ranking> {
    check_unique_ids(&candidates)?;
    if let Some(c) = candidates.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::InvalidScore { id: c.id.clone() });
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ranking::original(candidates)
}

/// A probability mass over subgroup labels. Iteration follows label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<SubgroupLabel, f64>",
    into = "BTreeMap<SubgroupLabel, f64>"
)]
pub struct Distribution {
    mass: BTreeMap<SubgroupLabel, f64>,
}

impl Distribution {
    pub fn new<I>(mass: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SubgroupLabel, f64)>,
    {
        let mut map = BTreeMap::new();
        for (label, p) in mass {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mass for `{label}` is {p}"
                )));
            }
            if map.insert(label.clone(), p).is_some() {
                return Err(Error::InvalidDistribution(format!(
                    "`{label}` listed twice"
                )));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidDistribution("no labels".into()));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Distribution { mass: map })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights<I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SubgroupLabel, f64)>,
    {
        let weights: Vec<_> = weights.into_iter().collect();
        let total: f64 = weights.iter().map(|(_, w)| *w).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Self::new(weights.into_iter().map(|(l, w)| (l, w / total)))
    }

    pub fn uniform<I>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = SubgroupLabel>,
    {
        Self::from_weights(labels.into_iter().map(|l| (l, 1.0)))
    }

    /// Mass of `label`; zero for labels outside the support.
    pub fn get(&self, label: &SubgroupLabel) -> f64 {
        self.mass.get(label).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, label: &SubgroupLabel) -> bool {
        self.mass.contains_key(label)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&SubgroupLabel, f64)> {
        self.mass.iter().map(|(l, p)| (l, *p))
    }

    pub fn labels(&self) -> impl ExactSizeIterator<Item = &SubgroupLabel> {
        self.mass.keys()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

impl TryFrom<BTreeMap<SubgroupLabel, f64>> for Distribution {
    type Error = Error;

    fn try_from(value: BTreeMap<SubgroupLabel, f64>) -> Result<Self> {
        Distribution::new(value)
    }
}

impl From<Distribution> for BTreeMap<SubgroupLabel, f64> {
    fn from(value: Distribution) -> Self {
        value.mass
    }
}

/// Share of each label among `candidates`.
pub fn empirical_distribution(
    candidates: &[Candidate],
    which: LabelSource,
) -> Result<Distribution> {
    if candidates.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut counts: BTreeMap<SubgroupLabel, usize> = BTreeMap::new();
    for c in candidates {
        *counts.entry(c.require_label(which)?.clone()).or_default() += 1;
    }
    let n = candidates.len() as f64;
    Distribution::new(counts.into_iter().map(|(l, c)| (l, c as f64 / n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> SubgroupLabel {
        SubgroupLabel::parse(s).unwrap()
    }

    fn cand(id: &str, score: f64, l: &str) -> Candidate {
        Candidate::new(id, score, label(l))
    }

    #[test]
    fn product_joins_values_in_order() {
        assert_eq!(
            subgroup_product(&["White", "Men"]).unwrap().as_str(),
            "White Men"
        );
        assert_eq!(
            subgroup_product(&["Asian", "Women"]).unwrap().as_str(),
            "Asian Women"
        );
        let single = subgroup_product(&["Black"]).unwrap();
        assert_eq!(single.as_str(), "Black");
        assert_eq!(single.parts(), ["Black"]);
    }

    #[test]
    fn product_rejects_empty_input() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            subgroup_product(&empty),
            Err(Error::InvalidLabel(_))
        ));
        assert!(matches!(
            subgroup_product(&["White", " "]),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn label_equality_is_by_canonical_string() {
        let composed = label("White").product(&label("Men"));
        assert_eq!(composed, label("White Men"));
        assert_eq!(composed.parts(), ["White", "Men"]);
    }

    #[test]
    fn empirical_distribution_counts_shares() {
        let cs = vec![
            cand("a", 0.1, "X"),
            cand("b", 0.2, "X"),
            cand("c", 0.3, "Y"),
            cand("d", 0.4, "Y"),
        ];
        let d = empirical_distribution(&cs, LabelSource::True).unwrap();
        assert_eq!(d.get(&label("X")), 0.5);
        assert_eq!(d.get(&label("Y")), 0.5);

        let one = empirical_distribution(&cs[..1], LabelSource::True).unwrap();
        assert_eq!(one.get(&label("X")), 1.0);
    }

    #[test]
    fn empirical_distribution_thirds() {
        let cs: Vec<_> = (0..3000)
            .map(|i| cand(&format!("c{i}"), 0.5, ["W", "B", "A"][i / 1000]))
            .collect();
        let d = empirical_distribution(&cs, LabelSource::True).unwrap();
        for l in ["W", "B", "A"] {
            assert!((d.get(&label(l)) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_distribution_errors() {
        assert!(matches!(
            empirical_distribution(&[], LabelSource::True),
            Err(Error::EmptyPopulation)
        ));
        let cs = vec![cand("a", 0.1, "X")];
        assert!(matches!(
            empirical_distribution(&cs, LabelSource::Inferred),
            Err(Error::MissingLabel { .. })
        ));
    }

    #[test]
    fn sort_by_score_orders_and_breaks_ties_by_id() {
        let r = sort_by_score(vec![
            cand("x", 0.2, "X"),
            cand("y", 0.9, "X"),
            cand("z", 0.5, "X"),
        ])
        .unwrap();
        let scores: Vec<f64> = r.scores().collect();
        assert_eq!(scores, [0.9, 0.5, 0.2]);

        let r = sort_by_score(vec![cand("b", 0.5, "X"), cand("a", 0.5, "X")]).unwrap();
        let ids: Vec<&str> = r.items().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);

        let again = sort_by_score(r.clone().into_items()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn sort_by_score_rejects_duplicates() {
        let err = sort_by_score(vec![cand("a", 0.5, "X"), cand("a", 0.4, "Y")]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { .. }));
    }

    #[test]
    fn original_ranking_must_be_sorted() {
        let err = Ranking::original(vec![cand("a", 0.1, "X"), cand("b", 0.4, "Y")]).unwrap_err();
        assert!(matches!(err, Error::UnsortedRanking { position: 2 }));
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new([(label("X"), 0.5), (label("Y"), 0.4)]).is_err());
        assert!(Distribution::new([(label("X"), 1.5), (label("Y"), -0.5)]).is_err());
        let d = Distribution::from_weights([(label("X"), 1.0), (label("Y"), 3.0)]).unwrap();
        assert_eq!(d.get(&label("Y")), 0.75);
        assert_eq!(d.get(&label("Z")), 0.0);
    }

    #[test]
    fn distribution_serde_roundtrip() {
        let d = Distribution::new([(label("White Men"), 0.25), (label("Black"), 0.75)]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"Black":0.75,"White Men":0.25}"#);
        let back: Distribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Distribution>(r#"{"X":0.2}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sort_is_idempotent_permutation(scores in prop::collection::vec(0.0f64..1.0, 0..40)) {
                let cs: Vec<_> = scores.iter().enumerate()
                    .map(|(i, s)| cand(&format!("c{i:02}"), (s * 8.0).round() / 8.0, "X"))
                    .collect();
                let sorted = sort_by_score(cs.clone()).unwrap();
                prop_assert!(sorted.items().windows(2).all(|w| w[0].score >= w[1].score));
                let mut a: Vec<_> = cs.iter().map(|c| c.id.clone()).collect();
                let mut b: Vec<_> = sorted.items().iter().map(|c| c.id.clone()).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
                prop_assert_eq!(sort_by_score(sorted.clone().into_items()).unwrap(), sorted);
            }

            #[test]
            fn empirical_masses_recover_counts(groups in prop::collection::vec(0usize..4, 1..60)) {
                let cs: Vec<_> = groups.iter().enumerate()
                    .map(|(i, g)| cand(&format!("c{i}"), 0.5, ["A", "B", "C", "D"][*g]))
                    .collect();
                let d = empirical_distribution(&cs, LabelSource::True).unwrap();
                let n = cs.len() as f64;
                for (l, p) in d.iter() {
                    let count = cs.iter().filter(|c| &c.true_label == l).count() as f64;
                    prop_assert!((p * n - count).abs() < 1e-9);
                }
            }
        }
    }
}
