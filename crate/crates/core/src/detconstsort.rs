//! Deterministic constrained sorting.
//!
//! The re-ranker walks a counter `k'` upward. Whenever the floor
//! `⌊p_g·k'⌋` of some group grows, that group's best remaining candidate is
//! appended and then bubbled upward past lower-scored items, as long as the
//! item it displaces may still sit one slot lower. Every slot remembers the
//! last position its occupant may hold (the `k'` at which it was inserted),
//! which is what keeps every prefix above its floor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, LabelSource, Ranking, SubgroupLabel};

const FLOOR_EPS: f64 = 1e-9;

/// `⌊p·j⌋`, robust to products such as `0.29 * 100` landing just below an integer.
pub fn floor_requirement(p: f64, j: usize) -> usize {
    (p * j as f64 + FLOOR_EPS).floor() as usize
}

fn ceil_requirement(p: f64, k: usize) -> usize {
    (p * k as f64 - FLOOR_EPS).ceil().max(0.0) as usize
}

/// How far a newly inserted candidate may bubble up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapRule {
    /// The displaced item moves from position `s-1` to `s` only if its max
    /// index is at least `s`. Output always satisfies every prefix floor.
    #[default]
    Strict,
    /// The widely circulated reference implementation's bound, one slot
    /// looser. Can push an item past its max index.
    AsPublished,
    /// No swaps: forced candidates stay where they were inserted.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Options {
    /// Label the constraints are enforced on.
    pub labels: LabelSource,
    pub swap_rule: SwapRule,
    /// Skip groups that run out of candidates instead of failing. The output
    /// may then break prefix floors or hold fewer than `k` items.
    pub allow_shortfall: bool,
}

/// Re-ranks on true labels with the strict swap rule.
pub fn detconstsort(original: &Ranking, target: &Distribution, k: usize) -> Result<Ranking> {
    detconstsort_with(original, target, k, Options::default())
}

struct Slot {
    item: usize,
    score: f64,
    max_index: usize,
}

pub fn detconstsort_with(
    original: &Ranking,
    target: &Distribution,
    k: usize,
    opts: Options,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::InvalidRank(0));
    }
    let groups: Vec<(&SubgroupLabel, f64)> = target.iter().filter(|(_, p)| *p > 0.0).collect();
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (i, c) in original.items().iter().enumerate() {
        let label = c.require_label(opts.labels)?;
        if let Some(g) = groups.iter().position(|(l, _)| *l == label) {
            pools[g].push(i);
        }
    }
    for ((label, p), pool) in groups.iter().zip(&pools) {
        let needed = ceil_requirement(*p, k);
        if pool.len() < needed && !opts.allow_shortfall {
            return Err(Error::InsufficientCandidates {
                label: (*label).clone(),
                needed,
                available: pool.len(),
            });
        }
    }

    let items = original.items();
    let mut next = vec![0usize; groups.len()];
    let mut mins = vec![0usize; groups.len()];
    let mut slots: Vec<Slot> = Vec::with_capacity(k + groups.len());
    let mut kp = 0usize;
    while slots.len() < k {
        kp += 1;
        let floors: Vec<usize> = groups
            .iter()
            .map(|(_, p)| floor_requirement(*p, kp))
            .collect();
        let mut changed: Vec<usize> = (0..groups.len())
            .filter(|&g| floors[g] > mins[g] && next[g] < pools[g].len())
            .collect();
        if changed.is_empty() && (0..groups.len()).all(|g| next[g] >= pools[g].len()) {
            if opts.allow_shortfall {
                break;
            }
            // Unreachable after the supply check above; kept as a loop guard.
            let g = (0..groups.len()).max_by_key(|&g| floors[g]).unwrap_or(0);
            return Err(Error::InsufficientCandidates {
                label: groups[g].0.clone(),
                needed: k,
                available: slots.len(),
            });
        }
        // Stable sort keeps label order among equal scores.
        changed.sort_by(|&a, &b| {
            let sa = items[pools[a][next[a]]].score;
            let sb = items[pools[b][next[b]]].score;
            sb.total_cmp(&sa)
        });
        for g in changed {
            let item = pools[g][next[g]];
            next[g] += 1;
            slots.push(Slot {
                item,
                score: items[item].score,
                max_index: kp,
            });
            bubble_up(&mut slots, opts.swap_rule);
        }
        mins = floors;
    }
    slots.truncate(k);
    Ranking::reranked(slots.into_iter().map(|s| items[s.item].clone()).collect())
}

fn bubble_up(slots: &mut [Slot], rule: SwapRule) {
    // `s` is the 0-based index of the new item; its predecessor would move
    // to 1-based position `s + 1`.
    let mut s = slots.len() - 1;
    while s > 0 {
        let allowed = match rule {
            SwapRule::Strict => slots[s - 1].max_index > s,
            SwapRule::AsPublished => slots[s - 1].max_index >= s,
            SwapRule::Disabled => false,
        };
        if !(allowed && slots[s - 1].score < slots[s].score) {
            break;
        }
        slots.swap(s - 1, s);
        s -= 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    /// First failing 1-based prefix length and the group short of its floor.
    pub violation: Option<(usize, SubgroupLabel)>,
}

/// Checks every prefix `j ≤ k` of the true labels against `⌊p_g·j⌋`.
pub fn check_feasibility(ranking: &Ranking, target: &Distribution, k: usize) -> Feasibility {
    let labels: Vec<&SubgroupLabel> = ranking.items().iter().map(|c| &c.true_label).collect();
    check_feasibility_labels(&labels, target, k)
}

pub fn check_feasibility_labels(
    labels: &[&SubgroupLabel],
    target: &Distribution,
    k: usize,
) -> Feasibility {
    let groups: Vec<(&SubgroupLabel, f64)> = target.iter().collect();
    let mut counts = vec![0usize; groups.len()];
    for j in 1..=k {
        if let Some(label) = labels.get(j - 1) {
            if let Some(g) = groups.iter().position(|(l, _)| l == label) {
                counts[g] += 1;
            }
        }
        for (g, (label, p)) in groups.iter().enumerate() {
            if counts[g] < floor_requirement(*p, j) {
                return Feasibility {
                    feasible: false,
                    violation: Some((j, (*label).clone())),
                };
            }
        }
    }
    Feasibility {
        feasible: true,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ndcg;
    use crate::model::{sort_by_score, Candidate};

    fn l(s: &str) -> SubgroupLabel {
        SubgroupLabel::parse(s).unwrap()
    }

    fn pool(items: &[(&str, f64, &str)]) -> Ranking {
        sort_by_score(
            items
                .iter()
                .map(|(id, s, g)| Candidate::new(*id, *s, l(g)))
                .collect(),
        )
        .unwrap()
    }

    fn ids(r: &Ranking) -> Vec<&str> {
        r.items().iter().map(|c| c.id.as_str()).collect()
    }

    fn half() -> Distribution {
        Distribution::uniform([l("X"), l("Y")]).unwrap()
    }

    #[test]
    fn floors_survive_float_error() {
        assert_eq!(floor_requirement(0.29, 100), 29);
        assert_eq!(floor_requirement(0.1, 30), 3);
        assert_eq!(floor_requirement(1.0 / 3.0, 3), 1);
        assert_eq!(floor_requirement(0.5, 3), 1);
    }

    #[test]
    fn worked_example() {
        let r = pool(&[
            ("X1", 0.9, "X"),
            ("X2", 0.8, "X"),
            ("Y1", 0.7, "Y"),
            ("Y2", 0.6, "Y"),
        ]);
        let out = detconstsort(&r, &half(), 4).unwrap();
        assert_eq!(ids(&out), ["X1", "Y1", "X2", "Y2"]);
        assert!(check_feasibility(&out, &half(), 4).feasible);
    }

    #[test]
    fn single_group_is_top_k() {
        let r = pool(&[
            ("a", 0.9, "X"),
            ("b", 0.5, "X"),
            ("c", 0.7, "X"),
            ("d", 0.1, "X"),
        ]);
        let only_x = Distribution::uniform([l("X")]).unwrap();
        let out = detconstsort(&r, &only_x, 3).unwrap();
        assert_eq!(ids(&out), ["a", "c", "b"]);
        assert!(check_feasibility(&out, &only_x, 3).feasible);
    }

    #[test]
    fn already_feasible_input_stays_feasible() {
        let r = pool(&[
            ("a", 0.9, "X"),
            ("b", 0.8, "Y"),
            ("c", 0.7, "X"),
            ("d", 0.6, "Y"),
        ]);
        let out = detconstsort(&r, &half(), 4).unwrap();
        assert_eq!(ids(&out), ids(&r));
    }

    #[test]
    fn k_one_takes_best_feasible() {
        let r = pool(&[("x", 0.9, "X"), ("y", 0.3, "Y")]);
        let out = detconstsort(&r, &half(), 1).unwrap();
        assert_eq!(ids(&out), ["x"]);
    }

    #[test]
    fn starving_group_is_named() {
        let r = pool(&[
            ("x1", 0.9, "X"),
            ("x2", 0.8, "X"),
            ("x3", 0.7, "X"),
            ("y1", 0.3, "Y"),
        ]);
        match detconstsort(&r, &half(), 4) {
            Err(Error::InsufficientCandidates {
                label,
                needed,
                available,
            }) => {
                assert_eq!(label, l("Y"));
                assert_eq!((needed, available), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        let absent = Distribution::uniform([l("X"), l("Z")]).unwrap();
        assert!(matches!(
            detconstsort(&r, &absent, 2),
            Err(Error::InsufficientCandidates { available: 0, .. })
        ));
    }

    #[test]
    fn inferred_labels_drive_constraints() {
        let cands = vec![
            Candidate::new("a", 0.9, l("X")).with_inferred(l("X")),
            Candidate::new("b", 0.8, l("X")).with_inferred(l("Y")),
            Candidate::new("c", 0.7, l("Y")).with_inferred(l("X")),
            Candidate::new("d", 0.6, l("Y")).with_inferred(l("Y")),
        ];
        let r = sort_by_score(cands).unwrap();
        let opts = Options {
            labels: LabelSource::Inferred,
            ..Options::default()
        };
        let out = detconstsort_with(&r, &half(), 4, opts).unwrap();
        assert_eq!(ids(&out), ["a", "b", "c", "d"]);

        let bare = pool(&[("a", 0.9, "X")]);
        assert!(matches!(
            detconstsort_with(&bare, &half(), 1, opts),
            Err(Error::MissingLabel { .. })
        ));
    }

    #[test]
    fn shortfall_skips_exhausted_groups() {
        let r = pool(&[
            ("X1", 0.9, "X"),
            ("X2", 0.8, "X"),
            ("X3", 0.7, "X"),
            ("Y1", 0.6, "Y"),
        ]);
        let opts = Options {
            allow_shortfall: true,
            ..Options::default()
        };
        let out = detconstsort_with(&r, &half(), 4, opts).unwrap();
        assert_eq!(ids(&out), ["X1", "Y1", "X2", "X3"]);
        assert_eq!(
            check_feasibility(&out, &half(), 4).violation,
            Some((4, l("Y")))
        );

        let short = detconstsort_with(&pool(&[("Y1", 0.6, "Y")]), &half(), 3, opts).unwrap();
        assert_eq!(ids(&short), ["Y1"]);
        assert!(!check_feasibility(&short, &half(), 3).feasible);
    }

    #[test]
    fn published_rule_can_break_floors() {
        // Y2 enters at k'=4 and the looser bound lets it push X1 (max index 2)
        // down to position 3.
        let r = pool(&[
            ("Y1", 0.8, "Y"),
            ("Y2", 0.75, "Y"),
            ("X1", 0.6, "X"),
            ("X2", 0.05, "X"),
        ]);
        let strict = detconstsort(&r, &half(), 4).unwrap();
        assert_eq!(ids(&strict), ["Y1", "X1", "Y2", "X2"]);
        assert!(check_feasibility(&strict, &half(), 4).feasible);

        let loose = detconstsort_with(
            &r,
            &half(),
            4,
            Options {
                swap_rule: SwapRule::AsPublished,
                ..Options::default()
            },
        )
        .unwrap();
        assert_eq!(ids(&loose), ["Y1", "Y2", "X1", "X2"]);
        assert_eq!(
            check_feasibility(&loose, &half(), 4).violation,
            Some((2, l("X")))
        );
    }

    #[test]
    fn feasibility_examples() {
        let ok = pool(&[
            ("X1", 0.9, "X"),
            ("Y1", 0.8, "Y"),
            ("X2", 0.7, "X"),
            ("Y2", 0.6, "Y"),
        ]);
        assert_eq!(
            check_feasibility(&ok, &half(), 4),
            Feasibility {
                feasible: true,
                violation: None
            }
        );
        let bad = pool(&[
            ("X1", 0.9, "X"),
            ("X2", 0.8, "X"),
            ("X3", 0.7, "X"),
            ("Y1", 0.6, "Y"),
        ]);
        assert_eq!(
            check_feasibility(&bad, &half(), 4).violation,
            Some((2, l("Y")))
        );
        let only_x = Distribution::uniform([l("X")]).unwrap();
        let xs = pool(&[("a", 0.9, "X"), ("b", 0.8, "X")]);
        assert!(check_feasibility(&xs, &only_x, 2).feasible);
    }

    #[test]
    fn swaps_never_lower_ndcg_on_example() {
        let r = pool(&[
            ("X1", 0.9, "X"),
            ("X2", 0.8, "X"),
            ("Y1", 0.7, "Y"),
            ("Y2", 0.6, "Y"),
        ]);
        let naive = detconstsort_with(
            &r,
            &half(),
            4,
            Options {
                swap_rule: SwapRule::Disabled,
                ..Options::default()
            },
        )
        .unwrap();
        let full = detconstsort(&r, &half(), 4).unwrap();
        assert!(ndcg(&full).unwrap() >= ndcg(&naive).unwrap());
    }
}
