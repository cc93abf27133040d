//! Order in which versions enter the progressive alignment.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CostConfig, FeatureSequence};
use crate::multiscale::{msdtw, MultiscaleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStrategy {
    #[default]
    LengthAscending,
    LengthDescending,
    DtwCost,
    AsGiven,
}

impl OrderStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderStrategy::LengthAscending => "length-ascending",
            OrderStrategy::LengthDescending => "length-descending",
            OrderStrategy::DtwCost => "dtw-cost",
            OrderStrategy::AsGiven => "as-given",
        }
    }
}

impl fmt::Display for OrderStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length-ascending" | "length" => Ok(OrderStrategy::LengthAscending),
            "length-descending" => Ok(OrderStrategy::LengthDescending),
            "dtw-cost" => Ok(OrderStrategy::DtwCost),
            "as-given" => Ok(OrderStrategy::AsGiven),
            other => Err(Error::Config(format!(
                "unknown order strategy {other:?} (expected length-ascending, length-descending, dtw-cost or as-given)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPlan {
    /// 0-based version indices in the order they are aligned.
    pub permutation: Vec<usize>,
    pub strategy: OrderStrategy,
    /// Symmetric matrix of pairwise average costs (dtw-cost only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pairwise_avg_costs: Option<Vec<Vec<f64>>>,
}

impl OrderPlan {
    /// Labels in plan order.
    pub fn labels<'a>(&self, versions: &'a [FeatureSequence]) -> Vec<&'a str> {
        self.permutation.iter().map(|&i| versions[i].label()).collect()
    }
}

fn non_empty(versions: &[FeatureSequence]) -> Result<()> {
    if versions.is_empty() {
        Err(Error::Invalid("no versions to order".into()))
    } else {
        Ok(())
    }
}

/// Shortest first; equal lengths by label.
pub fn length_order(versions: &[FeatureSequence]) -> Result<OrderPlan> {
    length_order_by(versions, false)
}

/// Longest first; equal lengths by label.
pub fn length_order_descending(versions: &[FeatureSequence]) -> Result<OrderPlan> {
    length_order_by(versions, true)
}

fn length_order_by(versions: &[FeatureSequence], descending: bool) -> Result<OrderPlan> {
    non_empty(versions)?;
    let mut perm: Vec<usize> = (0..versions.len()).collect();
    perm.sort_by(|&a, &b| {
        let by_len = versions[a].len().cmp(&versions[b].len());
        let by_len = if descending { by_len.reverse() } else { by_len };
        by_len.then_with(|| versions[a].label().cmp(versions[b].label()))
    });
    Ok(OrderPlan {
        permutation: perm,
        strategy: if descending {
            OrderStrategy::LengthDescending
        } else {
            OrderStrategy::LengthAscending
        },
        pairwise_avg_costs: None,
    })
}

pub fn as_given_order(versions: &[FeatureSequence]) -> Result<OrderPlan> {
    non_empty(versions)?;
    Ok(OrderPlan {
        permutation: (0..versions.len()).collect(),
        strategy: OrderStrategy::AsGiven,
        pairwise_avg_costs: None,
    })
}

/// Average costs of all pairwise alignments, computed in parallel. Each
/// unordered pair is aligned once and mirrored.
pub fn pairwise_average_costs(
    versions: &[FeatureSequence],
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<Vec<Vec<f64>>> {
    let k = versions.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let costs: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| msdtw(&versions[i], &versions[j], cfg, ms).map(|p| p.average_cost()))
        .collect::<Result<_>>()?;
    let mut matrix = vec![vec![0.0; k]; k];
    for (&(i, j), &c) in pairs.iter().zip(&costs) {
        matrix[i][j] = c;
        matrix[j][i] = c;
    }
    Ok(matrix)
}

/// Greedy order from a precomputed average-cost matrix: the cheapest pair
/// first, then repeatedly the version with the smallest summed cost to all
/// versions already chosen. Ties go to the smaller label.
pub fn greedy_order(costs: &[Vec<f64>], labels: &[&str]) -> Result<Vec<usize>> {
    let k = labels.len();
    if k < 2 {
        return Err(Error::Invalid("cost-based ordering needs at least two versions".into()));
    }
    if costs.len() != k || costs.iter().any(|r| r.len() != k) {
        return Err(Error::Invalid(format!("cost matrix must be {k}x{k}")));
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..k {
        for j in i + 1..k {
            // Within a pair, the smaller label leads.
            let (a, b) = if labels[j] < labels[i] { (j, i) } else { (i, j) };
            let better = match best {
                None => true,
                Some((c, ba, bb)) => match costs[a][b].total_cmp(&c) {
                    Ordering::Less => true,
                    Ordering::Equal => (labels[a], labels[b]) < (labels[ba], labels[bb]),
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((costs[a][b], a, b));
            }
        }
    }
    let (_, a, b) = best.expect("k >= 2");
    let mut order = vec![a, b];
    let mut chosen = vec![false; k];
    chosen[a] = true;
    chosen[b] = true;
    while order.len() < k {
        let mut pick: Option<(f64, usize)> = None;
        for c in (0..k).filter(|&c| !chosen[c]) {
            let score: f64 = order.iter().map(|&o| costs[c][o]).sum();
            let better = match pick {
                None => true,
                Some((s, p)) => match score.total_cmp(&s) {
                    Ordering::Less => true,
                    Ordering::Equal => labels[c] < labels[p],
                    Ordering::Greater => false,
                },
            };
            if better {
                pick = Some((score, c));
            }
        }
        let (_, c) = pick.expect("an unchosen version remains");
        chosen[c] = true;
        order.push(c);
    }
    Ok(order)
}

pub fn dtw_cost_order(versions: &[FeatureSequence], cfg: &CostConfig, ms: &MultiscaleConfig) -> Result<OrderPlan> {
    if versions.len() < 2 {
        return Err(Error::Invalid("cost-based ordering needs at least two versions".into()));
    }
    let costs = pairwise_average_costs(versions, cfg, ms)?;
    let labels: Vec<&str> = versions.iter().map(|v| v.label()).collect();
    let permutation = greedy_order(&costs, &labels)?;
    Ok(OrderPlan {
        permutation,
        strategy: OrderStrategy::DtwCost,
        pairwise_avg_costs: Some(costs),
    })
}

/// Dispatches on `strategy`. `ms` only affects the pairwise phase of
/// dtw-cost ordering.
pub fn order_versions(
    versions: &[FeatureSequence],
    strategy: OrderStrategy,
    cfg: &CostConfig,
    ms: &MultiscaleConfig,
) -> Result<OrderPlan> {
    match strategy {
        OrderStrategy::LengthAscending => length_order(versions),
        OrderStrategy::LengthDescending => length_order_descending(versions),
        OrderStrategy::DtwCost => dtw_cost_order(versions, cfg, ms),
        OrderStrategy::AsGiven => as_given_order(versions),
    }
}
