//! Planners that do not learn: the sliding-window greedy, a uniformly random
//! policy, and an exhaustive minimum-section search for small orders.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{decode_action, reset, EnvState};
use crate::error::{Error, Result};
use crate::plan::{fabric_used, CutPlan, Order, Section};

/// Greedy sectioning: each section takes the lowest-indexed sizes that still
/// have demand, one garment each, for as long as they fit on the board, and is
/// spread to the smallest remaining demand among them.
///
/// On the six-size reference order this yields the plies 78, 73, 63, 36, 16,
/// 57 with a sliding window of sizes.
pub fn greedy_plan(order: &Order) -> CutPlan {
    // Equal scores make decode_action fall back to index order.
    let flat = vec![0.0; order.n_sizes()];
    let mut state = reset(order);
    let mut plan = CutPlan::default();
    while !state.fulfilled() {
        let section = decode_action(&flat, &state, order).expect("demand remains");
        apply(&mut state, &section);
        plan.push(section);
    }
    plan
}

fn apply(state: &mut EnvState, section: &Section) {
    for (left, made) in state.remaining.iter_mut().zip(section.garments()) {
        *left = left.saturating_sub(made);
    }
    state.step_index += 1;
}

/// Result of [`random_plan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPlan {
    pub plan: CutPlan,
    /// False when the section cap was hit before demand was met.
    pub fulfilled: bool,
}

/// Decodes uniformly random score vectors until the order is met or
/// `4 * n_sizes` sections have been cut.
pub fn random_plan(order: &Order, seed: u64) -> RandomPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = order.n_sizes();
    let mut state = reset(order);
    let mut plan = CutPlan::default();
    while !state.fulfilled() && plan.len() < 4 * n {
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let section = decode_action(&scores, &state, order).expect("demand remains");
        apply(&mut state, &section);
        plan.push(section);
    }
    RandomPlan {
        plan,
        fulfilled: state.fulfilled(),
    }
}

/// Limits for [`oracle_min_sections`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    /// Refuse orders whose demand lattice `Π (d_s + 1)` is larger than this,
    /// unless a node budget is given.
    pub max_states: u64,
    /// Hard cap on search nodes.
    pub max_nodes: Option<u64>,
    /// Restrict markers to at most one garment per size.
    pub zero_one: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_states: 10_000_000,
            max_nodes: None,
            zero_one: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub min_sections: usize,
    pub witness: CutPlan,
    pub nodes_explored: u64,
    pub fabric_used: f64,
}

/// Exact minimum number of sections that meets demand exactly.
///
/// Iterative deepening over the section budget. Two reductions keep the
/// search small without losing optimality:
///
/// * sections commute, so the next section is required to cover the
///   lowest-indexed size that still has demand;
/// * a `(remaining, budget)` pair proven infeasible is never expanded again.
///
/// Counts are enumerated in descending lexicographic order and plies in
/// descending order, so the witness is the first plan met in that order.
pub fn oracle_min_sections(order: &Order, limits: &OracleLimits) -> Result<OracleResult> {
    let lattice = order
        .demands()
        .iter()
        .fold(1u64, |acc, &d| acc.saturating_mul(d.saturating_add(1)));
    if lattice > limits.max_states && limits.max_nodes.is_none() {
        return Err(Error::BudgetExceeded(format!(
            "demand lattice has {lattice} states (limit {}); pass a node budget to search anyway",
            limits.max_states
        )));
    }

    let mut search = Search::new(order, limits);
    let mut remaining = order.demands().to_vec();
    let upper = remaining.iter().filter(|&&d| d > 0).count();
    let lower = search.lower_bound(&remaining);
    for budget in lower..=upper {
        let mut path = Vec::with_capacity(budget);
        if search.dfs(&mut remaining, budget, &mut path)? {
            let witness = CutPlan::new(path);
            let fabric = fabric_used(&witness, order)?;
            return Ok(OracleResult {
                min_sections: budget,
                witness,
                nodes_explored: search.nodes,
                fabric_used: fabric,
            });
        }
    }
    unreachable!("the greedy plan meets demand within {upper} sections")
}

struct Search<'a> {
    order: &'a Order,
    zero_one: bool,
    max_nodes: Option<u64>,
    nodes: u64,
    /// Largest budget known to be insufficient for a remaining-demand vector.
    failed: HashMap<Vec<u64>, usize>,
    /// Most sizes any single marker can hold.
    max_sizes_per_marker: usize,
}

impl<'a> Search<'a> {
    fn new(order: &'a Order, limits: &OracleLimits) -> Self {
        let mut markers: Vec<f64> = order.sizes().iter().map(|s| s.marker_len).collect();
        markers.sort_by(f64::total_cmp);
        let mut used = 0.0;
        let mut max_sizes_per_marker = 0;
        for m in markers {
            if !order.fits(used + m) {
                break;
            }
            used += m;
            max_sizes_per_marker += 1;
        }
        Search {
            order,
            zero_one: limits.zero_one,
            max_nodes: limits.max_nodes,
            nodes: 0,
            failed: HashMap::new(),
            max_sizes_per_marker: max_sizes_per_marker.max(1),
        }
    }

    fn lower_bound(&self, remaining: &[u64]) -> usize {
        let open = remaining.iter().filter(|&&r| r > 0).count();
        open.div_ceil(self.max_sizes_per_marker)
    }

    fn dfs(&mut self, remaining: &mut Vec<u64>, budget: usize, path: &mut Vec<Section>) -> Result<bool> {
        let Some(first) = remaining.iter().position(|&r| r > 0) else {
            return Ok(true);
        };
        if budget == 0 || self.lower_bound(remaining) > budget {
            return Ok(false);
        }
        if self.failed.get(remaining.as_slice()).is_some_and(|&b| b >= budget) {
            return Ok(false);
        }
        self.nodes += 1;
        if let Some(cap) = self.max_nodes {
            if self.nodes > cap {
                return Err(Error::BudgetExceeded(format!(
                    "oracle explored more than {cap} nodes"
                )));
            }
        }

        for counts in self.markers(remaining, first) {
            let most = counts
                .iter()
                .zip(remaining.iter())
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &r)| r / c as u64)
                .min()
                .unwrap_or(0);
            for plies in (1..=most).rev() {
                let section = Section::new(plies, counts.clone());
                for (r, g) in remaining.iter_mut().zip(section.garments()) {
                    *r -= g;
                }
                path.push(section);
                let found = self.dfs(remaining, budget - 1, path)?;
                let section = path.pop().expect("pushed above");
                for (r, g) in remaining.iter_mut().zip(section.garments()) {
                    *r += g;
                }
                if found {
                    path.push(section);
                    return Ok(true);
                }
            }
        }
        let entry = self.failed.entry(remaining.clone()).or_insert(0);
        *entry = (*entry).max(budget);
        Ok(false)
    }

    /// Board-feasible count vectors covering `first`, in descending
    /// lexicographic order. Sizes without demand get count zero.
    fn markers(&self, remaining: &[u64], first: usize) -> Vec<Vec<u32>> {
        let n = remaining.len();
        let mut out = Vec::new();
        let mut counts = vec![0u32; n];
        self.fill(remaining, first, 0, 0.0, &mut counts, &mut out);
        out
    }

    fn fill(
        &self,
        remaining: &[u64],
        first: usize,
        i: usize,
        used: f64,
        counts: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if i == remaining.len() {
            out.push(counts.clone());
            return;
        }
        let marker = self.order.sizes()[i].marker_len;
        let by_board = ((self.order.board_len() - used) / marker + 1e-9).floor().max(0.0) as u64;
        let mut top = remaining[i].min(by_board);
        if self.zero_one {
            top = top.min(1);
        }
        let bottom = u64::from(i == first);
        for c in (bottom..=top).rev() {
            let next = used + c as f64 * marker;
            if !self.order.fits(next) {
                continue;
            }
            counts[i] = c as u32;
            self.fill(remaining, first, i + 1, next, counts, out);
        }
        counts[i] = 0;
    }
}
