//! Independent oracles and property checks for the mechanisms.
//!
//! Nothing here shares code with the greedy paths it checks: the optimal
//! trade is found by enumerating agent subsets, competitions by enumerating
//! representatives, and thresholds by sweeping an agent's report.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::ascending::AscendingResult;
use crate::engine::{expected_gft, TraderPools};
use crate::error::{Error, Result};
use crate::market::{Agent, Market, Outcome, Recipe};
use crate::money::Money;
use crate::reduction::ReductionResult;

/// Largest market (or remaining market) the exhaustive searches accept.
pub const BRUTE_FORCE_LIMIT: usize = 14;

/// `(k, OPT)`: the maximum total GFT over all trades, and the largest deal
/// count among the maximisers.
///
/// A set of agents is the union of some trade exactly when every category
/// contributes `m * r_g` agents for a common `m`, so enumerating subsets
/// enumerates trades.
pub fn brute_force_optimal_trade(market: &Market) -> Result<(usize, Money)> {
    let n = market.agents.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            what: "market",
            actual: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let recipe = market.recipe.counts();
    let mut best = (0usize, Money::zero());
    let mut counts = vec![0usize; recipe.len()];
    for mask in 1u32..(1 << n) {
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, a) in market.agents.iter().enumerate() {
            if mask & (1 << i) != 0 {
                counts[a.category] += 1;
            }
        }
        if !counts[0].is_multiple_of(recipe[0]) {
            continue;
        }
        let m = counts[0] / recipe[0];
        if m == 0 || counts.iter().zip(recipe).any(|(&c, &r)| c != m * r) {
            continue;
        }
        let total: Money = market
            .agents
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| &a.value)
            .sum();
        if total > best.1 || (total == best.1 && m > best.0) {
            best = (m, total);
        }
    }
    Ok(best)
}

/// Largest duplicated GFT over every choice of one representative per other
/// category, if it is non-negative.
pub fn brute_force_competition(candidate: &Agent, remaining: &[Vec<Agent>], recipe: &Recipe) -> Result<Option<Money>> {
    let total: usize = remaining.iter().map(Vec::len).sum();
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            what: "remaining market",
            actual: total,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let own = candidate.value.times(recipe.get(candidate.category));
    let mut partial = vec![own];
    for (g, agents) in remaining.iter().enumerate() {
        if g == candidate.category {
            continue;
        }
        partial = partial
            .iter()
            .flat_map(|p| agents.iter().map(move |a| p + a.value.times(recipe.get(g))))
            .collect();
    }
    Ok(partial.into_iter().max().filter(|m| !m.is_negative()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub agent: String,
    pub trades_at_truth: bool,
    /// Lowest report at which the agent keeps a chance to trade.
    pub threshold: Option<Money>,
    pub payment: Option<Money>,
    pub monotone: bool,
    /// Best expected-utility improvement from any probed misreport.
    pub max_gain_from_lying: Money,
    pub grid_step: Money,
    pub tolerance: Money,
}

impl ProbeReport {
    pub fn payment_matches_threshold(&self) -> bool {
        match (&self.payment, &self.threshold) {
            (Some(p), Some(t)) => (p - t).abs() <= self.tolerance,
            (None, _) => true,
            (Some(_), None) => false,
        }
    }

    pub fn truthful(&self) -> bool {
        self.monotone && self.payment_matches_threshold() && self.max_gain_from_lying <= self.tolerance
    }
}

struct ProbePoint {
    member: bool,
    price: Money,
    inclusion: Money,
}

/// Sweeps `agent_id`'s report over the market's value range (padded by half
/// the span on both sides) and checks that trading is monotone in the
/// report, that the payment equals the membership threshold, and that no
/// misreport raises expected utility. `grid` defaults to 1/100 of the span;
/// the threshold is refined by bisection to 10^-6 of the span.
pub fn threshold_probe<F>(market: &Market, mechanism: F, agent_id: &str, grid: Option<Money>) -> Result<ProbeReport>
where
    F: Fn(&Market) -> Result<TraderPools>,
{
    let index = market
        .agent_index(agent_id)
        .ok_or_else(|| Error::UnknownAgent(agent_id.to_string()))?;
    let category = market.agents[index].category;
    let truth = market.agents[index].value.clone();
    let span = market.value_span();
    let step = grid.unwrap_or_else(|| span.over(100));
    let tolerance = span.over(1_000_000);

    let eval = |report: &Money| -> Result<ProbePoint> {
        let pools = mechanism(&market.with_value(index, report.clone()))?;
        let member = pools.deal_count > 0 && pools.pools[category].iter().any(|a| a.id == agent_id);
        Ok(ProbePoint {
            member,
            price: pools.prices.get(category).cloned().unwrap_or_else(Money::zero),
            inclusion: if member { pools.inclusion_probability(category) } else { Money::zero() },
        })
    };
    let utility = |p: &ProbePoint| -> Money {
        if p.member {
            &p.inclusion * &(&truth - &p.price)
        } else {
            Money::zero()
        }
    };

    let at_truth = eval(&truth)?;
    let truthful_utility = utility(&at_truth);
    let mut max_gain = Money::zero();

    let lo = market.agents.iter().map(|a| &a.value).min().cloned().unwrap_or_default() - span.over(2);
    let hi = market.agents.iter().map(|a| &a.value).max().cloned().unwrap_or_default() + span.over(2);
    let mut sweep: Vec<(Money, bool)> = Vec::new();
    let mut x = lo;
    while x <= hi {
        let p = eval(&x)?;
        max_gain = max_gain.max(utility(&p) - &truthful_utility);
        sweep.push((x.clone(), p.member));
        x += &step;
    }

    let monotone = sweep.windows(2).all(|w| !w[0].1 || w[1].1);
    let threshold = match sweep.iter().position(|(_, member)| *member) {
        None => None,
        Some(first) => {
            let mut above = sweep[first].0.clone();
            let mut below = None;
            if first > 0 {
                below = Some(sweep[first - 1].0.clone());
            } else {
                // Member across the whole sweep: the threshold lies further down.
                let mut reach = span.clone();
                for _ in 0..64 {
                    let x = &above - &reach;
                    let p = eval(&x)?;
                    max_gain = max_gain.max(utility(&p) - &truthful_utility);
                    if !p.member {
                        below = Some(x);
                        break;
                    }
                    above = x;
                    reach = reach.times(2);
                }
            }
            match below {
                None => None,
                Some(mut below) => {
                    while &above - &below > tolerance {
                        let mid = (&below + &above).over(2);
                        let p = eval(&mid)?;
                        max_gain = max_gain.max(utility(&p) - &truthful_utility);
                        if p.member {
                            above = mid;
                        } else {
                            below = mid;
                        }
                    }
                    Some(above)
                }
            }
        }
    };

    Ok(ProbeReport {
        agent: agent_id.to_string(),
        trades_at_truth: at_truth.member,
        threshold,
        payment: at_truth.member.then_some(at_truth.price),
        monotone,
        max_gain_from_lying: max_gain,
        grid_step: step,
        tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum PropertyViolation {
    PaymentsDoNotBalance { total: Money },
    DealDoesNotBalance { deal: usize, total: Money },
    NotIndividuallyRational { agent: String, value: Money, payment: Money },
    CompetitionAboveSet { category: usize, representative: Money, best_member: Money },
    NegativeSetSurvivors { set_index: usize, survivors: usize, size: usize },
    NoPivot { k: usize },
    CountOutsideBracket { final_c: usize, k: usize },
    PoolOutsideBracket { category: usize, size: usize, final_c: usize },
    ExitSemantics { agent: String, value: Money, price: Money },
    GftBelowBound { expected: Money, opt: Money, k: usize },
}

impl fmt::Display for PropertyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

impl std::error::Error for PropertyViolation {}

pub type Check = std::result::Result<(), PropertyViolation>;

/// Payments sum to zero overall and inside every deal.
pub fn assert_sbb(outcome: &Outcome) -> Check {
    let total = outcome.total_payments();
    if !total.is_zero() {
        return Err(PropertyViolation::PaymentsDoNotBalance { total });
    }
    for (i, deal) in outcome.deals.iter().enumerate() {
        let total: Money = deal
            .members
            .iter()
            .map(|a| outcome.payments.get(&a.id).cloned().unwrap_or_default())
            .sum();
        if !total.is_zero() {
            return Err(PropertyViolation::DealDoesNotBalance { deal: i, total });
        }
    }
    Ok(())
}

/// No agent ends up with negative utility.
pub fn assert_ir(outcome: &Outcome, market: &Market) -> Check {
    let traders = outcome.trading_ids();
    for a in &market.agents {
        let payment = outcome.payments.get(&a.id).cloned().unwrap_or_default();
        let utility = if traders.contains(a.id.as_str()) {
            &a.value - &payment
        } else {
            -&payment
        };
        if utility.is_negative() {
            return Err(PropertyViolation::NotIndividuallyRational {
                agent: a.id.clone(),
                value: a.value.clone(),
                payment,
            });
        }
    }
    Ok(())
}

/// When the optimal trade is non-empty, the reduction finds a pivot.
pub fn check_pivot_found(result: &ReductionResult) -> Check {
    if result.table.k >= 1 && !result.traded {
        return Err(PropertyViolation::NoPivot { k: result.table.k });
    }
    Ok(())
}

/// For every non-pivot category, the competition's representative is worth
/// no more than the best member of the pivot's set in that category. With
/// one agent per category this is the classic comparison between the
/// competition and the first set; summing `r_g` times the per-category
/// inequality gives the weighted form.
pub fn check_competition_below_set(result: &ReductionResult) -> Check {
    let (Some(pivot), Some(comp)) = (&result.pivot, &result.competition) else {
        return Ok(());
    };
    let set = &result.table.sets[pivot.set_index];
    for (g, rep) in comp.representatives.iter().enumerate() {
        if g == pivot.category {
            continue;
        }
        let best_member = set
            .in_category(g)
            .map(|a| &a.value)
            .max()
            .cloned()
            .unwrap_or_default();
        if rep.value > best_member {
            return Err(PropertyViolation::CompetitionAboveSet {
                category: g,
                representative: rep.value.clone(),
                best_member,
            });
        }
    }
    Ok(())
}

/// Either no agent of a negative-GFT set survives the reduction, or the
/// survivors are a strict subset of the highest-GFT negative set.
pub fn check_negative_sets_dropped(result: &ReductionResult) -> Check {
    let pooled: HashSet<&str> = result.pools.pools.iter().flatten().map(|a| a.id.as_str()).collect();
    let negative: Vec<usize> = (0..result.table.sets.len())
        .filter(|&j| result.table.sets[j].gft.is_negative())
        .collect();
    let highest = negative.iter().copied().max_by(|&a, &b| {
        result.table.sets[a].gft.cmp(&result.table.sets[b].gft).then(a.cmp(&b))
    });
    for &j in &negative {
        let set = &result.table.sets[j];
        let survivors = set.members.iter().filter(|a| pooled.contains(a.id.as_str())).count();
        if survivors == 0 {
            continue;
        }
        if Some(j) != highest || survivors == set.members.len() {
            return Err(PropertyViolation::NegativeSetSurvivors {
                set_index: j,
                survivors,
                size: set.members.len(),
            });
        }
    }
    Ok(())
}

/// Final-count bracket of the clock: `c* <= k <= c* + 1`, and each pool holds
/// between `r_g c*` and `r_g (c* + 1)` agents.
pub fn check_bracket(result: &AscendingResult, k: usize) -> Check {
    let c = result.final_c;
    if k < c || k > c + 1 {
        return Err(PropertyViolation::CountOutsideBracket { final_c: c, k });
    }
    if result.halted {
        for (g, pool) in result.pools.pools.iter().enumerate() {
            let r = result.pools.recipe.get(g);
            if pool.len() < r * c || pool.len() > r * (c + 1) {
                return Err(PropertyViolation::PoolOutsideBracket {
                    category: g,
                    size: pool.len(),
                    final_c: c,
                });
            }
        }
    }
    Ok(())
}

/// Survivors are strictly above their price; every exited agent is at or
/// below the price at which it left.
pub fn check_exit_semantics(result: &AscendingResult, market: &Market) -> Check {
    for (g, active) in result.state.active.iter().enumerate() {
        if let Some(price) = &result.state.prices[g] {
            if let Some(a) = active.iter().find(|a| a.value <= *price) {
                return Err(PropertyViolation::ExitSemantics {
                    agent: a.id.clone(),
                    value: a.value.clone(),
                    price: price.clone(),
                });
            }
        }
    }
    for event in &result.state.round_log {
        let Some(price) = &event.price else { continue };
        for id in &event.exited {
            let agent = &market.agents[market.agent_index(id).expect("exited agent exists")];
            if agent.value > *price {
                return Err(PropertyViolation::ExitSemantics {
                    agent: id.clone(),
                    value: agent.value.clone(),
                    price: price.clone(),
                });
            }
        }
    }
    Ok(())
}

/// `E[GFT] >= (k - 1) / (k + extra) * OPT`; `extra` is 0 for the reduction
/// auction and 1 for the clock.
pub fn check_gft_bound(pools: &TraderPools, k: usize, opt: &Money, extra: usize) -> Check {
    let expected = expected_gft(pools);
    if k == 0 {
        return if expected.is_negative() {
            Err(PropertyViolation::GftBelowBound {
                expected,
                opt: opt.clone(),
                k,
            })
        } else {
            Ok(())
        };
    }
    if expected.times(k + extra) < opt.times(k - 1) {
        return Err(PropertyViolation::GftBelowBound {
            expected,
            opt: opt.clone(),
            k,
        });
    }
    Ok(())
}
