//! External-competition auction: sequential trade reduction over the
//! procurement sets, lowest GFT first, until some agent has an external
//! competition. That agent's category balances the prices.

use rand::Rng;
use serde::Serialize;

use crate::engine::{build_table, finalize, processing_order, ProcurementSetTable, TraderPools};
use crate::error::Result;
use crate::market::{rank_order, Agent, Market, Outcome, Recipe};
use crate::money::Money;

/// Representatives that, each duplicated `r_g` times, complete a deal with
/// the candidate. `representatives[g_o]` is the candidate itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExternalCompetition {
    pub representatives: Vec<Agent>,
    pub gft_duplicated: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pivot {
    pub agent: Agent,
    pub category: usize,
    /// Position of the pivot's set in the ascending table.
    pub set_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReductionEvent {
    Removed {
        agent: String,
        category: usize,
        set_index: usize,
        /// Best duplicated GFT found; absent when some other category had no
        /// representative at all.
        best_gft: Option<Money>,
    },
    Pivot {
        agent: String,
        category: usize,
        set_index: usize,
        competition: Vec<String>,
        gft: Money,
        prices: Vec<Money>,
    },
    NoPivot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionResult {
    pub table: ProcurementSetTable,
    pub pools: TraderPools,
    pub pivot: Option<Pivot>,
    pub competition: Option<ExternalCompetition>,
    /// Removed agents in removal order.
    pub removed: Vec<Agent>,
    pub traded: bool,
    pub trace: Vec<ReductionEvent>,
}

impl ReductionResult {
    pub fn prices(&self) -> &[Money] {
        &self.pools.prices
    }
}

/// Duplicated GFT of the candidate together with one representative per
/// other category, regardless of sign. `None` if a representative is missing.
fn duplicated(candidate: &Agent, reps: &[Option<&Agent>], recipe: &Recipe) -> Option<(Vec<Agent>, Money)> {
    let mut members = Vec::with_capacity(reps.len());
    let mut total = Money::zero();
    for (g, rep) in reps.iter().enumerate() {
        let agent = if g == candidate.category {
            candidate
        } else {
            (*rep)?
        };
        total += agent.value.times(recipe.get(g));
        members.push(agent.clone());
    }
    Some((members, total))
}

/// Best external competition for `candidate`, drawing one representative per
/// other category from `remaining` (indexed by category). Taking the top
/// agent of each category maximises the duplicated GFT.
pub fn best_external_competition(
    candidate: &Agent,
    remaining: &[Vec<Agent>],
    recipe: &Recipe,
) -> Option<ExternalCompetition> {
    let reps: Vec<Option<&Agent>> = remaining
        .iter()
        .map(|agents| agents.iter().min_by(|a, b| rank_order(a, b)))
        .collect();
    competition_from(candidate, &reps, recipe)
}

fn competition_from(candidate: &Agent, reps: &[Option<&Agent>], recipe: &Recipe) -> Option<ExternalCompetition> {
    let (representatives, gft_duplicated) = duplicated(candidate, reps, recipe)?;
    (!gft_duplicated.is_negative()).then_some(ExternalCompetition {
        representatives,
        gft_duplicated,
    })
}

/// Deterministic part of the auction: prices and surviving pools.
pub fn reduce(market: &Market) -> Result<ReductionResult> {
    market.check()?;
    let recipe = &market.recipe;
    let table = build_table(market);

    // Only the top agent of each category in the remaining market matters,
    // and the remaining market only ever grows.
    let mut best: Vec<Option<Agent>> = vec![None; market.num_categories()];
    let admit = |best: &mut Vec<Option<Agent>>, a: &Agent| {
        let slot = &mut best[a.category];
        if slot.as_ref().is_none_or(|b| rank_order(a, b).is_lt()) {
            *slot = Some(a.clone());
        }
    };
    for a in &table.remaining {
        admit(&mut best, a);
    }

    let mut removed = Vec::new();
    let mut trace = Vec::new();
    for (set_index, set) in table.sets.iter().enumerate() {
        for candidate in processing_order(set, market) {
            let reps: Vec<Option<&Agent>> = best.iter().map(Option::as_ref).collect();
            let attempt = duplicated(&candidate, &reps, recipe);
            match attempt {
                Some((representatives, gft)) if !gft.is_negative() => {
                    let g_o = candidate.category;
                    let others: Money = representatives
                        .iter()
                        .enumerate()
                        .filter(|&(g, _)| g != g_o)
                        .map(|(g, a)| a.value.times(recipe.get(g)))
                        .sum();
                    let prices: Vec<Money> = representatives
                        .iter()
                        .enumerate()
                        .map(|(g, a)| {
                            if g == g_o {
                                (-&others).over(recipe.get(g_o))
                            } else {
                                a.value.clone()
                            }
                        })
                        .collect();
                    trace.push(ReductionEvent::Pivot {
                        agent: candidate.id.clone(),
                        category: g_o,
                        set_index,
                        competition: representatives.iter().map(|a| a.id.clone()).collect(),
                        gft: gft.clone(),
                        prices: prices.clone(),
                    });

                    // Earlier sets are fully removed; only the current one is partial.
                    let mut pools = vec![Vec::new(); market.num_categories()];
                    for a in &set.members {
                        if !removed.iter().rev().any(|r: &Agent| r.id == a.id) {
                            pools[a.category].push(a.clone());
                        }
                    }
                    for a in table.sets[set_index + 1..].iter().flat_map(|s| &s.members) {
                        pools[a.category].push(a.clone());
                    }
                    return Ok(ReductionResult {
                        pools: TraderPools::new(recipe.clone(), pools, prices),
                        pivot: Some(Pivot {
                            agent: candidate,
                            category: g_o,
                            set_index,
                        }),
                        competition: Some(ExternalCompetition {
                            representatives,
                            gft_duplicated: gft,
                        }),
                        removed,
                        traded: true,
                        trace,
                        table,
                    });
                }
                _ => {
                    trace.push(ReductionEvent::Removed {
                        agent: candidate.id.clone(),
                        category: candidate.category,
                        set_index,
                        best_gft: attempt.map(|(_, g)| g),
                    });
                    admit(&mut best, &candidate);
                    removed.push(candidate);
                }
            }
        }
    }

    trace.push(ReductionEvent::NoPivot);
    Ok(ReductionResult {
        pools: TraderPools::empty(recipe.clone()),
        pivot: None,
        competition: None,
        removed,
        traded: false,
        trace,
        table,
    })
}

/// Full auction: reduction followed by the lottery.
pub fn run_reduction<R: Rng + ?Sized>(market: &Market, rng: &mut R) -> Result<(ReductionResult, Outcome)> {
    let result = reduce(market)?;
    let outcome = finalize(&result.pools, market, rng);
    Ok((result, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ints(v: &[i64]) -> Vec<Money> {
        v.iter().map(|&x| Money::from_int(x)).collect()
    }

    fn removed_values(r: &ReductionResult) -> Vec<Money> {
        r.removed.iter().map(|a| a.value.clone()).collect()
    }

    fn pool_sizes(r: &ReductionResult) -> Vec<usize> {
        r.pools.pools.iter().map(Vec::len).collect()
    }

    fn lists(cats: &[&[i64]]) -> Vec<Vec<Agent>> {
        cats.iter()
            .enumerate()
            .map(|(g, vals)| {
                vals.iter()
                    .enumerate()
                    .map(|(i, &v)| Agent::new(format!("r{g}_{i}"), g, v))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn competition_examples() {
        let r12 = Recipe::new(vec![1, 2]).unwrap();
        let buyer9 = Agent::new("b", 0, 9);
        assert!(best_external_competition(&buyer9, &lists(&[&[], &[-11]]), &r12).is_none());

        let r111 = Recipe::ones(3);
        let seller = Agent::new("s", 1, -5);
        let c = best_external_competition(&seller, &lists(&[&[13, 9, 6], &[], &[-7, -10]]), &r111).unwrap();
        assert_eq!(c.gft_duplicated, 1);
        assert_eq!(c.representatives[0].value, 13);
        assert_eq!(c.representatives[1].id, "s");

        let r32 = Recipe::new(vec![3, 2]).unwrap();
        let c = best_external_competition(&buyer9, &lists(&[&[], &[-10, -12]]), &r32).unwrap();
        assert_eq!(c.gft_duplicated, 7);
    }

    #[test]
    fn competition_needs_every_other_category() {
        let r = Recipe::ones(3);
        assert!(best_external_competition(&Agent::new("b", 0, 100), &lists(&[&[], &[-1], &[]]), &r).is_none());
    }

    #[test]
    fn three_sided_example() {
        let r = reduce(&fixtures::three_sided()).unwrap();
        assert!(r.traded);
        assert_eq!(r.prices(), ints(&[13, -6, -7]).as_slice());
        let pivot = r.pivot.as_ref().unwrap();
        assert_eq!((pivot.agent.value.clone(), pivot.category), (Money::from_int(-5), 1));
        assert_eq!(pool_sizes(&r), vec![2, 3, 3]);
        assert_eq!(r.pools.deal_count, 2);
        // Buyer 13 is the last removal before the pivot.
        assert_eq!(r.removed.last().unwrap().value, 13);
    }

    #[test]
    fn one_two_example_both_orders() {
        let m = fixtures::two_category();
        let r = reduce(&m).unwrap();
        assert_eq!(removed_values(&r), ints(&[9, -10, -8, 13, -7]));
        assert_eq!(r.prices(), &[13.into(), Money::new(-13, 2)]);
        assert_eq!(pool_sizes(&r), vec![2, 5]);
        assert_eq!(r.pools.deal_count, 2);

        let r = reduce(&m.with_category_order(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(removed_values(&r), ints(&[-10, -8, 9, -7, -5]));
        assert_eq!(r.pivot.as_ref().unwrap().agent.value, 13);
        assert_eq!(r.prices(), ints(&[10, -5]).as_slice());
        assert_eq!(pool_sizes(&r), vec![3, 4]);
        let (_, out) = run_reduction(&m.with_category_order(vec![1, 0]).unwrap(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(out.deals.len(), 2);
        let sellers = out.trading_ids().into_iter().filter(|i| i.starts_with("seller")).count();
        assert_eq!(sellers, 4);
    }

    #[test]
    fn recipe_223_both_orders() {
        let m = fixtures::three_category_223();
        let r = reduce(&m).unwrap();
        assert_eq!(removed_values(&r), ints(&[14, 15, -6, -5]));
        assert_eq!(r.prices(), &[15.into(), (-5).into(), Money::new(-20, 3)]);
        assert_eq!(pool_sizes(&r), vec![2, 2, 6]);
        assert_eq!(r.pools.deal_count, 1);

        let r = reduce(&m.with_category_order(vec![1, 2, 0]).unwrap()).unwrap();
        assert_eq!(removed_values(&r), ints(&[-6, -5, -6]));
        assert_eq!(r.prices(), &[13.into(), (-5).into(), Money::new(-16, 3)]);
        assert_eq!(pool_sizes(&r), vec![4, 2, 5]);
    }

    #[test]
    fn recipe_32_both_orders() {
        let m = fixtures::buyer_heavy_32();
        let r = reduce(&m).unwrap();
        assert_eq!(removed_values(&r), ints(&[1, 2]));
        assert_eq!(r.prices(), &[Money::new(20, 3), (-10).into()]);
        assert_eq!(pool_sizes(&r), vec![4, 4]);
        assert_eq!(r.pools.deal_count, 1);

        let r = reduce(&m.with_category_order(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(removed_values(&r), ints(&[-8, -6, 1, 2]));
        assert_eq!(r.prices(), ints(&[4, -6]).as_slice());
        assert_eq!(pool_sizes(&r), vec![4, 2]);
    }

    #[test]
    fn no_pivot_means_no_trade() {
        let m = Market::from_values(&["b", "s"], &[1, 1], &[ints(&[5, 4]), ints(&[-7])]).unwrap();
        let (r, out) = run_reduction(&m, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(!r.traded);
        assert!(r.prices().is_empty());
        assert!(!out.traded());
        assert_eq!(out.total_payments(), 0);
        assert_eq!(r.trace.last(), Some(&ReductionEvent::NoPivot));
    }

    #[test]
    fn trace_serialises_as_json_lines() {
        let r = reduce(&fixtures::two_category()).unwrap();
        let lines: Vec<String> = r.trace.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with(r#"{"event":"removed","agent":"buyer_3""#));
        assert!(lines[5].contains(r#""prices":["13","-6.5"]"#));
    }
}
