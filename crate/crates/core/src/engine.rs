//! Procurement-set construction and the lottery that turns surviving trader
//! pools into concrete deals. Shared by every SBB mechanism.

use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::market::{rank_order, Agent, Market, Outcome, ProcurementSet, Recipe};
use crate::money::Money;

/// All complete procurement sets built greedily from the top of each
/// category, ordered by ascending GFT.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcurementSetTable {
    pub sets: Vec<ProcurementSet>,
    /// Number of constructed sets.
    pub w: usize,
    /// Number of sets with strictly positive GFT.
    pub k: usize,
    /// Agents that fit in no complete set, in rank order per category.
    pub remaining: Vec<Agent>,
}

impl ProcurementSetTable {
    /// The sets with positive GFT, i.e. the optimal trade.
    pub fn optimal_sets(&self) -> &[ProcurementSet] {
        &self.sets[self.w - self.k..]
    }
}

pub fn build_table(market: &Market) -> ProcurementSetTable {
    let recipe = &market.recipe;
    let ranked = market.ranked_by_category();
    let w = ranked
        .iter()
        .zip(recipe.counts())
        .map(|(agents, &r)| agents.len() / r)
        .min()
        .unwrap_or(0);

    let mut blocks: Vec<(usize, ProcurementSet)> = (0..w)
        .map(|j| {
            let members = ranked
                .iter()
                .zip(recipe.counts())
                .flat_map(|(agents, &r)| agents[j * r..(j + 1) * r].iter().cloned())
                .collect();
            (j, ProcurementSet::new(members))
        })
        .collect();
    // Blocks lower in the ranking never have a larger GFT, so on equal GFT the
    // later block comes first and the order stays the reversed block order.
    blocks.sort_by(|(ja, a), (jb, b)| a.gft.cmp(&b.gft).then(Reverse(ja).cmp(&Reverse(jb))));
    let sets: Vec<ProcurementSet> = blocks.into_iter().map(|(_, s)| s).collect();
    let k = sets.iter().filter(|s| s.gft.is_positive()).count();

    let remaining = ranked
        .iter()
        .zip(recipe.counts())
        .flat_map(|(agents, &r)| agents[w * r..].iter().cloned())
        .collect();

    ProcurementSetTable {
        sets,
        w,
        k,
        remaining,
    }
}

/// Total GFT of the optimal trade.
pub fn optimal_gft(table: &ProcurementSetTable) -> Money {
    table
        .sets
        .iter()
        .filter(|s| s.gft.is_positive())
        .map(|s| &s.gft)
        .sum()
}

/// Members of `set` in the order the reduction visits them: categories in the
/// market's processing order, lowest-ranked agent first inside a category.
pub fn processing_order(set: &ProcurementSet, market: &Market) -> Vec<Agent> {
    let mut out = Vec::with_capacity(set.members.len());
    for &g in &market.category_order {
        let mut members: Vec<Agent> = set.in_category(g).cloned().collect();
        members.sort_by(|a, b| rank_order(b, a));
        out.extend(members);
    }
    out
}

/// Processing order of the lowest-GFT set.
pub fn s1_processing_order(table: &ProcurementSetTable, market: &Market) -> Result<Vec<Agent>> {
    let first = table.sets.first().ok_or(Error::EmptyTable)?;
    Ok(processing_order(first, market))
}

/// Surviving agents per category, the prices they face, and how many deals
/// they can fill.
#[derive(Clone, Debug, PartialEq)]
pub struct TraderPools {
    pub recipe: Recipe,
    /// Per category, in rank order.
    pub pools: Vec<Vec<Agent>>,
    /// Empty when the mechanism decided not to trade.
    pub prices: Vec<Money>,
    pub deal_count: usize,
}

impl TraderPools {
    pub fn new(recipe: Recipe, mut pools: Vec<Vec<Agent>>, prices: Vec<Money>) -> Self {
        for p in &mut pools {
            p.sort_by(rank_order);
        }
        let deal_count = pools
            .iter()
            .zip(recipe.counts())
            .map(|(p, &r)| p.len() / r)
            .min()
            .unwrap_or(0);
        TraderPools {
            recipe,
            pools,
            prices,
            deal_count,
        }
    }

    pub fn empty(recipe: Recipe) -> Self {
        let n = recipe.len();
        TraderPools {
            recipe,
            pools: vec![Vec::new(); n],
            prices: Vec::new(),
            deal_count: 0,
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.pools.iter().flatten().any(|a| a.id == id)
    }

    /// Probability that a member of `category`'s pool is drawn by the lottery.
    pub fn inclusion_probability(&self, category: usize) -> Money {
        let size = self.pools[category].len();
        if size == 0 || self.deal_count == 0 {
            return Money::zero();
        }
        Money::new((self.recipe.get(category) * self.deal_count) as i64, size as i64)
    }

    /// Probability that the agent `id` ends up trading.
    pub fn trade_probability(&self, id: &str) -> Money {
        self.pools
            .iter()
            .position(|p| p.iter().any(|a| a.id == id))
            .map(|g| self.inclusion_probability(g))
            .unwrap_or_else(Money::zero)
    }
}

/// Exact expectation, over the lottery, of the GFT of the realised deals.
pub fn expected_gft(pools: &TraderPools) -> Money {
    if pools.deal_count == 0 {
        return Money::zero();
    }
    pools
        .pools
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
        .map(|(g, p)| {
            let total: Money = p.iter().map(|a| &a.value).sum();
            total * pools.inclusion_probability(g)
        })
        .sum()
}

/// Runs the lottery and assembles the deals. Every trading agent of category
/// `g` pays `prices[g]`; all other agents of `market` pay zero.
pub fn finalize<R: Rng + ?Sized>(pools: &TraderPools, market: &Market, rng: &mut R) -> Outcome {
    let mut outcome = Outcome::no_trade(market);
    let d = pools.deal_count;
    if d == 0 {
        return outcome;
    }
    let recipe = &pools.recipe;
    let mut chosen: Vec<Vec<Agent>> = Vec::with_capacity(pools.pools.len());
    for (g, pool) in pools.pools.iter().enumerate() {
        let quota = recipe.get(g) * d;
        let mut pool = pool.clone();
        if pool.len() > quota {
            pool.shuffle(rng);
            pool.truncate(quota);
        }
        chosen.push(pool);
    }
    outcome.deals = (0..d)
        .map(|j| {
            let members = chosen
                .iter()
                .zip(recipe.counts())
                .flat_map(|(c, &r)| c[j * r..(j + 1) * r].iter().cloned())
                .collect();
            ProcurementSet::new(members)
        })
        .collect();
    for deal in &outcome.deals {
        for a in &deal.members {
            outcome.payments.insert(a.id.clone(), pools.prices[a.category].clone());
        }
    }
    outcome.prices = pools.prices.clone();
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn values(agents: &[Agent]) -> Vec<Money> {
        agents.iter().map(|a| a.value.clone()).collect()
    }

    fn ints(v: &[i64]) -> Vec<Money> {
        v.iter().map(|&x| Money::from_int(x)).collect()
    }

    #[test]
    fn table_for_one_two_recipe() {
        let t = build_table(&fixtures::two_category());
        assert_eq!((t.w, t.k), (4, 3));
        let gfts: Vec<Money> = t.sets.iter().map(|s| s.gft.clone()).collect();
        assert_eq!(gfts, ints(&[-9, 1, 7, 14]));
        assert_eq!(values(&t.sets[0].members), ints(&[9, -8, -10]));
        assert_eq!(values(&t.sets[1].members), ints(&[13, -5, -7]));
        assert_eq!(values(&t.sets[2].members), ints(&[14, -3, -4]));
        assert_eq!(values(&t.sets[3].members), ints(&[17, -1, -2]));
        assert_eq!(values(&t.remaining), ints(&[6, -11]));
        assert_eq!(optimal_gft(&t), 22);
    }

    #[test]
    fn table_for_223_recipe() {
        let t = build_table(&fixtures::three_category_223());
        assert_eq!((t.w, t.k), (2, 2));
        assert_eq!(t.sets[0].gft, 3);
        assert_eq!(t.sets[1].gft, 20);
        assert_eq!(values(&t.remaining), ints(&[13, 12, 10, 6, -7, -8, -9, -10, -7, -8]));
    }

    #[test]
    fn three_sided_table() {
        let t = build_table(&fixtures::three_sided());
        assert_eq!((t.w, t.k), (5, 3));
        assert_eq!(optimal_gft(&t), 26);
        assert!(t.remaining.is_empty());
    }

    #[test]
    fn empty_market_table() {
        let m = Market::from_values(&["b", "s"], &[1, 1], &[vec![], vec![]]).unwrap();
        let t = build_table(&m);
        assert_eq!((t.w, t.k), (0, 0));
        assert_eq!(optimal_gft(&t), 0);
        assert!(matches!(s1_processing_order(&t, &m), Err(Error::EmptyTable)));
    }

    #[test]
    fn first_set_processing_orders() {
        let m = fixtures::two_category();
        let order = s1_processing_order(&build_table(&m), &m).unwrap();
        assert_eq!(values(&order), ints(&[9, -10, -8]));

        let m = fixtures::three_category_223();
        let order = s1_processing_order(&build_table(&m), &m).unwrap();
        assert_eq!(values(&order), ints(&[14, 15, -6, -5, -6, -5, -4]));

        let m = fixtures::buyer_heavy_32();
        let order = s1_processing_order(&build_table(&m), &m).unwrap();
        assert_eq!(values(&order), ints(&[1, 2, 9, -8, -6]));

        let m = fixtures::two_category().with_category_order(vec![1, 0]).unwrap();
        let order = s1_processing_order(&build_table(&m), &m).unwrap();
        assert_eq!(values(&order), ints(&[-10, -8, 9]));
    }

    fn pools_from(market: &Market, ids: &[&[i64]], prices: Vec<Money>) -> TraderPools {
        let ranked = market.ranked_by_category();
        let pools = ids
            .iter()
            .enumerate()
            .map(|(g, vals)| {
                vals.iter()
                    .map(|v| {
                        ranked[g]
                            .iter()
                            .find(|a| a.value == *v)
                            .expect("value present")
                            .clone()
                    })
                    .collect()
            })
            .collect();
        TraderPools::new(market.recipe.clone(), pools, prices)
    }

    #[test]
    fn finalize_three_sided_pools() {
        let m = fixtures::three_sided();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -4, -5], &[-1, -3, -4]], ints(&[13, -6, -7]));
        assert_eq!(pools.deal_count, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = finalize(&pools, &m, &mut rng);
        assert_eq!(out.deals.len(), 2);
        assert!(out.deals.iter().all(|d| d.conforms_to(&m.recipe)));
        let traders = out.trading_ids();
        assert!(traders.contains("buyer_0") && traders.contains("buyer_1"));
        assert_eq!(traders.len(), 6);
        assert_eq!(out.total_payments(), 0);
        for deal in &out.deals {
            let s: Money = deal.members.iter().map(|a| &out.payments[&a.id]).sum();
            assert_eq!(s, 0);
        }
        assert_eq!(out.payments["buyer_4"], 0);
    }

    #[test]
    fn finalize_one_two_pools() {
        let m = fixtures::two_category();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -2, -3, -4, -5]], vec![13.into(), Money::new(-13, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = finalize(&pools, &m, &mut rng);
        assert_eq!(out.deals.len(), 2);
        let sellers: Vec<_> = out.trading_ids().into_iter().filter(|id| id.starts_with("seller")).collect();
        assert_eq!(sellers.len(), 4);
        for id in sellers {
            assert_eq!(out.payments[id], Money::new(-13, 2));
        }
    }

    #[test]
    fn finalize_empty_category_means_no_trade() {
        let m = fixtures::two_category();
        let pools = pools_from(&m, &[&[17, 14], &[]], vec![13.into(), Money::new(-13, 2)]);
        assert_eq!(pools.deal_count, 0);
        let out = finalize(&pools, &m, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(!out.traded());
        assert_eq!(expected_gft(&pools), 0);
    }

    #[test]
    fn expected_gft_three_sided() {
        let m = fixtures::three_sided();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -4, -5], &[-1, -3, -4]], ints(&[13, -6, -7]));
        assert_eq!(expected_gft(&pools), 19);
    }

    #[test]
    fn expected_gft_without_lottery_is_pool_gft() {
        let m = fixtures::two_category();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -2, -3, -4]], vec![13.into(), Money::new(-13, 2)]);
        assert_eq!(expected_gft(&pools), 17 + 14 - 1 - 2 - 3 - 4);
    }

    #[test]
    fn lottery_mean_matches_expectation() {
        let m = fixtures::three_sided();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -4, -5], &[-1, -3, -4]], ints(&[13, -6, -7]));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for _ in 0..draws {
            let g = finalize(&pools, &m, &mut rng).realized_gft().to_f64();
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 19.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn lottery_selection_is_uniform() {
        // Chi-square over the five sellers of the (1,2) pools: 4 of 5 drawn.
        let m = fixtures::two_category();
        let pools = pools_from(&m, &[&[17, 14], &[-1, -2, -3, -4, -5]], vec![13.into(), Money::new(-13, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 10_000;
        let mut counts = std::collections::HashMap::<String, usize>::new();
        for _ in 0..draws {
            for id in finalize(&pools, &m, &mut rng).trading_ids() {
                *counts.entry(id.to_string()).or_default() += 1;
            }
        }
        let expected = draws as f64 * 4.0 / 5.0;
        let chi2: f64 = pools.pools[1]
            .iter()
            .map(|a| {
                let o = counts[&a.id] as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // 4 degrees of freedom, 99.9% quantile.
        assert!(chi2 < 18.47, "chi2 {chi2}");
        assert_eq!(counts["buyer_0"], draws);
    }
}
