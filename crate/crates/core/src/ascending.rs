//! Ascending-prices (clock) auction.
//!
//! Prices rise one category at a time in the market's processing order. The
//! continuous ascent is simulated by events: a price jumps either to the next
//! exit value or to the point where the recipe-weighted price sum hits zero,
//! whichever comes first.

use rand::Rng;
use serde::Serialize;

use crate::engine::{finalize, TraderPools};
use crate::error::Result;
use crate::market::{Agent, Market, Outcome};
use crate::money::Money;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    /// Initial thinning down to `c_min` deals.
    Init,
    Exit,
    Halt,
    /// All categories handled for the current target; it drops by one.
    Decrement,
    NoTrade,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundEvent {
    pub kind: RoundKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<Money>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exited: Vec<String>,
    pub c: usize,
    /// Tied exits left fewer than `r_g * c` agents.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub undershoot: bool,
}

/// Clock state. A price of `None` is the initial minus-infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockState {
    pub prices: Vec<Option<Money>>,
    /// Per category, in rank order.
    pub active: Vec<Vec<Agent>>,
    pub c: usize,
    pub round_log: Vec<RoundEvent>,
}

impl ClockState {
    /// Recipe-weighted sum of all prices except `skip`; `None` while any of
    /// them is still at minus infinity.
    fn weighted_sum_except(&self, market: &Market, skip: usize) -> Option<Money> {
        let mut total = Money::zero();
        for (g, p) in self.prices.iter().enumerate() {
            if g != skip {
                total += p.as_ref()?.times(market.recipe.get(g));
            }
        }
        Some(total)
    }

    /// Raises category `g`'s price and drops every agent whose value is at
    /// or below it.
    fn raise(&mut self, g: usize, price: Money) -> Vec<String> {
        let keep = self.active[g].partition_point(|a| a.value > price);
        let exited = self.active[g].split_off(keep);
        self.prices[g] = Some(price);
        exited.into_iter().map(|a| a.id).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscendingResult {
    pub pools: TraderPools,
    pub state: ClockState,
    /// Target deal count when the clock stopped (zero after a no-trade end).
    pub final_c: usize,
    pub halted: bool,
    pub halt_category: Option<usize>,
}

impl AscendingResult {
    pub fn prices(&self) -> &[Money] {
        &self.pools.prices
    }
}

/// Thins every category down to at most `c_min` deals' worth of agents.
pub fn initialize(market: &Market) -> ClockState {
    let recipe = &market.recipe;
    let active = market.ranked_by_category();
    let c_min = active
        .iter()
        .zip(recipe.counts())
        .map(|(a, &r)| a.len() / r)
        .min()
        .unwrap_or(0);
    let mut state = ClockState {
        prices: vec![None; market.num_categories()],
        active,
        c: c_min,
        round_log: Vec::new(),
    };
    if c_min == 0 {
        state.round_log.push(RoundEvent {
            kind: RoundKind::NoTrade,
            category: None,
            price: None,
            exited: Vec::new(),
            c: 0,
            undershoot: false,
        });
        return state;
    }
    for g in 0..market.num_categories() {
        let r = recipe.get(g);
        // Largest head count with floor(count / r) == c_min.
        let keep = r * c_min + r - 1;
        if state.active[g].len() > keep {
            let price = state.active[g][keep].value.clone();
            let exited = state.raise(g, price.clone());
            state.round_log.push(RoundEvent {
                kind: RoundKind::Init,
                category: Some(g),
                price: Some(price),
                exited,
                c: c_min,
                undershoot: state.active[g].len() < r * c_min,
            });
        }
    }
    state
}

/// Deterministic part of the clock auction.
pub fn clock(market: &Market) -> Result<AscendingResult> {
    market.check()?;
    let recipe = &market.recipe;
    let mut state = initialize(market);

    // The last pass runs with c = 0: every category is squeezed until it
    // either halts or empties.
    while state.round_log.last().is_none_or(|e| e.kind != RoundKind::NoTrade) {
        let c = state.c;
        for &g in &market.category_order {
            let r = recipe.get(g);
            let target = r * c;
            if state.active[g].len() <= target {
                continue;
            }
            let exit_value = state.active[g][target].value.clone();
            let zero_sum = state
                .weighted_sum_except(market, g)
                .map(|others| (-others).over(r));
            match zero_sum {
                Some(t) if t <= exit_value => {
                    debug_assert!(state.prices[g].as_ref().is_none_or(|p| *p <= t));
                    let exited = state.raise(g, t.clone());
                    state.round_log.push(RoundEvent {
                        kind: RoundKind::Halt,
                        category: Some(g),
                        price: Some(t),
                        exited,
                        c,
                        undershoot: false,
                    });
                    let prices = state.prices.iter().map(|p| p.clone().expect("all prices finite at halt")).collect();
                    return Ok(AscendingResult {
                        pools: TraderPools::new(recipe.clone(), state.active.clone(), prices),
                        state,
                        final_c: c,
                        halted: true,
                        halt_category: Some(g),
                    });
                }
                _ => {
                    let exited = state.raise(g, exit_value.clone());
                    let undershoot = state.active[g].len() < target;
                    state.round_log.push(RoundEvent {
                        kind: RoundKind::Exit,
                        category: Some(g),
                        price: Some(exit_value),
                        exited,
                        c,
                        undershoot,
                    });
                    if state.active[g].is_empty() {
                        break;
                    }
                }
            }
        }
        if c == 0 || state.active.iter().any(Vec::is_empty) {
            state.c = 0;
            state.round_log.push(RoundEvent {
                kind: RoundKind::NoTrade,
                category: None,
                price: None,
                exited: Vec::new(),
                c: 0,
                undershoot: false,
            });
            break;
        }
        state.c -= 1;
        state.round_log.push(RoundEvent {
            kind: RoundKind::Decrement,
            category: None,
            price: None,
            exited: Vec::new(),
            c: state.c,
            undershoot: false,
        });
    }

    Ok(AscendingResult {
        pools: TraderPools::empty(recipe.clone()),
        state,
        final_c: 0,
        halted: false,
        halt_category: None,
    })
}

/// Full auction: clock followed by the lottery.
pub fn run_ascending<R: Rng + ?Sized>(market: &Market, rng: &mut R) -> Result<(AscendingResult, Outcome)> {
    let result = clock(market)?;
    let outcome = finalize(&result.pools, market, rng);
    Ok((result, outcome))
}
