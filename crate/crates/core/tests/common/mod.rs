#![allow(dead_code)]

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use sbbmarket_core::{Market, Money, Recipe};

pub const RECIPES: [&[usize]; 5] = [&[1, 1], &[1, 2], &[2, 1], &[1, 1, 1], &[2, 2, 3]];
pub const ONES: [&[usize]; 3] = [&[1, 1], &[1, 1, 1], &[1, 1, 1, 1]];

const NAMES: [&str; 5] = ["buyer", "seller", "mediator", "carrier", "broker"];

/// Value range of category `g`: sellers in `[-scale, -1]`, buyers scaled so
/// that a deal's expected value is about zero.
pub fn value_range(recipe: &[usize], g: usize, scale: i64) -> (i64, i64) {
    if g == 0 {
        let sellers: usize = recipe[1..].iter().sum();
        (1, (scale * sellers as i64 / recipe[0] as i64).max(1))
    } else {
        (-scale, -1)
    }
}

pub fn build(recipe: &[usize], values: Vec<Vec<i64>>, order: Vec<usize>) -> Market {
    let names = &NAMES[..recipe.len()];
    let values: Vec<Vec<Money>> = values
        .into_iter()
        .map(|vs| vs.into_iter().map(Money::from_int).collect())
        .collect();
    Market::from_values(names, recipe, &values)
        .unwrap()
        .with_category_order(order)
        .unwrap()
}

fn random_values<R: Rng>(rng: &mut R, recipe: &[usize], counts: &[usize], scale: i64) -> (Vec<Vec<i64>>, Vec<usize>) {
    let values = (0..recipe.len())
        .map(|g| {
            let (lo, hi) = value_range(recipe, g, scale);
            let width = (hi - lo + 1) as usize;
            sample(rng, width, counts[g].min(width)).into_iter().map(|i| lo + i as i64).collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..recipe.len()).collect();
    order.shuffle(rng);
    (values, order)
}

/// Random market with the given number of agents per category, distinct
/// values inside each category and a random processing order.
pub fn market_with_counts<R: Rng>(rng: &mut R, recipe: &[usize], counts: &[usize], scale: i64) -> Market {
    let (values, order) = random_values(rng, recipe, counts, scale);
    build(recipe, values, order)
}

/// Random market with up to `max_per_category` agents per category.
pub fn random_market<R: Rng>(rng: &mut R, recipe: &[usize], max_per_category: usize, scale: i64) -> Market {
    let counts: Vec<usize> = recipe.iter().map(|_| rng.random_range(0..=max_per_category)).collect();
    market_with_counts(rng, recipe, &counts, scale)
}

/// Like [`random_market`], but buyers are odd and sellers even, so with a
/// recipe of ones no combination of one agent per category sums to zero.
pub fn random_generic_market<R: Rng>(rng: &mut R, recipe: &[usize], max_per_category: usize, scale: i64) -> Market {
    let counts: Vec<usize> = recipe.iter().map(|_| rng.random_range(0..=max_per_category)).collect();
    let (values, order) = random_values(rng, recipe, &counts, scale);
    let values = values
        .into_iter()
        .enumerate()
        .map(|(g, vs)| vs.into_iter().map(|v| if g == 0 { 2 * v - 1 } else { 2 * v }).collect())
        .collect();
    build(recipe, values, order)
}

fn category_values(recipe: &'static [usize], g: usize, max: usize, generic: bool) -> BoxedStrategy<Vec<i64>> {
    let (lo, hi) = value_range(recipe, g, 100);
    prop::collection::btree_set(lo..=hi, 0..=max)
        .prop_map(move |s| {
            s.into_iter()
                .map(|v| match (generic, g) {
                    (false, _) => v,
                    (true, 0) => 2 * v - 1,
                    (true, _) => 2 * v,
                })
                .collect()
        })
        .boxed()
}

fn market_from(recipes: &'static [&'static [usize]], max: usize, generic: bool) -> impl Strategy<Value = Market> {
    (0..recipes.len())
        .prop_flat_map(move |i| {
            let recipe = recipes[i];
            let cats: Vec<_> = (0..recipe.len()).map(|g| category_values(recipe, g, max, generic)).collect();
            let order = Just((0..recipe.len()).collect::<Vec<_>>()).prop_shuffle();
            (Just(recipe), cats, order)
        })
        .prop_map(|(recipe, values, order)| build(recipe, values, order))
}

pub fn any_market(max_per_category: usize) -> impl Strategy<Value = Market> {
    market_from(&RECIPES, max_per_category, false)
}

pub fn generic_ones_market(max_per_category: usize) -> impl Strategy<Value = Market> {
    market_from(&ONES, max_per_category, true)
}

/// Markets small enough for the exhaustive oracles.
pub fn small_market(max_agents: usize) -> impl Strategy<Value = Market> {
    market_from(&RECIPES, 6, false).prop_filter("too many agents", move |m| m.agents.len() <= max_agents)
}

pub fn recipe(counts: &[usize]) -> Recipe {
    Recipe::new(counts.to_vec()).unwrap()
}
