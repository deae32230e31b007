//! Markets, recipes, agents and outcomes.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// How many agents of each category a single deal needs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Recipe(Vec<usize>);

impl Recipe {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Parse("recipe must have at least one entry".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Parse(format!("recipe entries must be >= 1, got {counts:?}")));
        }
        Ok(Recipe(counts))
    }

    /// Recipe of `n` ones.
    pub fn ones(n: usize) -> Self {
        Recipe(vec![1; n])
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, category: usize) -> usize {
        self.0[category]
    }

    /// Agents per deal.
    pub fn deal_size(&self) -> usize {
        self.0.iter().sum()
    }

    /// `sum_g r_g * amounts[g]`.
    pub fn weighted_sum(&self, amounts: &[Money]) -> Money {
        self.0
            .iter()
            .zip(amounts)
            .map(|(&r, m)| m.times(r))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub category: usize,
    pub value: Money,
}

impl Agent {
    pub fn new(id: impl Into<String>, category: usize, value: impl Into<Money>) -> Self {
        Agent {
            id: id.into(),
            category,
            value: value.into(),
        }
    }
}

/// Descending by value, ties by id ascending. Used for every sort and every
/// "best agent" choice in the crate.
pub fn rank_order(a: &Agent, b: &Agent) -> std::cmp::Ordering {
    b.value.cmp(&a.value).then_with(|| a.id.cmp(&b.id))
}

/// Sum of values.
pub fn gft<'a>(agents: impl IntoIterator<Item = &'a Agent>) -> Money {
    agents.into_iter().map(|a| &a.value).sum()
}

/// Quasi-linear utility `value - price`.
pub fn utility(agent: &Agent, price: &Money) -> Money {
    &agent.value - price
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Market {
    pub categories: Vec<String>,
    pub recipe: Recipe,
    pub category_order: Vec<usize>,
    pub agents: Vec<Agent>,
}

impl Market {
    /// Builds a market and rejects it if it has hard violations.
    pub fn new(
        categories: Vec<String>,
        recipe: Recipe,
        category_order: Vec<usize>,
        agents: Vec<Agent>,
    ) -> Result<Self> {
        let m = Market {
            categories,
            recipe,
            category_order,
            agents,
        };
        m.check()?;
        Ok(m)
    }

    /// Convenience constructor from per-category value lists; ids are
    /// `<category>_<index>`, and the processing order is the natural one.
    pub fn from_values(categories: &[&str], recipe: &[usize], values: &[Vec<Money>]) -> Result<Self> {
        let mut agents = Vec::new();
        for (g, vals) in values.iter().enumerate() {
            let name = categories.get(g).copied().unwrap_or("?");
            for (i, v) in vals.iter().enumerate() {
                agents.push(Agent::new(format!("{name}_{i}"), g, v.clone()));
            }
        }
        Market::new(
            categories.iter().map(|s| s.to_string()).collect(),
            Recipe::new(recipe.to_vec())?,
            (0..categories.len()).collect(),
            agents,
        )
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// Errors only; warnings such as empty categories are let through.
    pub fn check(&self) -> Result<()> {
        let errors: Vec<_> = validate_market(self)
            .into_iter()
            .filter(Violation::is_error)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMarket(errors))
        }
    }

    pub fn with_category_order(&self, order: Vec<usize>) -> Result<Market> {
        let mut m = self.clone();
        m.category_order = order;
        m.check()?;
        Ok(m)
    }

    /// Same market with one agent's reported value replaced.
    pub fn with_value(&self, agent_index: usize, value: Money) -> Market {
        let mut m = self.clone();
        m.agents[agent_index].value = value;
        m
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    /// Agents of each category, in rank order.
    pub fn ranked_by_category(&self) -> Vec<Vec<Agent>> {
        let mut out = vec![Vec::new(); self.num_categories()];
        for a in &self.agents {
            out[a.category].push(a.clone());
        }
        for v in &mut out {
            v.sort_by(rank_order);
        }
        out
    }

    pub fn category_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_categories()];
        for a in &self.agents {
            sizes[a.category] += 1;
        }
        sizes
    }

    /// `max value - min value`, or 1 for markets with fewer than two distinct values.
    pub fn value_span(&self) -> Money {
        let min = self.agents.iter().map(|a| &a.value).min();
        let max = self.agents.iter().map(|a| &a.value).max();
        match (min, max) {
            (Some(lo), Some(hi)) if hi > lo => hi - lo,
            _ => Money::from_int(1),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MarketFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let m = file.into_market()?;
        m.check()?;
        Ok(m)
    }

    /// Reads a market file without rejecting it, so that `validate` can
    /// report every violation.
    pub fn read_unchecked(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MarketFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        file.into_market()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m = Market::read_unchecked(path)?;
        m.check()?;
        Ok(m)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("market serialises")
    }
}

/// On-disk market layout. Agents may name their category by index or by name.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketFile {
    categories: Vec<String>,
    recipe: Vec<usize>,
    #[serde(default)]
    category_order: Option<Vec<usize>>,
    agents: Vec<AgentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: String,
    category: CategoryRef,
    value: Money,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CategoryRef {
    Index(usize),
    Name(String),
}

impl MarketFile {
    fn into_market(self) -> Result<Market> {
        let order = self
            .category_order
            .unwrap_or_else(|| (0..self.categories.len()).collect());
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in self.agents {
            let category = match a.category {
                CategoryRef::Index(i) => i,
                CategoryRef::Name(name) => self
                    .categories
                    .iter()
                    .position(|c| *c == name)
                    .ok_or_else(|| Error::Parse(format!("agent {:?}: unknown category {name:?}", a.id)))?,
            };
            agents.push(Agent {
                id: a.id,
                category,
                value: a.value,
            });
        }
        // Recipe entries are validated together with the rest of the market.
        Ok(Market {
            categories: self.categories,
            recipe: Recipe(self.recipe),
            category_order: order,
            agents,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoCategories,
    DuplicateId { id: String },
    BadCategory { id: String, category: usize },
    LengthMismatch { recipe: usize, categories: usize },
    ZeroRecipeEntry { category: usize },
    BadCategoryOrder { order: Vec<usize> },
    /// Warning only: the market is legal but no deal can form.
    EmptyCategory { category: String },
}

impl Violation {
    pub fn is_error(&self) -> bool {
        !matches!(self, Violation::EmptyCategory { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoCategories => write!(f, "market has no categories"),
            Violation::DuplicateId { id } => write!(f, "duplicate id {id:?}"),
            Violation::BadCategory { id, category } => {
                write!(f, "agent {id:?} has bad category index {category}")
            }
            Violation::LengthMismatch { recipe, categories } => write!(
                f,
                "length mismatch: recipe has {recipe} entries but there are {categories} categories"
            ),
            Violation::ZeroRecipeEntry { category } => {
                write!(f, "recipe entry for category {category} is zero")
            }
            Violation::BadCategoryOrder { order } => {
                write!(f, "category order {order:?} is not a permutation")
            }
            Violation::EmptyCategory { category } => write!(f, "category {category:?} is empty (warning)"),
        }
    }
}

/// Every problem with a market, errors and warnings alike.
pub fn validate_market(market: &Market) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_cat = market.categories.len();
    if n_cat == 0 {
        out.push(Violation::NoCategories);
    }
    if market.recipe.len() != n_cat {
        out.push(Violation::LengthMismatch {
            recipe: market.recipe.len(),
            categories: n_cat,
        });
    }
    for (g, &r) in market.recipe.counts().iter().enumerate() {
        if r == 0 {
            out.push(Violation::ZeroRecipeEntry { category: g });
        }
    }
    let mut seen = vec![false; n_cat];
    let is_perm = market.category_order.len() == n_cat
        && market.category_order.iter().all(|&g| {
            g < n_cat && !std::mem::replace(&mut seen[g], true)
        });
    if !is_perm {
        out.push(Violation::BadCategoryOrder {
            order: market.category_order.clone(),
        });
    }
    let mut ids = HashSet::new();
    let mut sizes = vec![0usize; n_cat];
    for a in &market.agents {
        if !ids.insert(a.id.as_str()) {
            out.push(Violation::DuplicateId { id: a.id.clone() });
        }
        if a.category >= n_cat {
            out.push(Violation::BadCategory {
                id: a.id.clone(),
                category: a.category,
            });
        } else {
            sizes[a.category] += 1;
        }
    }
    for (g, &s) in sizes.iter().enumerate() {
        if s == 0 {
            out.push(Violation::EmptyCategory {
                category: market.categories[g].clone(),
            });
        }
    }
    out
}

/// A group of agents that completes one deal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcurementSet {
    pub members: Vec<Agent>,
    pub gft: Money,
}

impl ProcurementSet {
    pub fn new(members: Vec<Agent>) -> Self {
        let gft = gft(&members);
        ProcurementSet { members, gft }
    }

    pub fn ids(&self) -> Vec<&str> {
        self.members.iter().map(|a| a.id.as_str()).collect()
    }

    pub fn in_category(&self, category: usize) -> impl Iterator<Item = &Agent> {
        self.members.iter().filter(move |a| a.category == category)
    }

    pub fn conforms_to(&self, recipe: &Recipe) -> bool {
        let mut counts = vec![0usize; recipe.len()];
        for a in &self.members {
            match counts.get_mut(a.category) {
                Some(c) => *c += 1,
                None => return false,
            }
        }
        counts == recipe.counts()
    }
}

/// Realised deals and every agent's payment. Negative payments are money
/// received. `prices` is empty when nothing traded.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Outcome {
    pub deals: Vec<ProcurementSet>,
    pub payments: IndexMap<String, Money>,
    pub prices: Vec<Money>,
}

#[derive(Serialize)]
struct OutcomeDoc<'a> {
    prices: IndexMap<&'a str, &'a Money>,
    deals: Vec<Vec<&'a str>>,
    payments: &'a IndexMap<String, Money>,
}

impl Outcome {
    /// Empty outcome: every agent pays zero.
    pub fn no_trade(market: &Market) -> Self {
        Outcome {
            deals: Vec::new(),
            payments: market
                .agents
                .iter()
                .map(|a| (a.id.clone(), Money::zero()))
                .collect(),
            prices: Vec::new(),
        }
    }

    pub fn traded(&self) -> bool {
        !self.deals.is_empty()
    }

    pub fn total_payments(&self) -> Money {
        self.payments.values().sum()
    }

    pub fn realized_gft(&self) -> Money {
        self.deals.iter().map(|d| &d.gft).sum()
    }

    pub fn trading_ids(&self) -> HashSet<&str> {
        self.deals
            .iter()
            .flat_map(|d| d.members.iter().map(|a| a.id.as_str()))
            .collect()
    }

    pub fn to_json(&self, market: &Market) -> serde_json::Value {
        let doc = OutcomeDoc {
            prices: market
                .categories
                .iter()
                .map(String::as_str)
                .zip(self.prices.iter())
                .collect(),
            deals: self.deals.iter().map(ProcurementSet::ids).collect(),
            payments: &self.payments,
        };
        serde_json::to_value(doc).expect("outcome serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn gft_examples() {
        let agents: Vec<Agent> = [17, -1, -1]
            .iter()
            .enumerate()
            .map(|(i, &v)| Agent::new(format!("a{i}"), i, v))
            .collect();
        assert_eq!(gft(&agents), 15);
        assert_eq!(gft(&[] as &[Agent]), 0);
        let agents: Vec<Agent> = [13, -5, -4]
            .iter()
            .map(|&v| Agent::new("x", 0, v))
            .collect();
        assert_eq!(gft(&agents), 4);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(utility(&Agent::new("b", 0, 17), &13.into()), 4);
        assert_eq!(
            utility(&Agent::new("s", 1, -5), &Money::new(-13, 2)),
            Money::new(3, 2)
        );
        let x = Money::new(7, 3);
        assert_eq!(utility(&Agent::new("z", 0, x.clone()), &x), 0);
        let a = Agent::new("q", 0, Money::new(-9, 4));
        assert_eq!(utility(&a, &Money::zero()), a.value);
    }

    #[test]
    fn running_example_validates() {
        assert!(validate_market(&fixtures::three_sided()).is_empty());
    }

    #[test]
    fn duplicate_ids_and_length_mismatch_are_reported() {
        let mut m = fixtures::three_sided();
        m.agents[1].id = m.agents[0].id.clone();
        let v = validate_market(&m);
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateId { .. })));
        assert!(v[0].to_string().contains("duplicate id"));

        let mut m = fixtures::three_sided();
        m.recipe = Recipe::new(vec![1, 1]).unwrap();
        let v = validate_market(&m);
        assert_eq!(v, vec![Violation::LengthMismatch { recipe: 2, categories: 3 }]);
        assert!(v[0].to_string().contains("length mismatch"));
        assert!(m.check().is_err());
    }

    #[test]
    fn bad_indices_and_orders() {
        let mut m = fixtures::three_sided();
        m.agents[0].category = 7;
        m.category_order = vec![0, 0, 1];
        let v = validate_market(&m);
        assert!(v.iter().any(|x| matches!(x, Violation::BadCategory { category: 7, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::BadCategoryOrder { .. })));
    }

    #[test]
    fn empty_category_is_only_a_warning() {
        let mut m = fixtures::three_sided();
        m.agents.retain(|a| a.category != 2);
        let v = validate_market(&m);
        assert_eq!(v.len(), 1);
        assert!(!v[0].is_error());
        assert!(m.check().is_ok());
    }

    #[test]
    fn json_roundtrip_and_category_names() {
        let text = r#"{"categories": ["buyer","seller"], "recipe": [1,2], "category_order": [1,0],
            "agents": [{"id":"b1","category":0,"value":"17"},
                       {"id":"s1","category":"seller","value":"-6.5"},
                       {"id":"s2","category":1,"value":-3}]}"#;
        let m = Market::from_json_str(text).unwrap();
        assert_eq!(m.category_order, vec![1, 0]);
        assert_eq!(m.agents[1].category, 1);
        assert_eq!(m.agents[1].value, Money::new(-13, 2));
        let back = Market::from_json_str(&m.to_json().to_string()).unwrap();
        assert_eq!(back, m);

        let bad = r#"{"categories": ["b"], "recipe": [0], "agents": []}"#;
        assert!(matches!(Market::from_json_str(bad), Err(Error::InvalidMarket(_))));
    }

    #[test]
    fn procurement_set_conformance() {
        let m = fixtures::two_category();
        let ranked = m.ranked_by_category();
        let set = ProcurementSet::new(vec![
            ranked[0][0].clone(),
            ranked[1][0].clone(),
            ranked[1][1].clone(),
        ]);
        assert!(set.conforms_to(&m.recipe));
        assert_eq!(set.gft, 14);
        let short = ProcurementSet::new(vec![ranked[0][0].clone(), ranked[1][0].clone()]);
        assert!(!short.conforms_to(&m.recipe));
    }
}
