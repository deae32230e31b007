//! Monte-Carlo comparison of the mechanisms on random markets.
//!
//! Each run gets its own generator seeded from `(seed, n, run)`, and all
//! aggregation is exact, so results do not depend on scheduling or on the
//! number of worker threads.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{build_table, expected_gft, finalize, optimal_gft};
use crate::error::{Error, Result};
use crate::market::{Agent, Market, Recipe};
use crate::mcafee::run_mcafee_market;
use crate::mechanism::Mechanism;
use crate::money::Money;

/// Environment variable holding the worker count for simulations.
pub const WORKERS_ENV: &str = "SBBMARKET_WORKERS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GftMode {
    /// Exact expectation over the lottery.
    #[default]
    Expected,
    /// One sampled lottery per run.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_values: Vec<usize>,
    pub recipe: Recipe,
    pub runs: usize,
    pub seed: u64,
    /// Inclusive `(low, high)` value range per category.
    pub value_ranges: Vec<(Money, Money)>,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    /// Values are drawn from `low + j * granularity`; defaults to 1.
    #[serde(default)]
    pub granularity: Option<Money>,
    #[serde(default)]
    pub gft_mode: GftMode,
    #[serde(default)]
    pub category_order: Option<Vec<usize>>,
}

fn default_mechanisms() -> Vec<Mechanism> {
    vec![Mechanism::Extcomp, Mechanism::Ascprice]
}

impl ExperimentSpec {
    /// Category 0 holds buyers drawn from `[1, 1000 * s]`, where `s` is the
    /// number of sellers per deal; every other category holds sellers drawn
    /// from `[-1000, -1]`. The expected value of a deal is then zero.
    pub fn zero_mean(recipe: Recipe, n_values: Vec<usize>, runs: usize, seed: u64) -> Self {
        let sellers_per_deal: usize = recipe.counts()[1..].iter().sum();
        let buyer_high = Money::from_int(1000 * sellers_per_deal.max(1) as i64).over(recipe.get(0));
        let mut value_ranges = vec![(Money::from_int(1), buyer_high)];
        value_ranges.extend((1..recipe.len()).map(|_| (Money::from_int(-1000), Money::from_int(-1))));
        let mechanisms = if recipe.counts() == [1, 1] {
            Mechanism::ALL.to_vec()
        } else {
            default_mechanisms()
        };
        ExperimentSpec {
            n_values,
            recipe,
            runs,
            seed,
            value_ranges,
            mechanisms,
            granularity: None,
            gft_mode: GftMode::Expected,
            category_order: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    fn granularity(&self) -> Money {
        self.granularity.clone().unwrap_or_else(|| Money::from_int(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        Recipe::new(self.recipe.counts().to_vec()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if self.value_ranges.len() != self.recipe.len() {
            return bad(format!(
                "{} value ranges for {} categories",
                self.value_ranges.len(),
                self.recipe.len()
            ));
        }
        if let Some((g, _)) = self.value_ranges.iter().enumerate().find(|(_, (lo, hi))| lo > hi) {
            return bad(format!("value range of category {g} is empty"));
        }
        if !self.granularity().is_positive() {
            return bad("granularity must be positive".into());
        }
        if self.mechanisms.is_empty() {
            return bad("no mechanisms requested".into());
        }
        if self.mechanisms.contains(&Mechanism::Mcafee) && self.recipe.counts() != [1, 1] {
            return bad("mcafee needs recipe [1, 1]".into());
        }
        if let Some(order) = &self.category_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..self.recipe.len()).collect::<Vec<_>>() {
                return bad(format!("category order {order:?} is not a permutation"));
            }
        }
        Ok(())
    }

    fn steps(&self, g: usize) -> u64 {
        let (lo, hi) = &self.value_ranges[g];
        let span = (hi - lo) / self.granularity();
        // floor of a non-negative rational
        let floor = span.numerator() / span.denominator();
        u64::try_from(floor).expect("value range too fine for sampling")
    }

    /// The random market of run `run` at size `n`, plus the generator
    /// positioned after sampling (used for the lottery).
    pub fn sample_market(&self, n: usize, run: usize) -> (Market, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(self.seed, n, run));
        let gran = self.granularity();
        let names: Vec<String> = (0..self.recipe.len()).map(|g| format!("c{g}")).collect();
        let mut agents = Vec::new();
        for (g, name) in names.iter().enumerate() {
            let steps = self.steps(g);
            for i in 0..n * self.recipe.get(g) {
                let j = rng.random_range(0..=steps);
                let value = &self.value_ranges[g].0 + gran.times(j as usize);
                agents.push(Agent::new(format!("{name}_{i}"), g, value));
            }
        }
        let order = self.category_order.clone().unwrap_or_else(|| (0..self.recipe.len()).collect());
        let market = Market {
            categories: names,
            recipe: self.recipe.clone(),
            category_order: order,
            agents,
        };
        (market, rng)
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(seed: u64, n: usize, run: usize) -> u64 {
    mix(mix(mix(seed) ^ n as u64) ^ run as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismRecord {
    pub mechanism: Mechanism,
    /// Deals actually made (k').
    pub deals: usize,
    /// Traders' GFT: for McAfee the market GFT, excluding the auctioneer.
    pub gft: Money,
    /// McAfee only: traders' GFT plus the auctioneer's surplus.
    pub total_gft: Option<Money>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub n: usize,
    pub run: usize,
    pub k: usize,
    pub opt: Money,
    pub mechanisms: Vec<MechanismRecord>,
}

/// Runs every requested mechanism on one random market.
pub fn simulate_run(spec: &ExperimentSpec, n: usize, run: usize) -> Result<RunRecord> {
    let (market, mut rng) = spec.sample_market(n, run);
    let table = build_table(&market);
    let mut mechanisms = Vec::with_capacity(spec.mechanisms.len());
    for &mech in &spec.mechanisms {
        let record = match mech {
            Mechanism::Mcafee => {
                let (r, _) = run_mcafee_market(&market)?;
                MechanismRecord {
                    mechanism: mech,
                    deals: r.deal_count,
                    gft: r.market_gft,
                    total_gft: Some(r.total_gft),
                }
            }
            _ => {
                let pools = mech.allocate(&market)?;
                let gft = match spec.gft_mode {
                    GftMode::Expected => expected_gft(&pools),
                    GftMode::Sampled => finalize(&pools, &market, &mut rng).realized_gft(),
                };
                MechanismRecord {
                    mechanism: mech,
                    deals: pools.deal_count,
                    gft,
                    total_gft: None,
                }
            }
        };
        mechanisms.push(record);
    }
    Ok(RunRecord {
        n,
        run,
        k: table.k,
        opt: optimal_gft(&table),
        mechanisms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismSummary {
    pub mechanism: Mechanism,
    pub mean_deals: Money,
    pub mean_gft: Money,
    /// Mean of per-run `gft / OPT` (a run with OPT = 0 counts as 1).
    pub mean_ratio: Money,
    pub mean_total_gft: Option<Money>,
    pub mean_total_ratio: Option<Money>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub runs: usize,
    pub mean_k: Money,
    pub mean_opt: Money,
    pub mechanisms: Vec<MechanismSummary>,
}

impl SummaryRow {
    pub fn get(&self, mech: Mechanism) -> Option<&MechanismSummary> {
        self.mechanisms.iter().find(|m| m.mechanism == mech)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub mechanisms: Vec<Mechanism>,
    pub rows: Vec<SummaryRow>,
}

fn ratio(gft: &Money, opt: &Money) -> Money {
    gft.checked_div(opt).unwrap_or_else(|| Money::from_int(1))
}

fn mean(values: impl Iterator<Item = Money>, count: usize) -> Money {
    let total: Money = values.sum();
    if count == 0 {
        total
    } else {
        total.over(count)
    }
}

pub fn summarize(n: usize, records: &[RunRecord], mechanisms: &[Mechanism]) -> SummaryRow {
    let runs = records.len();
    let summaries = mechanisms
        .iter()
        .enumerate()
        .map(|(i, &mech)| {
            let recs = || records.iter().map(move |r| (r, &r.mechanisms[i]));
            let total = recs().all(|(_, m)| m.total_gft.is_some());
            MechanismSummary {
                mechanism: mech,
                mean_deals: mean(recs().map(|(_, m)| Money::from_int(m.deals as i64)), runs),
                mean_gft: mean(recs().map(|(_, m)| m.gft.clone()), runs),
                mean_ratio: mean(recs().map(|(r, m)| ratio(&m.gft, &r.opt)), runs),
                mean_total_gft: total.then(|| mean(recs().filter_map(|(_, m)| m.total_gft.clone()), runs)),
                mean_total_ratio: total.then(|| {
                    mean(
                        recs().filter_map(|(r, m)| m.total_gft.as_ref().map(|t| ratio(t, &r.opt))),
                        runs,
                    )
                }),
            }
        })
        .collect();
    SummaryRow {
        n,
        runs,
        mean_k: mean(records.iter().map(|r| Money::from_int(r.k as i64)), runs),
        mean_opt: mean(records.iter().map(|r| r.opt.clone()), runs),
        mechanisms: summaries,
    }
}

/// All run records for one `n`, in run order.
pub fn run_records(spec: &ExperimentSpec, n: usize) -> Result<Vec<RunRecord>> {
    (0..spec.runs)
        .into_par_iter()
        .map(|run| simulate_run(spec, n, run))
        .collect()
}

/// Runs the experiment on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.n_values.len());
    for &n in &spec.n_values {
        let records = run_records(spec, n)?;
        rows.push(summarize(n, &records, &spec.mechanisms));
    }
    Ok(ExperimentTable {
        mechanisms: spec.mechanisms.clone(),
        rows,
    })
}

/// Runs the experiment on a dedicated pool; `None` reads the worker count
/// from [`WORKERS_ENV`], falling back to rayon's default.
pub fn run_experiment_with_workers(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentTable> {
    let workers = workers.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidSpec(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GftScale {
    /// GFT as a fraction of the optimum.
    #[default]
    Ratio,
    Absolute,
}

pub fn csv_header(mechanisms: &[Mechanism]) -> Vec<String> {
    let mut cols = vec!["n".to_string(), "k".to_string()];
    for mech in Mechanism::ALL {
        if !mechanisms.contains(&mech) {
            continue;
        }
        let name = mech.name();
        cols.push(format!("{name}_k"));
        if mech == Mechanism::Mcafee {
            cols.push(format!("{name}_total_gft"));
            cols.push(format!("{name}_market_gft"));
        } else {
            cols.push(format!("{name}_gft"));
        }
    }
    cols
}

pub fn write_csv<W: Write>(table: &ExperimentTable, mut out: W, scale: GftScale) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(&table.mechanisms).join(","))?;
    let gft = |abs: &Money, rel: &Money| match scale {
        GftScale::Ratio => format!("{:.6}", rel.to_f64()),
        GftScale::Absolute => format!("{:.4}", abs.to_f64()),
    };
    for row in &table.rows {
        let mut cells = vec![row.n.to_string(), format!("{:.4}", row.mean_k.to_f64())];
        for mech in Mechanism::ALL {
            let Some(s) = row.get(mech) else { continue };
            cells.push(format!("{:.4}", s.mean_deals.to_f64()));
            if let (Some(t), Some(tr)) = (&s.mean_total_gft, &s.mean_total_ratio) {
                cells.push(gft(t, tr));
            }
            cells.push(gft(&s.mean_gft, &s.mean_ratio));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn emit_csv(table: &ExperimentTable, path: &Path, scale: GftScale) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(table, &mut buf, scale).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
