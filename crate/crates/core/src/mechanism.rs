use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ascending::{clock, run_ascending};
use crate::engine::TraderPools;
use crate::error::{Error, Result};
use crate::market::{Market, Outcome};
use crate::mcafee::run_mcafee_market;
use crate::reduction::{reduce, run_reduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// External-competition trade reduction.
    Extcomp,
    /// Ascending-prices clock.
    Ascprice,
    Mcafee,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Mcafee, Mechanism::Extcomp, Mechanism::Ascprice];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Extcomp => "extcomp",
            Mechanism::Ascprice => "ascprice",
            Mechanism::Mcafee => "mcafee",
        }
    }

    pub fn is_budget_balanced(self) -> bool {
        !matches!(self, Mechanism::Mcafee)
    }

    /// Prices and trader pools before the lottery. Only the SBB mechanisms
    /// have this shape.
    pub fn allocate(self, market: &Market) -> Result<TraderPools> {
        match self {
            Mechanism::Extcomp => Ok(reduce(market)?.pools),
            Mechanism::Ascprice => Ok(clock(market)?.pools),
            Mechanism::Mcafee => Err(Error::Unsupported("McAfee's auction has no trader pools".into())),
        }
    }

    pub fn run<R: Rng + ?Sized>(self, market: &Market, rng: &mut R) -> Result<Outcome> {
        match self {
            Mechanism::Extcomp => Ok(run_reduction(market, rng)?.1),
            Mechanism::Ascprice => Ok(run_ascending(market, rng)?.1),
            Mechanism::Mcafee => Ok(run_mcafee_market(market)?.1),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extcomp" => Ok(Mechanism::Extcomp),
            "ascprice" => Ok(Mechanism::Ascprice),
            "mcafee" => Ok(Mechanism::Mcafee),
            other => Err(Error::Parse(format!("unknown mechanism {other:?}"))),
        }
    }
}
