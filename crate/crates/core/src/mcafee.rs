//! McAfee's dominant-strategy double auction for recipe (1,1). Weakly budget
//! balanced: when a deal is dropped the auctioneer keeps the spread.
//!
//! Seller values are negative; a seller's cost is minus its value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Market, Outcome, ProcurementSet};
use crate::money::Money;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McAfeeResult {
    /// Size of the optimal trade.
    pub k: usize,
    pub deal_count: usize,
    pub buyer_price: Money,
    /// Payment of each trading seller (negative: money received).
    pub seller_price: Money,
    pub auctioneer_surplus: Money,
    pub total_gft: Money,
    pub market_gft: Money,
}

impl McAfeeResult {
    fn empty(k: usize) -> Self {
        McAfeeResult {
            k,
            deal_count: 0,
            buyer_price: Money::zero(),
            seller_price: Money::zero(),
            auctioneer_surplus: Money::zero(),
            total_gft: Money::zero(),
            market_gft: Money::zero(),
        }
    }
}

/// Runs the mechanism on raw buyer and seller values (any order).
pub fn run_mcafee(buyers: &[Money], sellers: &[Money]) -> McAfeeResult {
    let mut b = buyers.to_vec();
    let mut s = sellers.to_vec();
    b.sort_by(|x, y| y.cmp(x));
    s.sort_by(|x, y| y.cmp(x));

    let k = b
        .iter()
        .zip(&s)
        .take_while(|(bj, sj)| (*bj + *sj).is_positive())
        .count();
    if k == 0 {
        return McAfeeResult::empty(0);
    }

    let (bk, sk) = (&b[k - 1], &s[k - 1]);
    let single_price = match (b.get(k), s.get(k)) {
        (Some(b_next), Some(s_next)) => {
            let p = (b_next - s_next).over(2);
            (-sk <= p && &p <= bk).then_some(p)
        }
        // No (k+1)-th pair to guess a price from.
        _ => None,
    };

    let (deal_count, buyer_price, seller_price) = match single_price {
        Some(p) => (k, p.clone(), -p),
        None => (k - 1, bk.clone(), sk.clone()),
    };
    if deal_count == 0 {
        return McAfeeResult::empty(k);
    }
    let total_gft: Money = b[..deal_count].iter().chain(&s[..deal_count]).sum();
    let auctioneer_surplus = (&buyer_price + &seller_price).times(deal_count);
    let market_gft = &total_gft - &auctioneer_surplus;
    McAfeeResult {
        k,
        deal_count,
        buyer_price,
        seller_price,
        auctioneer_surplus,
        total_gft,
        market_gft,
    }
}

/// Runs the mechanism on a two-category (1,1) market whose category 0 holds
/// the buyers and category 1 the sellers. The top `deal_count` agents of each
/// side trade; there is no randomness.
pub fn run_mcafee_market(market: &Market) -> Result<(McAfeeResult, Outcome)> {
    market.check()?;
    if market.recipe.counts() != [1, 1] {
        return Err(Error::Unsupported(format!(
            "McAfee's auction needs two categories with recipe [1, 1], got {:?}",
            market.recipe.counts()
        )));
    }
    let ranked = market.ranked_by_category();
    let values = |g: usize| ranked[g].iter().map(|a| a.value.clone()).collect::<Vec<_>>();
    let result = run_mcafee(&values(0), &values(1));

    let mut outcome = Outcome::no_trade(market);
    if result.deal_count > 0 {
        outcome.prices = vec![result.buyer_price.clone(), result.seller_price.clone()];
        for (b, s) in ranked[0].iter().zip(&ranked[1]).take(result.deal_count) {
            let deal = ProcurementSet::new(vec![b.clone(), s.clone()]);
            for a in &deal.members {
                outcome.payments.insert(a.id.clone(), outcome.prices[a.category].clone());
            }
            outcome.deals.push(deal);
        }
    }
    Ok((result, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ints(v: &[i64]) -> Vec<Money> {
        v.iter().map(|&x| Money::from_int(x)).collect()
    }

    #[test]
    fn single_price_branch() {
        // 9 + (-8) > 0, so the optimal trade has four pairs and the guessed
        // price (6 + 11) / 2 lies inside [8, 9].
        let r = run_mcafee(&ints(&[17, 14, 13, 9, 6]), &ints(&[-1, -4, -5, -8, -11]));
        assert_eq!(r.k, 4);
        assert_eq!(r.deal_count, 4);
        assert_eq!(r.buyer_price, Money::new(17, 2));
        assert_eq!(r.seller_price, Money::new(-17, 2));
        assert_eq!(r.auctioneer_surplus, 0);
        assert_eq!(r.total_gft, 35);
        assert_eq!(r.market_gft, 35);
    }

    #[test]
    fn reduction_branch_keeps_spread() {
        let r = run_mcafee(&ints(&[17, 14, 13, 12]), &ints(&[-1, -4, -5, -20]));
        assert_eq!(r.k, 3);
        // Guessed price (12 + 20) / 2 = 16 is above b_3 = 13.
        assert_eq!(r.deal_count, 2);
        assert_eq!(r.buyer_price, 13);
        assert_eq!(r.seller_price, -5);
        assert_eq!(r.auctioneer_surplus, 16);
        assert_eq!(r.total_gft, 17 + 14 - 1 - 4);
        assert_eq!(r.market_gft, &r.total_gft - &r.auctioneer_surplus);
    }

    #[test]
    fn missing_successor_drops_a_deal() {
        let r = run_mcafee(&ints(&[10]), &ints(&[-2]));
        assert_eq!((r.k, r.deal_count), (1, 0));
        assert_eq!(r.total_gft, 0);
    }

    #[test]
    fn no_profitable_pair() {
        let r = run_mcafee(&ints(&[5]), &ints(&[-7]));
        assert_eq!(r, McAfeeResult::empty(0));
    }

    #[test]
    fn zero_gft_pair_is_not_optimal() {
        let r = run_mcafee(&ints(&[5, 3]), &ints(&[-1, -3]));
        assert_eq!(r.k, 1);
    }

    #[test]
    fn market_wrapper() {
        let m = Market::from_values(
            &["buyer", "seller"],
            &[1, 1],
            &[ints(&[17, 14, 13, 12]), ints(&[-1, -4, -5, -20])],
        )
        .unwrap();
        let (r, out) = run_mcafee_market(&m).unwrap();
        assert_eq!(out.deals.len(), r.deal_count);
        assert_eq!(out.total_payments(), r.auctioneer_surplus);
        assert!(run_mcafee_market(&fixtures::two_category()).is_err());
    }
}
