//! Small reference markets used throughout the tests, the CLI examples and
//! the Python smoke test.

use crate::market::Market;
use crate::money::Money;

fn ints(v: &[i64]) -> Vec<Money> {
    v.iter().map(|&x| Money::from_int(x)).collect()
}

/// Buyers, sellers and mediators with recipe (1,1,1), five agents each.
pub fn three_sided() -> Market {
    Market::from_values(
        &["buyer", "seller", "mediator"],
        &[1, 1, 1],
        &[
            ints(&[17, 14, 13, 9, 6]),
            ints(&[-1, -4, -5, -8, -11]),
            ints(&[-1, -3, -4, -7, -10]),
        ],
    )
    .expect("valid fixture")
}

/// One buyer and two sellers per deal.
pub fn two_category() -> Market {
    Market::from_values(
        &["buyer", "seller"],
        &[1, 2],
        &[
            ints(&[17, 14, 13, 9, 6]),
            ints(&[-1, -2, -3, -4, -5, -7, -8, -10, -11]),
        ],
    )
    .expect("valid fixture")
}

/// Recipe (2,2,3) over buyers, mediators and sellers.
pub fn three_category_223() -> Market {
    Market::from_values(
        &["buyer", "mediator", "seller"],
        &[2, 2, 3],
        &[
            ints(&[17, 16, 15, 14, 13, 12, 10, 6]),
            ints(&[-3, -4, -5, -6, -7, -8, -9, -10]),
            ints(&[-1, -2, -3, -4, -5, -6, -7, -8]),
        ],
    )
    .expect("valid fixture")
}

/// Recipe (3,2): three buyers and two sellers per deal.
pub fn buyer_heavy_32() -> Market {
    Market::from_values(
        &["buyer", "seller"],
        &[3, 2],
        &[
            ints(&[20, 18, 16, 9, 2, 1]),
            ints(&[-2, -4, -6, -8, -10, -12, -14]),
        ],
    )
    .expect("valid fixture")
}

/// All reference markets with their names.
pub fn all() -> Vec<(&'static str, Market)> {
    vec![
        ("three_sided", three_sided()),
        ("two_category", two_category()),
        ("three_category_223", three_category_223()),
        ("buyer_heavy_32", buyer_heavy_32()),
    ]
}
