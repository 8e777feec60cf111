mod common;

use deeptrader::exchange::{ExchangeError, LimitOrderBook, Order, PriceBounds, Side, TapeEvent};
use proptest::prelude::*;

use common::{compare_with_oracle, random_ops};

fn order(id: u64, trader: usize, side: Side, price: i64, time: f64) -> Order {
    Order { order_id: id, trader_id: trader, side, price, quantity: 1, time }
}

fn book(n: usize) -> LimitOrderBook {
    let mut b = LimitOrderBook::new(PriceBounds::default());
    for t in 0..n {
        b.register_trader(t);
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_reference_book(seed in any::<u64>(), traders in 2usize..12, n in 1usize..120) {
        let ops = random_ops(seed, traders, n);
        prop_assert_eq!(compare_with_oracle(&ops, traders), Ok(()));
    }

    #[test]
    fn book_invariants_hold(seed in any::<u64>()) {
        let ops = random_ops(seed, 8, 150);
        let mut b = book(8);
        for op in ops {
            match op {
                common::Op::Submit(o) => { b.submit_order(o).unwrap(); }
                common::Op::Cancel { trader, time } => { b.cancel_order(trader, time); }
            }
            let resting = b.resting_orders();
            let mut ids: Vec<_> = resting.iter().map(|o| o.trader_id).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), resting.len(), "one resting order per trader");
            if let (Some(bid), Some(ask)) = (b.best_bid(), b.best_ask()) {
                prop_assert!(bid < ask, "book left crossed at {} / {}", bid, ask);
            }
        }
        let times: Vec<f64> = b.tape().iter().map(TapeEvent::time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn trades_at_resting_price_with_time_priority() {
    let mut b = book(4);
    b.submit_order(order(1, 0, Side::Ask, 100, 0.0)).unwrap();
    b.submit_order(order(2, 1, Side::Ask, 100, 1.0)).unwrap();
    let ev = b.submit_order(order(3, 2, Side::Bid, 120, 2.0)).unwrap();
    let t = ev[0].as_trade().unwrap();
    assert_eq!((t.price, t.seller_id, t.buyer_id, t.aggressor), (100, 0, 2, Side::Bid));
    assert_eq!(b.best_ask(), Some(100));
    assert_eq!(b.resting_order(1).unwrap().order_id, 2);
}

#[test]
fn resubmission_replaces_and_loses_priority() {
    let mut b = book(3);
    b.submit_order(order(1, 0, Side::Bid, 90, 0.0)).unwrap();
    b.submit_order(order(2, 1, Side::Bid, 90, 1.0)).unwrap();
    let ev = b.submit_order(order(3, 0, Side::Bid, 90, 2.0)).unwrap();
    assert!(matches!(ev[0], TapeEvent::Cancel { order_id: 1, trader_id: 0, .. }));
    let ev = b.submit_order(order(4, 2, Side::Ask, 80, 3.0)).unwrap();
    assert_eq!(ev[0].as_trade().unwrap().buyer_id, 1);
}

#[test]
fn rejects_invalid_orders() {
    let mut b = book(2);
    assert!(matches!(b.submit_order(order(1, 0, Side::Bid, 0, 0.0)), Err(ExchangeError::PriceOutOfBounds { .. })));
    assert_eq!(b.submit_order(order(1, 7, Side::Bid, 10, 0.0)), Err(ExchangeError::UnknownTrader(7)));
    assert_eq!(
        b.submit_order(Order { quantity: 0, ..order(1, 0, Side::Bid, 10, 0.0) }),
        Err(ExchangeError::ZeroQuantity)
    );
    b.submit_order(order(5, 0, Side::Bid, 10, 1.0)).unwrap();
    assert!(matches!(b.submit_order(order(5, 1, Side::Ask, 20, 1.0)), Err(ExchangeError::OrderIdNotIncreasing { .. })));
    assert!(matches!(b.submit_order(order(6, 1, Side::Ask, 20, 0.5)), Err(ExchangeError::TimeWentBackwards { .. })));
    assert!(b.tape().is_empty());
}

#[test]
fn cancel_without_resting_order_is_a_noop() {
    let mut b = book(1);
    assert_eq!(b.cancel_order(0, 1.0), None);
    assert!(b.tape().is_empty());
}

#[test]
fn level2_aggregates_depth() {
    let mut b = book(4);
    b.submit_order(Order { quantity: 2, ..order(1, 0, Side::Bid, 90, 0.0) }).unwrap();
    b.submit_order(order(2, 1, Side::Bid, 90, 0.0)).unwrap();
    b.submit_order(order(3, 2, Side::Bid, 85, 0.0)).unwrap();
    b.submit_order(order(4, 3, Side::Ask, 95, 0.0)).unwrap();
    let v = b.publish_level2(1.0);
    assert_eq!(v.bid_levels, vec![(90, 3), (85, 1)]);
    assert_eq!(v.ask_levels, vec![(95, 1)]);
    assert_eq!(v.spread(), Some(5));
    assert_eq!(v.total_bid_qty(), 4);
}
