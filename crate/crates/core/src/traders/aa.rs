//! Adaptive-Aggressive trader.
//!
//! Tracks an equilibrium estimate (decaying weighted average of trade
//! prices) and a market volatility figure (Smith's alpha over a short window
//! of trades). An aggressiveness value `r` in [-1, 1] selects a target price
//! on a curve through the equilibrium estimate whose curvature `theta`
//! follows volatility. After each shout, `r` moves toward the level whose
//! target would just have matched the observed price.
//!
//! This is the trader-level mechanism only; the full model has additional
//! long-run learning that is not reproduced here.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{round_for, CustomerOrder, MarketEvent, Stimulus, Strategy, StrategyTag};
use crate::exchange::{Price, Side};
use crate::metrics::smith_alpha;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AaParams {
    /// Decay of the equilibrium estimate's weights.
    pub rho: f64,
    /// Number of recent trades used for the volatility estimate.
    pub volatility_window: usize,
    /// Fraction of the gap to the target closed by each new quote is 1/eta.
    pub eta: f64,
    pub beta_r: f64,
    pub beta_theta: f64,
    pub rel_change: f64,
    pub abs_change: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_initial: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for AaParams {
    fn default() -> Self {
        Self {
            rho: 0.9,
            volatility_window: 5,
            eta: 3.0,
            beta_r: 0.5,
            beta_theta: 0.5,
            rel_change: 0.05,
            abs_change: 1.0,
            theta_min: -8.0,
            theta_max: 2.0,
            theta_initial: -3.0,
            alpha_min: 0.02,
            alpha_max: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Aa {
    side: Side,
    params: AaParams,
    r: f64,
    theta: f64,
}

/// (e^{x·theta} − 1) / (e^theta − 1), the curve shape on x ∈ [0, 1].
fn shape(x: f64, theta: f64) -> f64 {
    if theta.abs() < 1e-9 {
        x
    } else {
        (x * theta).exp_m1() / theta.exp_m1()
    }
}

/// Fraction `1/eta` of a positive gap, but at least one tick so quotes keep
/// moving after rounding.
fn approach(gap: f64, eta: f64) -> f64 {
    if gap > 0.0 {
        (gap / eta).max(1.0).min(gap)
    } else {
        gap / eta
    }
}

impl Aa {
    pub fn new(side: Side, params: AaParams) -> Self {
        let theta = params.theta_initial;
        Self { side, params, r: 0.0, theta }
    }

    pub fn aggressiveness(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Target price for aggressiveness `r`. Increasing in `r` for buyers,
    /// decreasing for sellers.
    pub fn target(&self, r: f64, limit: f64, eq: f64, max_price: f64) -> f64 {
        let th = self.theta;
        match self.side {
            Side::Bid if limit > eq => {
                if r < 0.0 {
                    eq * (1.0 - shape(-r, th))
                } else {
                    eq + (limit - eq) * shape(r, th)
                }
            }
            Side::Bid => {
                if r < 0.0 {
                    limit * (1.0 - shape(-r, th))
                } else {
                    limit
                }
            }
            Side::Ask if limit < eq => {
                if r < 0.0 {
                    eq + (max_price - eq) * shape(-r, th)
                } else {
                    limit + (eq - limit) * (1.0 - shape(r, th))
                }
            }
            Side::Ask => {
                if r < 0.0 {
                    limit + (max_price - limit) * shape(-r, th)
                } else {
                    limit
                }
            }
        }
    }

    /// Aggressiveness whose target equals `price`, by bisection.
    fn solve_r(&self, price: f64, limit: f64, eq: f64, max_price: f64) -> f64 {
        let increasing = self.side == Side::Bid;
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let t = self.target(mid, limit, eq, max_price);
            if (t < price) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn update_theta(&mut self, prices: &[Price], eq: f64) {
        let window = self.params.volatility_window.max(1);
        let recent = &prices[prices.len().saturating_sub(window)..];
        let Some(alpha) = smith_alpha(recent, eq) else { return };
        let alpha = alpha / 100.0;
        let p = &self.params;
        let norm = ((alpha - p.alpha_min) / (p.alpha_max - p.alpha_min)).clamp(0.0, 1.0);
        let desired = (p.theta_max - p.theta_min) * (1.0 - norm) * (2.0 * (norm - 1.0)).exp() + p.theta_min;
        self.theta += p.beta_theta * (desired - self.theta);
    }
}

impl Strategy for Aa {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Aa
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        let limit = order.limit as f64;
        let eta = self.params.eta;
        let floor = s.bounds.floor as f64;
        let ceiling = s.bounds.ceiling as f64;
        let price = match (order.side, s.market.p_star(self.params.rho)) {
            (Side::Bid, None) => {
                let anchor = s.book.best_ask.map_or(limit, |a| (a as f64).min(limit));
                let base = s.book.best_bid.map_or(floor, |b| b as f64);
                base + approach(anchor - base, eta)
            }
            (Side::Ask, None) => {
                let anchor = s.book.best_bid.map_or(limit, |b| (b as f64).max(limit));
                let base = s.book.best_ask.map_or(ceiling, |a| a as f64);
                base - approach(base - anchor, eta)
            }
            (Side::Bid, Some(eq)) => {
                let tau = self.target(self.r, limit, eq, ceiling);
                match s.book.best_ask {
                    Some(ask) if (ask as f64) <= tau => ask as f64,
                    _ => {
                        let base = s.book.best_bid.map_or(floor, |b| b as f64);
                        if tau <= base {
                            tau
                        } else {
                            base + (tau - base) / eta
                        }
                    }
                }
            }
            (Side::Ask, Some(eq)) => {
                let tau = self.target(self.r, limit, eq, ceiling);
                match s.book.best_bid {
                    Some(bid) if (bid as f64) >= tau => bid as f64,
                    _ => {
                        let base = s.book.best_ask.map_or(ceiling, |a| a as f64);
                        if tau >= base {
                            tau
                        } else {
                            base - (base - tau) / eta
                        }
                    }
                }
            }
        };
        let quote = round_for(order.side, price);
        // rounding in our favour can stall a tick short of an acceptable
        // opposite quote; take it instead
        let take = match order.side {
            Side::Bid => s.book.best_ask.filter(|&a| a <= order.limit && quote >= a - 1),
            Side::Ask => s.book.best_bid.filter(|&b| b >= order.limit && quote <= b + 1),
        };
        Some(take.unwrap_or(quote))
    }

    fn respond(&mut self, order: Option<&CustomerOrder>, s: &Stimulus<'_>, event: &MarketEvent, _: &mut dyn RngCore) {
        let Some(eq) = s.market.p_star(self.params.rho) else { return };
        if let MarketEvent::Trade(_) = event {
            self.update_theta(s.market.trade_prices(), eq);
        }
        let Some(order) = order else { return };
        let limit = order.limit as f64;
        let ceiling = s.bounds.ceiling as f64;
        let tau = self.target(self.r, limit, eq, ceiling);
        let (lr, la) = (self.params.rel_change, self.params.abs_change);
        let desired = match (self.side, event) {
            (Side::Bid, MarketEvent::Trade(t)) => {
                let q = t.price as f64;
                if tau >= q {
                    Some((1.0 - lr) * q - la)
                } else {
                    Some((1.0 + lr) * q + la)
                }
            }
            (Side::Bid, MarketEvent::Quote { side: Side::Bid, price, .. }) => {
                let b = *price as f64;
                (tau <= b).then_some((1.0 + lr) * b + la)
            }
            (Side::Ask, MarketEvent::Trade(t)) => {
                let q = t.price as f64;
                if tau <= q {
                    Some((1.0 + lr) * q + la)
                } else {
                    Some((1.0 - lr) * q - la)
                }
            }
            (Side::Ask, MarketEvent::Quote { side: Side::Ask, price, .. }) => {
                let a = *price as f64;
                (tau >= a).then_some((1.0 - lr) * a - la)
            }
            _ => None,
        };
        if let Some(desired) = desired {
            let r_desired = self.solve_r(desired, limit, eq, ceiling);
            self.r += self.params.beta_r * (r_desired - self.r);
            self.r = self.r.clamp(-1.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{Level2View, PriceBounds, Trade};
    use crate::metrics::MarketStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equilibrium_estimate_fixed_point() {
        let mut m = MarketStats::new();
        for t in 0..3 {
            m.record_trade(100, t as f64);
        }
        assert_eq!(m.p_star(AaParams::default().rho), Some(100.0));
    }

    #[test]
    fn target_curve_endpoints_and_monotonicity() {
        let buyer = Aa::new(Side::Bid, AaParams::default());
        assert!((buyer.target(0.0, 150.0, 100.0, 500.0) - 100.0).abs() < 1e-9);
        assert!((buyer.target(1.0, 150.0, 100.0, 500.0) - 150.0).abs() < 1e-9);
        assert!(buyer.target(-1.0, 150.0, 100.0, 500.0).abs() < 1e-9);
        let seller = Aa::new(Side::Ask, AaParams::default());
        assert!((seller.target(1.0, 60.0, 100.0, 500.0) - 60.0).abs() < 1e-9);
        assert!((seller.target(-1.0, 60.0, 100.0, 500.0) - 500.0).abs() < 1e-9);
        let mut prev_b = f64::NEG_INFINITY;
        let mut prev_s = f64::INFINITY;
        for i in 0..=40 {
            let r = -1.0 + i as f64 / 20.0;
            let b = buyer.target(r, 150.0, 100.0, 500.0);
            let s = seller.target(r, 60.0, 100.0, 500.0);
            assert!(b >= prev_b - 1e-9 && s <= prev_s + 1e-9);
            prev_b = b;
            prev_s = s;
        }
    }

    #[test]
    fn solve_inverts_target() {
        let buyer = Aa::new(Side::Bid, AaParams::default());
        for &price in &[20.0, 80.0, 100.0, 120.0, 149.0] {
            let r = buyer.solve_r(price, 150.0, 100.0, 500.0);
            assert!((buyer.target(r, 150.0, 100.0, 500.0) - price).abs() < 1e-6);
        }
    }

    #[test]
    fn buyer_becomes_more_aggressive_when_priced_out() {
        let mut aa = Aa::new(Side::Bid, AaParams::default());
        let mut m = MarketStats::new();
        m.record_trade(100, 1.0);
        let v = Level2View::default();
        let s = Stimulus { time: 1.0, duration: 10.0, book: &v, market: &m, bounds: PriceBounds::default() };
        let order = CustomerOrder { side: Side::Bid, limit: 150, issue_time: 0.0 };
        // target at r = 0 is 100; a trade at 130 means we would have missed it
        let ev = MarketEvent::Trade(Trade {
            time: 1.0,
            price: 130,
            quantity: 1,
            buyer_id: 1,
            seller_id: 2,
            aggressor: Side::Bid,
        });
        aa.respond(Some(&order), &s, &ev, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(aa.aggressiveness() > 0.0);
    }
}
