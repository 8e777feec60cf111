//! The DTR strategy: a trained network quoting from live market features.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::RngCore;

use crate::exchange::{Price, PriceBounds, Side};
use crate::features::{build_features, FeatureContext, N_FEATURES};
use crate::model::TrainedModel;
use crate::traders::{enforce_limit, CustomerOrder, Stimulus, Strategy, StrategyTag};

/// Rounds to the nearest tick; exact halves go the trader's way.
pub fn round_nearest_for(side: Side, price: f64) -> Price {
    match side {
        Side::Bid => (price - 0.5).ceil() as Price,
        Side::Ask => (price + 0.5).floor() as Price,
    }
}

/// Turns a raw model output into a legal quote.
pub fn quote_from_prediction(side: Side, limit: Price, prediction: f64, bounds: PriceBounds) -> Option<Price> {
    if !prediction.is_finite() {
        return None;
    }
    let clipped = prediction.clamp(bounds.floor as f64 - 1.0, bounds.ceiling as f64 + 1.0);
    Some(enforce_limit(side, limit, round_nearest_for(side, clipped), bounds))
}

#[derive(Debug, Clone)]
pub struct DeepTrader {
    model: Arc<TrainedModel>,
    /// Recent raw feature vectors, oldest first, for windowed models.
    window: VecDeque<[f64; N_FEATURES]>,
}

impl DeepTrader {
    pub fn new(model: Arc<TrainedModel>) -> Self {
        Self { model, window: VecDeque::new() }
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn live_features(&self, order: &CustomerOrder, s: &Stimulus<'_>) -> [f64; N_FEATURES] {
        build_features(&FeatureContext {
            time: s.time,
            aggressor: order.side,
            customer_limit: order.limit,
            book: s.book,
            market: s.market,
            rho: self.model.rho,
        })
    }
}

impl Strategy for DeepTrader {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Dtr
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        let x = self.live_features(order, s);
        self.window.push_back(x);
        while self.window.len() > self.model.sequence_length {
            self.window.pop_front();
        }
        let window: Vec<[f64; N_FEATURES]> = self.window.iter().copied().collect();
        // the model was validated at load, so prediction cannot fail on shape
        let prediction = self.model.predict_raw(&window).ok()?;
        quote_from_prediction(order.side, order.limit, prediction, s.bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_favours_the_trader() {
        assert_eq!(round_nearest_for(Side::Bid, 100.5), 100);
        assert_eq!(round_nearest_for(Side::Ask, 100.5), 101);
        assert_eq!(round_nearest_for(Side::Bid, 100.6), 101);
        assert_eq!(round_nearest_for(Side::Ask, 100.4), 100);
    }

    #[test]
    fn buyer_prediction_above_limit_is_clipped() {
        let b = PriceBounds::default();
        assert_eq!(quote_from_prediction(Side::Bid, 100, 105.4, b), Some(100));
        assert_eq!(quote_from_prediction(Side::Ask, 60, 40.0, b), Some(60));
        assert_eq!(quote_from_prediction(Side::Ask, 60, 1e9, b), Some(500));
        assert_eq!(quote_from_prediction(Side::Bid, 60, -1e9, b), Some(1));
        assert_eq!(quote_from_prediction(Side::Bid, 60, f64::NAN, b), None);
    }
}
