use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEffectiveness {
    pub delta_f1: f64,
    pub delta_hit: f64,
    /// `delta_f1 / delta_hit`; `None` exactly when `infinite` is set.
    pub ratio: Option<f64>,
    /// Set when Hit@10 did not change at all.
    pub infinite: bool,
}

impl CostEffectiveness {
    /// Orders ratios with infinity above every finite value.
    pub fn exceeds(&self, other: &CostEffectiveness) -> bool {
        match (self.ratio, other.ratio) {
            (None, None) => self.delta_f1 > other.delta_f1,
            (None, Some(_)) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a > b,
        }
    }
}

/// `|ΔF1| / |ΔHit@10|` between a baseline `(f1, hit)` and a defended run.
pub fn cost_effectiveness(baseline: (f64, f64), defended: (f64, f64)) -> Result<CostEffectiveness> {
    for v in [baseline.0, baseline.1, defended.0, defended.1] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("metric {v} outside [0, 1]")));
        }
    }
    let delta_f1 = (baseline.0 - defended.0).abs();
    let delta_hit = (baseline.1 - defended.1).abs();
    let infinite = delta_hit == 0.0;
    Ok(CostEffectiveness {
        delta_f1,
        delta_hit,
        ratio: (!infinite).then(|| delta_f1 / delta_hit),
        infinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cases() {
        let c = cost_effectiveness((0.5928, 0.3690), (0.2520, 0.1696)).unwrap();
        assert!((c.ratio.unwrap() - 1.709).abs() < 1e-3);
        let c = cost_effectiveness((0.5, 0.4), (0.3, 0.3)).unwrap();
        assert!((c.ratio.unwrap() - 2.0).abs() < 1e-12);
        let c = cost_effectiveness((0.5, 0.4), (0.5, 0.4)).unwrap();
        assert_eq!((c.delta_f1, c.delta_hit, c.ratio, c.infinite), (0.0, 0.0, None, true));
        assert!(cost_effectiveness((1.5, 0.0), (0.0, 0.0)).is_err());
    }

    #[test]
    fn infinite_orders_above_finite() {
        let inf = cost_effectiveness((0.5, 0.4), (0.2, 0.4)).unwrap();
        let fin = cost_effectiveness((0.5, 0.4), (0.2, 0.3)).unwrap();
        assert!(inf.exceeds(&fin));
        assert!(!fin.exceeds(&inf));
    }

    proptest! {
        #[test]
        fn self_comparison_has_zero_deltas(f in 0.0f64..=1.0, h in 0.0f64..=1.0) {
            let c = cost_effectiveness((f, h), (f, h)).unwrap();
            prop_assert_eq!(c.delta_f1, 0.0);
            prop_assert_eq!(c.delta_hit, 0.0);
            prop_assert!(c.infinite);
        }
    }
}
