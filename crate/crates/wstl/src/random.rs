//! Random formula and signal generators for property checks, gradient
//! verification and parser round-trip testing.

use crate::formula::{Formula, Interval};
use crate::rng::Rng;
use crate::semantics::SignalMatrix;

/// Shape constraints for [`random_formula`].
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_depth: usize,
    pub dim: usize,
    /// Upper bound on the generated formula's horizon (number of samples
    /// needed at time 0).
    pub max_horizon: usize,
    /// Whether `TRUE` may appear as a leaf. Keep it off for anything that
    /// will be evaluated under the weighted semantics, where an infinite
    /// child is rejected by the aggregates.
    pub allow_true: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 4,
            dim: 2,
            max_horizon: 12,
            allow_true: false,
        }
    }
}

fn random_pred(rng: &mut Rng, dim: usize) -> Formula {
    let coeffs: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    Formula::pred(coeffs, rng.uniform(-1.0, 1.0))
}

fn gen(rng: &mut Rng, cfg: &GenConfig, depth: usize, budget: usize) -> Formula {
    // budget = how many samples past the current time offset may be read.
    let leaf_only = depth >= cfg.max_depth || budget <= 1;
    let choice = if leaf_only {
        rng.below(if cfg.allow_true { 5 } else { 4 })
    } else {
        rng.below(20)
    };
    match choice {
        _ if leaf_only => {
            if cfg.allow_true && choice == 4 {
                Formula::truth()
            } else {
                random_pred(rng, cfg.dim)
            }
        }
        0..=3 => random_pred(rng, cfg.dim),
        4 if cfg.allow_true => Formula::truth(),
        4..=6 => Formula::not(gen(rng, cfg, depth + 1, budget)),
        7..=10 => {
            let left = gen(rng, cfg, depth + 1, budget);
            let right = gen(rng, cfg, depth + 1, budget);
            let (w1, w2) = (rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
            if rng.bernoulli(0.5) {
                Formula::and(w1, left, w2, right)
            } else {
                Formula::or(w1, left, w2, right)
            }
        }
        _ => {
            // Temporal operator: keep end + child's horizon within budget.
            let max_end = budget.saturating_sub(2).min(4);
            let start = rng.below(max_end + 1);
            let end = start + rng.below(max_end - start + 1);
            let interval = Interval::new(start, end).expect("start <= end");
            let weights: Vec<f64> = (0..interval.len()).map(|_| rng.uniform(0.2, 2.0)).collect();
            let child = gen(rng, cfg, depth + 1, budget - end);
            if rng.bernoulli(0.5) {
                Formula::always(interval, weights, child)
            } else {
                Formula::eventually(interval, weights, child)
            }
        }
    }
}

/// Generates a valid random formula within the configured shape bounds.
pub fn random_formula(rng: &mut Rng, cfg: &GenConfig) -> Formula {
    let f = gen(rng, cfg, 0, cfg.max_horizon);
    debug_assert!(f.horizon() <= cfg.max_horizon);
    debug_assert!(f.validate(cfg.dim).is_ok());
    f
}

/// Random finite signal with entries from a standard normal.
pub fn random_signal(rng: &mut Rng, dim: usize, len: usize) -> SignalMatrix {
    let data: Vec<f64> = (0..dim * len).map(|_| rng.normal()).collect();
    SignalMatrix::new(dim, len, data).expect("normal draws are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_formulas_are_valid_and_bounded() {
        let mut rng = Rng::new(1234);
        let cfg = GenConfig {
            max_depth: 4,
            dim: 3,
            max_horizon: 12,
            allow_true: true,
        };
        for _ in 0..500 {
            let f = random_formula(&mut rng, &cfg);
            assert!(f.validate(3).is_ok());
            assert!(f.horizon() <= 12);
        }
    }

    #[test]
    fn generation_is_seed_stable() {
        let cfg = GenConfig::default();
        let a = random_formula(&mut Rng::new(7), &cfg);
        let b = random_formula(&mut Rng::new(7), &cfg);
        assert!(a.approx_eq(&b, 0.0));
    }
}
