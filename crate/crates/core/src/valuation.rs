//! Valuation functions used by the market.
//!
//! Three families live here: the set-based valuation used when data is
//! traded raw (cardinality with a redundancy-discounted conditional form),
//! the learning-precision valuation driven by overlap volume, and the
//! leakage-depressed valuation under linear pricing that models how the
//! buyer discounts correlated data.

use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// Scalars shaping the valuation functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationParams {
    /// Redundancy design parameter, >= 1.
    pub gamma: f64,
    /// Precision-curve amplitude, in (0, 1].
    pub a0: f64,
    /// Mean of the connectivity noise factor.
    pub noise_mu: f64,
    /// Standard deviation of the connectivity noise factor, >= 0.
    pub noise_sigma: f64,
    /// Pricing-shape weight, > 0.
    pub b: f64,
    /// Information leakage factor, in [0, 1].
    pub g: f64,
}

impl Default for ValuationParams {
    fn default() -> Self {
        ValuationParams {
            gamma: 1.0,
            a0: 0.2,
            noise_mu: 0.5,
            noise_sigma: 1.0,
            b: 0.1,
            g: 0.0,
        }
    }
}

impl ValuationParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 1.0 {
            return Err(Error::InvalidInput(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.g) {
            return Err(Error::InvalidInput(format!("g must be in [0, 1], got {}", self.g)));
        }
        if self.b <= 0.0 {
            return Err(Error::InvalidInput(format!("b must be > 0, got {}", self.b)));
        }
        if !(0.0..=1.0).contains(&self.a0) || self.a0 == 0.0 {
            return Err(Error::InvalidInput(format!("a0 must be in (0, 1], got {}", self.a0)));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cardinality valuation `v(D) = |D|`. The minimal choice satisfying both
/// monotonicity (subsets are worth no more) and subadditivity of the
/// intersection, and it makes overlap arithmetic exact.
pub fn set_valuation(ids: &BTreeSet<u64>) -> f64 {
    ids.len() as f64
}

/// Value of `offered` to a buyer already holding `held`:
/// `gamma * v(held ∩ offered) + v(offered \ held)`. The second term is the
/// marginal contribution of the samples the buyer has not seen.
pub fn conditional_valuation(held: &BTreeSet<u64>, offered: &BTreeSet<u64>, gamma: f64) -> f64 {
    let common = held.intersection(offered).count() as f64;
    let fresh = offered.difference(held).count() as f64;
    gamma * common + fresh
}

const N0_CEILING: f64 = 1.0 - 1e-6;

/// Learning precision from overlapping samples:
/// `zeta = 1 - a0 * exp(-2 * overlap * (1 - n0))`.
///
/// `n0` is clamped to `[0, 1 - 1e-6]` so the exponent stays negative and
/// precision stays strictly increasing in overlap.
pub fn precision_zeta(overlap: usize, a0: f64, n0: f64) -> f64 {
    let n0 = n0.clamp(0.0, N0_CEILING);
    1.0 - a0 * (-2.0 * overlap as f64 * (1.0 - n0)).exp()
}

/// Fixed log-concave, increasing map from precision to buyer valuation.
fn scaled_value_of_precision(zeta: f64) -> f64 {
    let e = std::f64::consts::E;
    (1.0 + e * zeta).ln() / (1.0 + e).ln() * 1.5
}

/// Buyer-side valuation as a function of overlap volume, optionally with
/// the connectivity noise factor `n0 ~ N(noise_mu, noise_sigma)` drawn per
/// point (clamped like [`precision_zeta`]). Noiseless output is
/// deterministic and non-decreasing in overlap.
pub fn scaled_valuation_curve(
    params: &ValuationParams,
    with_noise: bool,
    overlaps: &[usize],
    seed: u64,
) -> Vec<f64> {
    let mut noise_rng = rng::rng(seed);
    let noise = Normal::new(params.noise_mu, params.noise_sigma.max(0.0)).expect("valid normal");
    overlaps
        .iter()
        .map(|&overlap| {
            let n0 = if with_noise {
                noise.sample(&mut noise_rng)
            } else {
                0.0
            };
            scaled_value_of_precision(precision_zeta(overlap, params.a0, n0))
        })
        .collect()
}

/// Leakage-depressed valuation under linear pricing:
/// `V = 1/(1+g) * [ sum_i share_i^(1-b*p) ]^(1/b)`.
///
/// Rejects the domain hole `0^(nonpositive)`: a zero share with `b*p >= 1`.
pub fn leakage_valuation(shares: &[f64], g: f64, b: f64, p: f64) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::InvalidInput("shares must be non-empty".into()));
    }
    if shares.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidInput("shares must be non-negative".into()));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "shares must sum to 1, got {total}"
        )));
    }
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::InvalidInput(format!("g must be in [0, 1], got {g}")));
    }
    if b <= 0.0 {
        return Err(Error::InvalidInput(format!("b must be > 0, got {b}")));
    }
    if p < 0.0 {
        return Err(Error::InvalidInput(format!("price must be >= 0, got {p}")));
    }
    let exponent = 1.0 - b * p;
    if exponent <= 0.0 && shares.iter().any(|&s| s == 0.0) {
        return Err(Error::Domain(format!(
            "zero share with b*p = {} >= 1 puts 0 to a non-positive power",
            b * p
        )));
    }
    let bracket: f64 = shares.iter().map(|&s| s.powf(exponent)).sum();
    Ok(bracket.powf(1.0 / b) / (1.0 + g))
}

/// Per-seller valuation curves across trading rounds with a growing
/// leakage factor.
#[derive(Debug, Clone)]
pub struct DepressionSeries {
    pub prices: Vec<f64>,
    pub g_rounds: Vec<f64>,
    /// `curves[seller][round][price index]`.
    pub curves: Vec<Vec<Vec<f64>>>,
}

/// Valuation-vs-price curves per seller and round. The first seller to
/// arrive is never depressed; every later seller carries the round's
/// leakage factor, so its curves sink as the market learns the correlation.
/// Each seller's valuation scales with its sample share, so curves also
/// order by data volume.
pub fn value_depression_series(
    sample_counts: &[usize],
    prices: &[f64],
    g_rounds: &[f64],
    b: f64,
) -> Result<DepressionSeries> {
    if sample_counts.is_empty() || sample_counts.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput(
            "each seller needs at least one sample".into(),
        ));
    }
    if prices.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("prices must be ascending".into()));
    }
    let total: usize = sample_counts.iter().sum();
    let shares: Vec<f64> = sample_counts
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect();

    let mut curves = Vec::with_capacity(shares.len());
    for (seller, &share) in shares.iter().enumerate() {
        let mut per_round = Vec::with_capacity(g_rounds.len());
        for &g in g_rounds {
            let g_seller = if seller == 0 { 0.0 } else { g };
            let curve: Result<Vec<f64>> = prices
                .iter()
                .map(|&p| Ok(share * leakage_valuation(&shares, g_seller, b, p)?))
                .collect();
            per_round.push(curve?);
        }
        curves.push(per_round);
    }
    Ok(DepressionSeries {
        prices: prices.to_vec(),
        g_rounds: g_rounds.to_vec(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ids(xs: &[u64]) -> BTreeSet<u64> {
        xs.iter().copied().collect()
    }

    #[test]
    fn set_valuation_examples() {
        assert_eq!(set_valuation(&ids(&[])), 0.0);
        assert_eq!(set_valuation(&ids(&[1, 2, 3, 4, 5])), 5.0);
        assert!(set_valuation(&ids(&[1, 2])) <= set_valuation(&ids(&[1, 2, 3])));
    }

    #[test]
    fn conditional_valuation_examples() {
        let empty = ids(&[]);
        let offered = ids(&[1, 2, 7]);
        assert_eq!(
            conditional_valuation(&empty, &offered, 2.0),
            set_valuation(&offered)
        );
        assert_eq!(
            conditional_valuation(&ids(&[1, 2, 3, 4, 5]), &ids(&[1, 2]), 1.0),
            2.0
        );
        assert_eq!(
            conditional_valuation(&ids(&[1, 2]), &ids(&[1, 2, 3, 4, 5]), 1.0),
            5.0
        );
    }

    #[test]
    fn precision_zeta_examples() {
        assert_abs_diff_eq!(precision_zeta(0, 0.2, 0.0), 0.8, epsilon = 1e-15);
        assert!(precision_zeta(200, 0.2, 0.0) > 1.0 - 1e-12);
        assert_abs_diff_eq!(
            precision_zeta(1, 0.2, 0.0),
            1.0 - 0.2 * (-2.0f64).exp(),
            epsilon = 1e-15
        );
        // Clamping keeps the exponent negative even for wild n0 draws.
        assert!(precision_zeta(5, 0.5, 3.0) <= 1.0);
        assert!(precision_zeta(5, 0.5, 3.0) > precision_zeta(0, 0.5, 3.0));
    }

    #[test]
    fn zeta_strictly_increases_in_overlap() {
        for a0 in [0.2, 0.7, 0.99] {
            for overlap in 0..20 {
                let lo = precision_zeta(overlap, a0, 0.3);
                let hi = precision_zeta(overlap + 1, a0, 0.3);
                assert!(hi > lo, "a0={a0} overlap={overlap}: {hi} <= {lo}");
                assert!(lo > 0.0 && lo <= 1.0);
                assert!(lo >= 1.0 - a0);
            }
        }
    }

    #[test]
    fn scaled_curve_monotone_and_noise_lowers_mean() {
        let params = ValuationParams::default();
        let overlaps = [0, 1, 2, 3, 4];
        let clean = scaled_valuation_curve(&params, false, &overlaps, 0);
        assert!(clean.windows(2).all(|w| w[0] <= w[1]));
        // Deterministic noiseless output.
        assert_eq!(clean, scaled_valuation_curve(&params, false, &overlaps, 1));

        let runs = 300;
        let mut noisy_mean = vec![0.0; overlaps.len()];
        for s in 0..runs {
            for (acc, v) in noisy_mean
                .iter_mut()
                .zip(scaled_valuation_curve(&params, true, &overlaps, s))
            {
                *acc += v / runs as f64;
            }
        }
        for (n, c) in noisy_mean.iter().zip(&clean) {
            // Slack covers accumulation error where the two coincide.
            assert!(
                *n <= c + 1e-9,
                "noise should lower the expected valuation: {n} > {c}"
            );
        }

        // Larger a0 means lower valuation at small overlap.
        let high_a0 = ValuationParams {
            a0: 0.7,
            ..ValuationParams::default()
        };
        let clean_high = scaled_valuation_curve(&high_a0, false, &overlaps, 0);
        assert!(clean_high[0] < clean[0]);
    }

    #[test]
    fn leakage_valuation_examples() {
        assert_abs_diff_eq!(
            leakage_valuation(&[1.0], 0.0, 0.1, 3.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let v0 = leakage_valuation(&[0.3, 0.7], 0.0, 0.1, 2.0).unwrap();
        let v1 = leakage_valuation(&[0.3, 0.7], 1.0, 0.1, 2.0).unwrap();
        assert_abs_diff_eq!(v1, v0 / 2.0, epsilon = 1e-12);

        // [2 * 0.5^0.9]^10 = 2.
        assert_abs_diff_eq!(
            leakage_valuation(&[0.5, 0.5], 0.0, 0.1, 1.0).unwrap(),
            2.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn leakage_valuation_domain_guard() {
        match leakage_valuation(&[0.0, 1.0], 0.0, 0.2, 6.0) {
            Err(Error::Domain(_)) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
        // Same shares are fine when b*p < 1.
        assert!(leakage_valuation(&[0.0, 1.0], 0.0, 0.2, 1.0).is_ok());
        assert!(leakage_valuation(&[0.5, 0.6], 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn depression_series_orderings() {
        let prices: Vec<f64> = (1..=10).map(|p| p as f64).collect();
        let g_rounds = [0.0, 0.2, 0.5, 0.9];
        let series = value_depression_series(&[5, 2], &prices, &g_rounds, 0.1).unwrap();

        // Later rounds never raise a late seller's curve.
        for r in 1..g_rounds.len() {
            for (prev, cur) in series.curves[1][r - 1].iter().zip(&series.curves[1][r]) {
                assert!(cur <= prev);
            }
        }
        // Every curve increases in price.
        for seller in &series.curves {
            for round in seller {
                assert!(round.windows(2).all(|w| w[1] > w[0]));
            }
        }
        // No leakage: all rounds identical.
        let flat = value_depression_series(&[5, 2], &prices, &[0.0; 4], 0.1).unwrap();
        for seller in &flat.curves {
            for round in &seller[1..] {
                assert_eq!(round, &seller[0]);
            }
        }
    }

    proptest! {
        #[test]
        fn set_valuation_monotone_and_subadditive(
            a in proptest::collection::btree_set(0u64..200, 0..30),
            b in proptest::collection::btree_set(0u64..200, 0..30),
        ) {
            let union: BTreeSet<u64> = a.union(&b).copied().collect();
            let inter: BTreeSet<u64> = a.intersection(&b).copied().collect();
            // Monotonicity over the subset pairs we can build.
            prop_assert!(set_valuation(&a) <= set_valuation(&union));
            prop_assert!(set_valuation(&b) <= set_valuation(&union));
            // Additive property of the intersection.
            prop_assert!(set_valuation(&inter) <= set_valuation(&a) + set_valuation(&b));
        }

        #[test]
        fn leakage_scaling_invariant(
            raw in proptest::collection::vec(0.05f64..1.0, 1..6),
            g in 0.0f64..=1.0,
            p in 0.0f64..9.9,
        ) {
            let total: f64 = raw.iter().sum();
            let shares: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let v_g = leakage_valuation(&shares, g, 0.1, p).unwrap();
            let v_0 = leakage_valuation(&shares, 0.0, 0.1, p).unwrap();
            // V(g) * (1 + g) is constant in g.
            prop_assert!((v_g * (1.0 + g) - v_0).abs() <= 1e-12 * v_0.abs().max(1.0));
        }
    }
}
