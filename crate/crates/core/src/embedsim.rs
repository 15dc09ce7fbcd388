//! Batch steganography simulation: capacity accounting, payload spreading
//! strategies and nsF5-style change-rate simulation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dctdomain::CoefArray;
use crate::error::{Error, Result};

/// Number of nonzero AC coefficients; one bit each at maximal rate.
pub fn capacity(c: &CoefArray) -> u64 {
    c.coefs()
        .chunks_exact(64)
        .map(|blk| blk[1..].iter().filter(|&&v| v != 0).count() as u64)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    MaxGreedy,
    MaxRandom,
    Linear,
    Even,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::MaxGreedy,
        Strategy::MaxRandom,
        Strategy::Linear,
        Strategy::Even,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MaxGreedy => "max-greedy",
            Strategy::MaxRandom => "max-random",
            Strategy::Linear => "linear",
            Strategy::Even => "even",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub strategy: Strategy,
    pub lengths: Vec<u64>,
    /// Bits the even strategy had to move off images whose capacity was
    /// smaller than their equal share.
    pub overflow_bits: u64,
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.lengths.iter().sum()
    }
}

/// Image indices ordered by decreasing capacity, ties by index.
fn by_capacity_desc(capacities: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..capacities.len()).collect();
    order.sort_by(|&a, &b| capacities[b].cmp(&capacities[a]).then(a.cmp(&b)));
    order
}

fn fill_in_order(capacities: &[u64], order: &[usize], total: u64) -> Vec<u64> {
    let mut lengths = vec![0; capacities.len()];
    let mut left = total;
    for &i in order {
        if left == 0 {
            break;
        }
        let take = capacities[i].min(left);
        lengths[i] = take;
        left -= take;
    }
    lengths
}

/// Splits `total` bits across images with the given capacities.
pub fn allocate<R: Rng + ?Sized>(
    strategy: Strategy,
    capacities: &[u64],
    total: u64,
    rng: &mut R,
) -> Result<Allocation> {
    let cap_sum: u64 = capacities.iter().sum();
    if total > cap_sum {
        return Err(Error::PayloadExceedsCapacity {
            payload: total,
            capacity: cap_sum,
        });
    }
    let n = capacities.len();
    let mut overflow_bits = 0;
    let lengths = match strategy {
        Strategy::MaxGreedy => fill_in_order(capacities, &by_capacity_desc(capacities), total),
        Strategy::MaxRandom => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            fill_in_order(capacities, &order, total)
        }
        Strategy::Linear => {
            let mut lengths: Vec<u64> = capacities
                .iter()
                .map(|&c| ((u128::from(c) * u128::from(total)) / u128::from(cap_sum.max(1))) as u64)
                .collect();
            let mut rem = total - lengths.iter().sum::<u64>();
            for i in by_capacity_desc(capacities) {
                if rem == 0 {
                    break;
                }
                if lengths[i] < capacities[i] {
                    lengths[i] += 1;
                    rem -= 1;
                }
            }
            lengths
        }
        Strategy::Even => {
            let share = total / n as u64;
            let mut lengths = vec![share; n];
            let mut rem = total - share * n as u64;
            for i in by_capacity_desc(capacities) {
                if rem == 0 {
                    break;
                }
                lengths[i] += 1;
                rem -= 1;
            }
            // Push shares that exceed an image's capacity onward, cycling
            // through the images in index order.
            let mut excess = 0;
            for (l, &c) in lengths.iter_mut().zip(capacities) {
                if *l > c {
                    excess += *l - c;
                    *l = c;
                }
            }
            overflow_bits = excess;
            while excess > 0 {
                for (l, &c) in lengths.iter_mut().zip(capacities) {
                    let room = (c - *l).min(excess);
                    *l += room;
                    excess -= room;
                    if excess == 0 {
                        break;
                    }
                }
            }
            lengths
        }
    };
    Ok(Allocation {
        strategy,
        lengths,
        overflow_bits,
    })
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// The `rho` in `[0, 0.5]` with `H(rho) = alpha`, by bisection to 1e-10.
pub fn inv_binary_entropy(alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maps relative payload (bits per nonzero AC coefficient) to the
/// probability that a nonzero AC coefficient is changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeRateModel {
    /// Near-optimal coding: `H(rho) = alpha`.
    #[default]
    Entropy,
    /// No coding gain: one change per two embedded bits, `rho = alpha / 2`.
    Uncoded,
}

impl ChangeRateModel {
    pub fn change_rate(self, alpha: f64) -> f64 {
        match self {
            ChangeRateModel::Entropy => inv_binary_entropy(alpha),
            ChangeRateModel::Uncoded => (alpha / 2.0).clamp(0.0, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRecord {
    pub image_id: String,
    pub payload_bits: u64,
    pub rho: f64,
    pub changes: u64,
}

impl EmbedRecord {
    /// One manifest line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Simulates nsF5 with the entropy change-rate model.
pub fn nsf5_simulate<R: Rng + ?Sized>(
    c: &CoefArray,
    payload_bits: u64,
    rng: &mut R,
) -> Result<(CoefArray, EmbedRecord)> {
    nsf5_simulate_with(c, payload_bits, ChangeRateModel::Entropy, rng)
}

/// Each nonzero AC coefficient moves one step toward zero with probability
/// `rho`. DC terms are never touched.
pub fn nsf5_simulate_with<R: Rng + ?Sized>(
    c: &CoefArray,
    payload_bits: u64,
    model: ChangeRateModel,
    rng: &mut R,
) -> Result<(CoefArray, EmbedRecord)> {
    let cap = capacity(c);
    if payload_bits > cap {
        return Err(Error::PayloadExceedsCapacity {
            payload: payload_bits,
            capacity: cap,
        });
    }
    let alpha = if cap == 0 { 0.0 } else { payload_bits as f64 / cap as f64 };
    let rho = model.change_rate(alpha);
    let mut out = c.clone();
    let mut changes = 0;
    if rho > 0.0 {
        for blk in out.coefs_mut().chunks_exact_mut(64) {
            for v in blk[1..].iter_mut().filter(|v| **v != 0) {
                if rng.random::<f64>() < rho {
                    *v -= v.signum();
                    changes += 1;
                }
            }
        }
    }
    Ok((
        out,
        EmbedRecord {
            image_id: String::new(),
            payload_bits,
            rho,
            changes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dctdomain::quality_to_table;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn random_array(seed: u64, blocks: usize) -> CoefArray {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let coefs = (0..blocks * blocks * 64).map(|_| r.random_range(-6..=6)).collect();
        CoefArray::new(blocks, blocks, coefs, quality_to_table(80).unwrap()).unwrap()
    }

    #[test]
    fn capacity_counts_nonzero_ac() {
        let t = quality_to_table(80).unwrap();
        let mut c = CoefArray::zeros(2, 2, t).unwrap();
        assert_eq!(capacity(&c), 0);
        c.coefs_mut()[0] = 9;
        c.coefs_mut()[3] = 3;
        c.coefs_mut()[10] = -2;
        assert_eq!(capacity(&c), 2);
    }

    #[test]
    fn allocation_examples() {
        let mut r = rng();
        let even = allocate(Strategy::Even, &[400, 400, 400, 400], 1000, &mut r).unwrap();
        assert_eq!(even.lengths, vec![250; 4]);
        let greedy = allocate(Strategy::MaxGreedy, &[5, 3, 2], 6, &mut r).unwrap();
        assert_eq!(greedy.lengths, vec![5, 1, 0]);
        let linear = allocate(Strategy::Linear, &[10, 30], 20, &mut r).unwrap();
        assert_eq!(linear.lengths, vec![5, 15]);
        assert!(allocate(Strategy::Linear, &[1, 2], 4, &mut r).is_err());
    }

    #[test]
    fn even_overflows_small_images() {
        let a = allocate(Strategy::Even, &[2, 100, 100], 30, &mut rng()).unwrap();
        assert_eq!(a.total(), 30);
        assert_eq!(a.lengths[0], 2);
        assert_eq!(a.overflow_bits, 8);
        assert!(a.lengths.iter().zip([2, 100, 100]).all(|(&l, c)| l <= c));
    }

    #[test]
    fn greedy_uses_fewest_images() {
        let caps = [7, 50, 13, 40, 22];
        let g = allocate(Strategy::MaxGreedy, &caps, 80, &mut rng()).unwrap();
        assert_eq!(g.lengths.iter().filter(|&&l| l > 0).count(), 2);
        let e = allocate(Strategy::Even, &caps, 80, &mut rng()).unwrap();
        assert_eq!(e.lengths.iter().filter(|&&l| l > 0).count(), 5);
    }

    #[test]
    fn inverse_entropy() {
        assert_eq!(inv_binary_entropy(1.0), 0.5);
        assert_eq!(inv_binary_entropy(0.0), 0.0);
        let rho = inv_binary_entropy(0.5);
        assert!((rho - 0.110_028).abs() < 1e-5);
        assert!((binary_entropy(rho) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn zero_payload_leaves_array() {
        let c = random_array(1, 4);
        let (s, rec) = nsf5_simulate(&c, 0, &mut rng()).unwrap();
        assert_eq!(s, c);
        assert_eq!(rec.rho, 0.0);
        assert_eq!(rec.changes, 0);
    }

    #[test]
    fn full_payload_changes_half() {
        let c = random_array(2, 14);
        let cap = capacity(&c);
        assert!(cap > 10_000);
        let (s, rec) = nsf5_simulate(&c, cap, &mut rng()).unwrap();
        assert_eq!(rec.rho, 0.5);
        let n = cap as f64;
        let sd = (n * 0.25).sqrt();
        assert!((rec.changes as f64 - n / 2.0).abs() < 3.0 * sd);
        assert!(capacity(&s) <= cap);
        for (a, b) in c.coefs().iter().zip(s.coefs()) {
            assert!(b.abs() <= a.abs());
            assert!(a == b || (a - b).abs() == 1);
        }
        for k in 0..c.n_blocks() {
            assert_eq!(c.block(k)[0], s.block(k)[0]);
        }
    }

    #[test]
    fn payload_above_capacity_rejected() {
        let c = random_array(3, 2);
        let cap = capacity(&c);
        assert!(matches!(
            nsf5_simulate(&c, cap + 1, &mut rng()),
            Err(Error::PayloadExceedsCapacity { .. })
        ));
    }

    #[test]
    fn manifest_line() {
        let rec = EmbedRecord {
            image_id: "a0/i1".into(),
            payload_bits: 12,
            rho: 0.25,
            changes: 3,
        };
        assert_eq!(
            rec.to_json_line(),
            r#"{"image_id":"a0/i1","payload_bits":12,"rho":0.25,"changes":3}"#
        );
    }

    proptest::proptest! {
        #[test]
        fn allocation_conserves_mass(
            caps in proptest::collection::vec(0u64..500, 1..12),
            frac in 0.0f64..=1.0,
            seed in 0u64..1000,
            s in 0usize..4,
        ) {
            let total = (caps.iter().sum::<u64>() as f64 * frac).floor() as u64;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let a = allocate(Strategy::ALL[s], &caps, total, &mut r).unwrap();
            proptest::prop_assert_eq!(a.total(), total);
            for (l, c) in a.lengths.iter().zip(&caps) {
                proptest::prop_assert!(l <= c);
            }
        }
    }
}
