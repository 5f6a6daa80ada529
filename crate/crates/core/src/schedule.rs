//! Sample-ordering policies.
//!
//! Every epoch's batches are materialized when the epoch begins, so probes can
//! look up any batch of the current epoch (its membership is frozen for the
//! whole epoch).

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::invalid;
use crate::problem::Batch;
use crate::{Error, Result};

/// How samples are ordered from one epoch to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingPolicy {
    /// A fresh uniform permutation every epoch.
    ShufflePerEpoch,
    /// The same order every epoch (identity unless an initial shuffle is requested).
    FixedOrder,
    /// Each epoch replays the previous epoch's order backwards: AB, BA, AB, ...
    ReverseAlternating,
    /// Every batch is an independent uniform draw with replacement.
    WithReplacement,
}

impl SamplingPolicy {
    /// All policies, in a stable order.
    pub const ALL: [SamplingPolicy; 4] = [
        SamplingPolicy::ShufflePerEpoch,
        SamplingPolicy::FixedOrder,
        SamplingPolicy::ReverseAlternating,
        SamplingPolicy::WithReplacement,
    ];

    /// Config-string spelling.
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingPolicy::ShufflePerEpoch => "shuffle",
            SamplingPolicy::FixedOrder => "fixed",
            SamplingPolicy::ReverseAlternating => "reverse",
            SamplingPolicy::WithReplacement => "replacement",
        }
    }
}

impl fmt::Display for SamplingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shuffle" => Ok(SamplingPolicy::ShufflePerEpoch),
            "fixed" => Ok(SamplingPolicy::FixedOrder),
            "reverse" => Ok(SamplingPolicy::ReverseAlternating),
            "replacement" => Ok(SamplingPolicy::WithReplacement),
            _ => Err(invalid("policy", "expected shuffle | fixed | reverse | replacement")),
        }
    }
}

/// A sampling policy advanced one batch at a time.
#[derive(Debug, Clone)]
pub struct EpochSchedule {
    policy: SamplingPolicy,
    num_samples: usize,
    batch_size: usize,
    seed: u64,
    initial_shuffle: bool,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batches: Vec<Batch>,
    epoch: usize,
    cursor: usize,
}

impl EpochSchedule {
    /// Schedule over `num_samples` samples in batches of `batch_size`.
    pub fn new(policy: SamplingPolicy, num_samples: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if num_samples == 0 {
            return Err(invalid("num_samples", "must be at least 1"));
        }
        if batch_size == 0 || batch_size > num_samples {
            return Err(invalid("batch_size", "must lie in 1..=num_samples"));
        }
        Ok(Self {
            policy,
            num_samples,
            batch_size,
            seed,
            initial_shuffle: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..num_samples).collect(),
            batches: Vec::new(),
            epoch: 0,
            cursor: 0,
        })
    }

    /// Shuffle once before the first epoch. Only affects `FixedOrder` and
    /// `ReverseAlternating`; must be set before the first batch is drawn.
    pub fn with_initial_shuffle(mut self, on: bool) -> Self {
        self.initial_shuffle = on;
        self
    }

    /// The policy.
    pub fn policy(&self) -> SamplingPolicy {
        self.policy
    }

    /// `N`.
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// `B`.
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Seed of the ordering stream.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `ceil(N / B)`; the final batch of a permutation epoch is short when `B` does not divide `N`.
    pub fn batches_per_epoch(&self) -> usize {
        self.num_samples.div_ceil(self.batch_size)
    }

    /// 1-based index of the epoch the last batch came from (0 before any batch).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Batches already drawn from the current epoch.
    pub fn position_in_epoch(&self) -> usize {
        self.cursor
    }

    /// True when the next [`EpochSchedule::next_batch`] starts a new epoch.
    pub fn at_epoch_boundary(&self) -> bool {
        self.cursor == self.batches.len()
    }

    /// Batches of the current epoch, in the order they are served.
    pub fn epoch_batches(&self) -> &[Batch] {
        &self.batches
    }

    /// Start the next epoch if the current one is exhausted. Returns true if
    /// a new epoch was started.
    pub fn ensure_epoch(&mut self) -> bool {
        if !self.at_epoch_boundary() {
            return false;
        }
        self.begin_epoch();
        true
    }

    fn begin_epoch(&mut self) {
        let first = self.epoch == 0;
        match self.policy {
            SamplingPolicy::ShufflePerEpoch => self.order.shuffle(&mut self.rng),
            SamplingPolicy::FixedOrder => {
                if first && self.initial_shuffle {
                    self.order.shuffle(&mut self.rng);
                }
            }
            SamplingPolicy::ReverseAlternating => {
                if first {
                    if self.initial_shuffle {
                        self.order.shuffle(&mut self.rng);
                    }
                } else {
                    self.order.reverse();
                }
            }
            SamplingPolicy::WithReplacement => {}
        }
        self.batches.clear();
        if self.policy == SamplingPolicy::WithReplacement {
            for _ in 0..self.batches_per_epoch() {
                let idx = (0..self.batch_size)
                    .map(|_| self.rng.gen_range(0..self.num_samples))
                    .collect();
                self.batches.push(Batch::new(idx));
            }
        } else {
            self.batches
                .extend(self.order.chunks(self.batch_size).map(|c| Batch::new(c.to_vec())));
        }
        self.epoch += 1;
        self.cursor = 0;
    }

    /// The next batch under the policy, rolling over into a new epoch when needed.
    pub fn next_batch(&mut self) -> Batch {
        self.ensure_epoch();
        let b = self.batches[self.cursor].clone();
        self.cursor += 1;
        b
    }

    /// The current epoch's sample order (empty meaning under replacement).
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Expected number of samples shared by the last batch of one epoch and the
/// first batch of the next under independent uniform permutations: `B^2 / N`.
pub fn expected_overlap(n: usize, b: usize) -> Result<f64> {
    if n == 0 || b == 0 || b > n {
        return Err(invalid("batch_size", "must lie in 1..=num_samples"));
    }
    Ok((b * b) as f64 / n as f64)
}

/// Number of members the two batches have in common (as sets).
pub fn batch_overlap(a: &Batch, b: &Batch) -> usize {
    let mut x = a.indices.clone();
    x.sort_unstable();
    x.dedup();
    let mut y = b.indices.clone();
    y.sort_unstable();
    y.dedup();
    let (mut i, mut k, mut n) = (0, 0, 0);
    while i < x.len() && k < y.len() {
        match x[i].cmp(&y[k]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => k += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                k += 1;
            }
        }
    }
    n
}

/// Sample mean of a Monte Carlo overlap experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    /// Number of epoch boundaries observed.
    pub trials: usize,
    /// Mean shared-sample count.
    pub mean: f64,
    /// Standard error of the mean.
    pub std_error: f64,
}

/// Shared-sample count between the last batch of epoch `e` and the first batch
/// of epoch `e + 1`, averaged over `boundaries` consecutive boundaries of a
/// shuffle-per-epoch schedule.
pub fn boundary_overlap_stats(n: usize, b: usize, seed: u64, boundaries: usize) -> Result<OverlapStats> {
    if boundaries == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let mut s = EpochSchedule::new(SamplingPolicy::ShufflePerEpoch, n, b, seed)?;
    s.ensure_epoch();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..boundaries {
        let last = s.batches[s.batches.len() - 1].clone();
        s.cursor = s.batches.len();
        s.ensure_epoch();
        let k = batch_overlap(&last, &s.batches[0]) as f64;
        sum += k;
        sum_sq += k * k;
    }
    let t = boundaries as f64;
    let mean = sum / t;
    let var = if boundaries > 1 { (sum_sq - t * mean * mean) / (t - 1.0) } else { 0.0 };
    Ok(OverlapStats {
        trials: boundaries,
        mean,
        std_error: libm::sqrt(var.max(0.0) / t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn epoch(s: &mut EpochSchedule) -> Vec<Vec<usize>> {
        (0..s.batches_per_epoch()).map(|_| s.next_batch().indices).collect()
    }

    #[test]
    fn fixed_order_batches() {
        let mut s = EpochSchedule::new(SamplingPolicy::FixedOrder, 4, 2, 0).unwrap();
        for e in 1..=3 {
            assert_eq!(epoch(&mut s), vec![vec![0, 1], vec![2, 3]]);
            assert_eq!(s.epoch(), e);
        }
    }

    #[test]
    fn reverse_alternates_ab_ba() {
        let mut s = EpochSchedule::new(SamplingPolicy::ReverseAlternating, 2, 1, 0).unwrap();
        let seq: Vec<usize> = (0..6).map(|_| s.next_batch().indices[0]).collect();
        assert_eq!(seq, vec![0, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn short_final_batch() {
        let mut s = EpochSchedule::new(SamplingPolicy::FixedOrder, 5, 2, 0).unwrap();
        assert_eq!(s.batches_per_epoch(), 3);
        assert_eq!(epoch(&mut s), vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn shuffle_is_reproducible_and_varies_by_epoch() {
        let mut a = EpochSchedule::new(SamplingPolicy::ShufflePerEpoch, 50, 5, 9).unwrap();
        let mut b = EpochSchedule::new(SamplingPolicy::ShufflePerEpoch, 50, 5, 9).unwrap();
        let (a1, a2) = (epoch(&mut a), epoch(&mut a));
        assert_eq!(a1, epoch(&mut b));
        assert_eq!(a2, epoch(&mut b));
        assert_ne!(a1, a2);
    }

    #[test]
    fn replacement_batches_are_full_and_in_range() {
        let mut s = EpochSchedule::new(SamplingPolicy::WithReplacement, 7, 3, 1).unwrap();
        assert_eq!(s.batches_per_epoch(), 3);
        for b in epoch(&mut s) {
            assert_eq!(b.len(), 3);
            assert!(b.iter().all(|&i| i < 7));
        }
    }

    #[test]
    fn initial_shuffle_keeps_order_fixed_afterwards() {
        let mut s = EpochSchedule::new(SamplingPolicy::FixedOrder, 30, 4, 3)
            .unwrap()
            .with_initial_shuffle(true);
        let e1 = epoch(&mut s);
        assert_ne!(e1.concat(), (0..30).collect::<Vec<_>>());
        assert_eq!(epoch(&mut s), e1);
    }

    #[test]
    fn policy_strings() {
        for p in SamplingPolicy::ALL {
            assert_eq!(p.as_str().parse::<SamplingPolicy>().unwrap(), p);
        }
        assert!("random".parse::<SamplingPolicy>().is_err());
    }

    #[test]
    fn overlap_formula() {
        assert_eq!(expected_overlap(10_000, 100).unwrap(), 1.0);
        assert_eq!(expected_overlap(64, 64).unwrap(), 64.0);
        assert!((expected_overlap(10_000, 32).unwrap() - 0.1024).abs() < 1e-15);
        assert!(expected_overlap(10, 11).is_err());
        assert_eq!(batch_overlap(&Batch::new(vec![1, 2, 3]), &Batch::new(vec![3, 2, 9])), 2);
    }

    #[test]
    fn overlap_monte_carlo_n10000_b32() {
        // Independent oracle: overlap of two uniform 32-subsets drawn by rand's
        // index sampler, not by the schedule.
        let (n, b, trials) = (10_000usize, 32usize, 100_000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let x = rand::seq::index::sample(&mut rng, n, b).into_vec();
            let y = rand::seq::index::sample(&mut rng, n, b).into_vec();
            let k = batch_overlap(&Batch::new(x), &Batch::new(y)) as f64;
            sum += k;
            sum_sq += k * k;
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let se = libm::sqrt(var / trials as f64);
        assert!((mean - expected_overlap(n, b).unwrap()).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn schedule_boundary_overlap_matches_formula() {
        let st = boundary_overlap_stats(500, 50, 3, 4000).unwrap();
        assert_eq!(st.trials, 4000);
        assert!((st.mean - 5.0).abs() <= 3.0 * st.std_error, "{st:?}");
        let full = boundary_overlap_stats(20, 20, 0, 5).unwrap();
        assert_eq!((full.mean, full.std_error), (20.0, 0.0));
        assert!(boundary_overlap_stats(20, 5, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn permutation_policies_cover_every_sample(
            n in 1usize..60,
            b in 1usize..60,
            seed in any::<u64>(),
            which in 0usize..3,
        ) {
            let b = b.min(n);
            let policy = SamplingPolicy::ALL[which];
            let mut s = EpochSchedule::new(policy, n, b, seed).unwrap();
            for _ in 0..3 {
                let mut all: Vec<usize> = epoch(&mut s).concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn reverse_twice_is_identity(n in 1usize..80, b in 1usize..10, seed in any::<u64>()) {
            let b = b.min(n);
            let mut s = EpochSchedule::new(SamplingPolicy::ReverseAlternating, n, b, seed)
                .unwrap()
                .with_initial_shuffle(true);
            s.ensure_epoch();
            let first = s.order().to_vec();
            epoch(&mut s);
            s.ensure_epoch();
            let second = s.order().to_vec();
            let mut rev = first.clone();
            rev.reverse();
            prop_assert_eq!(&second, &rev);
            epoch(&mut s);
            s.ensure_epoch();
            prop_assert_eq!(s.order(), &first[..]);
        }
    }
}
