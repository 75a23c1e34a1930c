use rand::seq::SliceRandom;
use rand::Rng;

use crate::attributes::AttributeVector;
use crate::error::{contract, Result};
use crate::rng::derived_rng;

/// Seeded epoch-wise shuffling of a fixed set of record positions.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    records: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl EpochSampler {
    pub fn new(records: Vec<usize>, batch_size: usize, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(contract!("cannot sample from an empty split"));
        }
        if batch_size == 0 || batch_size > records.len() {
            return Err(contract!(
                "batch size {batch_size} must be in 1..={}",
                records.len()
            ));
        }
        Ok(Self {
            records,
            batch_size,
            seed,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Batches per epoch; the last one may be partial.
    pub fn batches_per_epoch(&self) -> usize {
        self.records.len().div_ceil(self.batch_size)
    }

    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order = self.records.clone();
        order.shuffle(&mut derived_rng(self.seed, "epoch", epoch));
        order
    }

    pub fn epoch_batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        self.epoch_order(epoch)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Targets as a random within-batch permutation of the source rows.
pub fn make_target_labels<R: Rng + ?Sized>(a: &[AttributeVector], rng: &mut R) -> Vec<AttributeVector> {
    let mut b = a.to_vec();
    b.shuffle(rng);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_covers_each_record_once() {
        let s = EpochSampler::new((10..47).collect(), 8, 3).unwrap();
        let batches = s.epoch_batches(2);
        assert_eq!(batches.len(), 5);
        assert_eq!(batches.last().unwrap().len(), 5);
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, (10..47).collect::<Vec<_>>());
        assert_ne!(s.epoch_order(0), s.epoch_order(1));
    }

    #[test]
    fn oversized_batch_and_empty_split_rejected() {
        assert!(EpochSampler::new(vec![1, 2], 3, 0).is_err());
        assert!(EpochSampler::new(vec![], 1, 0).is_err());
    }

    #[test]
    fn single_row_target_is_source() {
        let a = [AttributeVector::from_bits(&[1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1]).unwrap()];
        assert_eq!(make_target_labels(&a, &mut derived_rng(0, "t", 0)), a);
    }
}
