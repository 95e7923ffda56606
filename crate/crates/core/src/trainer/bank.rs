use std::collections::VecDeque;

use super::{Result, TrainError};
use crate::losses::ContrastKey;

#[derive(Clone, Debug, PartialEq)]
pub struct BankEntry {
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub label: usize,
    /// Push counter at insertion; strictly increasing through the queue.
    pub age: u64,
}

/// Fixed-capacity FIFO holding the key queue and the confidence queue as one
/// sequence of aligned entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastBank {
    capacity: usize,
    entries: VecDeque<BankEntry>,
    clock: u64,
}

impl ContrastBank {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::with_capacity(capacity), clock: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter()
    }

    pub fn push(&mut self, keys: &[Vec<f64>], logits: &[Vec<f64>], labels: &[usize]) -> Result<()> {
        if keys.len() != logits.len() || keys.len() != labels.len() {
            return Err(TrainError::Contract(format!(
                "bank push with {} keys, {} logits, {} labels",
                keys.len(),
                logits.len(),
                labels.len()
            )));
        }
        for ((k, z), &label) in keys.iter().zip(logits).zip(labels) {
            self.entries.push_back(BankEntry { embedding: k.clone(), logits: z.clone(), label, age: self.clock });
            self.clock += 1;
            while self.entries.len() > self.capacity {
                self.entries.pop_front();
            }
        }
        Ok(())
    }

    pub fn push_keys(&mut self, keys: &[ContrastKey]) {
        for k in keys {
            self.entries.push_back(BankEntry { embedding: k.embedding.clone(), logits: k.logits.clone(), label: k.label, age: self.clock });
            self.clock += 1;
            while self.entries.len() > self.capacity {
                self.entries.pop_front();
            }
        }
    }

    pub fn as_keys(&self) -> Vec<ContrastKey> {
        self.entries
            .iter()
            .map(|e| ContrastKey { embedding: e.embedding.clone(), logits: e.logits.clone(), label: e.label })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push_one(bank: &mut ContrastBank, tag: f64) {
        bank.push(&[vec![tag]], &[vec![-tag]], &[tag as usize]).unwrap();
    }

    #[test]
    fn evicts_oldest_first() {
        let mut bank = ContrastBank::new(2);
        bank.push(&[vec![1.0], vec![2.0], vec![3.0]], &[vec![1.0], vec![2.0], vec![3.0]], &[0, 1, 2]).unwrap();
        let tags: Vec<f64> = bank.entries().map(|e| e.embedding[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
        assert_eq!(bank.entries().map(|e| e.age).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn empty_push_is_noop() {
        let mut bank = ContrastBank::new(3);
        push_one(&mut bank, 1.0);
        let before = bank.clone();
        bank.push(&[], &[], &[]).unwrap();
        assert_eq!(bank, before);
    }

    #[test]
    fn misaligned_push_rejected() {
        let mut bank = ContrastBank::new(3);
        assert!(bank.push(&[vec![1.0]], &[], &[0]).is_err());
        assert!(bank.is_empty());
    }

    #[test]
    fn zero_capacity_stays_empty() {
        let mut bank = ContrastBank::new(0);
        push_one(&mut bank, 4.0);
        assert!(bank.is_empty());
    }
}
