//! Fixed-capacity open-addressing table with a load threshold.
//!
//! The table never grows. Inserting a new key when `len == max_load` fails
//! with [`TableFull`], which the batching layer turns into an early share.

use crate::sketch::{mix64, FlowId};

pub trait TableKey: Copy + Eq {
    fn hash64(&self) -> u64;
}

impl TableKey for FlowId {
    fn hash64(&self) -> u64 {
        mix64(self.key() ^ 0x5bd1_e995)
    }
}

impl TableKey for u32 {
    fn hash64(&self) -> u64 {
        mix64(*self as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableFull;

#[derive(Debug, Clone)]
pub struct CompactTable<K: TableKey> {
    buckets: Vec<Option<(K, u64)>>,
    /// Bucket indices in first-insertion order.
    order: Vec<usize>,
    max_load: usize,
}

impl<K: TableKey> CompactTable<K> {
    /// `ceil(expected / alpha)` buckets, holding at most `floor(alpha * buckets)` keys.
    pub fn new(expected: usize, alpha: f64) -> Self {
        let expected = expected.max(1);
        let buckets = super::ceil_ratio(expected as f64, alpha);
        let buckets = buckets.max(expected);
        let max_load = ((alpha * buckets as f64).floor() as usize).clamp(expected, buckets);
        Self {
            buckets: vec![None; buckets],
            order: Vec::with_capacity(max_load),
            max_load,
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn max_load(&self) -> usize {
        self.max_load
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn slot(&self, key: &K) -> (usize, bool) {
        let n = self.buckets.len();
        let mut i = (key.hash64() % n as u64) as usize;
        loop {
            match &self.buckets[i] {
                None => return (i, false),
                Some((k, _)) if k == key => return (i, true),
                _ => i = (i + 1) % n,
            }
        }
    }

    pub fn get(&self, key: &K) -> u64 {
        if self.order.is_empty() {
            return 0;
        }
        match self.slot(key) {
            (i, true) => self.buckets[i].as_ref().map_or(0, |e| e.1),
            _ => 0,
        }
    }

    pub fn contains(&self, key: &K) -> bool {
        !self.order.is_empty() && self.slot(key).1
    }

    /// True when inserting `key` would fail.
    pub fn would_overflow(&self, key: &K) -> bool {
        self.order.len() >= self.max_load && !self.contains(key)
    }

    pub fn add(&mut self, key: K, delta: u64) -> Result<(), TableFull> {
        let (i, found) = self.slot(&key);
        if found {
            if let Some(e) = self.buckets[i].as_mut() {
                e.1 += delta;
            }
            return Ok(());
        }
        if self.order.len() >= self.max_load {
            return Err(TableFull);
        }
        self.buckets[i] = Some((key, delta));
        self.order.push(i);
        Ok(())
    }

    /// Entries in first-insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (K, u64)> + '_ {
        self.order
            .iter()
            .filter_map(move |&i| self.buckets[i].as_ref().map(|&(k, v)| (k, v)))
    }

    pub fn clear(&mut self) {
        for &i in &self.order {
            self.buckets[i] = None;
        }
        self.order.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_from_alpha() {
        let t: CompactTable<u32> = CompactTable::new(8, 0.8);
        assert_eq!(t.bucket_count(), 10);
        assert_eq!(t.max_load(), 8);
        let t: CompactTable<u32> = CompactTable::new(10, 1.0);
        assert_eq!((t.bucket_count(), t.max_load()), (10, 10));
    }

    #[test]
    fn fills_then_refuses_new_keys() {
        let mut t: CompactTable<u32> = CompactTable::new(4, 0.8);
        for k in 0..4 {
            t.add(k, 1).unwrap();
        }
        assert_eq!(t.add(9, 1), Err(TableFull));
        assert!(t.would_overflow(&9));
        t.add(2, 5).unwrap();
        assert_eq!(t.get(&2), 6);
        assert_eq!(t.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        t.clear();
        assert!(t.is_empty());
        assert_eq!(t.get(&2), 0);
        t.add(9, 1).unwrap();
    }

    #[test]
    fn matches_map_oracle() {
        use std::collections::HashMap;
        let mut t: CompactTable<u32> = CompactTable::new(300, 0.9);
        let mut m: HashMap<u32, u64> = HashMap::new();
        for i in 0..2000u32 {
            let k = (i * 7919) % 300;
            t.add(k, 1).unwrap();
            *m.entry(k).or_default() += 1;
        }
        for (k, v) in m {
            assert_eq!(t.get(&k), v);
        }
    }
}
