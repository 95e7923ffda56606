use std::fmt;

/// Fixed-size bit set over `num_classes` labels (the candidate indicator vector).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabelSet {
    num_classes: usize,
    words: Vec<u64>,
}

impl LabelSet {
    pub fn empty(num_classes: usize) -> Self {
        Self { num_classes, words: vec![0; num_classes.div_ceil(64).max(1)] }
    }

    pub fn full(num_classes: usize) -> Self {
        let mut set = Self::empty(num_classes);
        (0..num_classes).for_each(|j| set.insert(j));
        set
    }

    pub fn singleton(num_classes: usize, label: usize) -> Self {
        let mut set = Self::empty(num_classes);
        set.insert(label);
        set
    }

    pub fn from_labels(num_classes: usize, labels: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(num_classes);
        labels.into_iter().for_each(|j| set.insert(j));
        set
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Panics when `label >= num_classes`.
    pub fn insert(&mut self, label: usize) {
        assert!(label < self.num_classes, "label {label} out of range for {} classes", self.num_classes);
        self.words[label / 64] |= 1 << (label % 64);
    }

    pub fn remove(&mut self, label: usize) {
        if label < self.num_classes {
            self.words[label / 64] &= !(1 << (label % 64));
        }
    }

    pub fn contains(&self, label: usize) -> bool {
        label < self.num_classes && self.words[label / 64] & (1 << (label % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.num_classes
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_classes).filter(|&j| self.contains(j))
    }

    /// Labels outside the set.
    pub fn complement(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_classes).filter(|&j| !self.contains(j))
    }

    pub fn indicator(&self) -> Vec<f64> {
        (0..self.num_classes).map(|j| if self.contains(j) { 1.0 } else { 0.0 }).collect()
    }

    /// Lowercase hex of the bitmask, most significant digit first; bit `j` is label `j`.
    pub fn to_hex(&self) -> String {
        let digits = self.num_classes.div_ceil(4).max(1);
        let mut out = String::with_capacity(digits);
        let mut started = false;
        for d in (0..digits).rev() {
            let nibble = (0..4).fold(0u8, |acc, b| {
                acc | (u8::from(self.contains(d * 4 + b)) << b)
            });
            if nibble != 0 || started || d == 0 {
                started = true;
                out.push(char::from_digit(nibble as u32, 16).expect("nibble < 16"));
            }
        }
        out
    }

    pub fn from_hex(hex: &str, num_classes: usize) -> Result<Self, String> {
        let hex = hex.trim();
        let hex = hex.strip_prefix("0x").unwrap_or(hex);
        if hex.is_empty() {
            return Err("empty bitmask".into());
        }
        let mut set = Self::empty(num_classes);
        for (d, ch) in hex.chars().rev().enumerate() {
            let nibble = ch.to_digit(16).ok_or_else(|| format!("invalid hex digit {ch:?}"))?;
            for b in 0..4 {
                if nibble & (1 << b) != 0 {
                    let label = d * 4 + b;
                    if label >= num_classes {
                        return Err(format!("bitmask sets label {label} but c={num_classes}"));
                    }
                    set.insert(label);
                }
            }
        }
        Ok(set)
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
