use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut};

use serde::{Deserialize, Serialize};

/// A d-vector of nonnegative integers: population or offspring counts by type.
///
/// Types are zero-based in the API (`0..d`); exported files render them one-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Counts(pub Vec<u64>);

impl Counts {
    pub fn zeros(d: usize) -> Self {
        Counts(vec![0; d])
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut c = Counts::zeros(d);
        c.0[i] = 1;
        c
    }

    pub fn scaled_unit(d: usize, i: usize, k: u64) -> Self {
        let mut c = Counts::zeros(d);
        c.0[i] = k;
        c
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Counts) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Copy with coordinate `i` set to zero.
    pub fn erase(&self, i: usize) -> Counts {
        let mut c = self.clone();
        c.0[i] = 0;
        c
    }

    pub fn iter(&self) -> impl Iterator<Item = &u64> {
        self.0.iter()
    }

    /// Comma-separated rendering used by the tabular exports.
    pub fn to_csv(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        parts.join(",")
    }
}

impl From<Vec<u64>> for Counts {
    fn from(v: Vec<u64>) -> Self {
        Counts(v)
    }
}

impl Index<usize> for Counts {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Counts {
    fn index_mut(&mut self, i: usize) -> &mut u64 {
        &mut self.0[i]
    }
}

impl AddAssign<&Counts> for Counts {
    fn add_assign(&mut self, rhs: &Counts) {
        debug_assert_eq!(self.dim(), rhs.dim());
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl Add<&Counts> for &Counts {
    type Output = Counts;
    fn add(self, rhs: &Counts) -> Counts {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.to_csv())
    }
}
