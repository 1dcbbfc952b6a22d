//! Integer wavevectors on `Z^d \ {0}` and the sign convention that splits
//! them into sine and cosine basis directions.

use serde::Serialize;
use std::fmt;

/// A wavevector in `Z^d`. The zero vector is representable but excluded
/// from every basis-indexing role.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct KVec(pub Vec<i32>);

impl KVec {
    pub fn new(coords: Vec<i32>) -> Self {
        KVec(coords)
    }

    /// Unit vector along axis `i` (0-based) in dimension `d`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = vec![0; d];
        v[i] = 1;
        KVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn max_norm(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn neg(&self) -> Self {
        KVec(self.0.iter().map(|&c| -c).collect())
    }

    pub fn add(&self, other: &KVec) -> Self {
        KVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn scale(&self, s: i32) -> Self {
        KVec(self.0.iter().map(|&c| c * s).collect())
    }

    /// Sign class of a nonzero wavevector: positive when its first nonzero
    /// coordinate is positive.
    pub fn parity(&self) -> Parity {
        for &c in &self.0 {
            if c > 0 {
                return Parity::Positive;
            }
            if c < 0 {
                return Parity::Negative;
            }
        }
        panic!("zero wavevector has no parity");
    }
}

impl fmt::Debug for KVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for KVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which half of `Z^d_*` a wavevector lies in. Positive vectors index sine
/// modes `sin<k,x>`, negative ones index `-cos<k,x>`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum Parity {
    Positive,
    Negative,
}

/// A wavevector together with its derived sign class.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct BasisIndex {
    pub k: KVec,
    pub parity: Parity,
}

impl BasisIndex {
    pub fn new(k: KVec) -> Self {
        let parity = k.parity();
        BasisIndex { k, parity }
    }
}
