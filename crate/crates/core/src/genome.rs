use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_GENES: usize = 32;

/// Binary band-subset genome. Gene `i` (0-based) switches band `i + 1`.
///
/// Written as a string of `0`/`1` with gene 1 first, e.g. `1011110` selects
/// bands 1, 3, 4, 5 and 6. Ordering is lexicographic on that string.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Genome {
    bits: u32,
    len: u8,
}

impl Genome {
    pub fn from_genes(genes: &[bool]) -> Result<Self> {
        if genes.is_empty() || genes.len() > MAX_GENES {
            return Err(Error::Parameter(format!(
                "genome length must be in 1..={MAX_GENES}, got {}",
                genes.len()
            )));
        }
        let bits = genes
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &g)| acc | ((g as u32) << i));
        Ok(Genome {
            bits,
            len: genes.len() as u8,
        })
    }

    /// Genome of length `len` with the given 1-based bands switched on.
    pub fn from_bands(len: usize, bands: &[usize]) -> Result<Self> {
        let mut genes = vec![false; len];
        for &b in bands {
            if b == 0 || b > len {
                return Err(Error::Parameter(format!("band {b} outside 1..={len}")));
            }
            genes[b - 1] = true;
        }
        Self::from_genes(&genes)
    }

    /// Genome of length `len` from a bit pattern, gene 1 in the least significant bit.
    pub fn from_bits(len: usize, bits: u32) -> Self {
        debug_assert!((1..=MAX_GENES).contains(&len));
        let mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
        Genome {
            bits: bits & mask,
            len: len as u8,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn gene(&self, i: usize) -> bool {
        i < self.len() && (self.bits >> i) & 1 == 1
    }

    pub fn genes(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.gene(i)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// 1-based indices of the selected bands, ascending.
    pub fn active_bands(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.gene(i)).map(|i| i + 1).collect()
    }
}

impl Ord for Genome {
    fn cmp(&self, other: &Self) -> Ordering {
        for i in 0..self.len().min(other.len()) {
            match self.gene(i).cmp(&other.gene(i)) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.len.cmp(&other.len)
    }
}

impl PartialOrd for Genome {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.gene(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({self})")
    }
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let genes = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Format {
                    what: "genome".into(),
                    detail: format!("unexpected character {c:?} in {s:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Genome::from_genes(&genes)
    }
}

impl Serialize for Genome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_form_lists_gene_one_first() {
        let g: Genome = "1011110".parse().unwrap();
        assert_eq!(g.active_bands(), vec![1, 3, 4, 5, 6]);
        assert_eq!(g.to_string(), "1011110");
        assert_eq!(Genome::from_bands(7, &[1, 3, 4, 5, 6]).unwrap(), g);
        assert_eq!(g.active_count(), 5);
    }

    #[test]
    fn lexicographic_order() {
        let a: Genome = "0000001".parse().unwrap();
        let b: Genome = "1000000".parse().unwrap();
        assert!(a < b);
    }

    #[test]
    fn rejects_bad_input() {
        assert!("10x".parse::<Genome>().is_err());
        assert!("".parse::<Genome>().is_err());
        assert!(Genome::from_bands(7, &[8]).is_err());
    }

    #[test]
    fn serde_as_string() {
        let g: Genome = "0110000".parse().unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, "\"0110000\"");
        assert_eq!(serde_json::from_str::<Genome>(&s).unwrap(), g);
    }
}
