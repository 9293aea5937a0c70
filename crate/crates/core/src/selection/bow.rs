//! Sparse bag-of-words vectors over an interned vocabulary, compared with
//! cosine distance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Token-id interner shared by all vectors of one index. Ordered storage
/// keeps serialization and every derived float computation deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    map: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.map.get(token) {
            return id;
        }
        let id = self.map.len() as u32;
        self.map.insert(token.to_string(), id);
        id
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.map.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Sparse count vector; no zero-count entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BowVector {
    counts: BTreeMap<u32, u32>,
}

impl BowVector {
    /// Tokenize and count. Interns unseen tokens into `vocab`.
    pub fn from_text(text_in: &str, vocab: &mut Vocabulary, lowercase: bool) -> Self {
        let mut counts = BTreeMap::new();
        for token in text::tokenize(text_in, lowercase) {
            let id = vocab.intern(&token);
            *counts.entry(id).or_insert(0) += 1;
        }
        BowVector { counts }
    }

    /// Like `from_text` but never grows the vocabulary; unseen query tokens
    /// cannot match any indexed vector and are dropped.
    pub fn from_query(text_in: &str, vocab: &Vocabulary, lowercase: bool) -> Self {
        let mut counts = BTreeMap::new();
        for token in text::tokenize(text_in, lowercase) {
            if let Some(id) = vocab.lookup(&token) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        BowVector { counts }
    }

    pub fn from_counts(counts: BTreeMap<u32, u32>) -> Self {
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        BowVector { counts }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.counts
            .values()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
    }

    pub fn dot(&self, other: &BowVector) -> f64 {
        // Iterate the smaller map.
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (&self.counts, &other.counts)
        } else {
            (&other.counts, &self.counts)
        };
        small
            .iter()
            .filter_map(|(id, &c)| large.get(id).map(|&d| c as f64 * d as f64))
            .sum()
    }
}

/// Cosine distance `1 - a.b / (|a||b|)`, clamped into [0, 1] against
/// floating-point drift. Symmetric; errors on empty vectors.
///
/// The norm product is computed as `sqrt(|a|^2 * |b|^2)`: count vectors have
/// exact integer dot products and squared norms, so identical vectors get a
/// distance of exactly zero.
pub fn bow_distance(a: &BowVector, b: &BowVector) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput(
            "cosine distance of an empty bag-of-words vector".into(),
        ));
    }
    let cos = a.dot(b) / (a.norm_sq() * b.norm_sq()).sqrt();
    Ok((1.0 - cos).clamp(0.0, 1.0))
}
