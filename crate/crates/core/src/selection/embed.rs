//! Dense sentence embeddings for kNN retrieval.
//!
//! The external-service adapter talks to any HTTP endpoint implementing the
//! `{"texts": [...]} -> {"vectors": [[...], ...]}` contract. The built-in
//! hashed character-n-gram embedder is a deterministic offline fallback so
//! every test and the acceptance suite run without a model server.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{fnv1a_64, mix_seed};

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    /// Embed a batch of texts; the result is aligned with the input.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Hashed character-n-gram random projection. Each n-gram hashes to a
/// coordinate and a sign; the accumulated vector is L2-normalized. Fixed
/// seed, no model assets, identical output on every platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub dims: usize,
    pub ngram: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dims: 256,
            ngram: 3,
            seed: 0x5eed_c0de,
        }
    }
}

impl HashEmbedder {
    fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        if chars.is_empty() {
            return Err(Error::EmptyInput("cannot embed empty text".into()));
        }
        let mut acc = vec![0.0f64; self.dims];
        let windows: Vec<&[char]> = if chars.len() < self.ngram {
            vec![&chars[..]]
        } else {
            chars.windows(self.ngram).collect()
        };
        let mut buf = String::new();
        for window in windows {
            buf.clear();
            buf.extend(window.iter());
            let h = fnv1a_64(buf.as_bytes()) ^ mix_seed(self.seed, 0);
            let idx = (h % self.dims as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            acc[idx] += sign;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Signs cancelled exactly; fall back to a unit vector on the
            // coordinate of the whole text so the embedding stays valid.
            let h = fnv1a_64(text.as_bytes());
            acc[(h % self.dims as u64) as usize] = 1.0;
            return Ok(acc.into_iter().map(|v| v as f32).collect());
        }
        Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dims
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[derive(Serialize)]
struct EmbedWire<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedWireResponse {
    vectors: Vec<Vec<f32>>,
}

/// Adapter for an external embedding service.
pub struct HttpEmbedder {
    endpoint: String,
    dims: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, dims: usize, timeout_secs: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(timeout_secs)))
            .build()
            .new_agent();
        HttpEmbedder {
            endpoint: endpoint.into(),
            dims,
            agent,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dims
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedWire { texts })
            .map_err(|e| Error::Backend {
                message: format!("embedding request failed: {e}"),
                attempts: 1,
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(Error::Backend {
                message: format!("embedding service returned status {status}"),
                attempts: 1,
            });
        }
        let parsed: EmbedWireResponse =
            resp.body_mut().read_json().map_err(|e| Error::Backend {
                message: format!("bad embedding response: {e}"),
                attempts: 1,
            })?;
        if parsed.vectors.len() != texts.len() {
            return Err(Error::LengthMismatch {
                context: "embedding response".into(),
                expected: texts.len(),
                actual: parsed.vectors.len(),
            });
        }
        for v in &parsed.vectors {
            if v.len() != self.dims {
                return Err(Error::LengthMismatch {
                    context: "embedding dimension".into(),
                    expected: self.dims,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Backend {
                    message: "embedding contains non-finite values".into(),
                    attempts: 1,
                });
            }
        }
        Ok(parsed.vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_across_calls() {
        let e = HashEmbedder::default();
        let a = e.embed(&["the quick brown fox"]).unwrap();
        let b = e.embed(&["the quick brown fox"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_norm() {
        let e = HashEmbedder::default();
        let v = &e.embed(&["some sentence with several words"]).unwrap()[0];
        let norm: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        assert_eq!(v.len(), 256);
    }

    #[test]
    fn different_texts_differ() {
        let e = HashEmbedder::default();
        let out = e.embed(&["alpha beta gamma", "completely unrelated words"]).unwrap();
        assert_ne!(out[0], out[1]);
    }

    #[test]
    fn empty_text_errors() {
        let e = HashEmbedder::default();
        assert!(e.embed(&[""]).is_err());
    }

    #[test]
    fn short_text_uses_whole_text_gram() {
        let e = HashEmbedder::default();
        let v = &e.embed(&["ab"]).unwrap()[0];
        assert!(v.iter().any(|&x| x != 0.0));
    }
}
