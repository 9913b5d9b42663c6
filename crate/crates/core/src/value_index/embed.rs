use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    /// Transport or service failure; callers may retry.
    #[error("embedding backend error: {0}")]
    Backend(String),
    #[error("embedding backend returned an invalid response: {0}")]
    BadResponse(String),
}

pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in index manifests.
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    /// One unit-norm vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hashed character-trigram bag; deterministic and offline.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: 256 }
    }
}

impl TrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        TrigramEmbedder { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
        let mut v = vec![0f64; self.dim];
        if padded.len() < 3 {
            let s: String = padded.iter().collect();
            v[(fnv1a(s.as_bytes()) % self.dim as u64) as usize] += 1.0;
        } else {
            let mut buf = String::new();
            for w in padded.windows(3) {
                buf.clear();
                buf.extend(w);
                v[(fnv1a(buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
            }
        }
        l2_normalize(&mut v);
        v.into_iter().map(|x| x as f32).collect()
    }
}

impl Embedder for TrigramEmbedder {
    fn name(&self) -> String {
        format!("trigram-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub model: String,
    pub dimension: usize,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_batch() -> usize {
    128
}

/// Embedding service over HTTP: request `{"model", "input": [texts]}`; response is
/// either a bare array of vectors or `{"data": [{"embedding": [...]}, ...]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbeddingError::Backend(e.to_string()))?;
        Ok(RemoteEmbedder { config, client })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let mut req = self.client.post(&self.config.url).json(&json!({"model": self.config.model, "input": texts}));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbeddingError::Backend(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbeddingError::Backend(format!("HTTP {}", resp.status())));
        }
        let body: Value = resp.json().map_err(|e| EmbeddingError::BadResponse(e.to_string()))?;
        parse_embedding_response(&body, texts.len(), self.config.dimension)
    }
}

pub(crate) fn parse_embedding_response(body: &Value, expected: usize, dim: usize) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    let rows: Vec<&Value> = match body {
        Value::Array(rows) => rows.iter().collect(),
        Value::Object(_) => {
            let data = body
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbeddingError::BadResponse("missing `data` array".into()))?;
            let mut indexed: Vec<(u64, &Value)> = data
                .iter()
                .enumerate()
                .map(|(i, d)| (d.get("index").and_then(Value::as_u64).unwrap_or(i as u64), d))
                .collect();
            indexed.sort_by_key(|(i, _)| *i);
            indexed
                .into_iter()
                .map(|(_, d)| d.get("embedding").ok_or_else(|| EmbeddingError::BadResponse("missing `embedding`".into())))
                .collect::<Result<_, _>>()?
        }
        _ => return Err(EmbeddingError::BadResponse("expected array or object".into())),
    };
    if rows.len() != expected {
        return Err(EmbeddingError::BadResponse(format!("expected {expected} vectors, got {}", rows.len())));
    }
    rows.into_iter()
        .map(|row| {
            let mut v: Vec<f64> = row
                .as_array()
                .ok_or_else(|| EmbeddingError::BadResponse("vector is not an array".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| EmbeddingError::BadResponse("non-numeric component".into())))
                .collect::<Result<_, _>>()?;
            if v.len() != dim {
                return Err(EmbeddingError::BadResponse(format!("expected dimension {dim}, got {}", v.len())));
            }
            l2_normalize(&mut v);
            Ok(v.into_iter().map(|x| x as f32).collect())
        })
        .collect()
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> String {
        format!("remote-{}-{}", self.config.model, self.config.dimension)
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
    }

    #[test]
    fn trigram_vectors_are_unit_and_case_insensitive() {
        let e = TrigramEmbedder::default();
        for t in ["SIPO", "", "a", "Pisek", "household payment"] {
            assert!((norm(&e.embed_one(t)) - 1.0).abs() < 1e-6, "{t}");
        }
        assert_eq!(e.embed_one("SIPO"), e.embed_one("sipo"));
        assert_ne!(e.embed_one("SIPO"), e.embed_one("POJISTNE"));
    }

    #[test]
    fn trigram_counts_match_hand_hashing() {
        let e = TrigramEmbedder::new(64);
        let v = e.embed_one("ab");
        // " ab " has trigrams " ab" and "ab "
        let mut expected = vec![0f64; 64];
        expected[(fnv1a(" ab".as_bytes()) % 64) as usize] += 1.0;
        expected[(fnv1a("ab ".as_bytes()) % 64) as usize] += 1.0;
        l2_normalize(&mut expected);
        let expected: Vec<f32> = expected.into_iter().map(|x| x as f32).collect();
        assert_eq!(v, expected);
    }

    #[test]
    fn remote_response_forms() {
        let bare = json!([[3.0, 4.0], [0.0, 2.0]]);
        let v = parse_embedding_response(&bare, 2, 2).unwrap();
        assert_eq!(v, vec![vec![0.6f32, 0.8], vec![0.0, 1.0]]);
        let openai = json!({"data": [{"index": 1, "embedding": [0.0, 1.0]}, {"index": 0, "embedding": [1.0, 0.0]}]});
        let v = parse_embedding_response(&openai, 2, 2).unwrap();
        assert_eq!(v[0], vec![1.0f32, 0.0]);
        assert!(parse_embedding_response(&bare, 3, 2).is_err());
        assert!(parse_embedding_response(&bare, 2, 3).is_err());
    }
}
