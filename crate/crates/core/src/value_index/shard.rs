use std::cmp::Ordering;
use std::io::{self, Read, Write};

use thiserror::Error;

const MAGIC: &[u8; 4] = b"SFVI";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a value shard (bad magic)")]
    BadMagic,
    #[error("unsupported shard version {0}")]
    Version(u16),
    #[error("shard is corrupt: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("query has dimension {query}, shard has {shard}")]
pub struct DimensionMismatch {
    pub query: usize,
    pub shard: usize,
}

/// Distinct values of one column with their unit-norm vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIndexShard {
    pub table: String,
    pub column: String,
    dim: usize,
    values: Vec<String>,
    /// Row-major, `values.len() * dim`.
    vectors: Vec<f32>,
}

impl ValueIndexShard {
    /// Builds a shard; values are deduplicated and sorted, keeping the first vector seen.
    pub fn new(table: &str, column: &str, dim: usize, entries: Vec<(String, Vec<f32>)>) -> Self {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|b, a| a.0 == b.0);
        let mut values = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (v, vec) in entries {
            assert_eq!(vec.len(), dim, "vector for {v:?} has wrong dimension");
            values.push(v);
            vectors.extend(vec);
        }
        ValueIndexShard { table: table.to_string(), column: column.to_string(), dim, values, vectors }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_to(&self, w: &mut dyn Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        write_str(w, &self.table)?;
        write_str(w, &self.column)?;
        for (i, v) in self.values.iter().enumerate() {
            write_str(w, v)?;
            for x in self.vector(i) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut dyn Read) -> Result<Self, ShardError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ShardError::BadMagic);
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != VERSION {
            return Err(ShardError::Version(version));
        }
        let dim = u32::from_le_bytes(read_array(r)?) as usize;
        let count = u32::from_le_bytes(read_array(r)?) as usize;
        let table = read_str(r)?;
        let column = read_str(r)?;
        let mut values = Vec::with_capacity(count.min(1 << 20));
        let mut vectors = Vec::with_capacity((count * dim).min(1 << 24));
        for _ in 0..count {
            let v = read_str(r)?;
            if values.last().is_some_and(|prev: &String| prev >= &v) {
                return Err(ShardError::Corrupt("values not strictly sorted".into()));
            }
            values.push(v);
            for _ in 0..dim {
                vectors.push(f32::from_le_bytes(read_array(r)?));
            }
        }
        Ok(ValueIndexShard { table, column, dim, values, vectors })
    }
}

fn write_str(w: &mut dyn Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<const N: usize>(r: &mut dyn Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str(r: &mut dyn Read) -> Result<String, ShardError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(ShardError::Corrupt("truncated string".into()));
    }
    String::from_utf8(buf).map_err(|_| ShardError::Corrupt("value is not UTF-8".into()))
}

/// Cosine similarity of a stored unit vector with an arbitrary query vector.
pub fn cosine(stored: &[f32], query: &[f32]) -> f64 {
    let dot: f64 = stored.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum();
    let qn: f64 = query.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if qn == 0.0 {
        return 0.0;
    }
    (dot / qn).clamp(-1.0, 1.0)
}

/// Orders by score descending, then value ascending.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Exact top-`k` search by exhaustive scan.
pub fn nearest_values(shard: &ValueIndexShard, query: &[f32], k: usize) -> Result<Vec<(String, f64)>, DimensionMismatch> {
    assert!(k >= 1, "k must be positive");
    if query.len() != shard.dim {
        return Err(DimensionMismatch { query: query.len(), shard: shard.dim });
    }
    let mut scored: Vec<(String, f64)> =
        (0..shard.len()).map(|i| (shard.values[i].clone(), cosine(shard.vector(i), query))).collect();
    scored.sort_by(rank_order);
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value_index::embed::TrigramEmbedder;

    fn shard_of(values: &[&str]) -> ValueIndexShard {
        let e = TrigramEmbedder::default();
        ValueIndexShard::new("trans", "k_symbol", 256, values.iter().map(|v| (v.to_string(), e.embed_one(v))).collect())
    }

    #[test]
    fn distinct_sorted_and_round_trips() {
        let shard = shard_of(&["Praha", "Pisek", "Praha"]);
        assert_eq!(shard.values(), ["Pisek", "Praha"]);
        let bytes = shard.to_bytes();
        let back = ValueIndexShard::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, shard);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = shard_of(&[]).to_bytes();
        assert_eq!(&bytes[..4], b"SFVI");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 256);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(ValueIndexShard::read_from(&mut &b"NOPE...."[..]), Err(ShardError::BadMagic)));
        let mut bytes = shard_of(&["a"]).to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(ValueIndexShard::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn self_similarity_ranks_first() {
        let shard = shard_of(&["POJISTNE", "SIPO", "SLUZBY", "UVER"]);
        let q = TrigramEmbedder::default().embed_one("SIPO");
        let top = nearest_values(&shard, &q, 1).unwrap();
        assert_eq!(top[0].0, "SIPO");
        assert!((top[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singleton_and_k_larger_than_shard() {
        let shard = shard_of(&["only"]);
        let q = TrigramEmbedder::default().embed_one("x");
        let out = nearest_values(&shard, &q, 5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1, cosine(shard.vector(0), &q));
    }

    #[test]
    fn dimension_mismatch() {
        let shard = shard_of(&["a"]);
        assert_eq!(nearest_values(&shard, &[1.0, 0.0], 1).unwrap_err(), DimensionMismatch { query: 2, shard: 256 });
    }

    #[test]
    fn ties_break_by_value() {
        let shard = ValueIndexShard::new(
            "t",
            "c",
            2,
            vec![("b".into(), vec![1.0, 0.0]), ("a".into(), vec![1.0, 0.0]), ("c".into(), vec![0.0, 1.0])],
        );
        let out = nearest_values(&shard, &[1.0, 0.0], 3).unwrap();
        let names: Vec<&str> = out.iter().map(|(v, _)| v.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }
}
