//! Okapi BM25 over whitespace-lowercase tokens.

use std::collections::HashMap;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    df: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(documents: &[S]) -> Self {
        let mut docs = Vec::with_capacity(documents.len());
        let mut lengths = Vec::with_capacity(documents.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in documents {
            let tokens = tokenize(d.as_ref());
            lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            docs.push(tf);
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        };
        Self {
            docs,
            lengths,
            df,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Non-negative idf: ln(1 + (N - df + 0.5) / (df + 0.5)).
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let tf = &self.docs[doc];
        let len = self.lengths[doc] as f64;
        let norm = if self.avg_len > 0.0 { len / self.avg_len } else { 0.0 };
        tokenize(query)
            .iter()
            .map(|t| {
                let f = tf.get(t).copied().unwrap_or(0) as f64;
                if f == 0.0 {
                    return 0.0;
                }
                self.idf(t) * f * (K1 + 1.0) / (f + K1 * (1.0 - B + B * norm))
            })
            .sum()
    }

    pub fn scores(&self, query: &str) -> Vec<f64> {
        (0..self.docs.len()).map(|i| self.score(query, i)).collect()
    }
}
