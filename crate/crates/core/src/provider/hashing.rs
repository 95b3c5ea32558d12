use super::{Embedder, EmbeddingVector, ProviderError};

/// Deterministic offline embedder: each token is hashed (FNV-1a) into one of
/// `dim` buckets, counts are accumulated and the vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lower-cased alphanumeric runs (underscore counts as alphanumeric).
pub(crate) fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

impl HashingEmbedder {
    pub const MODEL_ID: &'static str = "offline-hash";

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let mut values = vec![0.0f64; self.dim];
        let mut any = false;
        for tok in word_tokens(text) {
            values[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            // punctuation-only text still gets a stable, non-zero vector
            values[(fnv1a(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector {
            values,
            model_id: Self::MODEL_ID.into(),
        })
    }
}
