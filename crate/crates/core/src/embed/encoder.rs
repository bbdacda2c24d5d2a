use ndarray::{s, Array2};

use super::char_lstm::{CharLstm, CharLstmCache, CharLstmConfig};
use super::chars::CharVocab;
use super::cnn::{CharCnn, CharCnnConfig, CnnCache};
use super::EmbedError;
use crate::neural::{Mat, ParamStore};
use crate::seed;

// Tokens per forward pass when encoding a whole vocabulary.
const ENCODE_CHUNK: usize = 512;

#[derive(Debug, Clone)]
pub enum CharArch {
    Cnn(CharCnn),
    Lstm(CharLstm),
}

pub enum CharCache {
    Cnn(CnnCache),
    Lstm(CharLstmCache),
}

/// A character-level token encoder that owns its parameters.
#[derive(Debug, Clone)]
pub struct CharEncoder {
    vocab: CharVocab,
    arch: CharArch,
    store: ParamStore,
    trainable: bool,
}

impl CharEncoder {
    pub fn cnn(cfg: CharCnnConfig, trainable: bool, seed: u64) -> Self {
        let vocab = CharVocab;
        let mut store = ParamStore::new();
        let arch = CharArch::Cnn(CharCnn::new(&mut store, cfg, vocab.size(), &mut seed::rng(seed)));
        CharEncoder {
            vocab,
            arch,
            store,
            trainable,
        }
    }

    pub fn lstm(cfg: CharLstmConfig, trainable: bool, seed: u64) -> Self {
        let vocab = CharVocab;
        let mut store = ParamStore::new();
        let arch = CharArch::Lstm(CharLstm::new(&mut store, cfg, vocab.size(), &mut seed::rng(seed)));
        CharEncoder {
            vocab,
            arch,
            store,
            trainable,
        }
    }

    pub fn arch(&self) -> &CharArch {
        &self.arch
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn dim(&self) -> usize {
        match &self.arch {
            CharArch::Cnn(c) => c.config().output_dim(),
            CharArch::Lstm(l) => l.config().hidden,
        }
    }

    pub fn vocab(&self) -> CharVocab {
        self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn chars(&self, surface: &str) -> Result<Vec<usize>, EmbedError> {
        self.vocab.encode(surface)
    }

    pub fn forward(&self, seqs: &[Vec<usize>]) -> (Mat, CharCache) {
        match &self.arch {
            CharArch::Cnn(c) => {
                let (m, k) = c.forward(&self.store, seqs);
                (m, CharCache::Cnn(k))
            }
            CharArch::Lstm(l) => {
                let (m, k) = l.forward(&self.store, seqs);
                (m, CharCache::Lstm(k))
            }
        }
    }

    /// Accumulates parameter gradients for `d_out` (one row per sequence).
    pub fn backward(&mut self, cache: &CharCache, d_out: &Mat) {
        match (&self.arch, cache) {
            (CharArch::Cnn(c), CharCache::Cnn(k)) => c.backward(&mut self.store, k, d_out),
            (CharArch::Lstm(l), CharCache::Lstm(k)) => l.backward(&mut self.store, k, d_out),
            _ => panic!("cache does not match encoder architecture"),
        }
    }

    /// Encodes many sequences without keeping backward state.
    pub fn encode_seqs(&self, seqs: &[Vec<usize>]) -> Mat {
        let mut out = Array2::zeros((seqs.len(), self.dim()));
        for (i, chunk) in seqs.chunks(ENCODE_CHUNK).enumerate() {
            let (m, _) = self.forward(chunk);
            let start = i * ENCODE_CHUNK;
            out.slice_mut(s![start..start + chunk.len(), ..]).assign(&m);
        }
        out
    }

    pub fn encode(&self, surface: &str) -> Result<Vec<f64>, EmbedError> {
        let ids = self.chars(surface)?;
        Ok(self.forward(&[ids]).0.row(0).to_vec())
    }
}
