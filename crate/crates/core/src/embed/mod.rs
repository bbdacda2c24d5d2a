//! Token embedding methods behind one [`Provider`] interface.
//!
//! Frozen providers (vector tables, the value embedding, untrained character
//! encoders) are pure functions of the token. Trainable character encoders
//! are cloned into a probe and optimized jointly with it.

mod char_lstm;
mod chars;
mod cnn;
mod encoder;
mod table;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::Mat;
use crate::numeral::NumberToken;

pub use char_lstm::{CharLstm, CharLstmConfig};
pub use chars::{left_pad, left_pad_surface, CharVocab, PAD, PAD_DISPLAY};
pub use cnn::{CharCnn, CharCnnConfig};
pub use encoder::{CharArch, CharCache, CharEncoder};
pub use table::{
    load_table, load_table_filtered, parse_table, parse_table_filtered, random_table, EmbeddingTable, TableSource,
};

pub const DEFAULT_RANDOM_DIM: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("bad vector file at line {line}: {reason}")]
    BadVectorFile { line: usize, reason: String },
    #[error("expected dimension {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("no vector for '{0}'")]
    MissingToken(String),
    #[error("'{surface}' contains unknown character {ch:?}")]
    UnknownChar { surface: String, ch: char },
    #[error("embedding dimension must be positive")]
    InvalidDim,
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for EmbedError {
    fn from(e: std::io::Error) -> Self {
        EmbedError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueEmbedConfig {
    pub log_scale: bool,
}

impl Default for ValueEmbedConfig {
    fn default() -> Self {
        ValueEmbedConfig { log_scale: true }
    }
}

/// Embeds a number as its own value, or `sign(v) * log10(1 + |v|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ValueEmbedding {
    pub cfg: ValueEmbedConfig,
}

impl ValueEmbedding {
    pub fn new(cfg: ValueEmbedConfig) -> Self {
        ValueEmbedding { cfg }
    }

    pub fn scalar(&self, v: f64) -> f64 {
        if self.cfg.log_scale {
            v.signum() * (1.0 + v.abs()).log10()
        } else {
            v
        }
    }

    pub fn embed(&self, token: &NumberToken) -> [f64; 1] {
        [self.scalar(token.value())]
    }
}

#[derive(Debug, Clone)]
pub enum Provider {
    Table(EmbeddingTable),
    Value(ValueEmbedding),
    Char(CharEncoder),
}

impl Provider {
    pub fn dim(&self) -> usize {
        match self {
            Provider::Table(t) => t.dim(),
            Provider::Value(_) => 1,
            Provider::Char(c) => c.dim(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Provider::Char(c) if c.is_trainable())
    }

    /// Scalars the optimizer may update; zero for frozen providers.
    pub fn trainable_param_count(&self) -> usize {
        match self {
            Provider::Char(c) if c.is_trainable() => c.store().scalar_count(),
            _ => 0,
        }
    }

    pub fn embed(&self, token: &NumberToken) -> Result<Vec<f64>, EmbedError> {
        match self {
            Provider::Table(t) => t
                .get(token.surface())
                .map(|v| v.to_vec())
                .ok_or_else(|| EmbedError::MissingToken(token.surface().to_string())),
            Provider::Value(v) => Ok(v.embed(token).to_vec()),
            Provider::Char(c) => c.encode(token.surface()),
        }
    }

    /// One row per token.
    pub fn embed_all(&self, tokens: &[NumberToken]) -> Result<Mat, EmbedError> {
        match self {
            Provider::Char(c) => {
                let seqs = tokens
                    .iter()
                    .map(|t| c.chars(t.surface()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(c.encode_seqs(&seqs))
            }
            _ => {
                let mut m = Array2::zeros((tokens.len(), self.dim()));
                for (i, t) in tokens.iter().enumerate() {
                    let v = self.embed(t)?;
                    m.row_mut(i).assign(&ndarray::aview1(&v));
                }
                Ok(m)
            }
        }
    }

    fn covers(&self, token: &NumberToken) -> bool {
        match self {
            Provider::Table(t) => t.contains(token.surface()),
            Provider::Value(_) => true,
            Provider::Char(c) => c.chars(token.surface()).is_ok(),
        }
    }
}

/// Checks that every token can be embedded; returns the distinct missing
/// surfaces in first-seen order otherwise.
pub fn validate_coverage<'a>(
    provider: &Provider,
    tokens: impl IntoIterator<Item = &'a NumberToken>,
) -> Result<(), Vec<String>> {
    let mut missing: Vec<String> = Vec::new();
    for t in tokens {
        if !provider.covers(t) && !missing.iter().any(|m| m == t.surface()) {
            missing.push(t.surface().to_string());
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeral::NumberFormat;

    fn tok(v: i64, f: NumberFormat) -> NumberToken {
        NumberToken::new(v, f).unwrap()
    }

    #[test]
    fn value_embedding_signed_log() {
        let e = ValueEmbedding::default();
        let d = NumberFormat::NegativeDigits;
        assert_eq!(e.embed(&tok(0, d)), [0.0]);
        assert_eq!(e.embed(&tok(99, d)), [2.0]);
        assert_eq!(e.embed(&tok(-99, d)), [-2.0]);
        let raw = ValueEmbedding::new(ValueEmbedConfig { log_scale: false });
        assert_eq!(raw.embed(&tok(-7, d)), [-7.0]);
        // Close to plain log10 for large values.
        let v = 100.0f64;
        assert!((e.scalar(v) / v.log10() - 1.0).abs() < 0.005);
    }

    #[test]
    fn value_embedding_is_strictly_increasing() {
        let e = ValueEmbedding::default();
        let mut prev = f64::NEG_INFINITY;
        for v in -10_000..=10_000 {
            let x = e.scalar(v as f64);
            assert!(x > prev);
            prev = x;
        }
    }

    #[test]
    fn coverage_reports_missing_surfaces() {
        let table = EmbeddingTable::from_rows(
            2,
            vec![("seventy-four".into(), vec![0.0, 1.0])],
            TableSource::File,
        )
        .unwrap();
        let w = NumberFormat::Words;
        let toks = [tok(74, w), tok(75, w), tok(75, w)];
        assert_eq!(
            validate_coverage(&Provider::Table(table), &toks),
            Err(vec!["seventy-five".to_string()])
        );
        let value = Provider::Value(ValueEmbedding::default());
        assert_eq!(validate_coverage(&value, &toks), Ok(()));
    }

    #[test]
    fn char_encoder_rejects_unknown_characters() {
        let enc = CharEncoder::cnn(CharCnnConfig::default(), false, 0);
        assert!(matches!(enc.encode("é"), Err(EmbedError::UnknownChar { .. })));
    }

    #[test]
    fn frozen_providers_expose_no_parameters() {
        let cnn = CharCnnConfig::default();
        assert_eq!(cnn.output_dim(), 112);
        let frozen = Provider::Char(CharEncoder::cnn(cnn.clone(), false, 1));
        assert_eq!(frozen.trainable_param_count(), 0);
        let trained = Provider::Char(CharEncoder::cnn(cnn, true, 1));
        // 39x20 char table, then per width w: 20w x 16 weights + 16 biases.
        let convs: usize = (1..=7).map(|w| 20 * w * 16 + 16).sum();
        assert_eq!(trained.trainable_param_count(), 39 * 20 + convs);

        let lstm = Provider::Char(CharEncoder::lstm(CharLstmConfig::default(), true, 1));
        assert_eq!(lstm.dim(), 64);
        assert_eq!(lstm.trainable_param_count(), 39 * 20 + 20 * 256 + 64 * 256 + 256);
        assert_eq!(Provider::Value(ValueEmbedding::default()).trainable_param_count(), 0);
    }

    #[test]
    fn encoders_are_deterministic_and_batch_consistent() {
        for enc in [
            CharEncoder::cnn(CharCnnConfig::default(), false, 7),
            CharEncoder::lstm(CharLstmConfig::default(), false, 7),
        ] {
            let a = enc.encode("75").unwrap();
            assert_eq!(a, enc.encode("75").unwrap());
            assert_eq!(a.len(), enc.dim());
            let toks: Vec<NumberToken> = [75, 3, 1234, 75]
                .iter()
                .map(|&v| tok(v, NumberFormat::Digits))
                .collect();
            let m = Provider::Char(enc.clone()).embed_all(&toks).unwrap();
            for (i, t) in toks.iter().enumerate() {
                let single = enc.encode(t.surface()).unwrap();
                let diff: f64 = m.row(i).iter().zip(&single).map(|(x, y)| (x - y).abs()).sum();
                assert!(diff < 1e-12);
            }
        }
    }
}
