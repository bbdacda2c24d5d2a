//! Character LSTM: the final hidden state after reading the characters
//! left to right.

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::neural::{xavier_uniform, Lstm, LstmCache, Mat, ParamId, ParamStore};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharLstmConfig {
    pub char_dim: usize,
    pub hidden: usize,
}

impl Default for CharLstmConfig {
    fn default() -> Self {
        CharLstmConfig {
            char_dim: 20,
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CharLstm {
    cfg: CharLstmConfig,
    embed: ParamId,
    lstm: Lstm,
}

struct Group {
    members: Vec<usize>,
    cache: LstmCache,
}

pub struct CharLstmCache {
    seqs: Vec<Vec<usize>>,
    groups: Vec<Group>,
}

impl CharLstm {
    pub fn new(store: &mut ParamStore, cfg: CharLstmConfig, vocab: usize, rng: &mut Rng) -> Self {
        let embed = store.add(
            "lstm.char_embed",
            xavier_uniform(vocab, cfg.char_dim, vocab, cfg.char_dim, rng),
        );
        let lstm = Lstm::new(store, "lstm.cell", cfg.char_dim, cfg.hidden, rng);
        CharLstm { cfg, embed, lstm }
    }

    pub fn config(&self) -> &CharLstmConfig {
        &self.cfg
    }

    /// Sequences of equal length are run together as one batch.
    pub fn forward(&self, store: &ParamStore, seqs: &[Vec<usize>]) -> (Mat, CharLstmCache) {
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (n, q) in seqs.iter().enumerate() {
            assert!(!q.is_empty(), "empty character sequence");
            by_len.entry(q.len()).or_default().push(n);
        }
        let table = store.value(self.embed);
        let mut out = Array2::zeros((seqs.len(), self.cfg.hidden));
        let mut groups = Vec::with_capacity(by_len.len());
        for (len, members) in by_len {
            let xs: Vec<Mat> = (0..len)
                .map(|t| {
                    let mut x = Array2::zeros((members.len(), self.cfg.char_dim));
                    for (r, &n) in members.iter().enumerate() {
                        x.row_mut(r).assign(&table.row(seqs[n][t]));
                    }
                    x
                })
                .collect();
            let cache = self.lstm.forward(store, &xs);
            for (r, &n) in members.iter().enumerate() {
                out.row_mut(n).assign(&cache.last().row(r));
            }
            groups.push(Group { members, cache });
        }
        (
            out,
            CharLstmCache {
                seqs: seqs.to_vec(),
                groups,
            },
        )
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &CharLstmCache, d_out: &Mat) {
        let mut d_embed = Array2::zeros(store.value(self.embed).raw_dim());
        for g in &cache.groups {
            let len = cache.seqs[g.members[0]].len();
            let b = g.members.len();
            let mut dh = vec![Array2::zeros((b, self.cfg.hidden)); len];
            for (r, &n) in g.members.iter().enumerate() {
                dh[len - 1].row_mut(r).assign(&d_out.row(n));
            }
            let dxs = self.lstm.backward(store, &g.cache, &dh);
            for (t, dx) in dxs.iter().enumerate() {
                for (r, &n) in g.members.iter().enumerate() {
                    let mut row = d_embed.row_mut(cache.seqs[n][t]);
                    row += &dx.slice(s![r, ..]);
                }
            }
        }
        *store.grad_mut(self.embed) += &d_embed;
    }
}
