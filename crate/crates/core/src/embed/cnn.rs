//! Character CNN: embed characters, convolve with several widths, ReLU,
//! max-pool over positions, concatenate.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::chars::left_pad;
use crate::neural::{xavier_uniform, Mat, ParamId, ParamStore};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharCnnConfig {
    pub char_dim: usize,
    pub widths: Vec<usize>,
    pub filters: usize,
}

impl Default for CharCnnConfig {
    fn default() -> Self {
        CharCnnConfig {
            char_dim: 20,
            widths: (1..=7).collect(),
            filters: 16,
        }
    }
}

impl CharCnnConfig {
    pub fn output_dim(&self) -> usize {
        self.widths.len() * self.filters
    }

    /// Sequences are left-padded to at least the widest filter.
    pub fn min_len(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone)]
struct Conv {
    width: usize,
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct CharCnn {
    cfg: CharCnnConfig,
    embed: ParamId,
    convs: Vec<Conv>,
}

struct ConvCache {
    patches: Mat,
    // Per (token, filter): winning patch row, or None when ReLU clipped it.
    winners: Vec<Option<usize>>,
}

pub struct CnnCache {
    seqs: Vec<Vec<usize>>,
    convs: Vec<ConvCache>,
}

impl CharCnn {
    pub fn new(store: &mut ParamStore, cfg: CharCnnConfig, vocab: usize, rng: &mut Rng) -> Self {
        let embed = store.add(
            "cnn.char_embed",
            xavier_uniform(vocab, cfg.char_dim, vocab, cfg.char_dim, rng),
        );
        let convs = cfg
            .widths
            .iter()
            .map(|&width| {
                let fan_in = width * cfg.char_dim;
                Conv {
                    width,
                    w: store.add(
                        format!("cnn.conv{width}.w"),
                        xavier_uniform(fan_in, cfg.filters, fan_in, cfg.filters, rng),
                    ),
                    b: store.add(format!("cnn.conv{width}.b"), Array2::zeros((1, cfg.filters))),
                }
            })
            .collect();
        CharCnn { cfg, embed, convs }
    }

    pub fn config(&self) -> &CharCnnConfig {
        &self.cfg
    }

    pub fn forward(&self, store: &ParamStore, seqs: &[Vec<usize>]) -> (Mat, CnnCache) {
        let dc = self.cfg.char_dim;
        let nf = self.cfg.filters;
        let seqs: Vec<Vec<usize>> = seqs.iter().map(|s| left_pad(s, self.cfg.min_len())).collect();
        let table = store.value(self.embed);
        let mut out = Array2::zeros((seqs.len(), self.cfg.output_dim()));
        let mut caches = Vec::with_capacity(self.convs.len());
        for (ci, conv) in self.convs.iter().enumerate() {
            let w = conv.width;
            let rows: usize = seqs.iter().map(|q| q.len() + 1 - w).sum();
            let mut patches = Array2::zeros((rows, w * dc));
            let mut r = 0;
            for q in &seqs {
                for p in 0..=q.len() - w {
                    for k in 0..w {
                        patches
                            .slice_mut(s![r, k * dc..(k + 1) * dc])
                            .assign(&table.row(q[p + k]));
                    }
                    r += 1;
                }
            }
            let pre = patches.dot(store.value(conv.w)) + store.value(conv.b);
            let mut winners = vec![None; seqs.len() * nf];
            let mut start = 0;
            for (n, q) in seqs.iter().enumerate() {
                let positions = q.len() + 1 - w;
                for f in 0..nf {
                    let mut best = start;
                    for row in start + 1..start + positions {
                        if pre[[row, f]] > pre[[best, f]] {
                            best = row;
                        }
                    }
                    let v = pre[[best, f]];
                    if v > 0.0 {
                        out[[n, ci * nf + f]] = v;
                        winners[n * nf + f] = Some(best);
                    }
                }
                start += positions;
            }
            caches.push(ConvCache { patches, winners });
        }
        (out, CnnCache { seqs, convs: caches })
    }

    /// Smallest distance of any pooled activation from a non-smooth point:
    /// zero (ReLU) or a competing window with different content.
    pub fn pool_margin(&self, store: &ParamStore, seqs: &[Vec<usize>]) -> f64 {
        let nf = self.cfg.filters;
        let seqs: Vec<Vec<usize>> = seqs.iter().map(|s| left_pad(s, self.cfg.min_len())).collect();
        let (_, cache) = self.forward(store, &seqs);
        let mut margin = f64::INFINITY;
        for (conv, cc) in self.convs.iter().zip(&cache.convs) {
            let pre = cc.patches.dot(store.value(conv.w)) + store.value(conv.b);
            let mut start = 0;
            for q in &seqs {
                let positions = q.len() + 1 - conv.width;
                for f in 0..nf {
                    let col: Vec<f64> = (start..start + positions).map(|r| pre[[r, f]]).collect();
                    let best = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    margin = margin.min(best.abs());
                    for &v in &col {
                        if v != best {
                            margin = margin.min(best - v);
                        }
                    }
                }
                start += positions;
            }
        }
        margin
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &CnnCache, d_out: &Mat) {
        let dc = self.cfg.char_dim;
        let nf = self.cfg.filters;
        let mut d_embed = Array2::zeros(store.value(self.embed).raw_dim());
        for (ci, (conv, cc)) in self.convs.iter().zip(&cache.convs).enumerate() {
            let w = conv.width;
            let mut d_pre = Array2::zeros((cc.patches.nrows(), nf));
            for (k, winner) in cc.winners.iter().enumerate() {
                if let Some(row) = *winner {
                    let (n, f) = (k / nf, k % nf);
                    d_pre[[row, f]] += d_out[[n, ci * nf + f]];
                }
            }
            ndarray::linalg::general_mat_mul(1.0, &cc.patches.t(), &d_pre, 1.0, store.grad_mut(conv.w));
            *store.grad_mut(conv.b) += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
            let d_patches = d_pre.dot(&store.value(conv.w).t());
            let mut r = 0;
            for q in &cache.seqs {
                for p in 0..=q.len() - w {
                    for k in 0..w {
                        let mut row = d_embed.row_mut(q[p + k]);
                        row += &d_patches.slice(s![r, k * dc..(k + 1) * dc]);
                    }
                    r += 1;
                }
            }
        }
        *store.grad_mut(self.embed) += &d_embed;
    }
}
