use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::Rng as _;

use super::{Mat, NeuralError};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub grad: Mat,
}

/// Named parameter matrices, each with a same-shape gradient buffer.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Mat {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].grad
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    /// Copies values (not gradients) from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            p.value.assign(&q.value);
        }
    }

    /// Text dump: a `param <name> <rows> <cols>` line followed by one line
    /// of space-separated values, per parameter.
    pub fn write_text<W: Write>(&self, prefix: &str, w: &mut W) -> std::io::Result<()> {
        for p in &self.params {
            let (r, c) = p.value.dim();
            writeln!(w, "param {prefix}{} {r} {c}", p.name)?;
            let mut first = true;
            for v in p.value.iter() {
                if !first {
                    write!(w, " ")?;
                }
                write!(w, "{v:?}")?;
                first = false;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Loads values written by [`write_text`](Self::write_text) into a store
    /// with matching names and shapes. Entries with other prefixes are ignored.
    pub fn read_text<R: BufRead>(&mut self, prefix: &str, r: R) -> Result<(), NeuralError> {
        let bad = |m: String| NeuralError::Checkpoint(m);
        let mut lines = r.lines();
        let mut seen = vec![false; self.params.len()];
        while let Some(header) = lines.next() {
            let header = header?;
            if header.trim().is_empty() || header.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = header.split_whitespace().collect();
            let [tag, name, rows, cols] = parts[..] else {
                return Err(bad(format!("malformed header '{header}'")));
            };
            if tag != "param" {
                return Err(bad(format!("malformed header '{header}'")));
            }
            let body = lines
                .next()
                .ok_or_else(|| bad(format!("missing values for {name}")))??;
            let Some(local) = name.strip_prefix(prefix) else {
                continue;
            };
            let idx = self
                .params
                .iter()
                .position(|p| p.name == local)
                .ok_or_else(|| bad(format!("unknown parameter {name}")))?;
            let shape: (usize, usize) = (
                rows.parse().map_err(|_| bad(format!("bad rows in '{header}'")))?,
                cols.parse().map_err(|_| bad(format!("bad cols in '{header}'")))?,
            );
            if shape != self.params[idx].value.dim() {
                return Err(bad(format!(
                    "{name}: shape {shape:?} != expected {:?}",
                    self.params[idx].value.dim()
                )));
            }
            let values = body
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if values.len() != shape.0 * shape.1 {
                return Err(bad(format!("{name}: expected {} values", shape.0 * shape.1)));
            }
            self.params[idx].value = Array2::from_shape_vec(shape, values).expect("checked length");
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(bad(format!("missing parameter {prefix}{}", self.params[i].name)));
        }
        Ok(())
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Mat {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}
