//! Text vector files: `surface f1 f2 ... fd` per line, with an optional
//! word2vec-style `count dim` header line.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    File,
    Random,
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    surfaces: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    source: TableSource,
}

impl EmbeddingTable {
    pub fn from_rows(
        dim: usize,
        rows: Vec<(String, Vec<f64>)>,
        source: TableSource,
    ) -> Result<Self, EmbedError> {
        let mut surfaces = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, (s, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbedError::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(EmbedError::BadVectorFile {
                    line: i + 1,
                    reason: format!("duplicate surface '{s}'"),
                });
            }
            surfaces.push(s);
            data.extend(v);
        }
        let vectors = Array2::from_shape_vec((surfaces.len(), dim), data).expect("sized above");
        Ok(EmbeddingTable {
            dim,
            surfaces,
            index,
            vectors,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.index.contains_key(surface)
    }

    pub fn get(&self, surface: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(surface).map(|&i| self.vectors.row(i))
    }

    pub fn write_text<W: Write>(&self, w: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{} {}", self.len(), self.dim)?;
        }
        for (s, row) in self.surfaces.iter().zip(self.vectors.rows()) {
            write!(w, "{s}")?;
            for v in row {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let (a, b) = (it.next()?, it.next()?);
    if it.next().is_some() {
        return None;
    }
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub fn parse_table<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<EmbeddingTable, EmbedError> {
    parse_table_filtered(reader, expected_dim, None)
}

/// Like [`parse_table`], but keeps only rows whose surface is in `keep`.
/// Skipped rows are still checked for width and counted against the header.
pub fn parse_table_filtered<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbedError> {
    let mut rows = Vec::new();
    let mut seen = 0usize;
    let mut dim = None;
    let mut declared_count = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Some((count, d)) = parse_header(line) {
                dim = Some(d);
                declared_count = Some(count);
                continue;
            }
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let surface = fields.next().expect("non-blank line").to_string();
        seen += 1;
        if keep.is_some_and(|k| !k.contains(&surface)) {
            let width = fields.count();
            let d = *dim.get_or_insert(width);
            if width != d || width == 0 {
                return Err(EmbedError::BadVectorFile {
                    line: lineno,
                    reason: format!("expected {d} values, found {width}"),
                });
            }
            continue;
        }
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EmbedError::BadVectorFile {
                line: lineno,
                reason: format!("non-numeric field: {e}"),
            })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::BadVectorFile {
                line: lineno,
                reason: "non-finite value".into(),
            });
        }
        match dim {
            None if values.is_empty() => {
                return Err(EmbedError::BadVectorFile {
                    line: lineno,
                    reason: "row has no values".into(),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbedError::BadVectorFile {
                    line: lineno,
                    reason: format!("expected {d} values, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        rows.push((surface, values));
    }
    if let Some(count) = declared_count {
        if count != seen {
            return Err(EmbedError::BadVectorFile {
                line: 1,
                reason: format!("header declares {count} rows, file has {seen}"),
            });
        }
    }
    let dim = dim.ok_or(EmbedError::BadVectorFile {
        line: 0,
        reason: "empty file".into(),
    })?;
    if let Some(e) = expected_dim {
        if e != dim {
            return Err(EmbedError::DimMismatch {
                expected: e,
                found: dim,
            });
        }
    }
    EmbeddingTable::from_rows(dim, rows, TableSource::File)
}

pub fn load_table(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable, EmbedError> {
    load_table_filtered(path, expected_dim, None)
}

pub fn load_table_filtered(
    path: &Path,
    expected_dim: Option<usize>,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbedError> {
    let file = File::open(path).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))?;
    parse_table_filtered(BufReader::new(file), expected_dim, keep)
}

// FNV-1a, for surface-keyed seeds.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// I.i.d. `N(0, 1/dim)` vectors. Each surface's vector depends only on
/// `(seed, surface)`, not on which other surfaces are requested.
pub fn random_table<'a>(
    surfaces: impl IntoIterator<Item = &'a str>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::InvalidDim);
    }
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("positive std");
    let mut seen = std::collections::BTreeSet::new();
    let rows = surfaces
        .into_iter()
        .filter(|s| seen.insert(*s))
        .map(|s| {
            let mut rng = seed::rng(seed::derive(seed, &[fnv1a(s)]));
            (s.to_string(), (0..dim).map(|_| normal.sample(&mut rng)).collect())
        })
        .collect();
    EmbeddingTable::from_rows(dim, rows, TableSource::Random)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let t = parse_table("2 3\na 1 2 3\nb 4 5 6\n".as_bytes(), None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b").unwrap().to_vec(), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn headerless_dimension_comes_from_rows() {
        let row: String = (0..300).map(|i| format!(" {}", i as f64 * 0.5)).collect();
        let text = format!("75{row}\n76{row}\n");
        let t = parse_table(text.as_bytes(), Some(300)).unwrap();
        assert_eq!(t.dim(), 300);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let full: String = (0..300).map(|_| " 0.1").collect();
        let short: String = (0..299).map(|_| " 0.1").collect();
        let text = format!("a{full}\nb{short}\n");
        assert!(matches!(
            parse_table(text.as_bytes(), None),
            Err(EmbedError::BadVectorFile { line: 2, .. })
        ));
    }

    #[test]
    fn other_malformed_inputs() {
        assert!(matches!(
            parse_table("a 1 x\n".as_bytes(), None),
            Err(EmbedError::BadVectorFile { .. })
        ));
        assert!(matches!(
            parse_table("3 2\na 1 2\n".as_bytes(), None),
            Err(EmbedError::BadVectorFile { .. })
        ));
        assert!(matches!(
            parse_table("a 1 2\na 3 4\n".as_bytes(), None),
            Err(EmbedError::BadVectorFile { .. })
        ));
        assert!(matches!(
            parse_table("a 1 2\n".as_bytes(), Some(3)),
            Err(EmbedError::DimMismatch { expected: 3, found: 2 })
        ));
        assert!(parse_table("0 5\n".as_bytes(), None).unwrap().is_empty());
    }

    #[test]
    fn filtered_parse_keeps_requested_rows_only() {
        let keep: HashSet<String> = ["b".to_string()].into();
        let t = parse_table_filtered("3 2\na 1 2\nb 3 4\nc 5 6\n".as_bytes(), None, Some(&keep)).unwrap();
        assert_eq!(t.surfaces(), ["b"]);
        assert!(matches!(
            parse_table_filtered("a 1 2\nb 3 4\nc 5\n".as_bytes(), None, Some(&keep)),
            Err(EmbedError::BadVectorFile { line: 3, .. })
        ));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let t = random_table(["1", "2", "seventy-five"], 7, 3).unwrap();
        for header in [true, false] {
            let mut buf = Vec::new();
            t.write_text(&mut buf, header).unwrap();
            let u = parse_table(buf.as_slice(), Some(7)).unwrap();
            for s in t.surfaces() {
                assert_eq!(t.get(s), u.get(s));
            }
        }
    }

    #[test]
    fn random_vectors_are_keyed_by_surface() {
        let a = random_table(["5", "6"], 16, 1).unwrap();
        let b = random_table(["6", "9", "5"], 16, 1).unwrap();
        assert_eq!(a.get("5"), b.get("5"));
        assert_ne!(a.get("5"), random_table(["5"], 16, 2).unwrap().get("5"));
    }

    #[test]
    fn random_norms_are_near_one() {
        let surfaces: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let t = random_table(surfaces.iter().map(String::as_str), 300, 0).unwrap();
        let mean_sq: f64 = surfaces
            .iter()
            .map(|s| t.get(s).unwrap().dot(&t.get(s).unwrap()))
            .sum::<f64>()
            / 200.0;
        assert!((mean_sq - 1.0).abs() < 0.05, "{mean_sq}");
    }
}
