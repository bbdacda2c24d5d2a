use super::EmbedError;

pub const PAD: usize = 0;
pub const PAD_DISPLAY: char = '∅';

const ALPHABET: &str = "0123456789abcdefghijklmnopqrstuvwxyz-.";

/// Character inventory of the encoders: index 0 is padding, then digits,
/// lowercase letters, hyphen and period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharVocab;

impl CharVocab {
    pub fn size(self) -> usize {
        ALPHABET.len() + 1
    }

    pub fn index(self, c: char) -> Option<usize> {
        ALPHABET.find(c).map(|i| i + 1)
    }

    pub fn encode(self, surface: &str) -> Result<Vec<usize>, EmbedError> {
        surface
            .chars()
            .map(|c| {
                self.index(c).ok_or_else(|| EmbedError::UnknownChar {
                    surface: surface.to_string(),
                    ch: c,
                })
            })
            .collect()
    }
}

/// Prepends padding until the sequence is at least `min_len` long, so the
/// last character always sits in the last position.
pub fn left_pad(ids: &[usize], min_len: usize) -> Vec<usize> {
    let pad = min_len.saturating_sub(ids.len());
    std::iter::repeat_n(PAD, pad).chain(ids.iter().copied()).collect()
}

/// Display form of [`left_pad`], with `∅` for padding.
pub fn left_pad_surface(surface: &str, min_len: usize) -> String {
    let n = surface.chars().count();
    std::iter::repeat_n(PAD_DISPLAY, min_len.saturating_sub(n))
        .chain(surface.chars())
        .collect()
}
