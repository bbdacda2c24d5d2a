//! Surface forms for numbers: digits, single English words, one-decimal
//! floats and signed integers.
//!
//! Values are carried as exact integers. For [`NumberFormat::Float1`] the
//! integer counts tenths, so `181` renders as `"18.1"`. Conversion to `f64`
//! only happens when a probe needs a regression target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNITS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumeralError {
    #[error("value {value} cannot be rendered as {format}")]
    FormatRange { value: i64, format: NumberFormat },
    #[error("'{surface}' is not a valid {format} numeral")]
    Parse { surface: String, format: NumberFormat },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberFormat {
    /// Non-negative integers, `"75"`.
    Digits,
    /// Integers 0..=99 as a single hyphenated word, `"seventy-five"`.
    Words,
    /// Non-negative tenths with exactly one decimal digit, `"75.1"`.
    Float1,
    /// Any integer, negatives prefixed with `-`.
    NegativeDigits,
}

impl NumberFormat {
    pub const ALL: [NumberFormat; 4] = [
        NumberFormat::Digits,
        NumberFormat::Words,
        NumberFormat::Float1,
        NumberFormat::NegativeDigits,
    ];

    /// Number of scaled units per whole number (10 for tenths).
    pub fn scale(self) -> i64 {
        match self {
            NumberFormat::Float1 => 10,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NumberFormat::Digits => "digits",
            NumberFormat::Words => "words",
            NumberFormat::Float1 => "float1",
            NumberFormat::NegativeDigits => "negative_digits",
        }
    }

    /// Whether `scaled` lies inside the format's domain.
    pub fn accepts(self, scaled: i64) -> bool {
        match self {
            NumberFormat::Digits | NumberFormat::Float1 => scaled >= 0,
            NumberFormat::Words => (0..=99).contains(&scaled),
            NumberFormat::NegativeDigits => true,
        }
    }

    /// Converts a scaled value to a machine float.
    pub fn to_f64(self, scaled: i64) -> f64 {
        match self {
            NumberFormat::Float1 => scaled as f64 / 10.0,
            _ => scaled as f64,
        }
    }
}

impl fmt::Display for NumberFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NumberFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NumberFormat::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown number format '{s}'"))
    }
}

/// A value together with its rendered surface. Only constructible through
/// rendering, so `surface == render(value, format)` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NumberToken {
    scaled: i64,
    format: NumberFormat,
    surface: String,
}

impl NumberToken {
    pub fn new(scaled: i64, format: NumberFormat) -> Result<Self, NumeralError> {
        let surface = render(scaled, format)?;
        Ok(NumberToken {
            scaled,
            format,
            surface,
        })
    }

    /// Exact value in format units (tenths for `Float1`).
    pub fn scaled(&self) -> i64 {
        self.scaled
    }

    pub fn value(&self) -> f64 {
        self.format.to_f64(self.scaled)
    }

    pub fn format(&self) -> NumberFormat {
        self.format
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }
}

pub fn render(scaled: i64, format: NumberFormat) -> Result<String, NumeralError> {
    if !format.accepts(scaled) {
        return Err(NumeralError::FormatRange {
            value: scaled,
            format,
        });
    }
    Ok(match format {
        NumberFormat::Digits | NumberFormat::NegativeDigits => scaled.to_string(),
        NumberFormat::Float1 => format!("{}.{}", scaled / 10, scaled % 10),
        NumberFormat::Words => word_form(scaled as usize),
    })
}

fn word_form(n: usize) -> String {
    match n {
        0..=19 => UNITS[n].to_string(),
        _ if n % 10 == 0 => TENS[n / 10].to_string(),
        _ => format!("{}-{}", TENS[n / 10], UNITS[n % 10]),
    }
}

/// Inverse of [`render`]: accepts exactly the canonical surfaces.
pub fn parse(surface: &str, format: NumberFormat) -> Result<i64, NumeralError> {
    let bad = || NumeralError::Parse {
        surface: surface.to_string(),
        format,
    };
    let value = match format {
        NumberFormat::Digits => parse_digits(surface).ok_or_else(bad)?,
        NumberFormat::NegativeDigits => match surface.strip_prefix('-') {
            Some(rest) => {
                let v = parse_digits(rest).ok_or_else(bad)?;
                if v == 0 {
                    return Err(bad());
                }
                -v
            }
            None => parse_digits(surface).ok_or_else(bad)?,
        },
        NumberFormat::Float1 => {
            let (whole, frac) = surface.split_once('.').ok_or_else(bad)?;
            let whole = parse_digits(whole).ok_or_else(bad)?;
            let frac = match frac.as_bytes() {
                [d] if d.is_ascii_digit() => (d - b'0') as i64,
                _ => return Err(bad()),
            };
            whole
                .checked_mul(10)
                .and_then(|w| w.checked_add(frac))
                .ok_or_else(bad)?
        }
        NumberFormat::Words => parse_words(surface).ok_or_else(bad)?,
    };
    Ok(value)
}

// Canonical non-negative decimal: no sign, no leading zeros except "0".
fn parse_digits(s: &str) -> Option<i64> {
    let bytes = s.as_bytes();
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    if bytes.len() > 1 && bytes[0] == b'0' {
        return None;
    }
    s.parse().ok()
}

fn parse_words(s: &str) -> Option<i64> {
    if let Some(i) = UNITS.iter().position(|&u| u == s) {
        return Some(i as i64);
    }
    if let Some(t) = TENS.iter().position(|&t| !t.is_empty() && t == s) {
        return Some(10 * t as i64);
    }
    let (tens, unit) = s.split_once('-')?;
    let t = TENS.iter().position(|&x| !x.is_empty() && x == tens)?;
    let u = UNITS[1..10].iter().position(|&x| x == unit)? + 1;
    Some((10 * t + u) as i64)
}

/// Every surface for whole numbers `lo..=hi`, ascending. For `Float1` each
/// whole number contributes its ten tenths, `lo.0` through `hi.9`.
pub fn surfaces(lo: i64, hi: i64, format: NumberFormat) -> Result<Vec<String>, NumeralError> {
    if lo > hi {
        return Ok(Vec::new());
    }
    let s = format.scale();
    (lo * s..=hi * s + (s - 1)).map(|v| render(v, format)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_lists() {
        assert_eq!(surfaces(98, 99, NumberFormat::Float1).unwrap().len(), 20);
        assert_eq!(surfaces(0, 1, NumberFormat::Float1).unwrap()[10], "1.0");
        assert_eq!(surfaces(-1, 1, NumberFormat::NegativeDigits).unwrap(), ["-1", "0", "1"]);
        assert!(surfaces(99, 100, NumberFormat::Words).is_err());
        assert!(surfaces(3, 2, NumberFormat::Digits).unwrap().is_empty());
    }
    use std::collections::HashSet;

    #[test]
    fn renders_the_four_forms() {
        assert_eq!(render(75, NumberFormat::Words).unwrap(), "seventy-five");
        assert_eq!(render(0, NumberFormat::Digits).unwrap(), "0");
        assert_eq!(render(-18, NumberFormat::NegativeDigits).unwrap(), "-18");
        assert_eq!(render(181, NumberFormat::Float1).unwrap(), "18.1");
        assert_eq!(render(0, NumberFormat::Words).unwrap(), "zero");
        assert_eq!(render(40, NumberFormat::Words).unwrap(), "forty");
        assert_eq!(render(7, NumberFormat::Words).unwrap(), "seven");
        assert_eq!(render(5, NumberFormat::Float1).unwrap(), "0.5");
    }

    #[test]
    fn rejects_out_of_domain_values() {
        for (v, f) in [
            (100, NumberFormat::Words),
            (-1, NumberFormat::Words),
            (-1, NumberFormat::Digits),
            (-3, NumberFormat::Float1),
        ] {
            assert_eq!(
                render(v, f),
                Err(NumeralError::FormatRange {
                    value: v,
                    format: f
                })
            );
        }
    }

    #[test]
    fn parses_canonical_surfaces() {
        assert_eq!(parse("twenty-one", NumberFormat::Words).unwrap(), 21);
        assert_eq!(parse("0.0", NumberFormat::Float1).unwrap(), 0);
        assert_eq!(parse("-500", NumberFormat::NegativeDigits).unwrap(), -500);
        assert_eq!(parse("ninety", NumberFormat::Words).unwrap(), 90);
    }

    #[test]
    fn rejects_noncanonical_surfaces() {
        let cases = [
            ("07", NumberFormat::Digits),
            ("-0", NumberFormat::NegativeDigits),
            ("+5", NumberFormat::NegativeDigits),
            ("-5", NumberFormat::Digits),
            ("1.25", NumberFormat::Float1),
            ("1.", NumberFormat::Float1),
            (".5", NumberFormat::Float1),
            ("12", NumberFormat::Float1),
            ("twenty-zero", NumberFormat::Words),
            ("ten-one", NumberFormat::Words),
            ("Twenty", NumberFormat::Words),
            ("twenty one", NumberFormat::Words),
            ("", NumberFormat::Digits),
        ];
        for (s, f) in cases {
            assert!(parse(s, f).is_err(), "{s:?} accepted as {f}");
        }
    }

    #[test]
    fn word_forms_round_trip_exhaustively() {
        let mut seen = HashSet::new();
        for v in 0..=99 {
            let s = render(v, NumberFormat::Words).unwrap();
            assert!(!s.contains(char::is_whitespace));
            assert_eq!(parse(&s, NumberFormat::Words).unwrap(), v);
            assert!(seen.insert(s));
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn float_surfaces_are_distinct_and_exact() {
        let mut seen = HashSet::new();
        for tenths in 0..=9999 {
            let s = render(tenths, NumberFormat::Float1).unwrap();
            assert_eq!(parse(&s, NumberFormat::Float1).unwrap(), tenths);
            assert!(seen.insert(s));
        }
    }

    #[test]
    fn token_carries_surface_and_value() {
        let t = NumberToken::new(181, NumberFormat::Float1).unwrap();
        assert_eq!(t.surface(), "18.1");
        assert!((t.value() - 18.1).abs() < 1e-12);
        assert!(NumberToken::new(120, NumberFormat::Words).is_err());
    }

    #[test]
    fn format_names_round_trip() {
        for f in NumberFormat::ALL {
            assert_eq!(f.name().parse::<NumberFormat>().unwrap(), f);
        }
    }
}
