use std::collections::HashSet;

use numprobe::numeral::{parse, render, surfaces, NumberFormat, NumberToken};
use proptest::prelude::*;

// Written out independently of the crate's tables.
fn oracle_word(n: i64) -> String {
    let ones = "zero one two three four five six seven eight nine".split(' ').collect::<Vec<_>>();
    let teens = "ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
        .split(' ')
        .collect::<Vec<_>>();
    let tens = "twenty thirty forty fifty sixty seventy eighty ninety".split(' ').collect::<Vec<_>>();
    match n {
        0..=9 => ones[n as usize].into(),
        10..=19 => teens[n as usize - 10].into(),
        _ if n % 10 == 0 => tens[n as usize / 10 - 2].into(),
        _ => format!("{}-{}", tens[n as usize / 10 - 2], ones[n as usize % 10]),
    }
}

#[test]
fn words_zero_to_ninety_nine_exhaustive() {
    let mut seen = HashSet::new();
    for v in 0..=99 {
        let s = render(v, NumberFormat::Words).unwrap();
        assert_eq!(s, oracle_word(v));
        assert!(!s.chars().any(char::is_whitespace));
        assert_eq!(parse(&s, NumberFormat::Words).unwrap(), v);
        assert!(seen.insert(s));
    }
    assert_eq!(seen.len(), 100);
    assert_eq!(render(75, NumberFormat::Words).unwrap(), "seventy-five");
    assert_eq!(parse("twenty-one", NumberFormat::Words).unwrap(), 21);
}

#[test]
fn digits_minus_ten_thousand_to_ten_thousand_exhaustive() {
    for v in -10_000..=10_000i64 {
        let s = render(v, NumberFormat::NegativeDigits).unwrap();
        assert_eq!(s, format!("{v}"));
        assert_eq!(parse(&s, NumberFormat::NegativeDigits).unwrap(), v);
        if v >= 0 {
            assert_eq!(render(v, NumberFormat::Digits).unwrap(), s);
            assert_eq!(parse(&s, NumberFormat::Digits).unwrap(), v);
        } else {
            assert!(render(v, NumberFormat::Digits).is_err());
            assert!(parse(&s, NumberFormat::Digits).is_err());
        }
    }
    assert_eq!(parse("-500", NumberFormat::NegativeDigits).unwrap(), -500);
}

#[test]
fn float_tenths_cover_zero_to_999_9_without_drift() {
    let all = surfaces(0, 999, NumberFormat::Float1).unwrap();
    assert_eq!(all.len(), 10_000);
    assert_eq!(all.iter().collect::<HashSet<_>>().len(), 10_000);
    for (tenths, s) in all.iter().enumerate() {
        let (w, f) = s.split_once('.').unwrap();
        assert_eq!(w.parse::<i64>().unwrap() * 10 + f.parse::<i64>().unwrap(), tenths as i64);
        assert_eq!(parse(s, NumberFormat::Float1).unwrap(), tenths as i64);
    }
    assert_eq!(render(181, NumberFormat::Float1).unwrap(), "18.1");
    assert_eq!(parse("0.0", NumberFormat::Float1).unwrap(), 0);
}

proptest! {
    #[test]
    fn round_trip_any_representable_value(v in -1_000_000_000i64..1_000_000_000, f in 0usize..4) {
        let format = NumberFormat::ALL[f];
        match NumberToken::new(v, format) {
            Ok(t) => {
                prop_assert_eq!(parse(t.surface(), format).unwrap(), v);
                prop_assert_eq!(t.scaled(), v);
            }
            Err(_) => prop_assert!(!format.accepts(v)),
        }
    }

    #[test]
    fn parse_accepts_only_canonical_forms(s in "[-0-9.a-z ]{0,8}", f in 0usize..4) {
        let format = NumberFormat::ALL[f];
        if let Ok(v) = parse(&s, format) {
            prop_assert_eq!(render(v, format).unwrap(), s);
        }
    }

    #[test]
    fn token_value_matches_scale(v in 0i64..100_000) {
        let t = NumberToken::new(v, NumberFormat::Float1).unwrap();
        prop_assert!((t.value() * 10.0 - v as f64).abs() < 1e-9);
    }
}
