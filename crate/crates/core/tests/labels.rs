use numprobe::numeral::NumberFormat;
use numprobe::taskgen::{gen_listmax, gen_listmax_float, make_split, IntRange, Pool, Spread, LIST_LEN};

fn brute_force_max_index(values: &[i64]) -> usize {
    let top = *values.iter().max().unwrap();
    let hits: Vec<usize> = (0..values.len()).filter(|&i| values[i] == top).collect();
    assert_eq!(hits.len(), 1, "values must be distinct");
    hits[0]
}

#[test]
fn ten_thousand_integer_labels_match_brute_force() {
    let mut checked = 0;
    for (i, (lo, hi, format)) in [
        (0, 99, NumberFormat::Digits),
        (0, 9999, NumberFormat::Digits),
        (-50, 50, NumberFormat::NegativeDigits),
        (0, 99, NumberFormat::Words),
    ]
    .into_iter()
    .enumerate()
    {
        let range = IntRange::new(lo, hi).unwrap();
        let split = make_split(range, i as u64);
        let lists = gen_listmax(&split.train, 2500, Spread::for_range(range.size()), format, 40 + i as u64).unwrap();
        for l in &lists {
            assert_eq!(l.tokens.len(), LIST_LEN);
            let values: Vec<i64> = l.tokens.iter().map(|t| t.scaled()).collect();
            assert_eq!(l.label, brute_force_max_index(&values));
            assert!(values.iter().all(|v| split.train.contains(*v)));
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
}

#[test]
fn float_labels_match_brute_force() {
    let lists = gen_listmax_float(&Pool::new(0..100), 10_000, Spread::for_range(100), 8).unwrap();
    for l in &lists {
        let values: Vec<i64> = l.tokens.iter().map(|t| t.scaled()).collect();
        assert_eq!(l.label, brute_force_max_index(&values));
        let floats: Vec<f64> = l.tokens.iter().map(|t| t.value()).collect();
        let best = (0..LIST_LEN).max_by(|&a, &b| floats[a].total_cmp(&floats[b])).unwrap();
        assert_eq!(l.label, best);
    }
}

#[test]
fn labels_are_spread_over_positions() {
    let lists = gen_listmax(&Pool::new(0..100), 10_000, Spread::for_range(100), NumberFormat::Digits, 3).unwrap();
    let mut counts = [0usize; LIST_LEN];
    for l in &lists {
        counts[l.label] += 1;
    }
    for c in counts {
        assert!((1700..=2300).contains(&c), "{counts:?}");
    }
}
