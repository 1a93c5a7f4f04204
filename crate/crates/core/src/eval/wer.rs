//! Word and character error rates via Levenshtein alignment with uniform
//! costs. Ties during traceback prefer substitutions, then deletions.

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub n_ref_units: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.n_ref_units as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub wer: f64,
    pub cer: f64,
    pub words: EditCounts,
    pub chars: EditCounts,
}

/// Compare normalized reference and hypothesis. An empty reference makes
/// the metric undefined.
pub fn wer_cer(reference: &str, hypothesis: &str) -> Result<MetricReport, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let ref_words: Vec<&str> = reference.split_whitespace().collect();
    let hyp_words: Vec<&str> = hypothesis.split_whitespace().collect();
    let words = align(&ref_words, &hyp_words);
    let ref_chars: Vec<char> = reference.chars().collect();
    let hyp_chars: Vec<char> = hypothesis.chars().collect();
    let chars = align(&ref_chars, &hyp_chars);
    Ok(MetricReport {
        wer: words.rate(),
        cer: chars.rate(),
        words,
        chars,
    })
}

/// Uniform-cost edit alignment with substitution-preferring traceback.
pub fn align<U: PartialEq>(reference: &[U], hypothesis: &[U]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![0usize; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        d[at(i, 0)] = i;
    }
    for j in 0..=m {
        d[at(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[at(i, j)] = (d[at(i - 1, j - 1)] + sub_cost)
                .min(d[at(i - 1, j)] + 1)
                .min(d[at(i, j - 1)] + 1);
        }
    }

    // traceback preferring substitution/match, then deletion, then insertion
    let (mut i, mut j) = (n, m);
    let mut counts = EditCounts {
        substitutions: 0,
        insertions: 0,
        deletions: 0,
        n_ref_units: n,
    };
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[at(i, j)] == d[at(i - 1, j - 1)] + sub_cost {
                counts.substitutions += sub_cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[at(i, j)] == d[at(i - 1, j)] + 1 {
            counts.deletions += 1;
            i -= 1;
            continue;
        }
        counts.insertions += 1;
        j -= 1;
    }
    debug_assert_eq!(counts.errors(), d[at(n, m)]);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_are_zero() {
        let report = wer_cer("the cat sat", "the cat sat").unwrap();
        assert_eq!(report.wer, 0.0);
        assert_eq!(report.cer, 0.0);
    }

    #[test]
    fn hello_word_is_half() {
        let report = wer_cer("hello world", "hello word").unwrap();
        assert_eq!(report.wer, 0.5);
        assert_eq!(report.words.substitutions, 1);
        assert_eq!(report.words.n_ref_units, 2);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(wer_cer("", "anything"), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn wer_can_exceed_one_with_insertions() {
        let report = wer_cer("a", "x y z").unwrap();
        assert!(report.wer > 1.0, "wer {}", report.wer);
    }

    #[test]
    fn counts_match_brute_force_distance_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let alphabet = ["an", "be", "cat", "dog", "ez"];
        for _ in 0..300 {
            let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<&str> {
                (0..rng.gen_range(0..8))
                    .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                    .collect()
            };
            let r = make(&mut rng);
            let h = make(&mut rng);
            let counts = align(&r, &h);
            assert_eq!(counts.errors(), brute_distance(&r, &h), "{r:?} vs {h:?}");
        }
    }

    /// Plain recursive edit distance with memoization; independent of the
    /// tabular DP and its traceback.
    fn brute_distance<U: PartialEq>(a: &[U], b: &[U]) -> usize {
        fn go<U: PartialEq>(
            a: &[U],
            b: &[U],
            i: usize,
            j: usize,
            memo: &mut std::collections::HashMap<(usize, usize), usize>,
        ) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let sub = go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]);
            let del = go(a, b, i + 1, j, memo) + 1;
            let ins = go(a, b, i, j + 1, memo) + 1;
            let v = sub.min(del).min(ins);
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut std::collections::HashMap::new())
    }

    #[test]
    fn triangle_property_through_intermediate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let alphabet = ["u", "v", "w"];
        for _ in 0..100 {
            let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<&str> {
                (1..rng.gen_range(2..6))
                    .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                    .collect()
            };
            let a = make(&mut rng);
            let b = make(&mut rng);
            let c = make(&mut rng);
            let ac = align(&a, &c).errors();
            let ab = align(&a, &b).errors();
            let bc = align(&b, &c).errors();
            assert!(ac <= ab + bc, "distance through {b:?} shortcut");
        }
    }
}
