//! Greedy CTC decoding: per-step argmax, merge adjacent repeats, drop
//! blanks, then detokenize.

use crate::autodiff::{Scalar, Tensor};

use super::Tokenizer;

/// `log_probs` is `[T, V+1]` with blank in the last column.
pub fn greedy_ctc_decode<T: Scalar>(log_probs: &Tensor<T>, tok: &Tokenizer) -> String {
    assert_eq!(log_probs.rank(), 2, "log_probs must be [T, V+1]");
    let cols = log_probs.shape()[1];
    let blank = cols - 1;
    let steps = log_probs.shape()[0];
    let mut ids = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..steps {
        let row = &log_probs.data()[t * cols..(t + 1) * cols];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax != prev && argmax != blank {
            ids.push(argmax);
        }
        prev = argmax;
    }
    tok.decode(&ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::from_lines("<unk>\na\nb\n").unwrap()
    }

    fn path_to_log_probs(path: &[usize], cols: usize) -> Tensor<f64> {
        let mut data = vec![-10.0f64; path.len() * cols];
        for (t, &lab) in path.iter().enumerate() {
            data[t * cols + lab] = -0.01;
        }
        Tensor::from_f64s(&[path.len(), cols], &data)
    }

    #[test]
    fn merge_then_drop_blanks() {
        // argmax path [a, a, blank, b] -> "ab"; ids: a=1, b=2, blank=3
        let lp = path_to_log_probs(&[1, 1, 3, 2], 4);
        assert_eq!(greedy_ctc_decode(&lp, &tok()), "ab");
    }

    #[test]
    fn all_blanks_decode_empty() {
        let lp = path_to_log_probs(&[3, 3, 3], 4);
        assert_eq!(greedy_ctc_decode(&lp, &tok()), "");
    }

    #[test]
    fn blank_separates_repeats() {
        let lp = path_to_log_probs(&[1, 3, 1], 4);
        assert_eq!(greedy_ctc_decode(&lp, &tok()), "aa");
    }
}
