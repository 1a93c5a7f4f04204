//! Objective evaluation: text normalization, the deterministic tokenizer,
//! greedy CTC decoding, word/character error rates, and MOS statistics.

mod decode;
mod mos;
mod normalize;
mod tokenizer;
mod wer;

pub use decode::greedy_ctc_decode;
pub use mos::mos_ci;
pub use normalize::{normalize_text, normalize_text_flagged};
pub use tokenizer::{Tokenizer, BLANK_ID};
pub use wer::{wer_cer, EditCounts, MetricReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("WER/CER undefined for an empty reference")]
    EmptyReference,
    #[error("MOS undefined for an empty rating list")]
    EmptyRatings,
    #[error("rating {0} outside [1, 5]")]
    RatingOutOfRange(f64),
    #[error("vocabulary holds {0} units, limit is 128")]
    VocabTooLarge(usize),
    #[error("vocabulary error: {0}")]
    BadVocab(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
