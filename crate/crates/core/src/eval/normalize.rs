//! Text normalization: number expansion, lowercasing, ASCII
//! transliteration, punctuation removal, whitespace collapse.
//!
//! Numbers expand before lowercasing. Cardinals 0-9999 become words;
//! larger digit runs pass through unchanged and are flagged.

/// Total normalization; never fails.
pub fn normalize_text(raw: &str) -> String {
    normalize_text_flagged(raw).0
}

/// Normalization plus the list of oversized numbers left as digits.
pub fn normalize_text_flagged(raw: &str) -> (String, Vec<String>) {
    let (expanded, flags) = expand_numbers(raw);
    let lowered = expanded.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for c in lowered.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if let Some(t) = transliterate(c) {
            out.push_str(t);
        } else {
            // punctuation, other symbols and unmapped non-ASCII become
            // separators and collapse below
            out.push(' ');
        }
    }
    let collapsed = out.split_whitespace().collect::<Vec<_>>().join(" ");
    (collapsed, flags)
}

/// Documented transliteration table for common accented Latin letters;
/// anything else non-ASCII is dropped.
fn transliterate(c: char) -> Option<&'static str> {
    Some(match c {
        'à' | 'á' | 'â' | 'ä' | 'ã' | 'å' => "a",
        'è' | 'é' | 'ê' | 'ë' => "e",
        'ì' | 'í' | 'î' | 'ï' => "i",
        'ò' | 'ó' | 'ô' | 'ö' | 'õ' => "o",
        'ù' | 'ú' | 'û' | 'ü' => "u",
        'ý' | 'ÿ' => "y",
        'ñ' => "n",
        'ç' => "c",
        'ß' => "ss",
        'æ' => "ae",
        'œ' => "oe",
        _ => return None,
    })
}

fn expand_numbers(text: &str) -> (String, Vec<String>) {
    let mut out = String::with_capacity(text.len());
    let mut flags = Vec::new();
    let mut digits = String::new();
    let flush = |digits: &mut String, out: &mut String, flags: &mut Vec<String>| {
        if digits.is_empty() {
            return;
        }
        match digits.parse::<u64>() {
            Ok(n) if n <= 9999 => out.push_str(&cardinal(n as u16)),
            _ => {
                flags.push(digits.clone());
                out.push_str(digits);
            }
        }
        digits.clear();
    };
    for c in text.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            flush(&mut digits, &mut out, &mut flags);
            out.push(c);
        }
    }
    flush(&mut digits, &mut out, &mut flags);
    (out, flags)
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// English cardinal for 0..=9999.
fn cardinal(n: u16) -> String {
    debug_assert!(n <= 9999);
    if n < 20 {
        return ONES[n as usize].to_string();
    }
    if n < 100 {
        let tens = TENS[(n / 10) as usize];
        return if n % 10 == 0 {
            tens.to_string()
        } else {
            format!("{tens} {}", ONES[(n % 10) as usize])
        };
    }
    if n < 1000 {
        let head = format!("{} hundred", ONES[(n / 100) as usize]);
        return if n % 100 == 0 {
            head
        } else {
            format!("{head} {}", cardinal(n % 100))
        };
    }
    let head = format!("{} thousand", ONES[(n / 1000) as usize]);
    if n % 1000 == 0 {
        head
    } else {
        format!("{head} {}", cardinal(n % 1000))
    }
}
