//! Original Metaphone encoding.
//!
//! Variant notes: an initial vowel is always coded as `A`; `SCH` codes as
//! `SK`; `TH` codes as `0` (zero).

fn is_vowel(c: u8) -> bool {
    matches!(c, b'A' | b'E' | b'I' | b'O' | b'U')
}

/// Encodes an ASCII word. Non-letters are ignored; an empty word yields an
/// empty code.
pub fn metaphone(word: &str) -> String {
    let letters: Vec<u8> = word
        .bytes()
        .filter(u8::is_ascii_alphabetic)
        .map(|b| b.to_ascii_uppercase())
        .collect();
    // Collapse doubled letters, except C (as in "accent").
    let mut w: Vec<u8> = Vec::with_capacity(letters.len());
    for &c in &letters {
        if w.last() != Some(&c) || c == b'C' {
            w.push(c);
        }
    }
    if w.is_empty() {
        return String::new();
    }

    let mut start = 0;
    match (w[0], w.get(1).copied()) {
        (b'A', Some(b'E')) | (b'G', Some(b'N')) | (b'K', Some(b'N')) | (b'P', Some(b'N')) | (b'W', Some(b'R')) => {
            start = 1
        }
        (b'X', _) => w[0] = b'S',
        (b'W', Some(b'H')) => {
            w.remove(1);
        }
        _ => {}
    }

    let at = |i: usize| -> u8 { w.get(i).copied().unwrap_or(0) };
    let mut out = String::new();
    let mut i = start;
    while i < w.len() {
        let c = w[i];
        let prev = if i > 0 { at(i - 1) } else { 0 };
        let next = at(i + 1);
        let next2 = at(i + 2);
        match c {
            b'A' | b'E' | b'I' | b'O' | b'U' => {
                if i == start {
                    out.push('A');
                }
            }
            b'B' => {
                if !(prev == b'M' && i + 1 == w.len()) {
                    out.push('B');
                }
            }
            b'C' => {
                if next == b'I' && next2 == b'A' {
                    out.push('X');
                } else if next == b'H' {
                    if prev == b'S' {
                        out.push('K');
                    } else {
                        out.push('X');
                    }
                    i += 1;
                } else if matches!(next, b'I' | b'E' | b'Y') {
                    if prev != b'S' {
                        out.push('S');
                    }
                } else {
                    out.push('K');
                }
            }
            b'D' => {
                if next == b'G' && matches!(next2, b'E' | b'Y' | b'I') {
                    out.push('J');
                    i += 1;
                } else {
                    out.push('T');
                }
            }
            b'G' => {
                let silent_gh = next == b'H' && i + 2 < w.len() && !is_vowel(next2);
                let silent_gn = next == b'N' && (i + 2 == w.len() || (i + 4 == w.len() && &w[i + 2..] == b"ED"));
                if silent_gh || silent_gn {
                } else if matches!(next, b'I' | b'E' | b'Y') {
                    out.push('J');
                } else {
                    out.push('K');
                }
            }
            b'H' => {
                let after_modifier = matches!(prev, b'C' | b'S' | b'P' | b'T' | b'G');
                let between = is_vowel(prev) && !is_vowel(next);
                if !after_modifier && !between {
                    out.push('H');
                }
            }
            b'K' => {
                if prev != b'C' {
                    out.push('K');
                }
            }
            b'P' => out.push(if next == b'H' { 'F' } else { 'P' }),
            b'Q' => out.push('K'),
            b'S' => {
                if next == b'H' {
                    out.push('X');
                    i += 1;
                } else if next == b'I' && matches!(next2, b'O' | b'A') {
                    out.push('X');
                } else {
                    out.push('S');
                }
            }
            b'T' => {
                if next == b'I' && matches!(next2, b'O' | b'A') {
                    out.push('X');
                } else if next == b'H' {
                    out.push('0');
                    i += 1;
                } else if !(next == b'C' && next2 == b'H') {
                    out.push('T');
                }
            }
            b'V' => out.push('F'),
            b'W' | b'Y' => {
                if is_vowel(next) {
                    out.push(c as char);
                }
            }
            b'X' => out.push_str("KS"),
            b'Z' => out.push('S'),
            b'F' | b'J' | b'L' | b'M' | b'N' | b'R' => out.push(c as char),
            _ => {}
        }
        i += 1;
    }
    out
}
