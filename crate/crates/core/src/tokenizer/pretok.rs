use std::collections::HashMap;

/// Splits text into merge domains. A run of non-whitespace absorbs the single
/// whitespace character before it; any further whitespace is its own chunk.
/// Concatenating the chunks gives back the input.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut pending_ws: Option<usize> = None;
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            // remember where the run starts, then find its last char
            let run_start = i;
            let mut last = i;
            while let Some(&(j, d)) = chars.peek() {
                if !d.is_whitespace() {
                    break;
                }
                last = j;
                chars.next();
            }
            if chars.peek().is_some() {
                if last > run_start {
                    out.push(&text[run_start..last]);
                }
                pending_ws = Some(last);
            } else {
                out.push(&text[run_start..]);
            }
        } else {
            let start = pending_ws.take().unwrap_or(i);
            let mut end = text.len();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_whitespace() {
                    end = j;
                    break;
                }
                chars.next();
            }
            out.push(&text[start..end]);
        }
    }
    out
}

/// Chunk frequencies over a corpus, sorted by chunk bytes.
pub(crate) fn count_chunks<I>(texts: I) -> Vec<(String, u64)>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in texts {
        for chunk in pretokenize(t.as_ref()) {
            if let Some(c) = counts.get_mut(chunk) {
                *c += 1;
            } else {
                counts.insert(chunk.to_string(), 1);
            }
        }
    }
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn attaches_one_leading_space() {
        assert_eq!(pretokenize("aaab aaab"), vec!["aaab", " aaab"]);
        assert_eq!(pretokenize("a   b"), vec!["a", "  ", " b"]);
        assert_eq!(pretokenize("  x "), vec![" ", " x", " "]);
        assert_eq!(pretokenize("привет\nмир"), vec!["привет", "\nмир"]);
        assert!(pretokenize("").is_empty());
    }

    proptest! {
        #[test]
        fn chunks_concatenate_to_input(s in "\\PC{0,40}|[ a\\t\\n]{0,20}") {
            let joined: String = pretokenize(&s).concat();
            prop_assert_eq!(joined, s);
        }
    }
}
