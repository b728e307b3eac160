//! Vocabulary file format v1.
//!
//! ```text
//! denoiserforge-vocab v1 <scheme> <size>
//! T <base64(bytes)>        one per token, in id order
//! M <left_id> <right_id>   one per merge, in merge order
//! U <id> <log-prob>        unigram only, one per non-special token
//! S <name> <id>            one per special token
//! ```

use std::fmt::Write;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::{Result, Scheme, TokenizerError, Vocab};

const MAGIC: &str = "denoiserforge-vocab";

pub(super) fn write(v: &Vocab) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC} v1 {} {}", v.scheme(), v.size()).unwrap();
    for t in v.tokens() {
        writeln!(s, "T {}", STANDARD.encode(t)).unwrap();
    }
    for &(l, r) in v.merges() {
        writeln!(s, "M {l} {r}").unwrap();
    }
    for (i, score) in v.scores().iter().enumerate() {
        writeln!(s, "U {i} {score:?}").unwrap();
    }
    let mut specials: Vec<(&String, &u32)> = v.specials().iter().collect();
    specials.sort_by_key(|(_, &id)| id);
    for (name, id) in specials {
        writeln!(s, "S {name} {id}").unwrap();
    }
    s
}

fn bad(line: usize, message: impl Into<String>) -> TokenizerError {
    TokenizerError::Format {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| bad(line, format!("bad {what}")))
}

pub(super) fn read(text: &str) -> Result<Vocab> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != MAGIC || fields[1] != "v1" {
        return Err(bad(1, "expected `denoiserforge-vocab v1 <scheme> <size>`"));
    }
    let scheme: Scheme = fields[2].parse().map_err(|e: String| bad(1, e))?;
    let size: usize = parse_num(Some(fields[3]), 1, "size")?;

    let mut tokens: Vec<Vec<u8>> = Vec::with_capacity(size);
    let mut merges = Vec::new();
    let mut scores = Vec::new();
    let mut specials: Vec<(String, u32)> = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match parts.next() {
            Some("T") => {
                let b64 = parts.next().unwrap_or("");
                let bytes = STANDARD
                    .decode(b64)
                    .map_err(|e| bad(no, format!("bad base64: {e}")))?;
                tokens.push(bytes);
            }
            Some("M") => {
                let l: u32 = parse_num(parts.next(), no, "merge id")?;
                let r: u32 = parse_num(parts.next(), no, "merge id")?;
                merges.push((l, r));
            }
            Some("U") => {
                let id: usize = parse_num(parts.next(), no, "piece id")?;
                if id != scores.len() {
                    return Err(bad(no, "unigram scores out of order"));
                }
                scores.push(parse_num::<f64>(parts.next(), no, "score")?);
            }
            Some("S") => {
                let name = parts.next().ok_or_else(|| bad(no, "missing special name"))?;
                let id: u32 = parse_num(parts.next(), no, "special id")?;
                specials.push((name.to_string(), id));
            }
            _ => return Err(bad(no, format!("unknown record `{line}`"))),
        }
    }
    if tokens.len() != size {
        return Err(bad(1, format!("header says {size} tokens, found {}", tokens.len())));
    }
    let regular = size - specials.len().min(size);
    specials.sort_by_key(|&(_, id)| id);
    for (k, (name, id)) in specials.iter().enumerate() {
        if *id as usize != regular + k {
            return Err(bad(1, format!("special `{name}` must have id {}", regular + k)));
        }
        if tokens[*id as usize] != super::special_surface(name).into_bytes() {
            return Err(bad(1, format!("special `{name}` token bytes do not match its name")));
        }
    }
    match scheme {
        Scheme::Bbpe => {
            if regular < 256 || (0..256).any(|b| tokens[b] != [b as u8]) {
                return Err(bad(1, "bbpe vocab must start with the 256 byte tokens"));
            }
        }
        Scheme::Bpe => {}
        Scheme::Unigram => {
            if scores.len() != regular {
                return Err(bad(1, "unigram vocab needs one score per piece"));
            }
        }
    }
    if scheme != Scheme::Unigram && merges.len() > regular {
        return Err(bad(1, "more merges than tokens"));
    }
    let names: Vec<String> = specials.into_iter().map(|(n, _)| n).collect();
    tokens.truncate(regular);
    Vocab::assemble(scheme, tokens, merges, scores, &names)
}
