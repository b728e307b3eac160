//! Length-prefixed binary example records, all integers little-endian:
//!
//! ```text
//! u32 record length (bytes after this field)
//! u8  objective tag
//! u32 input length,  input ids  (u32 each)
//! u32 target length, target ids (u32 each; 0xFFFFFFFF = ignore)
//! u16 meta count, then per entry: u16 key length, key, u32 value length, value
//! ```

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use super::{ObjectiveError, ObjectiveExample, ObjectiveKind, Result};
use crate::tokenizer::TokenSeq;

fn encode(ex: &ObjectiveExample) -> Result<Vec<u8>> {
    let mut body = Vec::with_capacity(16 + 4 * (ex.input_ids.len() + ex.target_ids.len()));
    body.push(ex.objective.tag());
    for ids in [&ex.input_ids.ids, &ex.target_ids.ids] {
        body.extend_from_slice(&(ids.len() as u32).to_le_bytes());
        for id in ids.iter() {
            body.extend_from_slice(&id.to_le_bytes());
        }
    }
    let count = u16::try_from(ex.meta.len()).map_err(|_| ObjectiveError::Malformed("too many meta entries".into()))?;
    body.extend_from_slice(&count.to_le_bytes());
    for (k, v) in &ex.meta {
        let klen = u16::try_from(k.len()).map_err(|_| ObjectiveError::Malformed(format!("meta key too long: {k}")))?;
        body.extend_from_slice(&klen.to_le_bytes());
        body.extend_from_slice(k.as_bytes());
        body.extend_from_slice(&(v.len() as u32).to_le_bytes());
        body.extend_from_slice(v.as_bytes());
    }
    Ok(body)
}

pub fn write_example<W: Write>(w: &mut W, ex: &ObjectiveExample) -> Result<()> {
    let body = encode(ex)?;
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

pub fn write_examples<'a, W, I>(w: &mut W, examples: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ObjectiveExample>,
{
    for ex in examples {
        write_example(w, ex)?;
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ObjectiveError::Malformed("record truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn ids(&mut self) -> Result<Vec<u32>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| ObjectiveError::Malformed("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ObjectiveError::Malformed("meta is not UTF-8".into()))
    }
}

fn decode(body: &[u8], vocab_id: u64) -> Result<ObjectiveExample> {
    let mut c = Cursor { buf: body, pos: 0 };
    let tag = c.take(1)?[0];
    let objective = ObjectiveKind::from_tag(tag).ok_or_else(|| ObjectiveError::Malformed(format!("unknown tag {tag}")))?;
    let input = c.ids()?;
    let target = c.ids()?;
    let mut meta = BTreeMap::new();
    for _ in 0..c.u16()? {
        let klen = c.u16()? as usize;
        let k = c.string(klen)?;
        let vlen = c.u32()? as usize;
        let v = c.string(vlen)?;
        meta.insert(k, v);
    }
    if c.pos != body.len() {
        return Err(ObjectiveError::Malformed("trailing bytes in record".into()));
    }
    Ok(ObjectiveExample {
        objective,
        input_ids: TokenSeq::new(input, vocab_id),
        target_ids: TokenSeq::new(target, vocab_id),
        meta,
    })
}

/// Reads one record; `Ok(None)` at a clean end of stream.
pub fn read_example<R: Read>(r: &mut R, vocab_id: u64) -> Result<Option<ObjectiveExample>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ObjectiveError::Malformed("record length truncated".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ObjectiveError::Malformed("record truncated".into()),
        _ => e.into(),
    })?;
    decode(&body, vocab_id).map(Some)
}

pub fn read_examples<R: Read>(r: &mut R, vocab_id: u64) -> Result<Vec<ObjectiveExample>> {
    let mut out = Vec::new();
    while let Some(ex) = read_example(r, vocab_id)? {
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::IGNORE_ID;

    fn example() -> ObjectiveExample {
        let mut meta = BTreeMap::new();
        meta.insert("denoiser".to_string(), "SC1".to_string());
        meta.insert("nsp_label".to_string(), "IsNext".to_string());
        ObjectiveExample {
            objective: ObjectiveKind::Mod,
            input_ids: TokenSeq::new(vec![1, 2, 3], 9),
            target_ids: TokenSeq::new(vec![IGNORE_ID, 7], 9),
            meta,
        }
    }

    #[test]
    fn roundtrip() {
        let exs = vec![example(), example()];
        let mut buf = Vec::new();
        write_examples(&mut buf, &exs).unwrap();
        assert_eq!(read_examples(&mut buf.as_slice(), 9).unwrap(), exs);
    }

    #[test]
    fn layout_is_little_endian() {
        let mut ex = example();
        ex.meta.clear();
        ex.target_ids.ids.clear();
        let mut buf = Vec::new();
        write_example(&mut buf, &ex).unwrap();
        let want: Vec<u8> = [
            &23u32.to_le_bytes()[..],
            &[5],
            &3u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &2u32.to_le_bytes(),
            &3u32.to_le_bytes(),
            &0u32.to_le_bytes(),
            &0u16.to_le_bytes(),
        ]
        .concat();
        assert_eq!(buf, want);
    }

    #[test]
    fn truncation_is_detected() {
        let mut buf = Vec::new();
        write_example(&mut buf, &example()).unwrap();
        for cut in 1..buf.len() {
            assert!(read_examples(&mut &buf[..cut], 9).is_err(), "cut {cut}");
        }
        buf[4] = 99;
        assert!(read_examples(&mut buf.as_slice(), 9).is_err());
    }
}
