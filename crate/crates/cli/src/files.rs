//! On-disk formats owned by the driver: JSONL documents and the token file.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use denoiserforge::objectives::{read_examples, write_examples, ObjectiveExample};
use denoiserforge::{Document, TokenSeq, Vocab};

const TOKENS_MAGIC: &[u8] = b"denoiserforge-tokens v1\n";

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

pub fn write_docs(path: &Path, docs: &[Document]) -> Result<()> {
    let mut w = create(path)?;
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_docs(path: &Path) -> Result<Vec<Document>> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::load(path).with_context(|| format!("cannot load vocabulary {}", path.display()))
}

/// Magic line, the vocabulary file text (u64 length prefix), a u64 sequence
/// count, then one u32-length-prefixed run of u32 ids per sequence. All
/// integers little-endian.
pub fn write_tokens(path: &Path, vocab: &Vocab, seqs: &[TokenSeq]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(TOKENS_MAGIC)?;
    let vtext = vocab.to_file_string();
    w.write_all(&(vtext.len() as u64).to_le_bytes())?;
    w.write_all(vtext.as_bytes())?;
    w.write_all(&(seqs.len() as u64).to_le_bytes())?;
    for s in seqs {
        w.write_all(&(s.ids.len() as u32).to_le_bytes())?;
        for id in &s.ids {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            bail!("token file is truncated");
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_tokens(path: &Path) -> Result<(Vocab, Vec<TokenSeq>)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(TOKENS_MAGIC.len()).ok() != Some(TOKENS_MAGIC) {
        bail!("{} is not a token file", path.display());
    }
    let vlen = usize::try_from(c.u64()?)?;
    let vtext = std::str::from_utf8(c.take(vlen)?).context("embedded vocabulary is not UTF-8")?;
    let vocab = Vocab::from_file_str(vtext).context("embedded vocabulary")?;
    let n = c.u64()?;
    let mut seqs = Vec::new();
    for _ in 0..n {
        let len = c.u32()? as usize;
        let raw = c.take(len.checked_mul(4).context("sequence too long")?)?;
        let ids: Vec<u32> = raw.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= vocab.size()) {
            bail!("token {bad} outside the embedded {}-token vocabulary", vocab.size());
        }
        seqs.push(TokenSeq::new(ids, vocab.id()));
    }
    if c.at != bytes.len() {
        bail!("trailing bytes after {n} sequences");
    }
    Ok((vocab, seqs))
}

pub fn write_example_file(path: &Path, examples: &[ObjectiveExample]) -> Result<()> {
    let mut w = create(path)?;
    write_examples(&mut w, examples.iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_example_file(path: &Path, vocab_id: u64) -> Result<Vec<ObjectiveExample>> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .read_to_end(&mut bytes)?;
    read_examples(&mut bytes.as_slice(), vocab_id).with_context(|| format!("{}", path.display()))
}
