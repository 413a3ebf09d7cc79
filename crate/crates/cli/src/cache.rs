//! Corpus caches: a generated or ingested corpus frozen to one file.
//!
//! Same container encoding as checkpoints, under its own magic:
//!
//! ```text
//! magic    8 bytes  "DSCCORP\0"
//! version  u32      1
//! n_samples u32
//! per sample: label string, split u8 (0 train / 1 test),
//!             image tensor, text tensor
//! probe    u8 flag; if 1: label string, image tensor, text tensor
//! ```
//!
//! Sample order is preserved exactly, so a cache round-trips bitwise
//! and training visits inputs in the same order it would have without
//! the cache.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use dsc_core::container::{ContainerReader, ContainerWriter};
use dsc_core::data::Split;
use dsc_core::{Corpus, DscError, DscResult, Sample};

pub const CORPUS_MAGIC: &[u8; 8] = b"DSCCORP\0";
pub const CORPUS_VERSION: u32 = 1;

pub fn save_corpus(corpus: &Corpus, path: &Path) -> DscResult<()> {
    let mut w = ContainerWriter::new(CORPUS_MAGIC, CORPUS_VERSION);
    w.put_u32(corpus.len() as u32);
    for (sample, split) in corpus.samples().iter().zip(corpus.split()) {
        w.put_string(sample.label());
        w.put_u8(match split {
            Split::Train => 0,
            Split::Test => 1,
        });
        w.put_tensor(sample.image());
        w.put_tensor(sample.text());
    }
    match corpus.probe() {
        Some(p) => {
            w.put_u8(1);
            w.put_string(p.label());
            w.put_tensor(p.image());
            w.put_tensor(p.text());
        }
        None => w.put_u8(0),
    }
    w.write_to(path)
}

pub fn load_corpus(path: &Path) -> DscResult<Corpus> {
    let mut r = ContainerReader::open(path, CORPUS_MAGIC, CORPUS_VERSION)?;
    let n = r.get_u32()? as usize;
    let mut samples = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for _ in 0..n {
        let label = r.get_string()?;
        split.push(match r.get_u8()? {
            0 => Split::Train,
            1 => Split::Test,
            other => {
                return Err(DscError::Container(format!(
                    "{}: split tag {} is neither train (0) nor test (1)",
                    path.display(),
                    other
                )))
            }
        });
        let image = r.get_tensor()?;
        let text = r.get_tensor()?;
        samples.push(Sample::new(image, text, &label)?);
    }
    let probe = match r.get_u8()? {
        0 => None,
        _ => {
            let label = r.get_string()?;
            let image = r.get_tensor()?;
            let text = r.get_tensor()?;
            Some(Sample::new(image, text, &label)?)
        }
    };
    r.finish()?;
    let corpus = Corpus::new(samples, split)?;
    Ok(match probe {
        Some(p) => corpus.with_probe(p),
        None => corpus,
    })
}

/// True when the file starts with the corpus-cache magic; lets callers
/// accept either a cache or a plain-text manifest under one flag.
pub fn is_corpus_cache(path: &Path) -> bool {
    let mut head = [0u8; 8];
    match File::open(path).and_then(|mut f| f.read_exact(&mut head)) {
        Ok(()) => &head == CORPUS_MAGIC,
        Err(_) => false,
    }
}
