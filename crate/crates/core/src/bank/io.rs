//! `NPBK` bank files.
//!
//! Layout: magic `NPBK`, `u16` version, `u32` header length, JSON header
//! (k, sizes, extractor seed, category table, linkage), then every patch
//! embedding as little-endian `f32` in patch order, then every patch's 8-bit
//! RGB pixels (row-major, interleaved) in patch order.

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{Category, Dendrogram, Rect, RefPatch, ReferenceBank};
use crate::codec::{write_f32s, write_header, Reader};
use crate::error::{Error, Result};

pub const BANK_MAGIC: &[u8; 4] = b"NPBK";
pub const BANK_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct PatchRecord {
    rect: Rect,
    scale: usize,
    category: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    k: usize,
    sizes: Vec<usize>,
    extractor_seed: u64,
    min_category_size: usize,
    embedding_dim: usize,
    patches: Vec<PatchRecord>,
    linkage: Dendrogram,
}

impl ReferenceBank {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let embedding_dim = self.patches.first().map_or(0, |p| p.embedding.len());
        if self.patches.iter().any(|p| p.embedding.len() != embedding_dim) {
            return Err(Error::Bank("patches have embeddings of different lengths".into()));
        }
        let header = Header {
            k: self.k,
            sizes: self.sizes.clone(),
            extractor_seed: self.extractor_seed,
            min_category_size: self.min_category_size,
            embedding_dim,
            patches: self
                .patches
                .iter()
                .map(|p| PatchRecord {
                    rect: p.source_rect,
                    scale: p.scale,
                    category: match p.category {
                        Category::Label(c) => Some(c),
                        Category::Outlier => None,
                    },
                })
                .collect(),
            linkage: self.linkage.clone(),
        };
        let mut out = Vec::new();
        write_header(&mut out, BANK_MAGIC, BANK_VERSION, &header)?;
        for p in &self.patches {
            write_f32s(&mut out, p.embedding.iter().copied());
        }
        for p in &self.patches {
            out.extend_from_slice(p.pixels.as_raw());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let header: Header = r.header(BANK_MAGIC, BANK_VERSION)?;
        let mut embeddings = Vec::with_capacity(header.patches.len());
        for _ in &header.patches {
            let at = r.offset();
            let e = r.f32s(header.embedding_dim)?;
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(at, "non-finite embedding value"));
            }
            embeddings.push(e);
        }
        if header.linkage.leaves != header.patches.len() {
            return Err(Error::parse(0, "linkage does not cover every patch"));
        }
        let mut patches = Vec::with_capacity(header.patches.len());
        for (rec, embedding) in header.patches.iter().zip(embeddings) {
            let (w, h) = (rec.rect.w, rec.rect.h);
            let at = r.offset();
            let raw = r.take(w * h * 3)?.to_vec();
            let pixels = RgbImage::from_raw(w as u32, h as u32, raw)
                .ok_or_else(|| Error::parse(at, "patch pixel buffer size"))?;
            let category = match rec.category {
                Some(c) if c < header.k => Category::Label(c),
                Some(c) => return Err(Error::parse(at, format!("category {c} ≥ k = {}", header.k))),
                None => Category::Outlier,
            };
            patches.push(RefPatch {
                pixels,
                source_rect: rec.rect,
                scale: rec.scale,
                embedding,
                category,
            });
        }
        r.finish()?;
        Ok(ReferenceBank {
            patches,
            k: header.k,
            linkage: header.linkage,
            min_category_size: header.min_category_size,
            sizes: header.sizes,
            extractor_seed: header.extractor_seed,
        })
    }
}

pub fn save_bank(bank: &ReferenceBank, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, bank.to_bytes()?)?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<ReferenceBank> {
    ReferenceBank::from_bytes(&std::fs::read(path)?)
}
