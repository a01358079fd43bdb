//! Dynamic time warping and DTW-template features.
//!
//! Distances are computed per scalar channel: a query of `C` channels
//! compared against `T` templates yields `C * T` features, ordered
//! template-major.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmark::{TrialSequence, WordClass};
use crate::preprocess::FeatureSequence;

/// Unconstrained DTW with absolute-difference cost and steps
/// (1,0), (0,1), (1,1).
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    dtw_distance_banded(a, b, None)
}

/// DTW restricted to a Sakoe-Chiba band of half-width `band` around the
/// length-scaled diagonal. The band is widened as needed so a path exists.
pub fn dtw_distance_banded(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("dtw needs non-empty sequences"));
    }
    let (n, m) = (a.len(), b.len());
    let window = band.map(|w| w.max(n.abs_diff(m)));
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let (lo, hi) = match window {
            None => (1, m),
            Some(w) => {
                let center = i * m / n;
                (center.saturating_sub(w).max(1), (center + w).min(m))
            }
        };
        for j in lo..=hi {
            let cost = (a[i - 1] - b[j - 1]).abs();
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Items that carry a word class.
pub trait Labelled {
    fn word(&self) -> WordClass;
}

impl Labelled for TrialSequence {
    fn word(&self) -> WordClass {
        self.word
    }
}

impl Labelled for FeatureSequence {
    fn word(&self) -> WordClass {
        self.word
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateSource {
    /// Templates drawn from the test signers. Leaks test data into the
    /// features; kept for comparability with published numbers.
    #[default]
    Test,
    Train,
}

/// One template per class, in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank<T> {
    pub templates: Vec<T>,
    pub seed: u64,
    pub source: TemplateSource,
}

impl<T> TemplateBank<T> {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Picks one template per class among all 60 classes.
pub fn select_templates<T: Labelled + Clone>(
    pool: &[T],
    seed: u64,
    source: TemplateSource,
) -> Result<TemplateBank<T>> {
    let classes: Vec<WordClass> = WordClass::all().collect();
    select_templates_for(pool, &classes, seed, source)
}

/// Picks uniformly at random, with a seeded generator, one pool item for
/// each of `classes` (in the given order).
pub fn select_templates_for<T: Labelled + Clone>(
    pool: &[T],
    classes: &[WordClass],
    seed: u64,
    source: TemplateSource,
) -> Result<TemplateBank<T>> {
    let mut by_class: BTreeMap<WordClass, Vec<usize>> = BTreeMap::new();
    for (i, item) in pool.iter().enumerate() {
        by_class.entry(item.word()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = classes
        .iter()
        .map(|c| {
            let members = by_class
                .get(c)
                .ok_or_else(|| Error::ClassCoverage(c.to_string()))?;
            Ok(pool[members[rng.gen_range(0..members.len())]].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateBank {
        templates,
        seed,
        source,
    })
}

/// Per-channel DTW distance of `query` to every template, ordered
/// template-major then channel. Only valid (non-padding) frames are used.
pub fn dtw_features(
    query: &FeatureSequence,
    bank: &TemplateBank<FeatureSequence>,
    band: Option<usize>,
) -> Result<Vec<f64>> {
    let channels = query.width();
    for t in &bank.templates {
        if t.width() != channels {
            return Err(Error::Length {
                expected: channels,
                got: t.width(),
            });
        }
    }
    let query_channels: Vec<Vec<f64>> = (0..channels).map(|c| query.channel(c)).collect();
    let per_template: Vec<Vec<f64>> = bank
        .templates
        .par_iter()
        .map(|t| {
            (0..channels)
                .map(|c| dtw_distance_banded(&query_channels[c], &t.channel(c), band))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_template.concat())
}

/// Dense f32 feature matrix stored as `DTWF`: magic, u32 rows, u32 cols,
/// then row-major little-endian f32.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

pub const DTWF_MAGIC: &[u8; 4] = b"DTWF";

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Length {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data[i * self.cols..(i + 1) * self.cols]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(DTWF_MAGIC);
        out.write_u32::<LittleEndian>(self.rows as u32)
            .expect("write to Vec");
        out.write_u32::<LittleEndian>(self.cols as u32)
            .expect("write to Vec");
        for &v in &self.data {
            out.write_f32::<LittleEndian>(v).expect("write to Vec");
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)
            .map_err(|_| Error::Format("DTWF header too short".into()))?;
        if &magic != DTWF_MAGIC {
            return Err(Error::Format(format!("bad DTWF magic {magic:?}")));
        }
        let short = |_| Error::Format("DTWF header too short".into());
        let rows = cur.read_u32::<LittleEndian>().map_err(short)? as usize;
        let cols = cur.read_u32::<LittleEndian>().map_err(short)? as usize;
        let expected = rows * cols * 4;
        let payload = &bytes[12..];
        if payload.len() < expected {
            return Err(Error::Truncation {
                expected: rows,
                found: payload.len() / (cols * 4).max(1),
            });
        }
        if payload.len() != expected {
            return Err(Error::Format("trailing bytes after DTWF payload".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { rows, cols, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
