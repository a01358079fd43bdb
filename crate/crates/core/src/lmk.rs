//! LMK1: little-endian landmark sequence container.
//!
//! ```text
//! magic "LMK1" | u32 version=1 | u32 frame_count | u32 landmark_count=543
//! u8 fps | u8 dominance (0=RH, 1=LH) | u16 word class index
//! u16 trial index | u16 signer number
//! frame_count * 543 * (f32 x, f32 y, f32 d)
//! ```
//!
//! Coordinates are stored as f32 and widened to f64 on read, so a
//! read/write cycle reproduces the file bytes exactly.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::landmark::{
    CameraView, Dominance, LandmarkFrame, LandmarkPoint, SignerId, TrialSequence, WordClass,
    LANDMARK_COUNT,
};

pub const MAGIC: &[u8; 4] = b"LMK1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const FRAME_BYTES: usize = LANDMARK_COUNT * 3 * 4;

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<TrialSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_landmarks(trial: &TrialSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(trial)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode(trial: &TrialSequence) -> Result<Vec<u8>> {
    if trial.frames.is_empty() {
        return Err(Error::Invariant(
            "refusing to write a trial with no frames".into(),
        ));
    }
    let frame_count = u32::try_from(trial.frames.len())
        .map_err(|_| Error::Invariant("frame count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + trial.frames.len() * FRAME_BYTES);
    write_header(&mut out, trial, frame_count).expect("write to Vec");
    for frame in &trial.frames {
        for p in frame.points() {
            out.write_f32::<LittleEndian>(p.x as f32)
                .expect("write to Vec");
            out.write_f32::<LittleEndian>(p.y as f32)
                .expect("write to Vec");
            out.write_f32::<LittleEndian>(p.d as f32)
                .expect("write to Vec");
        }
    }
    Ok(out)
}

fn write_header<W: Write>(
    w: &mut W,
    trial: &TrialSequence,
    frame_count: u32,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(frame_count)?;
    w.write_u32::<LittleEndian>(LANDMARK_COUNT as u32)?;
    w.write_u8(trial.fps)?;
    w.write_u8(trial.dominance.to_byte())?;
    w.write_u16::<LittleEndian>(trial.word.index() as u16)?;
    w.write_u16::<LittleEndian>(trial.trial_index)?;
    w.write_u16::<LittleEndian>(trial.signer.0)?;
    Ok(())
}

fn checked<T>(r: std::io::Result<T>) -> T {
    r.expect("length checked")
}

pub fn decode(bytes: &[u8]) -> Result<TrialSequence> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).expect("length checked");
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = checked(cur.read_u32::<LittleEndian>());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let frame_count = checked(cur.read_u32::<LittleEndian>()) as usize;
    let landmark_count = checked(cur.read_u32::<LittleEndian>()) as usize;
    if landmark_count != LANDMARK_COUNT {
        return Err(Error::Format(format!(
            "landmark_count {landmark_count}, expected {LANDMARK_COUNT}"
        )));
    }
    let fps = checked(cur.read_u8());
    let dominance_byte = checked(cur.read_u8());
    let dominance = Dominance::from_byte(dominance_byte)
        .ok_or_else(|| Error::Format(format!("bad dominance byte {dominance_byte}")))?;
    let word_index = checked(cur.read_u16::<LittleEndian>()) as usize;
    let word = WordClass::from_index(word_index)
        .map_err(|_| Error::Format(format!("word class index {word_index} out of range")))?;
    let trial_index = checked(cur.read_u16::<LittleEndian>());
    let signer = SignerId(checked(cur.read_u16::<LittleEndian>()));
    if frame_count == 0 {
        return Err(Error::Format("frame_count is zero".into()));
    }

    let payload = &bytes[HEADER_LEN..];
    let complete = payload.len() / FRAME_BYTES;
    if complete < frame_count {
        return Err(Error::Truncation {
            expected: frame_count,
            found: complete,
        });
    }
    if payload.len() != frame_count * FRAME_BYTES {
        return Err(Error::Format(format!(
            "{} trailing bytes after {frame_count} frames",
            payload.len() - frame_count * FRAME_BYTES
        )));
    }

    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        for _ in 0..LANDMARK_COUNT {
            let x = checked(cur.read_f32::<LittleEndian>());
            let y = checked(cur.read_f32::<LittleEndian>());
            let d = checked(cur.read_f32::<LittleEndian>());
            points.push(LandmarkPoint::new(x as f64, y as f64, d as f64));
        }
        frames.push(LandmarkFrame::from_points(points)?);
    }

    Ok(TrialSequence {
        frames,
        signer,
        word,
        trial_index,
        dominance,
        fps,
        camera_view: CameraView::Front,
    })
}

/// Path of the optional JSON provenance sidecar next to an LMK1 file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
