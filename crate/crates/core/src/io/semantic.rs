//! Semantic inputs: 8-bit label maps and float score volumes.
//!
//! Score volume layout:
//!
//! ```text
//! STXSEM1\n
//! <width> <height> <classes>\n
//! f32 little-endian scores, planar [class][y][x], y = 0 at the top
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{LabelImage, SemanticImage};
use crate::io::netpbm;

pub const SCORE_MAGIC: &[u8] = b"STXSEM1\n";

/// Reads per-pixel class scores from a label map or a score volume.
///
/// Labels become softened one-hot scores with `softness` on the labelled
/// class; label 255 gives uniform scores. Score volumes are renormalized per
/// pixel.
pub fn read_semantic(path: &Path, class_count: usize, softness: f64) -> Result<SemanticImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(SCORE_MAGIC) {
        let img = parse_volume(path, &bytes)?;
        if img.class_count() != class_count {
            return Err(Error::ClassCountMismatch {
                expected: class_count,
                found: img.class_count(),
            });
        }
        Ok(img)
    } else if bytes.starts_with(b"P5") {
        let labels = netpbm::read_gray8(path)?;
        SemanticImage::from_labels(&labels, class_count, softness).map_err(|e| match e {
            Error::InvalidInput(reason) => Error::InvalidInput(format!("{}: {reason}", path.display())),
            e => e,
        })
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected an 8-bit P5 label map or an STXSEM1 score volume".into(),
        })
    }
}

fn parse_volume(path: &Path, bytes: &[u8]) -> Result<SemanticImage> {
    let corrupt = |reason: String| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason,
    };
    let rest = &bytes[SCORE_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing dimension line".into()))?;
    let line = std::str::from_utf8(&rest[..nl]).map_err(|_| corrupt("dimension line is not text".into()))?;
    let dims: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| corrupt(format!("malformed dimension line {line:?}")))?;
    let [w, h, c] = dims[..] else {
        return Err(corrupt(format!("expected `width height classes`, got {line:?}")));
    };
    let data = &rest[nl + 1..];
    let need = w * h * c * 4;
    if data.len() < need {
        return Err(corrupt(format!("scores truncated: {} of {need} bytes", data.len())));
    }
    let scores = data[..need]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    SemanticImage::new(w, h, c, scores).map_err(|e| match e {
        Error::InvalidInput(reason) => Error::InvalidInput(format!("{}: {reason}", path.display())),
        e => e,
    })
}

pub fn write_score_volume(path: &Path, img: &SemanticImage) -> Result<()> {
    let mut out = SCORE_MAGIC.to_vec();
    out.extend_from_slice(format!("{} {} {}\n", img.width(), img.height(), img.class_count()).as_bytes());
    for s in img.scores() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a ground-truth label map (255 = void).
pub fn read_labels(path: &Path) -> Result<LabelImage> {
    netpbm::read_gray8(path)
}

pub fn write_labels(path: &Path, labels: &LabelImage) -> Result<()> {
    netpbm::write_gray8(path, labels)
}
