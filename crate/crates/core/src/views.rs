//! Two-view construction at the representation level.
//!
//! The pair (Za, Zb) is built either by a fixed time shift (predict-the-
//! future evaluation) or by deterministic block masking (masked-reconstruction
//! evaluation). View generation is entirely deterministic: masks tile each
//! utterance with a fixed period rather than sampling random spans, so the
//! masking ratio is exact whenever T is a multiple of the period.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame alignment between two views of the same utterance: `index_a`
/// addresses view A's feature dump, `index_b` view B's. Pairs are unique and
/// sorted by `index_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewPairing {
    pairs: Vec<(usize, usize)>,
    source_t: usize,
}

impl ViewPairing {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Frame count of the utterance both index sets address.
    pub fn source_t(&self) -> usize {
        self.source_t
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Deterministic block mask over `T` frames: within every `period`-frame
/// window (including a partial final one), the last `masked_per_period`
/// frames are masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    masked: Vec<bool>,
    period: usize,
    masked_per_period: usize,
}

pub const DEFAULT_MASK_PERIOD: usize = 40;
pub const DEFAULT_MASKED_PER_PERIOD: usize = 30;

/// Which positions the masked-view pairing covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MaskPositions {
    /// Only masked frames: the positions the masked-prediction objective
    /// actually reconstructs.
    #[default]
    #[serde(rename = "masked")]
    MaskedOnly,
    /// Every frame, masked or not.
    #[serde(rename = "all")]
    AllFrames,
}

impl MaskSpec {
    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn masked_per_period(&self) -> usize {
        self.masked_per_period
    }

    pub fn t(&self) -> usize {
        self.masked.len()
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Pair each frame with the frame `shift_frames` later: Za is the past frame,
/// Zb the future one. Errors when no frame has a partner (`T ≤ shift`).
pub fn time_shift_pairing(t: usize, shift_frames: usize) -> Result<ViewPairing> {
    if t == 0 {
        return Err(Error::invalid_config("T must be ≥ 1"));
    }
    if t <= shift_frames {
        return Err(Error::insufficient(format!(
            "no pairable frames: T={t} with shift of {shift_frames} frames"
        )));
    }
    let pairs = (0..t - shift_frames).map(|a| (a, a + shift_frames)).collect();
    Ok(ViewPairing { pairs, source_t: t })
}

/// Build the block mask for `t` frames: frame `t` is masked iff
/// `(t mod period) ≥ period − masked_per_period`.
pub fn block_mask_spec(t: usize, period: usize, masked_per_period: usize) -> Result<MaskSpec> {
    if t == 0 {
        return Err(Error::invalid_config("T must be ≥ 1"));
    }
    if masked_per_period == 0 || masked_per_period >= period {
        return Err(Error::invalid_config(format!(
            "masked_per_period must satisfy 0 < masked_per_period < period, \
             got masked_per_period={masked_per_period}, period={period}"
        )));
    }
    let first_masked = period - masked_per_period;
    let masked = (0..t).map(|i| i % period >= first_masked).collect();
    Ok(MaskSpec {
        masked,
        period,
        masked_per_period,
    })
}

/// Align the masked-pass dump (view A) with the unmasked-pass dump (view B)
/// frame-for-frame at the selected positions.
pub fn masked_pairing(spec: &MaskSpec, positions: MaskPositions) -> Result<ViewPairing> {
    let pairs: Vec<(usize, usize)> = match positions {
        MaskPositions::MaskedOnly => spec
            .masked
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i, i))
            .collect(),
        MaskPositions::AllFrames => (0..spec.t()).map(|i| (i, i)).collect(),
    };
    if pairs.is_empty() {
        return Err(Error::insufficient(
            "mask spec has zero masked frames; nothing to pair at masked positions",
        ));
    }
    Ok(ViewPairing {
        pairs,
        source_t: spec.t(),
    })
}

/// Fraction of frames the spec masks.
pub fn mask_ratio(spec: &MaskSpec) -> f64 {
    spec.masked_count() as f64 / spec.t() as f64
}

/// Serialize a mask spec: line 1 `T=<T> period=<p> masked=<m>`, line 2 one
/// '0'/'1' character per frame.
pub fn store_mask_spec(spec: &MaskSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!(
        "T={} period={} masked={}\n",
        spec.t(),
        spec.period,
        spec.masked_per_period
    );
    text.extend(spec.masked.iter().map(|&m| if m { '1' } else { '0' }));
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a mask spec file written by [`store_mask_spec`].
pub fn load_mask_spec(path: impl AsRef<Path>) -> Result<MaskSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let mut t = None;
    let mut period = None;
    let mut masked_per_period = None;
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("expected key=value fields, got {field:?}"),
        })?;
        let value: usize = value.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("non-integer value in {field:?}"),
        })?;
        match key {
            "T" => t = Some(value),
            "period" => period = Some(value),
            "masked" => masked_per_period = Some(value),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    detail: format!("unknown field {key:?}"),
                })
            }
        }
    }
    let (t, period, masked_per_period) = match (t, period, masked_per_period) {
        (Some(t), Some(p), Some(m)) => (t, p, m),
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                detail: "header must contain T=, period=, and masked= fields".into(),
            })
        }
    };
    let bits = lines.next().unwrap_or("");
    if bits.len() != t {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            detail: format!("mask line has {} characters, header declares T={t}", bits.len()),
        });
    }
    let masked: Vec<bool> = bits
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Parse {
                path: path.to_path_buf(),
                line: 2,
                detail: format!("mask characters must be '0' or '1', got {other:?}"),
            }),
        })
        .collect::<Result<_>>()?;
    let spec = block_mask_spec(t, period, masked_per_period)?;
    if spec.masked != masked {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            detail: "mask bits do not match the declared period/masked tiling".into(),
        });
    }
    Ok(spec)
}
