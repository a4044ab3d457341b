//! 16-bit stereo WAV export.

use std::path::Path;

use super::render::BinauralFrame;
use super::SAMPLE_RATE;
use crate::error::{Error, Result};

/// Full-scale float maps to i16 full scale; values beyond +-1 are clipped.
fn to_i16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16
}

pub fn write_wav(path: &Path, frames: &[BinauralFrame]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: SAMPLE_RATE as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for f in frames {
        f.check_shape()?;
        for (l, r) in f.left.iter().zip(&f.right) {
            w.write_sample(to_i16(*l))?;
            w.write_sample(to_i16(*r))?;
        }
    }
    w.finalize()?;
    Ok(())
}
