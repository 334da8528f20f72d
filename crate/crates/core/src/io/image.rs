//! Binary portable graymap export of an IWE.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::{create, IoError};
use crate::event::AccumulatorImage;

/// Writes the padded IWE as 8-bit P5, scaling counts linearly so that the maximum maps to 255.
pub fn write_pgm<W: Write>(writer: W, iwe: &AccumulatorImage) -> Result<(), IoError> {
    let g = iwe.geometry();
    let max = iwe.max_count() as u64;
    let mut w = BufWriter::new(writer);
    write!(w, "P5\n{} {}\n255\n", g.padded_width(), g.padded_height())?;
    let pixels: Vec<u8> = iwe
        .counts()
        .iter()
        .map(|&c| if max == 0 { 0 } else { ((c as u64 * 255 + max / 2) / max) as u8 })
        .collect();
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_iwe_image(iwe: &AccumulatorImage, path: &Path) -> Result<(), IoError> {
    write_pgm(create(path)?, iwe)
}
