//! Run-length codec for masks on the segmenter wire.
//!
//! Counts are alternating run lengths over the row-major bit sequence,
//! starting with a run of unset pixels (a leading zero count when the mask
//! starts set). The counts must sum to exactly width * height.

use super::GatewayError;
use crate::PixelMask;

pub fn encode(mask: &PixelMask) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run: u32 = 0;
    for &bit in &mask.bits {
        if bit == current {
            run += 1;
        } else {
            counts.push(run);
            current = bit;
            run = 1;
        }
    }
    if run > 0 || !counts.is_empty() {
        counts.push(run);
    }
    counts
}

pub fn decode(width: u32, height: u32, counts: &[u32]) -> Result<PixelMask, GatewayError> {
    let expected = u64::from(width) * u64::from(height);
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total != expected {
        return Err(GatewayError::Decode {
            detail: format!(
                "mask run lengths sum to {total}, expected {expected} for {width}x{height}"
            ),
        });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    let mut value = false;
    for &count in counts {
        bits.extend(std::iter::repeat(value).take(count as usize));
        value = !value;
    }
    PixelMask::new(width, height, bits)
        .map_err(|e| GatewayError::Decode { detail: e.to_string() })
}
