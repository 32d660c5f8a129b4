//! Hilbert space-filling curve order for point clouds of any dimension.
//!
//! Points are min–max normalized to the unit hypercube, quantized to 16 bits
//! per coordinate, and mapped to their position along the Hilbert curve with
//! Skilling's transpose algorithm. Sorting both clouds by curve position and
//! pairing by rank gives a feasible (generally suboptimal) transport plan.

use ndarray::ArrayView2;

pub(crate) const HILBERT_BITS: u32 = 16;

/// Skilling's axes→transpose conversion. After the call, interleaving the
/// bits of `x` (most significant plane first, axis 0 first within a plane)
/// yields the Hilbert curve index of the original coordinates.
pub(crate) fn axes_to_transpose(x: &mut [u32], bits: u32) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let m = 1u32 << (bits - 1);

    // Inverse undo.
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }

    // Gray encode.
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0u32;
    q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

/// Pack transposed coordinates into a big-endian bit key comparable with the
/// derived `Ord` on `Vec<u64>`.
pub(crate) fn transpose_to_key(x: &[u32], bits: u32) -> Vec<u64> {
    let n = x.len() as u32;
    let total = n * bits;
    let mut key = vec![0u64; total.div_ceil(64) as usize];
    let mut pos = 0u32;
    for q in (0..bits).rev() {
        for v in x {
            if (v >> q) & 1 != 0 {
                key[(pos / 64) as usize] |= 1u64 << (63 - pos % 64);
            }
            pos += 1;
        }
    }
    key
}

/// Indices of `points` sorted by position along the Hilbert curve after
/// joint min–max normalization with bounds `lo`/`hi`; ties break by the
/// original index.
pub(crate) fn hilbert_order(points: &ArrayView2<'_, f64>, lo: &[f64], hi: &[f64]) -> Vec<usize> {
    let dims = points.ncols();
    let max_cell = f64::from((1u32 << HILBERT_BITS) - 1);
    let scale: Vec<f64> = lo
        .iter()
        .zip(hi)
        .map(|(&l, &h)| if h > l { max_cell / (h - l) } else { 0.0 })
        .collect();
    let mut keyed: Vec<(Vec<u64>, usize)> = (0..points.nrows())
        .map(|t| {
            let mut coords: Vec<u32> = (0..dims)
                .map(|d| {
                    ((points[[t, d]] - lo[d]) * scale[d])
                        .round()
                        .clamp(0.0, max_cell) as u32
                })
                .collect();
            axes_to_transpose(&mut coords, HILBERT_BITS);
            (transpose_to_key(&coords, HILBERT_BITS), t)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, t)| t).collect()
}
