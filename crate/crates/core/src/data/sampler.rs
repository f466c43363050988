//! Low-discrepancy point sequences on the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HALTON_PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
pub const SOBOL_MAX_DIMS: usize = 6;
const SOBOL_BITS: usize = 32;

/// Primitive polynomial degree `s`, coefficient bits `a` and initial direction
/// integers `m_1..m_s` for Sobol dimensions 2 through 6 (Joe and Kuo's
/// published table). Dimension 1 uses `m_k = 1` throughout.
const SOBOL_INIT: [(u32, u32, &[u32]); 5] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
];

/// Radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * scale;
        index /= b;
        scale *= inv;
    }
    out
}

/// Point `index` of the Halton sequence; coordinate `j` uses the `j`-th prime
/// as base. Index 0 is the origin, so sequences normally start at 1.
pub fn halton_point(index: u64, dims: usize) -> Result<Vec<f64>> {
    if dims == 0 || dims > HALTON_PRIMES.len() {
        return Err(Error::Parameter(format!(
            "Halton dimension {dims} outside [1, {}]",
            HALTON_PRIMES.len()
        )));
    }
    Ok(HALTON_PRIMES[..dims]
        .iter()
        .map(|&p| radical_inverse(index, p))
        .collect())
}

/// Direction integers `V_1..V_32` (scaled to 32 bits) for one dimension.
fn sobol_directions(dim: usize) -> [u32; SOBOL_BITS] {
    let mut v = [0u32; SOBOL_BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (SOBOL_BITS - 1 - k);
        }
        return v;
    }
    let (s, a, init) = SOBOL_INIT[dim - 1];
    let s = s as usize;
    let mut m = [0u32; SOBOL_BITS];
    m[..s].copy_from_slice(init);
    for k in s..SOBOL_BITS {
        let mut next = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                next ^= m[k - j] << j;
            }
        }
        m[k] = next;
    }
    for k in 0..SOBOL_BITS {
        v[k] = m[k] << (SOBOL_BITS - 1 - k);
    }
    v
}

/// Point `index` of the Sobol sequence in Gray-code order. Index 0 is the
/// origin.
pub fn sobol_point(index: u64, dims: usize) -> Result<Vec<f64>> {
    if dims == 0 || dims > SOBOL_MAX_DIMS {
        return Err(Error::Parameter(format!(
            "Sobol dimension {dims} outside [1, {SOBOL_MAX_DIMS}]; use Halton for more"
        )));
    }
    if index >= 1 << SOBOL_BITS {
        return Err(Error::Parameter(format!("Sobol index {index} beyond 2^32")));
    }
    let gray = index ^ (index >> 1);
    Ok((0..dims)
        .map(|d| {
            let v = sobol_directions(d);
            let mut x = 0u32;
            for (k, &vk) in v.iter().enumerate() {
                if (gray >> k) & 1 == 1 {
                    x ^= vk;
                }
            }
            x as f64 / (1u64 << SOBOL_BITS) as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Halton,
    Sobol,
}

/// Position in a low-discrepancy sequence. Cloning forks the stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerState {
    pub kind: SequenceKind,
    pub dims: usize,
    pub next_index: u64,
}

impl SamplerState {
    pub fn new(kind: SequenceKind, dims: usize, start: u64) -> Result<Self> {
        let max = match kind {
            SequenceKind::Halton => HALTON_PRIMES.len(),
            SequenceKind::Sobol => SOBOL_MAX_DIMS,
        };
        if dims == 0 || dims > max {
            return Err(Error::Parameter(format!(
                "{kind:?} dimension {dims} outside [1, {max}]"
            )));
        }
        Ok(SamplerState {
            kind,
            dims,
            next_index: start,
        })
    }

    pub fn point(&self, index: u64) -> Result<Vec<f64>> {
        match self.kind {
            SequenceKind::Halton => halton_point(index, self.dims),
            SequenceKind::Sobol => sobol_point(index, self.dims),
        }
    }

    pub fn next_point(&mut self) -> Result<Vec<f64>> {
        let p = self.point(self.next_index)?;
        self.next_index += 1;
        Ok(p)
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}
