//! Stable seed derivation from record keys.

use std::hash::Hasher;

use fnv::FnvHasher;

/// One component of a seed key.
#[derive(Clone, Copy, Debug)]
pub enum Key<'a> {
    Str(&'a str),
    Int(u64),
}

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tagged key components followed by a 64-bit mixer.
/// Independent of platform, process and hash-map randomization.
pub fn derive_seed(base: u64, parts: &[Key]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&base.to_le_bytes());
    for p in parts {
        match p {
            Key::Str(s) => {
                h.write_u8(b's');
                h.write(&(s.len() as u64).to_le_bytes());
                h.write(s.as_bytes());
            }
            Key::Int(v) => {
                h.write_u8(b'i');
                h.write(&v.to_le_bytes());
            }
        }
    }
    finalize(h.finish())
}
