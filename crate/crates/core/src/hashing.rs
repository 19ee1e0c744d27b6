//! Content hashing for node ids, scenario fingerprints and RNG stream keys.

use sha2::{Digest, Sha256};

/// SHA-256 over the byte parts, each prefixed by its length so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn digest_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 8 bytes of the part digest, hex encoded.
pub fn short_id(parts: &[&str]) -> String {
    let d = digest_parts(parts.iter().map(|s| s.as_bytes()));
    hex::encode(&d[..8])
}
