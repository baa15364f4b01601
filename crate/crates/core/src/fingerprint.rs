//! Content hashes over canonical JSON.
//!
//! Struct fields serialize in declaration order and maps are `BTreeMap`s, so
//! the JSON encoding of a value is canonical and its hash stable.

use alloc::string::String;
use core::fmt::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// SHA-256 (hex) of the value's JSON encoding.
pub fn of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize to JSON");
    sha256_hex(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchyConfig;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn equal_configs_equal_fingerprints() {
        let a = HierarchyConfig::default();
        let b = HierarchyConfig::default();
        assert_eq!(of(&a), of(&b));
        let c = HierarchyConfig {
            fanout_limit: 5,
            ..a
        };
        assert_ne!(of(&c), of(&b));
    }
}
