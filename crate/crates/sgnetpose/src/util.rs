//! Config hashing and number formatting shared across artifacts.

use sha2::{Digest, Sha256};

/// 16-hex-char digest of a value's canonical JSON form. Struct field order
/// is fixed at compile time, so equal configs hash equally across runs.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    let canon = serde_json::to_string(value).expect("config types serialize infallibly");
    let digest = Sha256::digest(canon.as_bytes());
    digest[..8].iter().map(|b| format!("{:02x}", b)).collect()
}

/// Formats with 6 significant digits, the precision used in metric CSVs.
pub fn sig6(v: f64) -> String {
    format!("{:.5e}", v)
}
