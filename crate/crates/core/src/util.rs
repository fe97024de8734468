use sha2::{Digest, Sha256};

/// Deterministic 64-bit seed derived from a master seed and a labelled path,
/// e.g. `derive_seed(seed, &["tree", "3", "17"])`. Stable across platforms
/// and independent of execution order.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Render `v` rounded to `digits` significant digits, in the shortest form
/// that parses back to the rounded value.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".to_string() } else { v.to_string() };
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("formatted float parses");
    format!("{rounded}")
}
