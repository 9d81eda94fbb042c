//! Deterministic text output: JSON and CSV assembly with a fixed float
//! format, so identical inputs produce byte-identical files.

use resonax_core::Complex64;
use sha2::{Digest, Sha256};

/// 17 significant digits, enough to round-trip any f64.
pub fn fnum(x: f64) -> String {
    format!("{x:.16e}")
}

/// A complex number as a two-element JSON array.
pub fn jcomplex(z: Complex64) -> String {
    format!("[{},{}]", fnum(z.re), fnum(z.im))
}

pub fn jstring(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn jarray(items: impl IntoIterator<Item = String>) -> String {
    let body: Vec<String> = items.into_iter().collect();
    format!("[{}]", body.join(","))
}

pub fn jobject(pairs: &[(&str, String)]) -> String {
    let body: Vec<String> = pairs
        .iter()
        .map(|(k, v)| format!("{}:{}", jstring(k), v))
        .collect();
    format!("{{{}}}", body.join(","))
}

/// SHA-256 of the canonicalized configuration: parsed and re-serialized so
/// whitespace and key order do not affect the digest.
pub fn config_digest(text: &str) -> String {
    let canonical = serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.to_string())
        .unwrap_or_else(|_| text.to_string());
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_the_fixed_format() {
        for &x in &[0.0, -0.0, 1.0, -5.0774246014258955, 2.506628274631e-7, 1e300] {
            let printed = fnum(x);
            assert_eq!(printed.parse::<f64>().unwrap(), x, "{printed}");
        }
    }

    #[test]
    fn strings_are_escaped() {
        assert_eq!(jstring("a\"b\\c\n"), r#""a\"b\\c\n""#);
    }

    #[test]
    fn digest_ignores_whitespace_and_key_order() {
        let a = config_digest(r#"{"a": 1, "b": [2, 3]}"#);
        let b = config_digest(r#"{ "b":[2,3],"a": 1 }"#);
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
