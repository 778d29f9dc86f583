//! Artifact writers. Reals use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use mintime::hilbert::Field;
use mintime::time::TimeGrid;
use serde::Serialize;

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join(name), text)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> io::Result<()> {
    fs::write(dir.join(name), text)
}

/// `t,u_norm,u{c}_{i}...` with one row per control step, stamped at the step start.
pub fn control_csv(time: &TimeGrid, steps: &[Field], norms: &[f64]) -> String {
    let mut s = String::from("t,u_norm");
    if let Some(u) = steps.first() {
        for c in 0..u.components() {
            for i in 0..u.nodes() {
                let _ = write!(s, ",u{c}_{i}");
            }
        }
    }
    s.push('\n');
    for (k, u) in steps.iter().enumerate() {
        let _ = write!(s, "{},{}", time.time(k), norms.get(k).copied().unwrap_or(f64::NAN));
        for v in u.values() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
