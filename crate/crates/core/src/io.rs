//! Point files: one point per line, three whitespace-separated decimals.
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Real;

pub fn parse_points<T: Real>(text: &str) -> Result<Vec<Point3<T>>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: idx + 1, message };
        let coords = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(format!("{tok:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let [x, y, z] = coords[..] else {
            return Err(parse_err(format!("expected 3 coordinates, found {}", coords.len())));
        };
        let p = Point3::new(T::lit(x), T::lit(y), T::lit(z));
        if !p.is_finite() {
            return Err(parse_err("non-finite coordinate".into()));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn read_points<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Point3<T>>> {
    parse_points(&std::fs::read_to_string(path)?)
}
