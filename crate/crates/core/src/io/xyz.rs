//! Plain `x y z` text format: one point per line, `#` comments and blank
//! lines skipped. Values are written in shortest round-trip decimal form,
//! so write-then-read reproduces every coordinate exactly.

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

pub fn read_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::XyzParse {
                line: line_no,
                message: format!("expected 3 values, found {}", tokens.len()),
            });
        }
        let mut coords = [0.0f64; 3];
        for (slot, token) in coords.iter_mut().zip(&tokens) {
            *slot = token.parse().map_err(|_| Error::XyzParse {
                line: line_no,
                message: format!("invalid number `{token}`"),
            })?;
        }
        let p = Point3::from_array(coords);
        if !p.is_finite() {
            return Err(Error::XyzParse {
                line: line_no,
                message: "non-finite coordinate".into(),
            });
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 24);
    for p in &cloud.points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}
