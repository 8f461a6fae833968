use std::path::Path;

use crate::error::{Error, Result};

/// A colored point of the initialization cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPoint {
    pub xyz: [f64; 3],
    /// In `[0, 1]`.
    pub rgb: [f64; 3],
}

fn malformed(path: &Path, detail: impl Into<String>) -> Error {
    Error::MalformedPly { path: path.to_path_buf(), detail: detail.into() }
}

/// Parses an ASCII PLY whose vertex element has at least `x y z` and
/// optionally `red green blue` (8-bit integers or floats in [0, 1]).
pub fn read_ply(path: &Path) -> Result<Vec<InitPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| malformed(path, e.to_string()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(malformed(path, "missing `ply` magic"));
    }
    let mut count = None;
    let mut props: Vec<(String, String)> = Vec::new();
    let mut in_vertex = false;
    let mut ascii = false;
    for line in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", ..] => return Err(malformed(path, "only ASCII PLY is supported")),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| malformed(path, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", ty, name] if in_vertex => props.push((ty.to_string(), name.to_string())),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err(malformed(path, "missing ASCII format line"));
    }
    let count = count.ok_or_else(|| malformed(path, "no vertex element"))?;
    let find = |n: &str| props.iter().position(|(_, p)| p == n);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(malformed(path, "vertex needs x, y and z")),
    };
    let color = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let line = lines.next().ok_or_else(|| malformed(path, format!("expected {count} vertices, got {k}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed(path, format!("non-numeric value on vertex {k}")))?;
        if vals.len() < props.len() {
            return Err(malformed(path, format!("vertex {k} has {} of {} values", vals.len(), props.len())));
        }
        let rgb = match color {
            Some(idx) => idx.map(|i| if props[i].0.contains("char") { vals[i] / 255.0 } else { vals[i] }),
            None => [0.5; 3],
        };
        points.push(InitPoint { xyz: [vals[ix], vals[iy], vals[iz]], rgb });
    }
    Ok(points)
}

/// Writes points as ASCII PLY with 8-bit colors.
pub fn write_ply(path: &Path, points: &[InitPoint]) -> Result<()> {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    );
    for p in points {
        let c = p.rgb.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        let _ = writeln!(s, "{} {} {} {} {} {}", p.xyz[0], p.xyz[1], p.xyz[2], c[0], c[1], c[2]);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
