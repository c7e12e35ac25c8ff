//! Plain-text "H h" row dumps.
//!
//! ```text
//! polytope <dim> <rows>
//! H_11 ... H_1d h_1
//! ...
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! dump parses back bit-for-bit for `f64`. Blank lines and `#` comments are
//! ignored by the reader.

use super::{Polytope, PolytopeError};
use crate::linalg::Mat;
use crate::scalar::Real;

impl<T: Real> Polytope<T> {
    pub fn to_text(&self) -> String {
        let mut s = format!("polytope {} {}\n", self.dim, self.num_rows());
        for (r, &b) in self.normals.row_iter().zip(&self.offsets) {
            let mut first = true;
            for x in r.iter().chain(std::iter::once(&b)) {
                if !first {
                    s.push(' ');
                }
                first = false;
                s.push_str(&format!("{:?}", x.as_f64()));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PolytopeError> {
        let mut lines = text.lines().enumerate();
        Self::read_from(&mut lines)
    }

    /// Reads one polytope block from a numbered line stream, leaving the
    /// iterator positioned after its last row.
    pub fn read_from<'a, I>(lines: &mut I) -> Result<Self, PolytopeError>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let mut next = || {
            for (no, l) in lines.by_ref() {
                let t = l.split('#').next().unwrap_or("").trim();
                if !t.is_empty() {
                    return Some((no + 1, t.to_string()));
                }
            }
            None
        };
        let (hno, header) = next().ok_or(PolytopeError::Parse { line: 0, msg: "missing header".into() })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "polytope" {
            return Err(PolytopeError::Parse { line: hno, msg: format!("expected `polytope <dim> <rows>`, got `{header}`") });
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|e| PolytopeError::Parse { line: hno, msg: e.to_string() })
        };
        let dim = parse_usize(parts[1])?;
        let rows = parse_usize(parts[2])?;
        if dim == 0 {
            return Err(PolytopeError::Parse { line: hno, msg: "dimension must be positive".into() });
        }
        let mut data = Vec::with_capacity(rows * dim);
        let mut offsets = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (no, l) = next().ok_or(PolytopeError::Parse { line: hno, msg: "truncated row list".into() })?;
            let vals: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| PolytopeError::Parse { line: no, msg: e.to_string() })?;
            if vals.len() != dim + 1 {
                return Err(PolytopeError::Parse { line: no, msg: format!("expected {} numbers, got {}", dim + 1, vals.len()) });
            }
            data.extend(vals[..dim].iter().map(|&v| T::lit(v)));
            offsets.push(T::lit(vals[dim]));
        }
        // Stored rows are already normalized; keep them verbatim.
        Ok(Self { normals: Mat::from_vec(rows, dim, data), offsets, dim })
    }
}

impl<T: Real> std::fmt::Display for Polytope<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}
