//! OFF mesh format: reader and writer.
//!
//! The reader tolerates the header variant found in parts of ModelNet where
//! the counts are glued onto the `OFF` keyword (`OFF490 518 0` on a single
//! line). Comment lines start with `#`. Polygons with more than three
//! vertices are fan-triangulated.

use super::Mesh;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OffErrorKind {
    #[error("missing OFF header")]
    MissingHeader,
    #[error("malformed counts line")]
    BadCounts,
    #[error("malformed vertex line")]
    BadVertex,
    #[error("malformed face line")]
    BadFace,
    #[error("face index {index} out of range (vertex count {vertex_count})")]
    IndexOutOfRange { index: usize, vertex_count: usize },
    #[error("unexpected end of file")]
    UnexpectedEof,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("OFF parse error at line {line}: {kind}")]
pub struct OffError {
    pub line: usize,
    pub kind: OffErrorKind,
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_significant(&mut self) -> Option<(usize, &'a str)> {
        for raw in self.inner.by_ref() {
            self.line += 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((self.line, trimmed));
        }
        None
    }
}

fn parse_counts(s: &str, line: usize) -> Result<(usize, usize), OffError> {
    let mut it = s.split_whitespace();
    let nv = it
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or(OffError {
            line,
            kind: OffErrorKind::BadCounts,
        })?;
    let nf = it
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or(OffError {
            line,
            kind: OffErrorKind::BadCounts,
        })?;
    // The edge count, when present, is ignored.
    Ok((nv, nf))
}

/// Parses OFF text into a [`Mesh`].
pub fn parse_off(text: &str) -> Result<Mesh, OffError> {
    let mut lines = Lines {
        inner: text.lines(),
        line: 0,
    };
    let (hline, header) = lines.next_significant().ok_or(OffError {
        line: 1,
        kind: OffErrorKind::MissingHeader,
    })?;
    let (nv, nf) = if header == "OFF" {
        let (cline, counts) = lines.next_significant().ok_or(OffError {
            line: hline,
            kind: OffErrorKind::UnexpectedEof,
        })?;
        parse_counts(counts, cline)?
    } else if let Some(rest) = header.strip_prefix("OFF") {
        // Glued header: counts share the header line.
        parse_counts(rest, hline)?
    } else {
        return Err(OffError {
            line: hline,
            kind: OffErrorKind::MissingHeader,
        });
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, text) = lines.next_significant().ok_or(OffError {
            line: lines.line,
            kind: OffErrorKind::UnexpectedEof,
        })?;
        let mut it = text.split_whitespace();
        let mut v = [0.0f64; 3];
        for coord in &mut v {
            *coord = it
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or(OffError {
                    line,
                    kind: OffErrorKind::BadVertex,
                })?;
        }
        // Trailing tokens (e.g. vertex colors) are ignored.
        vertices.push(v);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, text) = lines.next_significant().ok_or(OffError {
            line: lines.line,
            kind: OffErrorKind::UnexpectedEof,
        })?;
        let mut it = text.split_whitespace();
        let k = it
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or(OffError {
                line,
                kind: OffErrorKind::BadFace,
            })?;
        if k < 3 {
            return Err(OffError {
                line,
                kind: OffErrorKind::BadFace,
            });
        }
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = it
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or(OffError {
                    line,
                    kind: OffErrorKind::BadFace,
                })?;
            if idx >= nv {
                return Err(OffError {
                    line,
                    kind: OffErrorKind::IndexOutOfRange {
                        index: idx,
                        vertex_count: nv,
                    },
                });
            }
            poly.push(idx);
        }
        for i in 1..k - 1 {
            faces.push([poly[0], poly[i], poly[i + 1]]);
        }
    }

    Ok(Mesh { vertices, faces })
}

/// Serializes a mesh as OFF text. Coordinates print with Rust's shortest
/// round-trippable float formatting, so parse(serialize(m)) == m.
pub fn mesh_to_off(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.vertices.len(), mesh.faces.len()));
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", v[0], v[1], v[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}

/// A unit tetrahedron mesh, handy as a fixture.
#[cfg(test)]
pub(crate) fn unit_tetrahedron() -> Mesh {
    Mesh {
        vertices: vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ],
        faces: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn parses_a_tetrahedron() {
        let mesh = parse_off(TETRA).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.faces.len(), 4);
        assert_eq!(mesh, unit_tetrahedron());
    }

    #[test]
    fn glued_header_parses_like_the_spaced_variant() {
        let spaced = parse_off(TETRA).unwrap();
        let glued = TETRA.replacen("OFF\n4 4 0", "OFF4 4 0", 1);
        assert_eq!(parse_off(&glued).unwrap(), spaced);
    }

    #[test]
    fn out_of_range_face_index() {
        let bad = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 99\n";
        let err = parse_off(bad).unwrap_err();
        assert_eq!(
            err.kind,
            OffErrorKind::IndexOutOfRange {
                index: 99,
                vertex_count: 4
            }
        );
        assert_eq!(err.line, 7);
    }

    #[test]
    fn quads_fan_triangulate() {
        let quad = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = parse_off(quad).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn missing_header_and_bad_counts() {
        assert_eq!(
            parse_off("NOFF\n1 0 0\n0 0 0\n").unwrap_err().kind,
            OffErrorKind::MissingHeader
        );
        assert_eq!(
            parse_off("OFF\nx y z\n").unwrap_err().kind,
            OffErrorKind::BadCounts
        );
        let truncated = "OFF\n4 4 0\n0 0 0\n";
        assert_eq!(
            parse_off(truncated).unwrap_err().kind,
            OffErrorKind::UnexpectedEof
        );
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let with_comments = "# a comment\nOFF\n# counts below\n\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        assert_eq!(parse_off(with_comments).unwrap(), unit_tetrahedron());
    }

    #[test]
    fn serialize_parse_round_trip() {
        let mesh = Mesh {
            vertices: vec![[0.125, -3.5, 7.25], [1.0, 2.0, 3.0], [0.1, 0.2, 0.3]],
            faces: vec![[0, 1, 2]],
        };
        let text = mesh_to_off(&mesh);
        assert_eq!(parse_off(&text).unwrap(), mesh);
    }
}
