//! Plain-text mesh files.
//!
//! ```text
//! msmfe-mesh 1 quad
//! 4 1            # n_nodes n_cells
//! 0 0
//! 1 0
//! 1 1
//! 0 1
//! 0 1 2 3
//! 4              # n_tagged_edges, then "v0 v1 tag"
//! 0 1 bottom
//! 1 2 right
//! 2 3 top
//! 3 0 left
//! ```
//!
//! Tokens are whitespace separated and `#` starts a comment. Boundary edges
//! that are not listed get the tag `boundary`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{CellType, Mesh};
use crate::Vec2;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, as (line number, tokens).
    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            let body = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok((i + 1, toks));
            }
        }
        Err(Error::MeshParse {
            line: 0,
            msg: "unexpected end of file".into(),
        })
    }
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::MeshParse {
        line,
        msg: format!("invalid {what} '{tok}'"),
    })
}

fn expect_len(toks: &[&str], n: usize, line: usize, what: &str) -> Result<()> {
    if toks.len() != n {
        return Err(Error::MeshParse {
            line,
            msg: format!("expected {n} fields for {what}, found {}", toks.len()),
        });
    }
    Ok(())
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, head) = lines.next_tokens()?;
    if head.len() != 3 || head[0] != "msmfe-mesh" || head[1] != "1" {
        return Err(Error::MeshParse {
            line: ln,
            msg: "expected header 'msmfe-mesh 1 <tri|quad>'".into(),
        });
    }
    let cell_type = CellType::parse(head[2]).ok_or_else(|| Error::MeshParse {
        line: ln,
        msg: format!("unknown cell type '{}'", head[2]),
    })?;
    let (ln, counts) = lines.next_tokens()?;
    expect_len(&counts, 2, ln, "counts")?;
    let n_nodes: usize = parse(counts[0], ln, "node count")?;
    let n_cells: usize = parse(counts[1], ln, "cell count")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, t) = lines.next_tokens()?;
        expect_len(&t, 2, ln, "node")?;
        nodes.push(Vec2::new(
            parse(t[0], ln, "coordinate")?,
            parse(t[1], ln, "coordinate")?,
        ));
    }
    let nv = cell_type.n_vertices();
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let (ln, t) = lines.next_tokens()?;
        expect_len(&t, nv, ln, "cell")?;
        let cell = t
            .iter()
            .map(|s| parse::<usize>(s, ln, "node id"))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&bad) = cell.iter().find(|&&v| v >= n_nodes) {
            return Err(Error::MeshParse {
                line: ln,
                msg: format!("node id {bad} out of range"),
            });
        }
        cells.push(cell);
    }
    let (ln, t) = lines.next_tokens()?;
    expect_len(&t, 1, ln, "tag count")?;
    let n_tags: usize = parse(t[0], ln, "tag count")?;
    let mut tags = HashMap::new();
    for _ in 0..n_tags {
        let (ln, t) = lines.next_tokens()?;
        expect_len(&t, 3, ln, "tagged edge")?;
        let a: usize = parse(t[0], ln, "node id")?;
        let b: usize = parse(t[1], ln, "node id")?;
        tags.insert([a.min(b), a.max(b)], t[2].to_string());
    }
    let mesh = Mesh::from_cells(cell_type, nodes, cells, |_, key| tags.get(&key).cloned())?;
    for key in tags.keys() {
        let found = mesh.boundary_tags.keys().any(|&e| mesh.edges[e].vertices == *key);
        if !found {
            return Err(Error::Mesh(format!(
                "tagged edge ({}, {}) is not a boundary edge",
                key[0], key[1]
            )));
        }
    }
    Ok(mesh)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> Result<()> {
    writeln!(out, "msmfe-mesh 1 {}", mesh.cell_type.name())?;
    writeln!(out, "{} {}", mesh.n_nodes(), mesh.n_cells())?;
    for p in &mesh.nodes {
        writeln!(out, "{:.17e} {:.17e}", p.x, p.y)?;
    }
    for c in &mesh.cells {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    writeln!(out, "{}", mesh.boundary_tags.len())?;
    for (&e, tag) in &mesh.boundary_tags {
        let [a, b] = mesh.edges[e].vertices;
        writeln!(out, "{a} {b} {tag}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, Rect};

    #[test]
    fn round_trip() {
        let m = build_rectangle_mesh(Rect::UNIT, 3, 2, CellType::Triangle).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = parse_mesh(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.boundary_tags, m.boundary_tags);
    }

    #[test]
    fn comments_and_default_tags() {
        let text =
            "# a single square\nmsmfe-mesh 1 quad\n4 1\n0 0\n1 0 # right corner\n1 1\n0 1\n0 1 2 3\n1\n0 1 floor\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.edges_with_tag("floor").count(), 1);
        assert_eq!(m.edges_with_tag("boundary").count(), 3);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "msmfe-mesh 1 quad\n4 1\n0 0\n1 x\n";
        match parse_mesh(text) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_mesh("msmfe-mesh 2 quad\n").is_err());
        assert!(parse_mesh("msmfe-mesh 1 hex\n").is_err());
    }
}
