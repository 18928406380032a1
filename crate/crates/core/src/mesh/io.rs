//! Plain text `ntri-mesh v1` format.
//!
//! ```text
//! ntri-mesh v1
//! vertices N
//! x y            (N lines)
//! cells M
//! i j k          (M lines, counterclockwise)
//! boundary B
//! i j tag        (B lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryTag, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                return Ok(t);
            }
        }
        Err(self.err("unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::MeshParse { line: self.line, msg: msg.into() }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let t = self.next_tokens()?;
        if t.len() != 2 || t[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        t[1].parse().map_err(|_| self.err(format!("bad {name} count `{}`", t[1])))
    }

    fn parse<F: std::str::FromStr>(&self, s: &str) -> Result<F> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }
}

pub fn parse_mesh<T: Real>(text: &str) -> Result<Mesh<T>> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let header = lines.next_tokens()?;
    if header != ["ntri-mesh", "v1"] {
        return Err(lines.err("missing `ntri-mesh v1` header"));
    }

    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let t = lines.next_tokens()?;
        if t.len() != 2 {
            return Err(lines.err("vertex line needs 2 coordinates"));
        }
        vertices.push([lines.parse::<T>(t[0])?, lines.parse::<T>(t[1])?]);
    }

    let nc = lines.section("cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let t = lines.next_tokens()?;
        if t.len() != 3 {
            return Err(lines.err("cell line needs 3 vertex indices"));
        }
        cells.push([lines.parse(t[0])?, lines.parse(t[1])?, lines.parse(t[2])?]);
    }

    let nb = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let t = lines.next_tokens()?;
        if t.len() != 3 {
            return Err(lines.err("boundary line needs `i j tag`"));
        }
        let tag: BoundaryTag = t[2].parse()?;
        boundary.push((lines.parse(t[0])?, lines.parse(t[1])?, tag));
    }

    Mesh::new(vertices, cells, &boundary)
}

pub fn write_mesh<T: Real>(mesh: &Mesh<T>) -> String {
    let mut s = String::new();
    writeln!(s, "ntri-mesh v1").unwrap();
    writeln!(s, "vertices {}", mesh.n_vertices()).unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{} {}", v[0], v[1]).unwrap();
    }
    writeln!(s, "cells {}", mesh.n_cells()).unwrap();
    for c in mesh.cells() {
        writeln!(s, "{} {} {}", c[0], c[1], c[2]).unwrap();
    }
    let boundary = mesh.boundary_list();
    writeln!(s, "boundary {}", boundary.len()).unwrap();
    for (a, b, tag) in boundary {
        writeln!(s, "{a} {b} {tag}").unwrap();
    }
    s
}

impl<T: Real> Mesh<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_mesh(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, write_mesh(self))?;
        Ok(())
    }
}
