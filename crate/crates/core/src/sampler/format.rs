//! Text serialization of environments.
//!
//! ```text
//! LRP 1 d=<d> n=<n> beta=<decimal> seed=<u64> variant=<selfsim|power:s>
//! edges <count>
//! <i> <j>        one line per long edge, i < j, ascending
//! ```
//!
//! Nearest-neighbor edges are implicit. Non-cubic boxes write `n=<n0>x<n1>…`
//! and a nonzero origin adds `origin=<o0>,<o1>,…`. Floats use the shortest
//! representation that round-trips.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelVariant};

use super::environment::Environment;
use super::shape::BoxShape;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub shape: BoxShape,
    pub spec: KernelSpec,
    pub seed: u64,
}

pub fn serialize(env: &Environment) -> Vec<u8> {
    let mut out = String::with_capacity(64 + 16 * env.long_edge_count());
    out.push_str(&header_line(env.shape(), env.spec(), env.seed()));
    let _ = writeln!(out, "edges {}", env.long_edge_count());
    for (a, b) in env.long_edges() {
        let _ = writeln!(out, "{a} {b}");
    }
    out.into_bytes()
}

fn header_line(shape: &BoxShape, spec: &KernelSpec, seed: u64) -> String {
    let variant = match spec.variant {
        KernelVariant::SelfSimilar => "selfsim".to_string(),
        KernelVariant::PowerLaw { s } => format!("power:{s:?}"),
    };
    let mut line = format!(
        "LRP 1 d={} n={} beta={:?} seed={} variant={}",
        shape.dimension(),
        shape.label(),
        spec.beta,
        seed,
        variant
    );
    if shape.origin().iter().any(|&o| o != 0) {
        let o: Vec<String> = shape.origin().iter().map(|o| o.to_string()).collect();
        let _ = write!(line, " origin={}", o.join(","));
    }
    line.push('\n');
    line
}

/// Parses the first line of an environment file.
pub fn parse_header(line: &str) -> Result<Header> {
    let err = |offset: usize, msg: String| Error::format(1, offset, msg);
    let mut tokens = line.split(' ');
    if tokens.next() != Some("LRP") {
        return Err(err(0, "missing LRP magic".into()));
    }
    if tokens.next() != Some("1") {
        return Err(err(4, "unsupported format version".into()));
    }
    let (mut d, mut n, mut beta, mut seed) = (None, None, None, None);
    let mut variant = KernelVariant::SelfSimilar;
    let mut origin: Option<Vec<i64>> = None;
    for token in tokens.filter(|t| !t.is_empty()) {
        let offset = token.as_ptr() as usize - line.as_ptr() as usize;
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| err(offset, format!("expected key=value, found `{token}`")))?;
        let bad = |what: &str| err(offset, format!("invalid {what} `{value}`"));
        match key {
            "d" => d = Some(value.parse::<usize>().map_err(|_| bad("dimension"))?),
            "n" => {
                let sides: std::result::Result<Vec<usize>, _> = value.split('x').map(str::parse).collect();
                n = Some(sides.map_err(|_| bad("side length"))?);
            }
            "beta" => beta = Some(value.parse::<f64>().map_err(|_| bad("beta"))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
            "variant" => {
                variant = if value == "selfsim" {
                    KernelVariant::SelfSimilar
                } else if let Some(s) = value.strip_prefix("power:") {
                    KernelVariant::PowerLaw {
                        s: s.parse().map_err(|_| bad("variant"))?,
                    }
                } else {
                    return Err(bad("variant"));
                }
            }
            "origin" => {
                let o: std::result::Result<Vec<i64>, _> = value.split(',').map(str::parse).collect();
                origin = Some(o.map_err(|_| bad("origin"))?);
            }
            _ => return Err(err(offset, format!("unknown header key `{key}`"))),
        }
    }
    let d = d.ok_or_else(|| err(0, "missing d".into()))?;
    let n = n.ok_or_else(|| err(0, "missing n".into()))?;
    let beta = beta.ok_or_else(|| err(0, "missing beta".into()))?;
    let seed = seed.ok_or_else(|| err(0, "missing seed".into()))?;
    let sides = if n.len() == 1 { vec![n[0]; d] } else { n };
    if sides.len() != d {
        return Err(err(0, format!("n lists {} sides for d={d}", sides.len())));
    }
    let origin = origin.unwrap_or_else(|| vec![0; d]);
    let shape = BoxShape::with_origin(sides, origin).map_err(|e| err(0, e.to_string()))?;
    let spec = KernelSpec::new(d, beta, variant).map_err(|e| err(0, e.to_string()))?;
    Ok(Header { shape, spec, seed })
}

pub fn deserialize(bytes: &[u8]) -> Result<Environment> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(0, e.valid_up_to(), "invalid UTF-8"))?;
    let mut lines = Lines::new(text);

    let (_, _, first) = lines.next().ok_or_else(|| Error::format(1, 0, "empty input"))?;
    let header = parse_header(first)?;

    let (line_no, offset, second) = lines
        .next()
        .ok_or_else(|| Error::format(2, text.len(), "truncated: missing edge count"))?;
    let count: usize = second
        .strip_prefix("edges ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::format(line_no, offset, "expected `edges <count>`"))?;

    let n = header.shape.vertex_count();
    let mut edges = Vec::with_capacity(count.min(1 << 24));
    let mut previous: Option<(u32, u32)> = None;
    for _ in 0..count {
        let (line_no, offset, line) = lines.next().ok_or_else(|| {
            Error::format(
                lines.line_no + 1,
                text.len(),
                format!("truncated edge list: {} of {count} edges", edges.len()),
            )
        })?;
        let parsed = line
            .split_once(' ')
            .and_then(|(a, b)| Some((a.parse::<u64>().ok()?, b.parse::<u64>().ok()?)));
        let (a, b) = parsed.ok_or_else(|| Error::format(line_no, offset, format!("malformed edge line `{line}`")))?;
        if a >= n as u64 || b >= n as u64 {
            return Err(Error::format(
                line_no,
                offset,
                format!("vertex index out of range (box has {n} vertices)"),
            ));
        }
        let edge = (a as u32, b as u32);
        if a >= b {
            return Err(Error::format(line_no, offset, "edge endpoints must satisfy i < j"));
        }
        if previous.is_some_and(|p| p >= edge) {
            return Err(Error::format(line_no, offset, "edges must be strictly ascending"));
        }
        if crate::kernel::sup_norm(&header.shape.displacement(edge.0, edge.1)) < 2 {
            return Err(Error::format(line_no, offset, "nearest-neighbor edges are implicit"));
        }
        previous = Some(edge);
        edges.push(edge);
    }
    if let Some((line_no, offset, line)) = lines.next() {
        if !line.is_empty() {
            return Err(Error::format(line_no, offset, "trailing data after edge list"));
        }
    }
    Environment::from_edges_unchecked(header.shape, header.spec, header.seed, &edges)
}

/// Line iterator yielding `(1-based line number, byte offset, content)`.
struct Lines<'a> {
    text: &'a str,
    pos: usize,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { text, pos: 0, line_no: 0 }
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.text.len() {
            return None;
        }
        let rest = &self.text[self.pos..];
        let end = rest.find('\n').unwrap_or(rest.len());
        let start = self.pos;
        self.pos += end + 1;
        self.line_no += 1;
        Some((self.line_no, start, &rest[..end]))
    }
}
