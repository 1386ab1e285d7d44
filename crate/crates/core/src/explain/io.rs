//! Saliency files: one header line with the shape, then one score per line.
//!
//! ```text
//! # saliency shape=series:128
//! # saliency shape=grid:8x8
//! # saliency shape=series:128 signed class_pos=1 class_neg=0
//! ```

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ExplainError, SaliencyMap, Shape, SignedMap};

#[derive(Debug, Clone, PartialEq)]
pub enum SaliencyFile {
    Unsigned(SaliencyMap),
    Signed(SignedMap),
}

impl SaliencyFile {
    pub fn shape(&self) -> Shape {
        match self {
            SaliencyFile::Unsigned(m) => m.shape,
            SaliencyFile::Signed(m) => m.shape,
        }
    }

    pub fn scores(&self) -> &[f64] {
        match self {
            SaliencyFile::Unsigned(m) => &m.scores,
            SaliencyFile::Signed(m) => &m.scores,
        }
    }
}

/// Compact description of an explanation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencySummary {
    pub method: String,
    pub shape: Shape,
    pub argmax: usize,
    pub top_q: f64,
    pub top_set: Vec<usize>,
    pub eval_count: usize,
    /// Strongest signed points, for contrastive maps.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_signed: Option<Vec<(usize, f64)>>,
}

fn shape_token(shape: Shape) -> String {
    match shape {
        Shape::Series(n) => format!("series:{n}"),
        Shape::Grid { rows, cols } => format!("grid:{rows}x{cols}"),
    }
}

fn parse_shape(tok: &str) -> Option<Shape> {
    let (kind, dims) = tok.split_once(':')?;
    match kind {
        "series" => dims.parse().ok().map(Shape::Series),
        "grid" => {
            let (r, c) = dims.split_once('x')?;
            Some(Shape::Grid {
                rows: r.parse().ok()?,
                cols: c.parse().ok()?,
            })
        }
        _ => None,
    }
}

pub fn write_saliency<W: Write>(mut w: W, file: &SaliencyFile) -> Result<(), ExplainError> {
    match file {
        SaliencyFile::Unsigned(m) => writeln!(w, "# saliency shape={}", shape_token(m.shape))?,
        SaliencyFile::Signed(m) => writeln!(
            w,
            "# saliency shape={} signed class_pos={} class_neg={}",
            shape_token(m.shape),
            m.class_pos,
            m.class_neg
        )?,
    }
    for s in file.scores() {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_saliency<R: Read>(r: R) -> Result<SaliencyFile, ExplainError> {
    let bad = |m: String| ExplainError::Format(m);
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("#") || toks.next() != Some("saliency") {
        return Err(bad(format!("bad header {header:?}")));
    }
    let mut shape = None;
    let mut signed = false;
    let mut class_pos = None;
    let mut class_neg = None;
    for tok in toks {
        match tok.split_once('=') {
            Some(("shape", v)) => shape = parse_shape(v),
            Some(("class_pos", v)) => class_pos = v.parse().ok(),
            Some(("class_neg", v)) => class_neg = v.parse().ok(),
            None if tok == "signed" => signed = true,
            _ => return Err(bad(format!("unknown header field {tok:?}"))),
        }
    }
    let shape = shape.ok_or_else(|| bad("missing or invalid shape".into()))?;
    let mut scores = Vec::with_capacity(shape.len());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {}: not a number", i + 2)))?;
        scores.push(v);
    }
    if scores.len() != shape.len() {
        return Err(bad(format!("{} scores for {shape}", scores.len())));
    }
    let (lo, hi) = if signed { (-1.0, 1.0) } else { (0.0, 1.0) };
    if scores.iter().any(|s| !(lo..=hi).contains(s)) {
        return Err(bad(format!("score outside [{lo}, {hi}]")));
    }
    if signed {
        Ok(SaliencyFile::Signed(SignedMap {
            shape,
            class_pos: class_pos.ok_or_else(|| bad("missing class_pos".into()))?,
            class_neg: class_neg.ok_or_else(|| bad("missing class_neg".into()))?,
            scores,
        }))
    } else {
        Ok(SaliencyFile::Unsigned(SaliencyMap { shape, scores }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_kinds() {
        let a = SaliencyFile::Unsigned(SaliencyMap::normalized(
            Shape::Grid { rows: 2, cols: 3 },
            &[0.1, 0.3, 0.2, 0.7, 0.0, 1.0 / 3.0],
        ));
        let b = SaliencyFile::Signed(SignedMap::scaled(Shape::Series(3), 1, 0, &[0.2, -0.7, 0.1]));
        for f in [a, b] {
            let mut buf = Vec::new();
            write_saliency(&mut buf, &f).unwrap();
            assert_eq!(read_saliency(buf.as_slice()).unwrap(), f);
        }
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_saliency("# saliency shape=series:2\n0.5\n".as_bytes()).is_err());
        assert!(read_saliency("# saliency shape=series:1\n1.5\n".as_bytes()).is_err());
        assert!(read_saliency("# nope\n".as_bytes()).is_err());
        assert!(read_saliency("# saliency shape=blob:3\n".as_bytes()).is_err());
    }
}
