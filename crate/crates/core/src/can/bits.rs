use std::fmt;
use std::str::FromStr;

use super::CanError;

/// Number of identical bits after which a complement bit is inserted.
const STUFF_RUN: usize = 5;

/// Ordered bus levels. `false` is dominant (logical 0), `true` is recessive
/// (logical 1).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitStream(Vec<bool>);

impl BitStream {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn with_capacity(n: usize) -> Self {
        Self(Vec::with_capacity(n))
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u64, width: usize) {
        for shift in (0..width).rev() {
            self.0.push((value >> shift) & 1 == 1);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn into_inner(self) -> Vec<bool> {
        self.0
    }

    /// Count of dominant (logical 0) bits.
    pub fn dominant_count(&self) -> usize {
        self.0.iter().filter(|b| !**b).count()
    }

    /// Longest run of identical consecutive bits.
    pub fn longest_run(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        let mut prev = None;
        for &b in &self.0 {
            if Some(b) == prev {
                run += 1;
            } else {
                run = 1;
                prev = Some(b);
            }
            best = best.max(run);
        }
        best
    }
}

impl From<Vec<bool>> for BitStream {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl std::ops::Index<usize> for BitStream {
    type Output = bool;
    fn index(&self, i: usize) -> &bool {
        &self.0[i]
    }
}

/// Parses strings of `0`/`1`; whitespace and `_` are ignored.
impl FromStr for BitStream {
    type Err = CanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CanError::InvalidFrame(format!("bad bit character {other:?}"))),
            })
            .collect()
    }
}

impl fmt::Display for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Inserts the complement after every run of five identical bits. The
/// inserted bit starts the next run.
pub fn stuff_bits(bits: &BitStream) -> BitStream {
    let mut out = BitStream::with_capacity(bits.len() + bits.len() / 4 + 1);
    let mut run = 0;
    let mut prev = None;
    for b in bits.iter() {
        if Some(b) == prev {
            run += 1;
        } else {
            prev = Some(b);
            run = 1;
        }
        out.push(b);
        if run == STUFF_RUN {
            out.push(!b);
            prev = Some(!b);
            run = 1;
        }
    }
    out
}

/// Removes stuff bits. Fails on six identical consecutive bits.
pub fn unstuff_bits(bits: &BitStream) -> Result<BitStream, CanError> {
    let mut destuffer = Destuffer::new(bits.as_slice());
    let mut out = BitStream::with_capacity(bits.len());
    while let Some(b) = destuffer.next_bit()? {
        out.push(b);
    }
    Ok(out)
}

/// Incremental destuffer, shared with frame decoding where the stuffed region
/// length is only known after the DLC has been read.
pub(crate) struct Destuffer<'a> {
    bits: &'a [bool],
    pos: usize,
    run: usize,
    prev: Option<bool>,
}

impl<'a> Destuffer<'a> {
    pub(crate) fn new(bits: &'a [bool]) -> Self {
        Self {
            bits,
            pos: 0,
            run: 0,
            prev: None,
        }
    }

    /// Position in the raw (stuffed) stream.
    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    /// Next data bit, or `None` at end of input.
    pub(crate) fn next_bit(&mut self) -> Result<Option<bool>, CanError> {
        let Some(&b) = self.bits.get(self.pos) else {
            return Ok(None);
        };
        self.pos += 1;
        if Some(b) == self.prev {
            self.run += 1;
        } else {
            self.prev = Some(b);
            self.run = 1;
        }
        if self.run == STUFF_RUN {
            // Consume the stuff bit, which must be the complement.
            if let Some(&s) = self.bits.get(self.pos) {
                if s == b {
                    return Err(CanError::StuffViolation(self.pos));
                }
                self.pos += 1;
                self.prev = Some(s);
                self.run = 1;
            }
        }
        Ok(Some(b))
    }
}
