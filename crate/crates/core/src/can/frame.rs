use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::bits::{stuff_bits, Destuffer};
use super::crc::crc15_raw;
use super::{BitStream, CanError};

pub const MAX_STANDARD_ID: u16 = 0x7FF;
pub const MAX_DLC: u8 = 8;

const ID_BITS: usize = 11;
const DLC_BITS: usize = 4;
const CRC_BITS: usize = 15;
/// SOF + ID + RTR + IDE + r0 + DLC.
const HEADER_BITS: usize = 1 + ID_BITS + 3 + DLC_BITS;
/// CRC delimiter + ACK slot + ACK delimiter + EOF.
const TRAILER_BITS: usize = 1 + 1 + 1 + 7;

/// A CAN 2.0A data frame. Construction enforces the 11-bit id and 0..=8 byte
/// payload limits; `dlc` always equals the payload length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct CanFrame {
    id: u16,
    payload: Vec<u8>,
    timestamp: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    id: u16,
    payload: Vec<u8>,
    timestamp: f64,
}

impl TryFrom<RawFrame> for CanFrame {
    type Error = CanError;
    fn try_from(raw: RawFrame) -> Result<Self, CanError> {
        CanFrame::new(raw.id, raw.payload, raw.timestamp)
    }
}

impl From<CanFrame> for RawFrame {
    fn from(f: CanFrame) -> Self {
        RawFrame {
            id: f.id,
            payload: f.payload,
            timestamp: f.timestamp,
        }
    }
}

impl CanFrame {
    pub fn new(id: u16, payload: impl Into<Vec<u8>>, timestamp: f64) -> Result<Self, CanError> {
        let payload = payload.into();
        if id > MAX_STANDARD_ID {
            return Err(CanError::InvalidFrame(format!(
                "id {id:#x} exceeds 11 bits (extended ids are not supported)"
            )));
        }
        if payload.len() > MAX_DLC as usize {
            return Err(CanError::InvalidFrame(format!(
                "payload of {} bytes exceeds 8",
                payload.len()
            )));
        }
        if !(timestamp.is_finite() && timestamp >= 0.0) {
            return Err(CanError::InvalidFrame(format!("timestamp {timestamp}")));
        }
        Ok(Self {
            id,
            payload,
            timestamp,
        })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.payload.len() as u8
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Result<Self, CanError> {
        if !(timestamp.is_finite() && timestamp >= 0.0) {
            return Err(CanError::InvalidFrame(format!("timestamp {timestamp}")));
        }
        self.timestamp = timestamp;
        Ok(self)
    }
}

/// Unstuffed length of a serialized data frame: 44 + 8 * dlc.
pub fn unstuffed_len(dlc: u8) -> usize {
    HEADER_BITS + 8 * dlc as usize + CRC_BITS + TRAILER_BITS
}

/// Bits from SOF through the end of the CRC sequence, before stuffing.
fn stuffable_region(frame: &CanFrame) -> BitStream {
    let mut bits = BitStream::with_capacity(HEADER_BITS + 64 + CRC_BITS);
    bits.push(false); // SOF
    bits.push_uint(frame.id as u64, ID_BITS);
    bits.push(false); // RTR: data frame
    bits.push(false); // IDE: standard id
    bits.push(false); // r0
    bits.push_uint(frame.dlc() as u64, DLC_BITS);
    for &byte in &frame.payload {
        bits.push_uint(byte as u64, 8);
    }
    let crc = crc15_raw(bits.as_slice());
    bits.push_uint(crc as u64, CRC_BITS);
    bits
}

/// Serializes a frame to its on-wire bit sequence. Stuffing covers SOF
/// through the CRC sequence; the ACK slot is emitted recessive as the
/// transmitter drives it.
pub fn serialize_frame(frame: &CanFrame) -> Result<BitStream, CanError> {
    // Fields are private, but a deserialized serde value could still be odd.
    if frame.id > MAX_STANDARD_ID || frame.payload.len() > MAX_DLC as usize {
        return Err(CanError::InvalidFrame("invariants violated".into()));
    }
    let mut out = stuff_bits(&stuffable_region(frame));
    for _ in 0..TRAILER_BITS {
        out.push(true);
    }
    Ok(out)
}

/// Number of bits the frame occupies on the wire, stuff bits included.
pub fn stuffed_len(frame: &CanFrame) -> usize {
    stuff_bits(&stuffable_region(frame)).len() + TRAILER_BITS
}

/// Decodes a serialized frame and verifies its CRC. The returned frame carries
/// a zero timestamp; see [`deserialize_frame_at`].
pub fn deserialize_frame(bits: &BitStream) -> Result<CanFrame, CanError> {
    deserialize_frame_at(bits, 0.0)
}

/// Decodes a serialized frame observed at `timestamp`.
pub fn deserialize_frame_at(bits: &BitStream, timestamp: f64) -> Result<CanFrame, CanError> {
    let mut d = Destuffer::new(bits.as_slice());
    let mut take = |n: usize| -> Result<u64, CanError> {
        let mut v = 0u64;
        for _ in 0..n {
            let b = d.next_bit()?.ok_or(CanError::Truncated)?;
            v = (v << 1) | b as u64;
        }
        Ok(v)
    };
    let mut region = BitStream::with_capacity(HEADER_BITS + 64);

    let sof = take(1)?;
    if sof != 0 {
        return Err(CanError::Form("SOF must be dominant"));
    }
    let id = take(ID_BITS)? as u16;
    let rtr = take(1)?;
    let ide = take(1)?;
    let r0 = take(1)?;
    let dlc = take(DLC_BITS)? as u8;
    if rtr != 0 {
        return Err(CanError::Form("remote frames are not supported"));
    }
    if ide != 0 {
        return Err(CanError::Form("extended frames are not supported"));
    }
    if dlc > MAX_DLC {
        return Err(CanError::Form("dlc above 8"));
    }
    let mut payload = Vec::with_capacity(dlc as usize);
    for _ in 0..dlc {
        payload.push(take(8)? as u8);
    }
    let received = take(CRC_BITS)? as u16;

    region.push(false);
    region.push_uint(id as u64, ID_BITS);
    // r0 is accepted at either level but is still covered by the CRC.
    region.push_uint(0, 2);
    region.push(r0 != 0);
    region.push_uint(dlc as u64, DLC_BITS);
    for &byte in &payload {
        region.push_uint(byte as u64, 8);
    }
    let computed = crc15_raw(region.as_slice());
    if computed != received {
        return Err(CanError::Crc { computed, received });
    }

    let tail = &bits.as_slice()[d.position()..];
    if tail.len() < TRAILER_BITS {
        return Err(CanError::Truncated);
    }
    if !tail[0] {
        return Err(CanError::Form("CRC delimiter must be recessive"));
    }
    // tail[1] is the ACK slot: either level is acceptable on receive.
    if !tail[2] {
        return Err(CanError::Form("ACK delimiter must be recessive"));
    }
    if tail[3..TRAILER_BITS].iter().any(|b| !b) {
        return Err(CanError::Form("EOF must be recessive"));
    }
    CanFrame::new(id, payload, timestamp)
}

/// Resolves bitwise arbitration: the numerically lowest id wins because its
/// first differing bit is dominant. Two contenders sharing an id is a fault.
pub fn arbitrate(contenders: &[CanFrame]) -> Result<&CanFrame, CanError> {
    let mut seen = HashSet::with_capacity(contenders.len());
    for f in contenders {
        if !seen.insert(f.id) {
            return Err(CanError::ArbitrationConflict(f.id));
        }
    }
    contenders
        .iter()
        .min_by_key(|f| f.id)
        .ok_or(CanError::NoContenders)
}
