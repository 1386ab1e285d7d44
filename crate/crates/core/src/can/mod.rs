//! Bit-level CAN 2.0A data frames: CRC-15, bit stuffing, serialization and
//! priority arbitration.

mod bits;
mod crc;
mod frame;
pub mod log;

pub use bits::{stuff_bits, unstuff_bits, BitStream};
pub use crc::{crc15, CRC15_POLY};
pub use frame::{
    arbitrate, deserialize_frame, serialize_frame, stuffed_len, unstuffed_len, CanFrame, MAX_DLC,
    MAX_STANDARD_ID,
};
pub use log::{read_frame_log, write_frame_log, FrameRecord};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanError {
    #[error("empty bitstream")]
    EmptyBitstream,
    #[error("stuff violation at bit {0}")]
    StuffViolation(usize),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("crc error: computed {computed:#06x}, received {received:#06x}")]
    Crc { computed: u16, received: u16 },
    #[error("truncated")]
    Truncated,
    #[error("form error: {0}")]
    Form(&'static str),
    #[error("arbitration conflict on id {0:#05x}")]
    ArbitrationConflict(u16),
    #[error("no contenders for arbitration")]
    NoContenders,
    #[error("frame log: {0}")]
    Log(String),
}
