use super::{BitStream, CanError};

/// CAN CRC-15 generator x^15 + x^14 + x^10 + x^8 + x^7 + x^4 + x^3 + 1, with
/// the x^15 term implicit.
pub const CRC15_POLY: u16 = 0x4599;

/// Bit-serial CRC-15 over `bits` with a zero initial register.
pub fn crc15(bits: &BitStream) -> Result<u16, CanError> {
    if bits.is_empty() {
        return Err(CanError::EmptyBitstream);
    }
    Ok(crc15_raw(bits.as_slice()))
}

pub(crate) fn crc15_raw(bits: &[bool]) -> u16 {
    let mut reg: u16 = 0;
    for &b in bits {
        let feedback = b ^ (reg & 0x4000 != 0);
        reg = (reg << 1) & 0x7FFF;
        if feedback {
            reg ^= CRC15_POLY;
        }
    }
    reg
}
