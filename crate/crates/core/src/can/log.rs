//! Frame log: CSV with header `t,id,dlc,payload,sender,spoofed`. `t` is
//! seconds with nanosecond precision, `id` three hex digits, `payload` a hex
//! string of `dlc` bytes.

use std::io::{Read, Write};

use super::{CanError, CanFrame};

pub const FRAME_LOG_HEADER: [&str; 6] = ["t", "id", "dlc", "payload", "sender", "spoofed"];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: CanFrame,
    pub sender: String,
    pub spoofed: bool,
}

impl FrameRecord {
    pub fn t(&self) -> f64 {
        self.frame.timestamp()
    }
}

pub fn format_time(t: f64) -> String {
    format!("{t:.9}")
}

pub fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect()
}

pub fn decode_hex(s: &str) -> Result<Vec<u8>, CanError> {
    if !s.len().is_multiple_of(2) {
        return Err(CanError::Log(format!("odd-length hex string {s:?}")));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| CanError::Log(format!("bad hex {s:?}")))
        })
        .collect()
}

pub fn write_frame_log<W: Write>(out: W, records: &[FrameRecord]) -> Result<(), CanError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CanError::Log(e.to_string());
    w.write_record(FRAME_LOG_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            format_time(r.t()),
            format!("{:03X}", r.frame.id()),
            r.frame.dlc().to_string(),
            encode_hex(r.frame.payload()),
            r.sender.clone(),
            r.spoofed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CanError::Log(e.to_string()))
}

pub fn read_frame_log<R: Read>(input: R) -> Result<Vec<FrameRecord>, CanError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| CanError::Log(e.to_string()))?;
    if headers.iter().ne(FRAME_LOG_HEADER) {
        return Err(CanError::Log(format!("unexpected header {headers:?}")));
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CanError::Log(e.to_string()))?;
        let bad = |what: &str| CanError::Log(format!("record {}: bad {what}", line + 1));
        let t: f64 = row[0].parse().map_err(|_| bad("t"))?;
        let id = u16::from_str_radix(&row[1], 16).map_err(|_| bad("id"))?;
        let dlc: usize = row[2].parse().map_err(|_| bad("dlc"))?;
        let payload = decode_hex(&row[3])?;
        if payload.len() != dlc {
            return Err(bad("dlc/payload length"));
        }
        let spoofed: bool = row[5].parse().map_err(|_| bad("spoofed"))?;
        records.push(FrameRecord {
            frame: CanFrame::new(id, payload, t)?,
            sender: row[4].to_string(),
            spoofed,
        });
    }
    Ok(records)
}
