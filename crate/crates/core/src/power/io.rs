//! Trace files: a `# ecu=<name> rate_hz=<r> t0=<s>` header, then one mW
//! sample per line. Label files: CSV `ecu,t_start,t_end,label`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Label, LabeledWindow, PowerError, PowerTrace};
use crate::can::log::format_time;

pub fn write_trace<W: Write>(out: W, trace: &PowerTrace) -> Result<(), PowerError> {
    let mut w = BufWriter::new(out);
    writeln!(
        w,
        "# ecu={} rate_hz={} t0={}",
        trace.ecu,
        trace.sample_rate_hz,
        format_time(trace.t0)
    )?;
    for s in &trace.samples {
        writeln!(w, "{s:.4}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<PowerTrace, PowerError> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| PowerError::Format("empty trace file".into()))??;
    let rest = header
        .strip_prefix('#')
        .ok_or_else(|| PowerError::Format(format!("bad header {header:?}")))?;
    let (mut ecu, mut rate, mut t0) = (None, None, None);
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| PowerError::Format(format!("bad header field {field:?}")))?;
        let num = || {
            v.parse::<f64>()
                .map_err(|_| PowerError::Format(format!("bad number in {field:?}")))
        };
        match k {
            "ecu" => ecu = Some(v.to_string()),
            "rate_hz" => rate = Some(num()?),
            "t0" => t0 = Some(num()?),
            _ => return Err(PowerError::Format(format!("unknown header key {k:?}"))),
        }
    }
    let (Some(ecu), Some(sample_rate_hz), Some(t0)) = (ecu, rate, t0) else {
        return Err(PowerError::Format("header needs ecu, rate_hz and t0".into()));
    };
    if !(sample_rate_hz > 0.0) {
        return Err(PowerError::Format(format!("rate_hz {sample_rate_hz}")));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| PowerError::Format(format!("line {}: {line:?}", i + 2)))?;
        if !v.is_finite() {
            return Err(PowerError::Format(format!("line {}: non-finite sample", i + 2)));
        }
        samples.push(v);
    }
    Ok(PowerTrace {
        ecu,
        sample_rate_hz,
        t0,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub ecu: String,
    pub t_start: f64,
    pub t_end: f64,
    pub label: Label,
}

impl From<&LabeledWindow> for LabelRecord {
    fn from(w: &LabeledWindow) -> Self {
        Self {
            ecu: w.ecu.clone(),
            t_start: w.t_start,
            t_end: w.t_end,
            label: w.label,
        }
    }
}

pub fn write_labels<W: Write>(out: W, windows: &[LabeledWindow]) -> Result<(), PowerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ecu", "t_start", "t_end", "label"])
        .map_err(|e| PowerError::Format(e.to_string()))?;
    for win in windows {
        let label = match win.label {
            Label::Transmitting => "transmitting",
            Label::Idle => "idle",
        };
        w.write_record([
            win.ecu.as_str(),
            &format_time(win.t_start),
            &format_time(win.t_end),
            label,
        ])
        .map_err(|e| PowerError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<LabelRecord>, PowerError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| PowerError::Format(format!("labels: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_file_round_trip() {
        let tr = PowerTrace {
            ecu: "ECM".into(),
            sample_rate_hz: 100_000.0,
            t0: 0.0,
            samples: vec![500.25, 512.0, 499.9999],
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# ecu=ECM rate_hz=100000 t0=0.000000000\n500.2500\n512.0000\n499.9999\n"
        );
        assert_eq!(read_trace(&buf[..]).unwrap(), tr);
    }

    #[test]
    fn malformed_trace_rejected() {
        assert!(read_trace("".as_bytes()).is_err());
        assert!(read_trace("# ecu=A rate_hz=10\n1\n".as_bytes()).is_err());
        assert!(read_trace("# ecu=A rate_hz=10 t0=0\nx\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let w = LabeledWindow {
            ecu: "A".into(),
            t_start: 0.0,
            t_end: 0.0003,
            label: Label::Transmitting,
            frame_ref: Some(3),
            samples: 0..30,
        };
        let mut buf = Vec::new();
        write_labels(&mut buf, std::slice::from_ref(&w)).unwrap();
        let back = read_labels(&buf[..]).unwrap();
        assert_eq!(back, vec![LabelRecord::from(&w)]);
    }
}
