use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::can::BitStream;

/// One transmission by one sender: the exact bits it drove, from SOF to the
/// end of EOF.
#[derive(Debug, Clone, PartialEq)]
pub struct TxInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub bits: BitStream,
    /// Index of the matching event in the bus log.
    pub event: usize,
}

/// Per-sender transmit intervals: the ground truth for transmitting versus
/// idle power states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityTimeline {
    per_ecu: BTreeMap<String, Vec<TxInterval>>,
}

impl ActivityTimeline {
    pub fn new(ecus: impl IntoIterator<Item = String>) -> Self {
        Self {
            per_ecu: ecus.into_iter().map(|e| (e, Vec::new())).collect(),
        }
    }

    pub fn push(&mut self, ecu: &str, interval: TxInterval) {
        self.per_ecu.entry(ecu.to_string()).or_default().push(interval);
    }

    pub fn ecus(&self) -> impl Iterator<Item = &str> {
        self.per_ecu.keys().map(String::as_str)
    }

    pub fn intervals(&self, ecu: &str) -> Option<&[TxInterval]> {
        self.per_ecu.get(ecu).map(Vec::as_slice)
    }

    /// `(t_start, t_end)` pairs for one sender; empty for unknown names.
    pub fn spans(&self, ecu: &str) -> Vec<(f64, f64)> {
        self.intervals(ecu)
            .unwrap_or_default()
            .iter()
            .map(|i| (i.t_start, i.t_end))
            .collect()
    }

    pub fn records(&self) -> Vec<TimelineRecord> {
        let mut out: Vec<TimelineRecord> = self
            .per_ecu
            .iter()
            .flat_map(|(ecu, ivs)| {
                ivs.iter().map(move |i| TimelineRecord {
                    ecu: ecu.clone(),
                    t_start: i.t_start,
                    t_end: i.t_end,
                    nbits: i.bits.len(),
                })
            })
            .collect();
        out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        out
    }
}

/// Row of the timeline file: `ecu,t_start,t_end,nbits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub ecu: String,
    #[serde(serialize_with = "ser_time")]
    pub t_start: f64,
    #[serde(serialize_with = "ser_time")]
    pub t_end: f64,
    pub nbits: usize,
}

fn ser_time<S: serde::Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::can::log::format_time(*t))
}

pub fn write_timeline<W: Write>(out: W, records: &[TimelineRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeline<R: Read>(input: R) -> Result<Vec<TimelineRecord>, SimError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::InvalidConfig(format!("timeline: {e}")))
}

/// Groups timeline rows into per-ECU spans.
pub fn spans_by_ecu(records: &[TimelineRecord]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        out.entry(r.ecu.clone()).or_default().push((r.t_start, r.t_end));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_through_csv() {
        let mut tl = ActivityTimeline::new(["A".to_string(), "B".to_string()]);
        tl.push(
            "B",
            TxInterval {
                t_start: 0.5,
                t_end: 0.5002,
                bits: "0101".parse().unwrap(),
                event: 1,
            },
        );
        tl.push(
            "A",
            TxInterval {
                t_start: 0.1,
                t_end: 0.1002,
                bits: "01".parse().unwrap(),
                event: 0,
            },
        );
        let recs = tl.records();
        assert_eq!(recs[0].ecu, "A");
        let mut buf = Vec::new();
        write_timeline(&mut buf, &recs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("ecu,t_start,t_end,nbits\nA,0.100000000,0.100200000,2\n"));
        let back = read_timeline(&buf[..]).unwrap();
        assert_eq!(back, recs);
        assert_eq!(spans_by_ecu(&back)["B"], vec![(0.5, 0.5002)]);
        assert!(tl.spans("nobody").is_empty());
    }
}
