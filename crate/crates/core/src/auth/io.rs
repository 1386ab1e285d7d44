//! Verdict log: CSV `t,id,claimed,p_claimed,p_others,decision`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AuthError, AuthVerdict, Decision};
use crate::can::log::format_time;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub t: String,
    pub id: String,
    pub claimed: String,
    pub p_claimed: String,
    pub p_others: String,
    pub decision: Decision,
}

pub fn write_verdicts<W: Write>(out: W, verdicts: &[AuthVerdict]) -> Result<(), AuthError> {
    let mut w = csv::Writer::from_writer(out);
    for v in verdicts {
        w.serialize(VerdictRecord {
            t: format_time(v.t),
            id: format!("{:03X}", v.id),
            claimed: v.claimed.clone(),
            p_claimed: format!("{:.6}", v.p_claimed),
            p_others: format!("{:.6}", v.p_others),
            decision: v.decision,
        })
        .map_err(|e| AuthError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a verdict log; `score` is recomputed as `p_claimed - p_others`.
pub fn read_verdicts<R: Read>(input: R) -> Result<Vec<AuthVerdict>, AuthError> {
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(input).deserialize::<VerdictRecord>() {
        let rec = rec.map_err(|e| AuthError::Format(format!("verdicts: {e}")))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| AuthError::Format(format!("verdicts: bad number {s:?}")))
        };
        let p_claimed = num(&rec.p_claimed)?;
        let p_others = num(&rec.p_others)?;
        out.push(AuthVerdict {
            t: num(&rec.t)?,
            id: u16::from_str_radix(&rec.id, 16)
                .map_err(|_| AuthError::Format(format!("verdicts: bad id {:?}", rec.id)))?,
            claimed: rec.claimed,
            p_claimed,
            p_others,
            score: p_claimed - p_others,
            decision: rec.decision,
        });
    }
    Ok(out)
}
