mod common;

use canlens::can::{read_frame_log, write_frame_log};
use canlens::power::{label_windows, read_labels, read_trace, write_labels, write_trace, Label};
use canlens::sim::{read_timeline, spans_by_ecu, write_timeline};
use common::{impersonation, reference_with, ATTACK_START};

fn log_bytes(s: &common::Scenario) -> Vec<u8> {
    let mut out = Vec::new();
    write_frame_log(&mut out, &s.output.log).unwrap();
    out
}

#[test]
fn runs_are_reproducible() {
    let a = reference_with(Some(impersonation("BCM", 0x0B0, 20.0)), 8.0, 7);
    let b = reference_with(Some(impersonation("BCM", 0x0B0, 20.0)), 8.0, 7);
    assert_eq!(log_bytes(&a), log_bytes(&b));
    assert_eq!(a.traces, b.traces);
    let c = reference_with(Some(impersonation("BCM", 0x0B0, 20.0)), 8.0, 8);
    assert_ne!(log_bytes(&a), log_bytes(&c));
}

#[test]
fn spoofed_frames_come_from_the_attacker_after_start() {
    let s = reference_with(Some(impersonation("BCM", 0x0B0, 20.0)), 8.0, 3);
    let spoofed: Vec<_> = s.output.log.iter().filter(|r| r.spoofed).collect();
    assert!(!spoofed.is_empty());
    for r in &spoofed {
        assert_eq!(r.sender, "BCM");
        assert_eq!(r.frame.id(), 0x0B0);
        assert!(r.t() >= ATTACK_START);
    }
    assert_eq!(s.output.summary.spoofed_transmitted, spoofed.len());
    assert!(s.output.log.windows(2).all(|w| w[0].t() <= w[1].t()));
}

#[test]
fn bus_transmissions_never_overlap() {
    let s = reference_with(None, 5.0, 11);
    let mut spans: Vec<(f64, f64)> = s.spans().into_values().flatten().collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in spans.windows(2) {
        assert!(w[0].1 <= w[1].0 + 1e-12, "{:?} overlaps {:?}", w[0], w[1]);
    }
}

/// Transmitting-window count from interval arithmetic alone.
fn oracle_count(spans: &[(f64, f64)], n_windows: usize, w: f64, threshold: f64) -> usize {
    (0..n_windows)
        .filter(|&k| {
            let (lo, hi) = (k as f64 * w, (k + 1) as f64 * w);
            let overlap: f64 = spans.iter().map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0)).sum();
            overlap >= threshold * w
        })
        .count()
}

#[test]
fn window_labels_match_interval_oracle() {
    let s = reference_with(None, 60.0, 42);
    let window_s = 200e-6;
    for (ecu, trace) in &s.traces {
        let spans = s.output.timeline.spans(ecu);
        let windows = label_windows(trace, &spans, window_s, 0.5).unwrap();
        let counted = windows.iter().filter(|w| w.label == Label::Transmitting).count();
        assert_eq!(counted, oracle_count(&spans, windows.len(), window_s, 0.5), "{ecu}");
        assert!(counted > 0, "{ecu}");
    }
}

#[test]
fn files_round_trip() {
    let s = reference_with(Some(impersonation("BCM", 0x0B0, 20.0)), 6.0, 5);
    let bytes = log_bytes(&s);
    let log = read_frame_log(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_frame_log(&mut again, &log).unwrap();
    assert_eq!(bytes, again);

    let records = s.output.timeline.records();
    let mut buf = Vec::new();
    write_timeline(&mut buf, &records).unwrap();
    let back = read_timeline(buf.as_slice()).unwrap();
    // Times are written with nanosecond resolution.
    let (read, orig) = (spans_by_ecu(&back), s.spans());
    assert!(read.keys().eq(orig.keys()));
    for (a, b) in read.values().flatten().zip(orig.values().flatten()) {
        assert!((a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-9);
    }
    assert_eq!(read.values().flatten().count(), orig.values().flatten().count());

    let trace = &s.traces["ECM"];
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).unwrap();
    // Samples are written with four decimals; a second write is byte-stable.
    let read = read_trace(buf.as_slice()).unwrap();
    assert_eq!(read.samples.len(), trace.samples.len());
    assert!(read.samples.iter().zip(&trace.samples).all(|(a, b)| (a - b).abs() <= 5e-5));
    let mut again = Vec::new();
    write_trace(&mut again, &read).unwrap();
    assert_eq!(buf, again);

    let windows = label_windows(trace, &s.output.timeline.spans("ECM"), 160e-6, 0.5).unwrap();
    let mut buf = Vec::new();
    write_labels(&mut buf, &windows).unwrap();
    let labels = read_labels(buf.as_slice()).unwrap();
    assert_eq!(labels.len(), windows.len());
    assert!(labels.iter().zip(&windows).all(|(l, w)| l.label == w.label));
}
