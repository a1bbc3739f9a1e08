use std::collections::BTreeSet;

use proptest::prelude::*;

use audioleak_core::burst::{detect_bursts, flagged_windows, BurstParams};
use audioleak_core::capture::{ingest, CaptureSource, LocalNetwork};
use audioleak_core::fuzz::{levenshtein, parse_dictionary, select_candidates};
use audioleak_core::model::{
    split_windows, DeviceAddress, DeviceTrace, Direction, DirectionFilter, MacAddr, PacketRecord, Span, Timestamp,
};
use audioleak_core::sim::{controlled_scenario, library_model, simulate, write_pcap_to};
use audioleak_core::stats::{auto_bins, histogram, welch_t_test, DistributionVector, Feature};

fn dev() -> DeviceAddress {
    DeviceAddress::from(MacAddr([2, 0, 0, 0, 0, 9]))
}

fn trace_strategy() -> impl Strategy<Value = DeviceTrace> {
    (
        1u64..120_000_000,
        prop::collection::vec((0u64..1_000_000, 0u32..1500, any::<bool>()), 0..300),
    )
        .prop_map(|(len, raw)| {
            let packets = raw
                .into_iter()
                .map(|(frac, size, out)| PacketRecord {
                    timestamp: Timestamp::from_micros(frac * len / 1_000_000),
                    payload_size: size,
                    device: dev(),
                    direction: if out { Direction::Outbound } else { Direction::Inbound },
                })
                .collect();
            DeviceTrace::from_unsorted(
                dev(),
                packets,
                Span::new(Timestamp::ZERO, Timestamp::from_micros(len)).unwrap(),
            )
            .unwrap()
        })
}

/// Quadratic edit-distance table, kept naive on purpose.
fn dp_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

proptest! {
    #[test]
    fn windows_conserve_bytes(trace in trace_strategy(), w in 0.05f64..20.0, both in any::<bool>()) {
        let filter = if both { DirectionFilter::Both } else { DirectionFilter::Outbound };
        let windows = split_windows(&trace, w, filter).unwrap();
        let expected: u64 = trace
            .packets()
            .iter()
            .filter(|p| filter.accepts(p.direction))
            .map(|p| u64::from(p.payload_size))
            .sum();
        prop_assert_eq!(windows.iter().map(|w| w.byte_total).sum::<u64>(), expected);
        // Windows tile the span without gaps.
        for pair in windows.windows(2) {
            prop_assert_eq!(pair[0].end(), pair[1].start);
        }
        if let (Some(first), Some(last)) = (windows.first(), windows.last()) {
            prop_assert_eq!(first.start, trace.span().start);
            prop_assert!(last.end() >= trace.span().end);
        }
    }

    #[test]
    fn flagged_windows_shrink_with_n(rates in prop::collection::vec(0.0f64..60_000.0, 0..200), n in 1usize..10) {
        let windows: Vec<_> = rates.iter().enumerate().map(|(i, &r)| audioleak_core::model::TimeWindow {
            index: i,
            start: Timestamp::from_micros(i as u64 * 1_000_000),
            duration_us: 1_000_000,
            byte_total: (r / 8.0) as u64,
            rate: r,
        }).collect();
        let at_n = flagged_windows(&windows, 23_000.0, n);
        let at_n1 = flagged_windows(&windows, 23_000.0, n + 1);
        for (a, b) in at_n.iter().zip(&at_n1) {
            prop_assert!(!*b || *a);
        }
    }

    #[test]
    fn raising_threshold_creates_no_events(trace in trace_strategy(), lo in 1_000.0f64..40_000.0, extra in 0.0f64..40_000.0, n in 1usize..6) {
        let low = BurstParams { rate_threshold: lo, consecutive: n, ..BurstParams::default() };
        let high = BurstParams { rate_threshold: lo + extra, ..low };
        let ev_low = detect_bursts(&trace, &low).unwrap();
        let ev_high = detect_bursts(&trace, &high).unwrap();
        for h in &ev_high {
            prop_assert!(ev_low.iter().any(|l| l.start <= h.start && h.end <= l.end), "event {:?} not inside a lower-threshold event", h);
        }
    }

    #[test]
    fn events_at_larger_n_lie_inside_smaller_n(trace in trace_strategy(), n in 1usize..6) {
        let p = BurstParams { rate_threshold: 5_000.0, consecutive: n, ..BurstParams::default() };
        let small = detect_bursts(&trace, &p).unwrap();
        let large = detect_bursts(&trace, &BurstParams { consecutive: n + 1, ..p }).unwrap();
        prop_assert!(large.len() <= small.len());
        for e in &large {
            prop_assert!(small.iter().any(|s| s.start <= e.start && e.end <= s.end));
        }
    }

    #[test]
    fn levenshtein_matches_dp(a in "[A-Z0]{0,12}", b in "[A-Z0]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b), dp_distance(&a, &b));
    }

    #[test]
    fn levenshtein_is_a_metric(a in "[a-d]{0,8}", b in "[a-d]{0,8}", c in "[a-d]{0,8}") {
        let d = levenshtein;
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn welch_is_symmetric(a in prop::collection::vec(0u64..500, 2..40), seed in 0u64..1000) {
        let k = a.len();
        let b: Vec<u64> = (0..k as u64).map(|i| (i * 31 + seed * 7) % 400).collect();
        let edges: Vec<f64> = (0..=k).map(|i| i as f64).collect();
        let va = DistributionVector::new(edges.clone(), a, Feature::PacketSize).unwrap();
        let vb = DistributionVector::new(edges, b, Feature::PacketSize).unwrap();
        let ab = welch_t_test(&va, &vb).unwrap();
        let ba = welch_t_test(&vb, &va).unwrap();
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((ab.t_score + ba.t_score).abs() < 1e-9 || (ab.t_score.is_infinite() && ba.t_score.is_infinite()));
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn histogram_matches_linear_scan(samples in prop::collection::vec(-1e4f64..1e4, 1..400)) {
        let edges = auto_bins(&samples).unwrap();
        let h = histogram(&samples, &edges, Feature::PacketSize).unwrap();
        prop_assert_eq!(h.total(), samples.len() as u64);
        let k = edges.len() - 1;
        let mut expect = vec![0u64; k];
        for &s in &samples {
            // Last bin closed, others half-open.
            let i = (0..k).find(|&i| s >= edges[i] && (s < edges[i + 1] || i == k - 1)).unwrap_or(if s < edges[0] { 0 } else { k - 1 });
            expect[i] += 1;
        }
        prop_assert_eq!(h.counts(), &expect[..]);
    }

    #[test]
    fn candidate_selection_ignores_line_order(seed in any::<u64>(), tol in 0usize..2) {
        let text = audioleak_core::fuzz::FIXTURE_DICT;
        let mut lines: Vec<&str> = text.lines().collect();
        // Deterministic shuffle.
        let mut s = seed | 1;
        for i in (1..lines.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            lines.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let (a, _) = parse_dictionary(text);
        let (b, _) = parse_dictionary(&lines.join("\n"));
        let ca = select_candidates(&a, "alexa", tol).unwrap();
        let cb = select_candidates(&b, "alexa", tol).unwrap();
        prop_assert_eq!(ca, cb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulator_reruns_are_byte_identical(seed in any::<u64>(), interval in 30.0f64..200.0) {
        let model = library_model("EchoDot").unwrap();
        let scenario = controlled_scenario(&model, interval, 4, seed).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_pcap_to(&simulate(&scenario).unwrap(), &mut a).unwrap();
        write_pcap_to(&simulate(&scenario).unwrap(), &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pcap_round_trip_keeps_packets(seed in any::<u64>()) {
        let model = library_model("GoogleHome").unwrap();
        let set = simulate(&controlled_scenario(&model, 60.0, 3, seed).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let mut buf = Vec::new();
        write_pcap_to(&set, &mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        let (traces, report) = ingest(CaptureSource::pcap_file(&path, LocalNetwork::parse("192.168.0.0/16").unwrap())).unwrap();
        prop_assert_eq!(report.dropped, 0);
        let key = |p: &PacketRecord| (p.timestamp, p.payload_size, p.direction);
        for (d, t) in &set.traces {
            let mut want: Vec<_> = t.packets().iter().map(key).collect();
            let mut got: Vec<_> = traces[d].packets().iter().map(key).collect();
            want.sort();
            got.sort();
            prop_assert_eq!(want, got);
        }
    }
}

#[test]
fn tolerance_one_is_a_superset() {
    let dict = audioleak_core::fuzz::fixture_dictionary();
    let zero: BTreeSet<String> = select_candidates(&dict, "alexa", 0)
        .unwrap()
        .into_iter()
        .map(|c| c.word)
        .collect();
    let one: BTreeSet<String> = select_candidates(&dict, "alexa", 1)
        .unwrap()
        .into_iter()
        .map(|c| c.word)
        .collect();
    assert!(zero.is_subset(&one));
    assert!(one.len() > zero.len());
}
