//! Artificial cells: detector repertoires, pattern encoding and matching,
//! selection-based breeding primitives, hypermutation, lifecycle.
//!
//! A pattern is a fixed-width string of 24 symbols over the hex digits plus
//! `'|'`. The canonical header encoding is
//! `src(5)|sport(4)|dst(5)|dport(4)|proto(2)`, all fields zero-padded hex,
//! protocol as its IANA number. Detectors may additionally contain the
//! wildcard `'?'`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::netsim::{NodeId, Packet, Tick};
use crate::rng::StreamRng;
use crate::secenv::Credential;

/// Fixed pattern width.
pub const PATTERN_LEN: usize = 24;

/// Pattern alphabet: hex digits plus the field separator.
pub const ALPHABET: &[u8; 17] = b"0123456789abcdef|";

/// Wildcard symbol allowed in detectors only.
pub const WILDCARD: u8 = b'?';

/// Default window width for r-contiguous matching.
pub const DEFAULT_R: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("pattern must be exactly {PATTERN_LEN} symbols, got {0}")]
    BadLength(usize),
    #[error("symbol {0:?} is outside the pattern alphabet")]
    BadSymbol(char),
    #[error("pattern is not a parseable header encoding")]
    NotAHeader,
}

/// A fixed-width concrete pattern (no wildcards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern([u8; PATTERN_LEN]);

impl Pattern {
    pub fn from_symbols(sym: &[u8]) -> Result<Self, PatternError> {
        if sym.len() != PATTERN_LEN {
            return Err(PatternError::BadLength(sym.len()));
        }
        for &b in sym {
            if !ALPHABET.contains(&b) {
                return Err(PatternError::BadSymbol(b as char));
            }
        }
        let mut buf = [0u8; PATTERN_LEN];
        buf.copy_from_slice(sym);
        Ok(Self(buf))
    }

    pub fn as_symbols(&self) -> &[u8; PATTERN_LEN] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("alphabet is ascii")
    }
}

impl fmt::Display for Pattern {
    fmt_as_str!();
}

macro_rules! impl_symbol_serde {
    ($ty:ty, $parse:expr) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $parse(s.as_bytes()).map_err(serde::de::Error::custom)
            }
        }
    };
}

macro_rules! fmt_as_str {
    () => {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str(self.as_str())
        }
    };
}
use {fmt_as_str, impl_symbol_serde};

impl_symbol_serde!(Pattern, Pattern::from_symbols);

/// Header fields recovered from a canonical pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderFields {
    pub src_node: NodeId,
    pub src_port: u16,
    pub dst_node: NodeId,
    pub dst_port: u16,
    pub protocol_number: u8,
}

/// Canonical fixed-width serialization of a packet header.
pub fn encode_header_pattern(packet: &Packet) -> Pattern {
    let s = format!(
        "{:05x}|{:04x}|{:05x}|{:04x}|{:02x}",
        packet.src.node.0,
        packet.src.port,
        packet.dst.node.0,
        packet.dst.port,
        packet.protocol.wire_number(),
    );
    debug_assert_eq!(s.len(), PATTERN_LEN);
    Pattern::from_symbols(s.as_bytes()).expect("canonical encoding is alphabet-clean")
}

/// Recovers the header fields from a canonical pattern.
pub fn parse_header_pattern(p: &Pattern) -> Result<HeaderFields, PatternError> {
    let s = p.as_str();
    let bytes = s.as_bytes();
    for &i in &[5usize, 10, 16, 21] {
        if bytes[i] != b'|' {
            return Err(PatternError::NotAHeader);
        }
    }
    let field = |range: std::ops::Range<usize>| {
        u32::from_str_radix(&s[range], 16).map_err(|_| PatternError::NotAHeader)
    };
    Ok(HeaderFields {
        src_node: NodeId(field(0..5)?),
        src_port: field(6..10)? as u16,
        dst_node: NodeId(field(11..16)?),
        dst_port: field(17..21)? as u16,
        protocol_number: field(22..24)? as u8,
    })
}

/// Pattern-shaped windows extracted from a payload for content scanning.
///
/// Every sliding window of `PATTERN_LEN` consecutive payload bytes that lie
/// entirely within the pattern alphabet yields one pattern. Encrypted
/// payloads are opaque in transit; the engine only calls this at the
/// endpoints of such connections.
pub fn payload_patterns(payload: &[u8]) -> Vec<Pattern> {
    let mut out = Vec::new();
    if payload.len() < PATTERN_LEN {
        return out;
    }
    for start in 0..=(payload.len() - PATTERN_LEN) {
        let window = &payload[start..start + PATTERN_LEN];
        if let Ok(p) = Pattern::from_symbols(window) {
            out.push(p);
        }
        if out.len() >= 256 {
            break; // payloads are small in practice; bound the worst case
        }
    }
    out
}

/// All patterns a packet exposes at a given vantage point.
pub fn encode_patterns(packet: &Packet, at_endpoint: bool) -> Vec<Pattern> {
    let mut out = vec![encode_header_pattern(packet)];
    if !packet.encrypted || at_endpoint {
        out.extend(payload_patterns(&packet.payload));
    }
    out
}

/// Matching rule of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    Exact,
    RContiguous,
}

/// Classification a detector reports on a match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DetectorLabel {
    Intrusion(String),
    Anomaly,
}

impl DetectorLabel {
    pub fn as_str(&self) -> &str {
        match self {
            DetectorLabel::Intrusion(s) => s,
            DetectorLabel::Anomaly => "Anomaly",
        }
    }

    pub fn is_anomaly(&self) -> bool {
        matches!(self, DetectorLabel::Anomaly)
    }
}

impl Serialize for DetectorLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DetectorLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "Anomaly" {
            DetectorLabel::Anomaly
        } else {
            DetectorLabel::Intrusion(s)
        })
    }
}

/// Detector-side pattern: fixed width, alphabet plus wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorPattern([u8; PATTERN_LEN]);

impl DetectorPattern {
    pub fn from_symbols(sym: &[u8]) -> Result<Self, PatternError> {
        if sym.len() != PATTERN_LEN {
            return Err(PatternError::BadLength(sym.len()));
        }
        for &b in sym {
            if b != WILDCARD && !ALPHABET.contains(&b) {
                return Err(PatternError::BadSymbol(b as char));
            }
        }
        let mut buf = [0u8; PATTERN_LEN];
        buf.copy_from_slice(sym);
        Ok(Self(buf))
    }

    pub fn as_symbols(&self) -> &[u8; PATTERN_LEN] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("alphabet is ascii")
    }
}

impl From<Pattern> for DetectorPattern {
    fn from(p: Pattern) -> Self {
        Self(*p.as_symbols())
    }
}

impl fmt::Display for DetectorPattern {
    fmt_as_str!();
}

impl_symbol_serde!(DetectorPattern, DetectorPattern::from_symbols);

/// A pattern plus matching rule identifying an intrusion class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detector {
    pub pattern: DetectorPattern,
    pub rule: MatchRule,
    pub r: usize,
    pub label: DetectorLabel,
}

impl Detector {
    pub fn exact(pattern: Pattern, label: DetectorLabel) -> Self {
        Self {
            pattern: pattern.into(),
            rule: MatchRule::Exact,
            r: 0,
            label,
        }
    }

    pub fn r_contiguous(pattern: DetectorPattern, r: usize, label: DetectorLabel) -> Self {
        Self {
            pattern,
            rule: MatchRule::RContiguous,
            r,
            label,
        }
    }
}

/// Positionwise symbol agreement, `'?'` in the detector matching anything.
fn symbol_matches(det: u8, pat: u8) -> bool {
    det == WILDCARD || det == pat
}

/// Exact rule over raw symbol slices; lengths must agree.
pub fn match_exact(detector: &[u8], pattern: &[u8]) -> bool {
    assert_eq!(detector.len(), pattern.len(), "pattern length mismatch");
    detector
        .iter()
        .zip(pattern)
        .all(|(&d, &p)| symbol_matches(d, p))
}

/// r-contiguous rule over raw symbol slices: true iff some window of `r`
/// consecutive positions all match. Single left-to-right streak scan.
pub fn match_r_contiguous(detector: &[u8], pattern: &[u8], r: usize) -> bool {
    assert_eq!(detector.len(), pattern.len(), "pattern length mismatch");
    if r == 0 || r > detector.len() {
        return false;
    }
    let mut streak = 0usize;
    for (&d, &p) in detector.iter().zip(pattern) {
        if symbol_matches(d, p) {
            streak += 1;
            if streak >= r {
                return true;
            }
        } else {
            streak = 0;
        }
    }
    false
}

/// Applies a detector to a concrete pattern.
pub fn matches(detector: &Detector, pattern: &Pattern) -> bool {
    match detector.rule {
        MatchRule::Exact => match_exact(detector.pattern.as_symbols(), pattern.as_symbols()),
        MatchRule::RContiguous => match_r_contiguous(
            detector.pattern.as_symbols(),
            pattern.as_symbols(),
            detector.r,
        ),
    }
}

/// Patterns observed in attack-free traffic; detectors must not match them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SelfSet {
    pub patterns: Vec<Pattern>,
}

impl SelfSet {
    pub fn contains_match(&self, detector: &Detector) -> bool {
        self.patterns.iter().any(|p| matches(detector, p))
    }
}

/// Keeps exactly the candidates that match no member of the self set.
pub fn negative_selection(candidates: Vec<Detector>, selfset: &SelfSet) -> Vec<Detector> {
    candidates
        .into_iter()
        .filter(|d| !selfset.contains_match(d))
        .collect()
}

/// Keeps detectors matching at least one known intrusion pattern and labels
/// each with the first matching intrusion (label order).
pub fn positive_selection(
    repertoire: Vec<Detector>,
    known_intrusions: &BTreeMap<String, Pattern>,
) -> Vec<Detector> {
    repertoire
        .into_iter()
        .filter_map(|mut d| {
            let hit = known_intrusions
                .iter()
                .find(|(_, pattern)| matches(&d, pattern));
            hit.map(|(label, _)| {
                d.label = DetectorLabel::Intrusion(label.clone());
                d
            })
        })
        .collect()
}

/// Resamples each symbol with probability `rate`, drawing uniformly from the
/// detector alphabet minus the current symbol, so `rate` is the per-position
/// change probability. Rule and `r` are preserved.
pub fn hypermutate(detector: &Detector, rate: f64, rng: &mut StreamRng) -> Detector {
    let mut out = detector.clone();
    let mut sym = *detector.pattern.as_symbols();
    for s in sym.iter_mut() {
        if rng.gen::<f64>() < rate {
            *s = resample_excluding(*s, true, rng);
        }
    }
    out.pattern = DetectorPattern::from_symbols(&sym).expect("alphabet preserved");
    out
}

/// Pattern-space mutation (no wildcards), used for metamorphic payloads.
pub fn mutate_pattern(pattern: &Pattern, rate: f64, rng: &mut StreamRng) -> Pattern {
    let mut sym = *pattern.as_symbols();
    for s in sym.iter_mut() {
        if rng.gen::<f64>() < rate {
            *s = resample_excluding(*s, false, rng);
        }
    }
    Pattern::from_symbols(&sym).expect("alphabet preserved")
}

fn resample_excluding(current: u8, with_wildcard: bool, rng: &mut StreamRng) -> u8 {
    let mut pool: Vec<u8> = ALPHABET.to_vec();
    if with_wildcard {
        pool.push(WILDCARD);
    }
    pool.retain(|&b| b != current);
    pool[rng.gen_range(0..pool.len())]
}

/// Similarity of two equal-length patterns: `1 - hamming/len`.
pub fn similarity(a: &Pattern, b: &Pattern) -> f64 {
    let (a, b) = (a.as_symbols(), b.as_symbols());
    let differing = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
    1.0 - differing as f64 / PATTERN_LEN as f64
}

/// Number of clones a stimulus of the given strength produces.
pub fn clone_count(stimulus: f64, budget: usize) -> usize {
    assert!(stimulus > 0.0, "clonal expansion requires a detection");
    budget.min((stimulus * budget as f64).ceil() as usize)
}

/// Cell identifier; assigned in birth order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CellId(pub u64);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell-{}", self.0)
    }
}

/// Task class of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    PacketChecker,
    NodeChecker,
    LogAnalyzer,
    UpdateCell,
    StatusCollector,
    DisinfectionCell,
    ConnectorCell,
}

impl CellKind {
    pub fn security_value(self) -> f64 {
        match self {
            CellKind::PacketChecker => 0.30,
            CellKind::NodeChecker => 0.25,
            CellKind::LogAnalyzer => 0.20,
            CellKind::UpdateCell => 0.15,
            CellKind::StatusCollector => 0.15,
            CellKind::DisinfectionCell => 0.25,
            CellKind::ConnectorCell => 0.10,
        }
    }
}

/// Outcome of a per-tick lifecycle step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleStep {
    Alive,
    Expired,
}

/// A lightweight mobile agent carrying detectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtificialCell {
    pub id: CellId,
    pub kind: CellKind,
    pub detectors: Vec<Detector>,
    pub ttl: u64,
    pub location: NodeId,
    pub security_value: f64,
    /// Decayed accumulator of local alert activity.
    pub danger: f64,
    /// Similarity matching toggled by danger-level adaptation.
    pub similarity_active: bool,
    pub cred: Credential,
    /// CNTS rule version this cell was bred with.
    pub rule_version: u64,
    /// Intrusion labels the cell can recognize in node state.
    pub known_labels: Vec<String>,
    /// Suppress the next clonal expansion until this tick.
    pub expansion_ready_at: Tick,
    /// Pinned destination (attraction or dispatch); overrides patrol.
    pub pinned_target: Option<NodeId>,
    /// Per-label detection counts, archived by the CNTS on expiry.
    pub detection_stats: BTreeMap<String, u64>,
}

impl ArtificialCell {
    /// Decrements ttl; at zero the cell expires this tick.
    pub fn lifecycle_step(&mut self) -> LifecycleStep {
        debug_assert!(self.ttl > 0, "expired cells must be removed");
        self.ttl -= 1;
        if self.ttl == 0 {
            LifecycleStep::Expired
        } else {
            LifecycleStep::Alive
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{Endpoint, Protocol};
    use crate::rng::derive_stream;

    fn packet(src: u32, sport: u16, dst: u32, dport: u16, proto: Protocol) -> Packet {
        Packet {
            src: Endpoint {
                node: NodeId(src),
                port: sport,
            },
            dst: Endpoint {
                node: NodeId(dst),
                port: dport,
            },
            protocol: proto,
            payload: Vec::new(),
            encrypted: false,
            injected_at: 0,
        }
    }

    #[test]
    fn header_encoding_is_canonical_and_parses_back() {
        let p = packet(1, 4242, 2, 80, Protocol::Tcp);
        let pat = encode_header_pattern(&p);
        assert_eq!(pat.as_str(), "00001|1092|00002|0050|06");
        assert_eq!(pat.as_str().len(), PATTERN_LEN);
        let fields = parse_header_pattern(&pat).unwrap();
        assert_eq!(fields.src_node, NodeId(1));
        assert_eq!(fields.src_port, 4242);
        assert_eq!(fields.dst_node, NodeId(2));
        assert_eq!(fields.dst_port, 80);
        assert_eq!(fields.protocol_number, 6);
        // determinism
        assert_eq!(pat, encode_header_pattern(&p));
    }

    #[test]
    fn encrypted_payload_is_opaque_in_transit() {
        let sig = Pattern::from_symbols(b"0123456789abcdef01234567").unwrap();
        let mut p = packet(1, 4242, 2, 80, Protocol::Tcp);
        p.payload = sig.as_str().as_bytes().to_vec();
        p.encrypted = true;
        assert_eq!(encode_patterns(&p, false).len(), 1); // header only
        let endpoint_view = encode_patterns(&p, true);
        assert_eq!(endpoint_view.len(), 2);
        assert_eq!(endpoint_view[1], sig);
        p.encrypted = false;
        assert_eq!(encode_patterns(&p, false).len(), 2);
    }

    #[test]
    fn exact_match_identity_and_wildcards() {
        assert!(match_exact(b"abc|1", b"abc|1"));
        assert!(match_exact(b"a?c?1", b"abc|1"));
        assert!(!match_exact(b"abc|2", b"abc|1"));
    }

    /// Brute-force window oracle for the r-contiguous rule.
    fn r_contig_oracle(det: &[u8], pat: &[u8], r: usize) -> bool {
        if r == 0 || r > det.len() {
            return false;
        }
        (0..=det.len() - r).any(|start| {
            (start..start + r).all(|i| det[i] == WILDCARD || det[i] == pat[i])
        })
    }

    #[test]
    fn r_contiguous_examples() {
        // window "bcd" of the detector agrees with the pattern
        assert!(match_r_contiguous(b"abcde", b"1bcd2", 3));
        assert!(!match_r_contiguous(b"abcde", b"1bcd2", 5));
        assert_eq!(r_contig_oracle(b"abcde", b"1bcd2", 3), true);
        assert_eq!(r_contig_oracle(b"abcde", b"1bcd2", 5), false);
    }

    #[test]
    fn r_contiguous_agrees_with_bruteforce_oracle() {
        let mut rng = derive_stream(3, "match-oracle");
        let alphabet = b"01"; // binary sub-alphabet, short lengths
        for _ in 0..20_000 {
            let len = rng.gen_range(1..=8usize);
            let r = rng.gen_range(1..=len);
            let det: Vec<u8> = (0..len)
                .map(|_| {
                    if rng.gen::<f64>() < 0.2 {
                        WILDCARD
                    } else {
                        alphabet[rng.gen_range(0..2)]
                    }
                })
                .collect();
            let pat: Vec<u8> = (0..len).map(|_| alphabet[rng.gen_range(0..2)]).collect();
            assert_eq!(
                match_r_contiguous(&det, &pat, r),
                r_contig_oracle(&det, &pat, r),
                "det={det:?} pat={pat:?} r={r}"
            );
        }
    }

    fn random_pattern(rng: &mut StreamRng) -> Pattern {
        let sym: Vec<u8> = (0..PATTERN_LEN)
            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
            .collect();
        Pattern::from_symbols(&sym).unwrap()
    }

    fn random_detector(rng: &mut StreamRng) -> Detector {
        let sym: Vec<u8> = (0..PATTERN_LEN)
            .map(|_| {
                if rng.gen::<f64>() < 0.25 {
                    WILDCARD
                } else {
                    ALPHABET[rng.gen_range(0..ALPHABET.len())]
                }
            })
            .collect();
        Detector::r_contiguous(
            DetectorPattern::from_symbols(&sym).unwrap(),
            DEFAULT_R,
            DetectorLabel::Anomaly,
        )
    }

    #[test]
    fn negative_selection_equals_bruteforce_filter() {
        let mut rng = derive_stream(11, "negsel");
        let selfset = SelfSet {
            patterns: (0..50).map(|_| random_pattern(&mut rng)).collect(),
        };
        let candidates: Vec<Detector> = (0..100).map(|_| random_detector(&mut rng)).collect();
        let survivors = negative_selection(candidates.clone(), &selfset);
        let expected: Vec<Detector> = candidates
            .into_iter()
            .filter(|d| !selfset.patterns.iter().any(|p| matches(d, p)))
            .collect();
        assert_eq!(survivors, expected);
        for d in &survivors {
            for p in &selfset.patterns {
                assert!(!matches(d, p), "survivor matches self");
            }
        }
    }

    #[test]
    fn negative_selection_trivial_cases() {
        let mut rng = derive_stream(12, "negsel-trivial");
        let s = random_pattern(&mut rng);
        let d_self = Detector::exact(s, DetectorLabel::Anomaly);
        let d_other = random_detector(&mut rng);
        let selfset = SelfSet { patterns: vec![s] };
        let survivors = negative_selection(vec![d_self, d_other.clone()], &selfset);
        if !selfset.contains_match(&d_other) {
            assert_eq!(survivors, vec![d_other]);
        }
        // empty self set keeps everything
        let all = negative_selection(
            (0..10).map(|_| random_detector(&mut rng)).collect(),
            &SelfSet::default(),
        );
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn positive_selection_labels_survivors() {
        let mut rng = derive_stream(13, "possel");
        let worm = random_pattern(&mut rng);
        let known = BTreeMap::from([("worm-1".to_string(), worm)]);
        let d_hit = Detector::exact(worm, DetectorLabel::Anomaly);
        let d_miss = Detector::exact(random_pattern(&mut rng), DetectorLabel::Anomaly);
        let kept = positive_selection(vec![d_hit, d_miss], &known);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].label, DetectorLabel::Intrusion("worm-1".into()));
        // empty known set keeps nothing
        assert!(positive_selection(
            (0..5).map(|_| random_detector(&mut rng)).collect(),
            &BTreeMap::new()
        )
        .is_empty());
    }

    #[test]
    fn positive_selection_equals_bruteforce_filter() {
        let mut rng = derive_stream(14, "possel-oracle");
        let known: BTreeMap<String, Pattern> = (0..5)
            .map(|i| (format!("intr-{i}"), random_pattern(&mut rng)))
            .collect();
        let repertoire: Vec<Detector> = (0..40).map(|_| random_detector(&mut rng)).collect();
        let kept = positive_selection(repertoire.clone(), &known);
        let expected: usize = repertoire
            .iter()
            .filter(|d| known.values().any(|p| matches(d, p)))
            .count();
        assert_eq!(kept.len(), expected);
    }

    #[test]
    fn hypermutate_rate_zero_is_identity() {
        let mut rng = derive_stream(15, "hyper0");
        let d = random_detector(&mut rng);
        assert_eq!(hypermutate(&d, 0.0, &mut rng), d);
    }

    #[test]
    fn hypermutate_rate_one_changes_every_position_reproducibly() {
        let d = {
            let mut rng = derive_stream(16, "hyper1-setup");
            random_detector(&mut rng)
        };
        let mut a = derive_stream(16, "hyper1");
        let mut b = derive_stream(16, "hyper1");
        let ma = hypermutate(&d, 1.0, &mut a);
        let mb = hypermutate(&d, 1.0, &mut b);
        assert_eq!(ma, mb);
        for (x, y) in d
            .pattern
            .as_symbols()
            .iter()
            .zip(ma.pattern.as_symbols())
        {
            assert_ne!(x, y);
        }
    }

    #[test]
    fn hypermutate_mean_changed_positions_matches_binomial() {
        let mut rng = derive_stream(17, "hyper-mc");
        let d = random_detector(&mut rng);
        let trials = 10_000;
        let mut total = 0usize;
        for _ in 0..trials {
            let m = hypermutate(&d, 0.1, &mut rng);
            total += d
                .pattern
                .as_symbols()
                .iter()
                .zip(m.pattern.as_symbols())
                .filter(|(a, b)| a != b)
                .count();
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - 2.4).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn similarity_cases_and_metric_laws() {
        let mut rng = derive_stream(18, "similarity");
        let a = random_pattern(&mut rng);
        assert_eq!(similarity(&a, &a), 1.0);
        let mut sym = *a.as_symbols();
        for s in sym.iter_mut() {
            *s = if *s == b'0' { b'1' } else { b'0' };
        }
        let opposite = Pattern::from_symbols(&sym).unwrap();
        assert_eq!(similarity(&a, &opposite), 0.0);
        // 6 of 24 positions differ -> 0.75
        let mut sym = *a.as_symbols();
        for s in sym.iter_mut().take(6) {
            *s = if *s == b'0' { b'1' } else { b'0' };
        }
        let six_off = Pattern::from_symbols(&sym).unwrap();
        assert_eq!(similarity(&a, &six_off), 0.75);
        // symmetry and triangle inequality of the scaled Hamming distance
        for _ in 0..200 {
            let (x, y, z) = (
                random_pattern(&mut rng),
                random_pattern(&mut rng),
                random_pattern(&mut rng),
            );
            assert_eq!(similarity(&x, &y), similarity(&y, &x));
            let d = |p: &Pattern, q: &Pattern| 1.0 - similarity(p, q);
            assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
            assert_eq!(similarity(&x, &y) == 1.0, x == y);
        }
    }

    #[test]
    fn clone_count_formula() {
        assert_eq!(clone_count(1.0, 4), 4);
        assert_eq!(clone_count(0.25, 4), 1);
        assert_eq!(clone_count(0.5, 3), 2);
        assert_eq!(clone_count(10.0, 4), 4);
    }

    #[test]
    fn detector_json_roundtrip() {
        let d = Detector::r_contiguous(
            DetectorPattern::from_symbols(b"????56789abcdef|01234567").unwrap(),
            8,
            DetectorLabel::Intrusion("worm-1".into()),
        );
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"pattern\""));
        assert!(json.contains("\"worm-1\""));
        let back: Detector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let anomaly = Detector::r_contiguous(d.pattern, 8, DetectorLabel::Anomaly);
        let json = serde_json::to_string(&anomaly).unwrap();
        let back: Detector = serde_json::from_str(&json).unwrap();
        assert_eq!(back.label, DetectorLabel::Anomaly);
    }
}
