//! Turning decrypted log payloads into fixed-width feature vectors and
//! fused multi-source sequence windows.
//!
//! Every record maps to exactly twelve features. Network records use the
//! full set of header-derived features; physical records put their sensor
//! or actuator values in the leading slots and are zero-padded, so one
//! common width covers all sources. A window fuses the per-source vectors
//! side by side into a `12 * S`-wide sequence.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// Features per record; the fused window width is `FEATURE_DIM * sources`.
pub const FEATURE_DIM: usize = 12;

/// Default tick window over which records are grouped.
pub const DEFAULT_WINDOW_LEN: u64 = 50;
/// Default stride between window starts.
pub const DEFAULT_STRIDE: u64 = 25;
/// Default cap on records one source contributes to one window; flooding
/// multiplies emission rates, and unbounded windows would blow up training
/// sequence lengths without adding signal beyond the rate features.
pub const DEFAULT_MAX_RECORDS_PER_SOURCE: usize = 40;

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Network,
    Physical,
}

impl RecordKind {
    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Network => "network",
            RecordKind::Physical => "physical",
        }
    }
}

/// TCP/IP header fields of one captured packet record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkFields {
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
    pub length: u32,
    pub ttl: u8,
    pub flags: u8,
    pub window_size: u16,
    pub seq: u32,
    pub ack: u32,
    pub payload_len: u32,
    pub direction: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordFields {
    Network(NetworkFields),
    /// Sensor/actuator values; at most [`FEATURE_DIM`] of them.
    Physical(Vec<f64>),
}

/// One decoded log record from some source.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub source_id: String,
    pub tick: u64,
    pub fields: RecordFields,
}

impl RawRecord {
    pub fn kind(&self) -> RecordKind {
        match self.fields {
            RecordFields::Network(_) => RecordKind::Network,
            RecordFields::Physical(_) => RecordKind::Physical,
        }
    }
}

/// Record bearing its ground-truth flag; detection paths that have no truth
/// use `anomalous: false` throughout (the flag only feeds window labels).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledRecord {
    pub record: RawRecord,
    pub anomalous: bool,
}

// ---------------------------------------------------------------------------
// Record text format
// ---------------------------------------------------------------------------

/// Header of the record CSV schema: twelve generic value columns after the
/// identity columns, interpreted per `kind`. Network records fill
/// `c0..=c10` with `src_port, dst_port, protocol, length, ttl, flags,
/// window_size, seq, ack, payload_len, direction`; physical records fill
/// the leading columns with their values and leave the rest empty.
pub const RECORD_CSV_HEADER: &str =
    "source_id,tick,kind,c0,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10,c11";

pub fn record_to_line(rec: &RawRecord) -> String {
    use core::fmt::Write;
    let mut line = String::new();
    let _ = write!(line, "{},{},{}", rec.source_id, rec.tick, rec.kind().name());
    match &rec.fields {
        RecordFields::Network(n) => {
            let _ = write!(
                line,
                ",{},{},{},{},{},{},{},{},{},{},{},",
                n.src_port,
                n.dst_port,
                n.protocol,
                n.length,
                n.ttl,
                n.flags,
                n.window_size,
                n.seq,
                n.ack,
                n.payload_len,
                n.direction
            );
        }
        RecordFields::Physical(values) => {
            for i in 0..FEATURE_DIM {
                match values.get(i) {
                    Some(v) => {
                        let _ = write!(line, ",{v}");
                    }
                    None => line.push(','),
                }
            }
        }
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestError {
    /// First line is not the documented header.
    BadHeader,
    /// More than the tolerated fraction of lines failed to parse.
    TooManyMalformed { malformed: usize, total: usize },
    EmptyTrainingSet,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::BadHeader => write!(f, "missing or wrong CSV header"),
            IngestError::TooManyMalformed { malformed, total } => {
                write!(f, "{malformed} of {total} lines malformed")
            }
            IngestError::EmptyTrainingSet => write!(f, "empty training set"),
        }
    }
}

impl core::error::Error for IngestError {}

/// Per-line parse failures collected by [`parse_records`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    /// 1-based line number in the input text.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<RawRecord>,
    pub issues: Vec<ParseIssue>,
}

/// Parse record CSV text. Malformed lines are collected with their line
/// numbers and parsing continues, unless more than 10% of data lines are
/// bad, which aborts the whole parse.
pub fn parse_records(text: &str) -> Result<ParseOutcome, IngestError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim_end() == RECORD_CSV_HEADER => {}
        _ => return Err(IngestError::BadHeader),
    }
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut total = 0usize;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match record_from_line(line) {
            Ok(rec) => records.push(rec),
            Err(message) => issues.push(ParseIssue {
                line: i + 2,
                message,
            }),
        }
    }
    if total > 0 && issues.len() * 10 > total {
        return Err(IngestError::TooManyMalformed {
            malformed: issues.len(),
            total,
        });
    }
    Ok(ParseOutcome { records, issues })
}

pub fn record_from_line(line: &str) -> Result<RawRecord, String> {
    let cols: Vec<&str> = line.trim_end().split(',').collect();
    if cols.len() != 15 {
        return Err("expected 15 columns".to_string());
    }
    let source_id = cols[0].to_string();
    if source_id.is_empty() {
        return Err("empty source_id".to_string());
    }
    let tick = u64::from_str(cols[1]).map_err(|_| "bad tick".to_string())?;
    let fields = match cols[2] {
        "network" => {
            fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
                T::from_str(s).map_err(|_| {
                    let mut m = String::from("bad ");
                    m.push_str(what);
                    m
                })
            }
            RecordFields::Network(NetworkFields {
                src_port: num(cols[3], "src_port")?,
                dst_port: num(cols[4], "dst_port")?,
                protocol: num(cols[5], "protocol")?,
                length: num(cols[6], "length")?,
                ttl: num(cols[7], "ttl")?,
                flags: num(cols[8], "flags")?,
                window_size: num(cols[9], "window_size")?,
                seq: num(cols[10], "seq")?,
                ack: num(cols[11], "ack")?,
                payload_len: num(cols[12], "payload_len")?,
                direction: num(cols[13], "direction")?,
            })
        }
        "physical" => {
            let mut values = Vec::new();
            let mut done = false;
            for col in &cols[3..15] {
                if col.is_empty() {
                    done = true;
                    continue;
                }
                if done {
                    return Err("gap in physical values".to_string());
                }
                let v = f64::from_str(col).map_err(|_| "bad physical value".to_string())?;
                if !v.is_finite() {
                    return Err("non-finite physical value".to_string());
                }
                values.push(v);
            }
            RecordFields::Physical(values)
        }
        other => {
            let mut m = String::from("unknown kind ");
            m.push_str(other);
            return Err(m);
        }
    };
    Ok(RawRecord {
        source_id,
        tick,
        fields,
    })
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

/// Exactly twelve real-valued features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub const ZERO: FeatureVector = FeatureVector([0.0; FEATURE_DIM]);

    pub fn as_slice(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

/// Map one record to its feature vector. Three features are deltas against
/// the source's previous record (`seq_delta`, `ack_delta`,
/// `inter_arrival_time`); they are zero when `prev` is absent.
///
/// Network slot order: `0 src_port, 1 dst_port, 2 protocol, 3
/// packet_length, 4 ttl, 5 flags, 6 window_size, 7 seq_delta, 8 ack_delta,
/// 9 payload_length, 10 direction, 11 inter_arrival_time`. Physical values
/// occupy the leading slots, zero-padded to twelve.
pub fn extract_features(rec: &RawRecord, prev: Option<&RawRecord>) -> FeatureVector {
    let mut out = [0.0f64; FEATURE_DIM];
    match &rec.fields {
        RecordFields::Network(n) => {
            let prev_net = prev.and_then(|p| match &p.fields {
                RecordFields::Network(pn) => Some(pn),
                RecordFields::Physical(_) => None,
            });
            out[0] = n.src_port as f64;
            out[1] = n.dst_port as f64;
            out[2] = n.protocol as f64;
            out[3] = n.length as f64;
            out[4] = n.ttl as f64;
            out[5] = n.flags as f64;
            out[6] = n.window_size as f64;
            out[7] = prev_net.map_or(0.0, |p| n.seq.wrapping_sub(p.seq) as f64);
            out[8] = prev_net.map_or(0.0, |p| n.ack.wrapping_sub(p.ack) as f64);
            out[9] = n.payload_len as f64;
            out[10] = n.direction as f64;
            out[11] = prev.map_or(0.0, |p| rec.tick.saturating_sub(p.tick) as f64);
        }
        RecordFields::Physical(values) => {
            for (slot, v) in out.iter_mut().zip(values.iter()) {
                *slot = *v;
            }
        }
    }
    FeatureVector(out)
}

/// Feature vectors for one source's records in tick order, threading the
/// previous-record context through the whole stream.
pub fn extract_series(records: &[RawRecord]) -> Vec<FeatureVector> {
    let mut out = Vec::with_capacity(records.len());
    let mut prev: Option<&RawRecord> = None;
    for rec in records {
        out.push(extract_features(rec, prev));
        prev = Some(rec);
    }
    out
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-dimension min/max learned from the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

/// Test-time values outside the training range are clamped to this band.
pub const NORM_CLAMP: (f64, f64) = (-0.5, 1.5);

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Fit over plain twelve-wide vectors.
    pub fn fit_vectors(train: &[FeatureVector]) -> Result<Self, IngestError> {
        if train.is_empty() {
            return Err(IngestError::EmptyTrainingSet);
        }
        let mut params = NormalizationParams {
            mins: alloc::vec![f64::INFINITY; FEATURE_DIM],
            maxs: alloc::vec![f64::NEG_INFINITY; FEATURE_DIM],
        };
        for v in train {
            params.update(0, v);
        }
        Ok(params)
    }

    /// Fit over fused windows: dimension `12 * n_sources`, each source's
    /// vectors feeding its own column block. Padding steps (sources with
    /// fewer records than the fused length) do not contribute.
    pub fn fit_windows(train: &[SequenceWindow], n_sources: usize) -> Result<Self, IngestError> {
        let mut params = NormalizationParams {
            mins: alloc::vec![f64::INFINITY; FEATURE_DIM * n_sources],
            maxs: alloc::vec![f64::NEG_INFINITY; FEATURE_DIM * n_sources],
        };
        let mut saw_any = false;
        for window in train {
            for (s, series) in window.per_source.iter().enumerate() {
                for v in series {
                    saw_any = true;
                    params.update(s * FEATURE_DIM, v);
                }
            }
        }
        if !saw_any {
            return Err(IngestError::EmptyTrainingSet);
        }
        // Dimensions never observed (a source and slot with no records at
        // all) normalize as constants.
        for d in 0..params.dim() {
            if params.mins[d] > params.maxs[d] {
                params.mins[d] = 0.0;
                params.maxs[d] = 0.0;
            }
        }
        Ok(params)
    }

    fn update(&mut self, offset: usize, v: &FeatureVector) {
        for (f, x) in v.0.iter().enumerate() {
            let d = offset + f;
            if *x < self.mins[d] {
                self.mins[d] = *x;
            }
            if *x > self.maxs[d] {
                self.maxs[d] = *x;
            }
        }
    }

    /// `(x - min) / (max - min)`, constant dimensions map to 0, and the
    /// result is clamped so out-of-range test values never explode.
    pub fn normalize(&self, dim: usize, x: f64) -> f64 {
        let (min, max) = (self.mins[dim], self.maxs[dim]);
        if max <= min {
            return 0.0;
        }
        let scaled = (x - min) / (max - min);
        scaled.clamp(NORM_CLAMP.0, NORM_CLAMP.1)
    }

    /// Normalize a twelve-wide vector against dims `0..12`.
    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = [0.0f64; FEATURE_DIM];
        for (f, slot) in out.iter_mut().enumerate() {
            *slot = self.normalize(f, v.0[f]);
        }
        FeatureVector(out)
    }
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// One fused multi-source window: for every source, its feature vectors for
/// records whose ticks fall in `[start_tick, end_tick)`. Source lengths may
/// differ; the fused sequence length is the maximum, shorter sources being
/// zero-padded at the tail during input assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub start_tick: u64,
    pub end_tick: u64,
    pub per_source: Vec<Vec<FeatureVector>>,
    pub label: WindowLabel,
}

impl SequenceWindow {
    pub fn n_sources(&self) -> usize {
        self.per_source.len()
    }

    /// Fused sequence length: the longest per-source series.
    pub fn fused_len(&self) -> usize {
        self.per_source.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowLabel {
    Normal,
    /// The named source behaved anomalously in this window.
    Anomalous { source: usize },
}

impl WindowLabel {
    /// Category index for the classifier: 0 is normal, `s + 1` is
    /// anomalous at source `s`. The label space for `S` sources therefore
    /// has `S + 1` categories. This mapping is the single place the
    /// alternative (per-source normal/abnormal pairs) would change.
    pub fn class_index(self) -> usize {
        match self {
            WindowLabel::Normal => 0,
            WindowLabel::Anomalous { source } => source + 1,
        }
    }

    pub fn from_class_index(class: usize) -> WindowLabel {
        if class == 0 {
            WindowLabel::Normal
        } else {
            WindowLabel::Anomalous { source: class - 1 }
        }
    }
}

impl fmt::Display for WindowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowLabel::Normal => write!(f, "normal"),
            WindowLabel::Anomalous { source } => write!(f, "anomalous@{source}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub window_len: u64,
    pub stride: u64,
    /// Per-source record cap within one window; earliest records win.
    pub max_records_per_source: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
            max_records_per_source: DEFAULT_MAX_RECORDS_PER_SOURCE,
        }
    }
}

/// Build fused windows over `[range_start, range_end)` from per-source
/// record streams (each in tick order). A window is labelled anomalous at
/// source `s` when at least half of `s`'s records inside it are flagged;
/// the simulator's no-overlap rule keeps that to at most one source, and
/// ties break to the lowest source index. Windows in which no source has
/// any records are dropped.
pub fn build_windows(
    per_source: &[Vec<LabelledRecord>],
    cfg: &WindowConfig,
    range_start: u64,
    range_end: u64,
) -> Vec<SequenceWindow> {
    assert!(cfg.window_len >= 1, "window_len must be at least 1 tick");
    assert!(cfg.stride >= 1, "stride must be at least 1 tick");
    // Extract features over each full stream first so delta features keep
    // their context across window boundaries.
    let features: Vec<Vec<FeatureVector>> = per_source
        .iter()
        .map(|stream| {
            let records: Vec<RawRecord> = stream.iter().map(|l| l.record.clone()).collect();
            extract_series(&records)
        })
        .collect();
    let mut cursors = alloc::vec![0usize; per_source.len()];
    let mut windows = Vec::new();
    let mut start = range_start;
    while start + cfg.window_len <= range_end {
        let end = start + cfg.window_len;
        let mut per_source_vecs = Vec::with_capacity(per_source.len());
        let mut best: Option<(usize, f64)> = None;
        let mut any_records = false;
        for (s, stream) in per_source.iter().enumerate() {
            // Advance a per-source cursor to the first record at or past the
            // window start; streams are in tick order.
            while cursors[s] < stream.len() && stream[cursors[s]].record.tick < start {
                cursors[s] += 1;
            }
            let mut i = cursors[s];
            let begin = i;
            let mut flagged = 0usize;
            while i < stream.len() && stream[i].record.tick < end {
                if stream[i].anomalous {
                    flagged += 1;
                }
                i += 1;
            }
            let count = i - begin;
            if count > 0 {
                any_records = true;
                let fraction = flagged as f64 / count as f64;
                if fraction >= 0.5 {
                    let better = match best {
                        None => true,
                        Some((_, f)) => fraction > f,
                    };
                    if better {
                        best = Some((s, fraction));
                    }
                }
            }
            let take = count.min(cfg.max_records_per_source);
            per_source_vecs.push(features[s][begin..begin + take].to_vec());
        }
        if any_records {
            windows.push(SequenceWindow {
                start_tick: start,
                end_tick: end,
                per_source: per_source_vecs,
                label: match best {
                    Some((s, _)) => WindowLabel::Anomalous { source: s },
                    None => WindowLabel::Normal,
                },
            });
        }
        start += cfg.stride;
    }
    windows
}

/// Flatten a window into a normalized time-major `T x (12 * S)` input
/// matrix: step `t` holds each source's `t`-th vector (zero rows once a
/// source's series is exhausted), with each column block normalized by the
/// source's slice of `params`.
pub fn assemble_input(window: &SequenceWindow, params: &NormalizationParams) -> Vec<Vec<f64>> {
    let n_sources = window.n_sources();
    let width = FEATURE_DIM * n_sources;
    debug_assert_eq!(params.dim(), width, "normalizer dimension mismatch");
    let t_len = window.fused_len();
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut row = alloc::vec![0.0f64; width];
        for (s, series) in window.per_source.iter().enumerate() {
            if let Some(v) = series.get(t) {
                for f in 0..FEATURE_DIM {
                    let d = s * FEATURE_DIM + f;
                    row[d] = params.normalize(d, v.0[f]);
                }
            }
        }
        steps.push(row);
    }
    steps
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Default split sizes for generated datasets.
pub const DEFAULT_TRAIN_WINDOWS: usize = 2000;
pub const DEFAULT_TEST_WINDOWS: usize = 1000;

/// A windowed, labelled, time-split dataset plus the normalizer fitted on
/// its training half.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sources: Vec<String>,
    pub train: Vec<SequenceWindow>,
    pub test: Vec<SequenceWindow>,
    pub norm: NormalizationParams,
    pub window: WindowConfig,
}

impl Dataset {
    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Classifier input width.
    pub fn input_dim(&self) -> usize {
        FEATURE_DIM * self.sources.len()
    }

    /// Classifier categories: normal plus one per source.
    pub fn n_categories(&self) -> usize {
        self.sources.len() + 1
    }
}

/// Generate a labelled synthetic dataset by running the named profile's
/// simulation with its default attack mix, windowing the emitted streams on
/// non-overlapping window-length boundaries, splitting train/test by time
/// (train strictly earlier), and fitting the normalizer on train only.
pub fn generate_synthetic(
    profile: crate::sim::Profile,
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<Dataset, crate::sim::SimError> {
    assert!(n_train >= 1 && n_test >= 1, "split sizes must be at least 1");
    let cfg = WindowConfig {
        window_len: DEFAULT_WINDOW_LEN,
        // Non-overlapping windows keep the time split leak-free.
        stride: DEFAULT_WINDOW_LEN,
        max_records_per_source: DEFAULT_MAX_RECORDS_PER_SOURCE,
    };
    let duration = (n_train + n_test) as u64 * cfg.window_len;
    let topo = crate::sim::builtin_topology(profile, seed);
    let scenario = crate::sim::default_scenario(profile, seed, duration);
    let out = crate::sim::run_simulation(&scenario, &topo)?;
    let windows = build_windows(&out.records, &cfg, 0, duration);
    assert!(
        windows.len() >= n_train + n_test,
        "continuous emission fills every window"
    );
    let mut train = windows;
    train.truncate(n_train + n_test);
    let test = train.split_off(n_train);
    let norm = NormalizationParams::fit_windows(&train, out.sources.len())
        .expect("training windows are non-empty");
    Ok(Dataset {
        sources: out.sources.iter().map(|s| s.name.clone()).collect(),
        train,
        test,
        norm,
        window: cfg,
    })
}

const WINDOWS_MAGIC: &[u8; 8] = b"ICSWIN01";

/// Canonical binary form of a dataset (the `windows.bin` payload).
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WINDOWS_MAGIC);
    out.extend_from_slice(&(ds.sources.len() as u32).to_be_bytes());
    for name in &ds.sources {
        out.extend_from_slice(&(name.len() as u32).to_be_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.extend_from_slice(&ds.window.window_len.to_be_bytes());
    out.extend_from_slice(&ds.window.stride.to_be_bytes());
    out.extend_from_slice(&(ds.window.max_records_per_source as u32).to_be_bytes());
    out.extend_from_slice(&(ds.norm.dim() as u32).to_be_bytes());
    for d in 0..ds.norm.dim() {
        out.extend_from_slice(&ds.norm.mins[d].to_le_bytes());
        out.extend_from_slice(&ds.norm.maxs[d].to_le_bytes());
    }
    out.extend_from_slice(&(ds.train.len() as u32).to_be_bytes());
    out.extend_from_slice(&(ds.test.len() as u32).to_be_bytes());
    for window in ds.train.iter().chain(ds.test.iter()) {
        out.extend_from_slice(&(window.label.class_index() as u32).to_be_bytes());
        out.extend_from_slice(&window.start_tick.to_be_bytes());
        out.extend_from_slice(&window.end_tick.to_be_bytes());
        for series in &window.per_source {
            out.extend_from_slice(&(series.len() as u32).to_be_bytes());
            for v in series {
                for x in &v.0 {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetDecodeError(pub &'static str);

impl fmt::Display for DatasetDecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed dataset: {}", self.0)
    }
}

impl core::error::Error for DatasetDecodeError {}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetDecodeError> {
    use crate::ledger::Reader;
    let err = DatasetDecodeError;
    let mut r = Reader::new(bytes);
    if r.take(8).map_err(|_| err("truncated"))? != WINDOWS_MAGIC {
        return Err(err("bad magic"));
    }
    let n_sources = r.u32be().map_err(|_| err("truncated"))? as usize;
    let mut sources = Vec::with_capacity(n_sources);
    for _ in 0..n_sources {
        let len = r.u32be().map_err(|_| err("truncated"))? as usize;
        let name = core::str::from_utf8(r.take(len).map_err(|_| err("truncated"))?)
            .map_err(|_| err("bad source name"))?;
        sources.push(name.to_string());
    }
    let window = WindowConfig {
        window_len: r.u64be().map_err(|_| err("truncated"))?,
        stride: r.u64be().map_err(|_| err("truncated"))?,
        max_records_per_source: r.u32be().map_err(|_| err("truncated"))? as usize,
    };
    let dim = r.u32be().map_err(|_| err("truncated"))? as usize;
    if dim != FEATURE_DIM * n_sources {
        return Err(err("normalizer dimension mismatch"));
    }
    let mut norm = NormalizationParams {
        mins: Vec::with_capacity(dim),
        maxs: Vec::with_capacity(dim),
    };
    let f64_at = |r: &mut Reader| -> Result<f64, DatasetDecodeError> {
        let bytes = r.take(8).map_err(|_| err("truncated"))?;
        Ok(f64::from_le_bytes(bytes.try_into().expect("len")))
    };
    for _ in 0..dim {
        let min = f64_at(&mut r)?;
        let max = f64_at(&mut r)?;
        norm.mins.push(min);
        norm.maxs.push(max);
    }
    let n_train = r.u32be().map_err(|_| err("truncated"))? as usize;
    let n_test = r.u32be().map_err(|_| err("truncated"))? as usize;
    let mut all = Vec::with_capacity(n_train + n_test);
    for _ in 0..(n_train + n_test) {
        let class = r.u32be().map_err(|_| err("truncated"))? as usize;
        if class > n_sources {
            return Err(err("label out of range"));
        }
        let start_tick = r.u64be().map_err(|_| err("truncated"))?;
        let end_tick = r.u64be().map_err(|_| err("truncated"))?;
        let mut per_source = Vec::with_capacity(n_sources);
        for _ in 0..n_sources {
            let count = r.u32be().map_err(|_| err("truncated"))? as usize;
            let mut series = Vec::with_capacity(count);
            for _ in 0..count {
                let mut v = [0.0f64; FEATURE_DIM];
                for slot in v.iter_mut() {
                    *slot = f64_at(&mut r)?;
                }
                series.push(FeatureVector(v));
            }
            per_source.push(series);
        }
        all.push(SequenceWindow {
            start_tick,
            end_tick,
            per_source,
            label: WindowLabel::from_class_index(class),
        });
    }
    r.finish().map_err(|_| err("trailing bytes"))?;
    let test = all.split_off(n_train);
    Ok(Dataset {
        sources,
        train: all,
        test,
        norm,
        window,
    })
}
