//! Deterministic discrete-event simulation of a multi-site ICS deployment.
//!
//! Devices emit a log record the moment an event occurs, wrap it in an
//! encrypted log-store transaction, and gossip it to their neighbours; site
//! managers collect transactions into the shared pending pool and commit
//! blocks on a size-or-timeout trigger. Attack injections transform the
//! emission schedule or record content of one source over an interval, and
//! every record carries its ground-truth flag so datasets and detectors can
//! be scored.
//!
//! The whole run is a pure function of `(SimConfig, SiteTopology)`: one
//! event loop, one seeded RNG, ordering by `(tick, insertion sequence)`.
//! Consensus rounds execute atomically at the tick that triggers them; the
//! message-level endorsement exchange is abstracted away, its rules living
//! in the consensus module.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use rand_core::{RngCore, SeedableRng};
use sha2::{Digest as _, Sha256};

use crate::consensus::{run_round, PendingPool, RoundError, ValidatorSet};
use crate::crypto::{Digest, KeyPair, PublicKey};
use crate::features::{
    record_to_line, LabelledRecord, NetworkFields, RawRecord, RecordFields, RecordKind,
};
use crate::ledger::{build_device_tx, Chain, Transaction, TxKind};

/// Pool size that triggers an immediate proposal.
const PROPOSE_POOL_THRESHOLD: usize = 16;
/// Ticks between timer-driven proposals.
const PROPOSE_TIMER_INTERVAL: u64 = 50;
/// Minimum ticks between threshold-triggered rounds; coalesces the trigger
/// during flood bursts where deliveries arrive every tick.
const PROPOSE_COOLDOWN: u64 = 10;

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Sensor,
    Actuator,
    NetworkTap,
}

impl DeviceKind {
    pub fn record_kind(self) -> RecordKind {
        match self {
            DeviceKind::Sensor | DeviceKind::Actuator => RecordKind::Physical,
            DeviceKind::NetworkTap => RecordKind::Network,
        }
    }
}

/// One monitored device; also one detector source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Device {
    /// Globally unique source id, `<site>/<device>`.
    pub name: String,
    pub kind: DeviceKind,
    /// Physical value channels (ignored for network taps).
    pub channels: usize,
    pub pk: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub site_id: String,
    pub devices: Vec<Device>,
    pub manager_pk: PublicKey,
    /// Undirected intra-site edges over node indices; devices are
    /// `0..devices.len()`, the manager is `devices.len()`. Managers of
    /// different sites are implicitly interconnected.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteTopology {
    pub sites: Vec<Site>,
}

impl SiteTopology {
    pub fn site_index(&self, site_id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.site_id == site_id)
    }

    /// Sources in global order: sites in order, each site's devices in
    /// order. This fixes the column layout of fused windows.
    pub fn source_names(&self) -> Vec<String> {
        self.sites
            .iter()
            .flat_map(|s| s.devices.iter().map(|d| d.name.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.sites.is_empty() {
            return Err(SimError::BadTopology("no sites"));
        }
        let mut names = BTreeSet::new();
        for site in &self.sites {
            if site.devices.is_empty() {
                return Err(SimError::BadTopology("site without devices"));
            }
            for device in &site.devices {
                if !names.insert(device.name.clone()) {
                    return Err(SimError::BadTopology("duplicate device name"));
                }
            }
            let n_nodes = site.devices.len() + 1;
            for (a, b) in &site.edges {
                if *a >= n_nodes || *b >= n_nodes || a == b {
                    return Err(SimError::BadTopology("edge out of range"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// One water-treatment-like site: a six-stage sensor bank, a six-stage
    /// actuator bank, and a network tap.
    SwatLike,
    /// One factory-automation-like site: conveyor, tank, and pressure
    /// vessel stages plus a network tap.
    FactoryLike,
    /// Both sites on one shared chain.
    TwoSite,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::SwatLike => "swat-like",
            Profile::FactoryLike => "factory-like",
            Profile::TwoSite => "two-site",
        }
    }

    pub fn from_name(name: &str) -> Option<Profile> {
        match name {
            "swat-like" => Some(Profile::SwatLike),
            "factory-like" => Some(Profile::FactoryLike),
            "two-site" => Some(Profile::TwoSite),
            _ => None,
        }
    }
}

/// Key derivation for simulation identities: every key in a run is a pure
/// function of the master seed and the role coordinates.
fn derive_pair(seed: u64, role: &str, a: u64, b: u64) -> KeyPair {
    let mut h = Sha256::new();
    h.update(b"icsguard.simkey.v1");
    h.update(seed.to_be_bytes());
    h.update(role.as_bytes());
    h.update(a.to_be_bytes());
    h.update(b.to_be_bytes());
    let digest: [u8; 32] = h.finalize().into();
    KeyPair::from_seed(&digest).expect("derived seed is 32 bytes")
}

fn swat_site(seed: u64, site_idx: u64) -> Site {
    let site_id = "site-a".to_string();
    let mk = |name: &str, kind, channels, dev_idx| Device {
        name: {
            let mut n = site_id.clone();
            n.push('/');
            n.push_str(name);
            n
        },
        kind,
        channels,
        pk: derive_pair(seed, "device", site_idx, dev_idx).public,
    };
    Site {
        devices: alloc::vec![
            mk("sensors", DeviceKind::Sensor, 6, 0),
            mk("actuators", DeviceKind::Actuator, 6, 1),
            mk("tap", DeviceKind::NetworkTap, 0, 2),
        ],
        manager_pk: derive_pair(seed, "manager", site_idx, 0).public,
        // Devices mesh with each other and the manager (node 3).
        edges: alloc::vec![(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)],
        site_id,
    }
}

fn factory_site(seed: u64, site_idx: u64) -> Site {
    let site_id = "site-b".to_string();
    let mk = |name: &str, kind, channels, dev_idx| Device {
        name: {
            let mut n = site_id.clone();
            n.push('/');
            n.push_str(name);
            n
        },
        kind,
        channels,
        pk: derive_pair(seed, "device", site_idx, dev_idx).public,
    };
    Site {
        devices: alloc::vec![
            mk("conveyor", DeviceKind::Sensor, 3, 0),
            mk("tank", DeviceKind::Sensor, 3, 1),
            mk("vessel", DeviceKind::Sensor, 3, 2),
            mk("tap", DeviceKind::NetworkTap, 0, 3),
        ],
        manager_pk: derive_pair(seed, "manager", site_idx, 0).public,
        // Process chain plus the tap and manager (node 4) hub.
        edges: alloc::vec![(0, 1), (1, 2), (2, 3), (0, 4), (1, 4), (2, 4), (3, 4)],
        site_id,
    }
}

/// Build one of the built-in topologies with keys derived from `seed`; the
/// same seed must be passed to [`run_simulation`].
pub fn builtin_topology(profile: Profile, seed: u64) -> SiteTopology {
    let sites = match profile {
        Profile::SwatLike => alloc::vec![swat_site(seed, 0)],
        Profile::FactoryLike => alloc::vec![factory_site(seed, 0)],
        Profile::TwoSite => alloc::vec![swat_site(seed, 0), factory_site(seed, 1)],
    };
    SiteTopology { sites }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// Emission rate multiplied by 20, near-zero inter-arrival.
    Flooding,
    /// Source-identity header fields rewritten to attacker values.
    Spoofing,
    /// Value fields perturbed in-path, rate preserved.
    Mitm,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Flooding => "flooding",
            AttackKind::Spoofing => "spoofing",
            AttackKind::Mitm => "mitm",
        }
    }

    pub fn from_name(name: &str) -> Option<AttackKind> {
        match name {
            "flooding" => Some(AttackKind::Flooding),
            "spoofing" => Some(AttackKind::Spoofing),
            "mitm" => Some(AttackKind::Mitm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub site: String,
    /// Qualified source name, `<site>/<device>`.
    pub source: String,
    pub start: u64,
    /// Exclusive.
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub duration: u64,
    /// Gossip link delay bounds, inclusive; sampled uniformly.
    pub link_delay: (u64, u64),
    pub attacks: Vec<AttackSpec>,
}

impl SimConfig {
    pub fn new(seed: u64, duration: u64) -> Self {
        SimConfig {
            seed,
            duration,
            link_delay: (1, 5),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    BadTopology(&'static str),
    /// Topology keys were not derived from the config seed.
    TopologyKeyMismatch,
    UnknownSite(String),
    UnknownSource(String),
    AttackOutOfRange { source: String, end: u64 },
    OverlappingAttacks { source: String },
    BadLinkDelay,
    Consensus(RoundError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadTopology(what) => write!(f, "bad topology: {what}"),
            SimError::TopologyKeyMismatch => {
                write!(f, "topology keys do not match the config seed")
            }
            SimError::UnknownSite(s) => write!(f, "unknown site {s}"),
            SimError::UnknownSource(s) => write!(f, "unknown source {s}"),
            SimError::AttackOutOfRange { source, end } => {
                write!(f, "attack on {source} ends at {end}, beyond the run")
            }
            SimError::OverlappingAttacks { source } => {
                write!(f, "overlapping attacks on {source}")
            }
            SimError::BadLinkDelay => write!(f, "link delays must satisfy 1 <= lo <= hi"),
            SimError::Consensus(e) => write!(f, "consensus: {e}"),
        }
    }
}

impl core::error::Error for SimError {}

/// Check a config against a topology before anything runs.
pub fn validate_config(config: &SimConfig, topo: &SiteTopology) -> Result<(), SimError> {
    topo.validate()?;
    if config.link_delay.0 < 1 || config.link_delay.0 > config.link_delay.1 {
        return Err(SimError::BadLinkDelay);
    }
    let mut per_source: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
    for attack in &config.attacks {
        let site = topo
            .site_index(&attack.site)
            .ok_or_else(|| SimError::UnknownSite(attack.site.clone()))?;
        if !topo.sites[site]
            .devices
            .iter()
            .any(|d| d.name == attack.source)
        {
            return Err(SimError::UnknownSource(attack.source.clone()));
        }
        if attack.start >= attack.end {
            continue; // empty interval: no-op
        }
        if attack.end > config.duration {
            return Err(SimError::AttackOutOfRange {
                source: attack.source.clone(),
                end: attack.end,
            });
        }
        let intervals = per_source.entry(attack.source.as_str()).or_default();
        for (s, e) in intervals.iter() {
            if attack.start < *e && *s < attack.end {
                return Err(SimError::OverlappingAttacks {
                    source: attack.source.clone(),
                });
            }
        }
        intervals.push((attack.start, attack.end));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceMeta {
    pub name: String,
    pub site_id: String,
    pub kind: RecordKind,
    pub pk: PublicKey,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub chain: Chain,
    /// Source metadata in global order; aligns with `records`.
    pub sources: Vec<SourceMeta>,
    /// Every emitted record with its ground-truth flag, per source, in
    /// emission order.
    pub records: Vec<Vec<LabelledRecord>>,
    /// Transaction id of each record's log-store transaction, aligned with
    /// `records`.
    pub record_tx_ids: Vec<Vec<Digest>>,
    /// Transactions still pending when the run ended (usually deliveries
    /// that straggled past the final flush).
    pub uncommitted: usize,
    /// Consensus rounds attempted and pool entries skipped across them;
    /// high skip counts indicate out-of-order gossip churn.
    pub rounds: u64,
    pub skipped_validations: u64,
    pub authority: KeyPair,
    pub data_key: KeyPair,
    /// One manager keypair per site; these are the validators.
    pub manager_keys: Vec<KeyPair>,
    pub device_keys: Vec<Vec<KeyPair>>,
}

impl SimOutput {
    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.sources.iter().position(|s| s.name == name)
    }
}

// ---------------------------------------------------------------------------
// Event loop
// ---------------------------------------------------------------------------

/// Node address: `(site index, node index)`; node `devices.len()` is the
/// site manager.
type NodeId = (usize, usize);

#[derive(Debug, Clone)]
enum EventKind {
    DeviceLog { site: usize, device: usize, epoch: u64 },
    Deliver { to: NodeId, from: NodeId, tx: Transaction },
    ProposeTimer,
    ProposeNow,
    AttackStart { site: usize, device: usize, kind: AttackKind },
    AttackEnd { site: usize, device: usize },
}

#[derive(Debug, Clone)]
struct SimEvent {
    at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for SimEvent {}
impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct DeviceState {
    /// Local pending chain tip: the id of the last transaction this device
    /// built (committed or not).
    tip: Digest,
    active: Option<AttackKind>,
    /// Emission-schedule epoch; scheduled emissions from an older epoch are
    /// dropped, so rescheduling (attack start) never duplicates the chain.
    epoch: u64,
    emit_count: u64,
    seq: u32,
    ack: u32,
    spoof_seq: u32,
}

struct Sim {
    config: SimConfig,
    topo: SiteTopology,
    rng: rand_chacha::ChaCha12Rng,
    heap: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    now: u64,
    chain: Chain,
    pool: PendingPool,
    authority: KeyPair,
    data_key: KeyPair,
    manager_keys: Vec<KeyPair>,
    device_keys: Vec<Vec<KeyPair>>,
    device_state: Vec<Vec<DeviceState>>,
    /// Per-node set of transaction ids already received (gossip dedup).
    seen: Vec<Vec<BTreeSet<Digest>>>,
    records: Vec<Vec<LabelledRecord>>,
    record_tx_ids: Vec<Vec<Digest>>,
    /// Global source index of `(site, device)`.
    source_of: BTreeMap<(usize, usize), usize>,
    last_block_tick: u64,
    last_round_attempt: u64,
    propose_pending: bool,
    stats_rounds: u64,
    stats_skipped: u64,
}

impl Sim {
    fn new(config: &SimConfig, topo: &SiteTopology) -> Result<Sim, SimError> {
        validate_config(config, topo)?;
        let seed = config.seed;
        let authority = derive_pair(seed, "authority", 0, 0);
        let data_key = derive_pair(seed, "pk-data", 0, 0);
        let mut manager_keys = Vec::new();
        let mut device_keys = Vec::new();
        for (si, site) in topo.sites.iter().enumerate() {
            let manager = derive_pair(seed, "manager", si as u64, 0);
            if manager.public != site.manager_pk {
                return Err(SimError::TopologyKeyMismatch);
            }
            let mut site_keys = Vec::new();
            for (di, device) in site.devices.iter().enumerate() {
                let pair = derive_pair(seed, "device", si as u64, di as u64);
                if pair.public != device.pk {
                    return Err(SimError::TopologyKeyMismatch);
                }
                site_keys.push(pair);
            }
            manager_keys.push(manager);
            device_keys.push(site_keys);
        }
        let mut participants: Vec<PublicKey> = Vec::new();
        for site in &topo.sites {
            for device in &site.devices {
                participants.push(device.pk);
            }
            participants.push(site.manager_pk);
        }
        let validators = ValidatorSet::new(topo.sites.iter().map(|s| s.manager_pk).collect())
            .expect("topology has at least one site");
        let chain = Chain::bootstrap(&authority, data_key.public, &participants, validators, 0);

        let mut source_of = BTreeMap::new();
        let mut index = 0usize;
        for (si, site) in topo.sites.iter().enumerate() {
            for di in 0..site.devices.len() {
                source_of.insert((si, di), index);
                index += 1;
            }
        }
        let device_state = topo
            .sites
            .iter()
            .enumerate()
            .map(|(si, site)| {
                (0..site.devices.len())
                    .map(|di| DeviceState {
                        tip: chain
                            .device_tip(&site.devices[di].pk)
                            .expect("bootstrap admitted every device"),
                        active: None,
                        epoch: 0,
                        emit_count: 0,
                        seq: (si as u32 + 1) * 10_000 + di as u32 * 1000,
                        ack: 500,
                        spoof_seq: 900_000_000,
                    })
                    .collect()
            })
            .collect();
        let seen = topo
            .sites
            .iter()
            .map(|site| alloc::vec![BTreeSet::new(); site.devices.len() + 1])
            .collect();
        let n_sources = index;
        Ok(Sim {
            config: config.clone(),
            topo: topo.clone(),
            rng: rand_chacha::ChaCha12Rng::seed_from_u64(seed),
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            chain,
            pool: PendingPool::new(),
            authority,
            data_key,
            manager_keys,
            device_keys,
            device_state,
            seen,
            records: alloc::vec![Vec::new(); n_sources],
            record_tx_ids: alloc::vec![Vec::new(); n_sources],
            source_of,
            last_block_tick: 0,
            last_round_attempt: 0,
            propose_pending: false,
            stats_rounds: 0,
            stats_skipped: 0,
        })
    }

    fn schedule(&mut self, at: u64, kind: EventKind) {
        debug_assert!(at >= self.now, "events may only be scheduled forward");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(SimEvent { at, seq, kind }));
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn uniform(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.rng.next_u64() % (hi - lo + 1)
    }

    fn seed_initial_events(&mut self) {
        for si in 0..self.topo.sites.len() {
            for di in 0..self.topo.sites[si].devices.len() {
                let base = base_interval(self.topo.sites[si].devices[di].kind);
                let first = self.uniform(1, base);
                self.schedule(
                    first,
                    EventKind::DeviceLog {
                        site: si,
                        device: di,
                        epoch: 0,
                    },
                );
            }
        }
        self.schedule(PROPOSE_TIMER_INTERVAL, EventKind::ProposeTimer);
        let attacks = self.config.attacks.clone();
        for attack in attacks {
            if attack.start >= attack.end {
                continue;
            }
            let si = self.topo.site_index(&attack.site).expect("validated");
            let di = self.topo.sites[si]
                .devices
                .iter()
                .position(|d| d.name == attack.source)
                .expect("validated");
            self.schedule(
                attack.start,
                EventKind::AttackStart {
                    site: si,
                    device: di,
                    kind: attack.kind,
                },
            );
            self.schedule(attack.end, EventKind::AttackEnd { site: si, device: di });
        }
    }

    fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let (si, ni) = node;
        let site = &self.topo.sites[si];
        let manager = site.devices.len();
        let mut out = Vec::new();
        for (a, b) in &site.edges {
            if *a == ni {
                out.push((si, *b));
            } else if *b == ni {
                out.push((si, *a));
            }
        }
        if ni == manager {
            for (osi, osite) in self.topo.sites.iter().enumerate() {
                if osi != si {
                    out.push((osi, osite.devices.len()));
                }
            }
        }
        out
    }

    /// Gossip a transaction from `node` to all its neighbours except the
    /// one it came from.
    fn broadcast(&mut self, node: NodeId, came_from: Option<NodeId>, tx: &Transaction) {
        let (lo, hi) = self.config.link_delay;
        for neighbor in self.neighbors(node) {
            if Some(neighbor) == came_from {
                continue;
            }
            let delay = self.uniform(lo, hi);
            self.schedule(
                self.now + delay,
                EventKind::Deliver {
                    to: neighbor,
                    from: node,
                    tx: tx.clone(),
                },
            );
        }
    }

    fn emit_record(&mut self, si: usize, di: usize) -> RawRecord {
        let device = self.topo.sites[si].devices[di].clone();
        let tick = self.now;
        let state = &mut self.device_state[si][di];
        state.emit_count += 1;
        let emit = state.emit_count;
        let attack = state.active;
        match device.kind {
            DeviceKind::Sensor | DeviceKind::Actuator => {
                let mut values = Vec::with_capacity(device.channels);
                for c in 0..device.channels {
                    let cf = c as f64;
                    let v = match device.kind {
                        DeviceKind::Sensor => {
                            let base = 20.0 + 10.0 * cf;
                            let amp = 3.0 + cf;
                            let period = 60.0 + 20.0 * cf;
                            base + amp * libm::sin(core::f64::consts::TAU * tick as f64 / period)
                        }
                        _ => {
                            let period = 40 + 10 * c as u64;
                            ((tick / period) % 2) as f64
                        }
                    };
                    values.push(v);
                }
                let noise_scale = if device.kind == DeviceKind::Sensor { 0.3 } else { 0.05 };
                for v in values.iter_mut() {
                    let state_noise = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    *v += (state_noise - 0.5) * 2.0 * noise_scale;
                }
                if attack == Some(AttackKind::Mitm) {
                    // In-path manipulation: shift every channel well outside
                    // its normal band.
                    for (c, v) in values.iter_mut().enumerate() {
                        *v += match device.kind {
                            DeviceKind::Sensor => 2.0 * (3.0 + c as f64),
                            _ => 0.75,
                        };
                    }
                }
                RawRecord {
                    source_id: device.name.clone(),
                    tick,
                    fields: RecordFields::Physical(values),
                }
            }
            DeviceKind::NetworkTap => {
                let state = &mut self.device_state[si][di];
                let jitter = self.rng.next_u64();
                let payload = 40 + (jitter % 32) as u32;
                let mut fields = NetworkFields {
                    src_port: 5020 + (emit % 3) as u16,
                    dst_port: 502,
                    protocol: 6,
                    length: 54 + payload,
                    ttl: 64,
                    flags: if emit % 2 == 0 { 24 } else { 16 },
                    window_size: 8000 + (jitter % 512) as u16,
                    seq: state.seq,
                    ack: state.ack,
                    payload_len: payload,
                    direction: (emit % 2) as u8,
                };
                state.seq = state.seq.wrapping_add(payload);
                state.ack = state.ack.wrapping_add(payload / 2);
                match attack {
                    Some(AttackKind::Spoofing) => {
                        // Forged source identity: attacker ports and a
                        // disjoint sequence-number space.
                        fields.src_port = 47000 + (emit % 5) as u16;
                        fields.ttl = 128;
                        fields.seq = state.spoof_seq;
                        state.spoof_seq = state.spoof_seq.wrapping_add(payload);
                    }
                    Some(AttackKind::Mitm) => {
                        fields.ttl = 33;
                        fields.window_size /= 2;
                        fields.length += 17;
                    }
                    Some(AttackKind::Flooding) => {
                        // Attacker traffic seen by the tap: tiny SYN-like
                        // frames from a fixed port block.
                        fields.src_port = 52000 + (emit % 4) as u16;
                        fields.flags = 2;
                        fields.length = 60;
                        fields.payload_len = 6;
                    }
                    None => {}
                }
                RawRecord {
                    source_id: device.name.clone(),
                    tick,
                    fields: RecordFields::Network(fields),
                }
            }
        }
    }

    fn on_device_log(&mut self, si: usize, di: usize) -> Result<(), SimError> {
        let record = self.emit_record(si, di);
        let anomalous = self.device_state[si][di].active.is_some();
        let payload = record_to_line(&record);
        let prev = self.device_state[si][di].tip;
        let keypair = self.device_keys[si][di].clone();
        let tx = build_device_tx(
            TxKind::LogStore,
            &keypair,
            prev,
            payload.as_bytes(),
            &self.data_key.public.clone(),
            None,
            self.now,
            &mut self.rng,
        )
        .expect("log-store build cannot fail");
        self.device_state[si][di].tip = tx.t_id;
        let source = self.source_of[&(si, di)];
        self.records[source].push(LabelledRecord { record, anomalous });
        self.record_tx_ids[source].push(tx.t_id);
        self.seen[si][di].insert(tx.t_id);
        self.broadcast((si, di), None, &tx);

        // Next emission; flooding compresses the interval to a twentieth.
        let kind = self.topo.sites[si].devices[di].kind;
        let base = base_interval(kind);
        let interval = if self.device_state[si][di].active == Some(AttackKind::Flooding) {
            // Mean base/20 with integer ticks: mostly same-tick bursts.
            let threshold = base as f64 / 20.0;
            let fractional = threshold - libm::floor(threshold);
            if threshold >= 1.0 || self.unit() < fractional {
                libm::ceil(threshold) as u64
            } else {
                0
            }
        } else {
            let jitter = base / 4;
            self.uniform(base - jitter, base + jitter)
        };
        let next = self.now + interval;
        if next <= self.config.duration {
            let epoch = self.device_state[si][di].epoch;
            self.schedule(
                next,
                EventKind::DeviceLog {
                    site: si,
                    device: di,
                    epoch,
                },
            );
        }
        Ok(())
    }

    fn on_deliver(&mut self, to: NodeId, from: NodeId, tx: Transaction) -> Result<(), SimError> {
        let (si, ni) = to;
        if !self.seen[si][ni].insert(tx.t_id) {
            return Ok(()); // duplicate: gossip stops here
        }
        let manager_node = self.topo.sites[si].devices.len();
        if ni == manager_node {
            self.pool.push(tx.clone());
            if self.pool.len() >= PROPOSE_POOL_THRESHOLD
                && !self.propose_pending
                && self.now >= self.last_round_attempt + PROPOSE_COOLDOWN
            {
                self.propose_pending = true;
                self.schedule(self.now, EventKind::ProposeNow);
            }
        }
        self.broadcast(to, Some(from), &tx);
        Ok(())
    }

    fn try_round(&mut self) -> Result<(), SimError> {
        self.last_round_attempt = self.now;
        if self.pool.is_empty() {
            return Ok(());
        }
        self.stats_rounds += 1;
        match run_round(&mut self.chain, &mut self.pool, &self.manager_keys, self.now) {
            Ok(skipped) => {
                self.stats_skipped += skipped.len() as u64;
                self.last_block_tick = self.now;
                Ok(())
            }
            // Every queued transaction was invalid right now (usually
            // out-of-order gossip); they stay queued for the next round.
            Err(RoundError::Propose(crate::consensus::ProposeError::EmptyProposal)) => Ok(()),
            Err(e) => Err(SimError::Consensus(e)),
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.seed_initial_events();
        while let Some(Reverse(event)) = self.heap.pop() {
            if event.at > self.config.duration {
                break;
            }
            debug_assert!(event.at >= self.now, "event causality violated");
            self.now = event.at;
            match event.kind {
                EventKind::DeviceLog { site, device, epoch } => {
                    if epoch == self.device_state[site][device].epoch {
                        self.on_device_log(site, device)?;
                    }
                }
                EventKind::Deliver { to, from, tx } => self.on_deliver(to, from, tx)?,
                EventKind::ProposeTimer => {
                    if self.now > self.last_block_tick {
                        self.try_round()?;
                    }
                    let next = self.now + PROPOSE_TIMER_INTERVAL;
                    if next <= self.config.duration {
                        self.schedule(next, EventKind::ProposeTimer);
                    }
                }
                EventKind::ProposeNow => {
                    self.propose_pending = false;
                    self.try_round()?;
                }
                EventKind::AttackStart { site, device, kind } => {
                    let state = &mut self.device_state[site][device];
                    state.active = Some(kind);
                    if kind == AttackKind::Flooding {
                        // The flood begins immediately: retire the scheduled
                        // emission and start a fresh one now.
                        state.epoch += 1;
                        let epoch = state.epoch;
                        self.schedule(self.now, EventKind::DeviceLog { site, device, epoch });
                    }
                }
                EventKind::AttackEnd { site, device } => {
                    self.device_state[site][device].active = None;
                }
            }
        }
        self.now = self.config.duration;
        // Final flush: drain deliverable transactions; stop when a round
        // makes no progress (stragglers whose parents never arrived).
        loop {
            if self.pool.is_empty() {
                break;
            }
            let before = self.chain.height();
            self.try_round()?;
            if self.chain.height() == before {
                break;
            }
        }
        Ok(())
    }

    fn into_output(self) -> SimOutput {
        let mut sources = Vec::new();
        for site in &self.topo.sites {
            for device in &site.devices {
                sources.push(SourceMeta {
                    name: device.name.clone(),
                    site_id: site.site_id.clone(),
                    kind: device.kind.record_kind(),
                    pk: device.pk,
                });
            }
        }
        SimOutput {
            chain: self.chain,
            sources,
            records: self.records,
            record_tx_ids: self.record_tx_ids,
            uncommitted: self.pool.len(),
            rounds: self.stats_rounds,
            skipped_validations: self.stats_skipped,
            authority: self.authority,
            data_key: self.data_key,
            manager_keys: self.manager_keys,
            device_keys: self.device_keys,
        }
    }
}

fn base_interval(kind: DeviceKind) -> u64 {
    match kind {
        DeviceKind::Sensor => 16,
        DeviceKind::Actuator => 18,
        DeviceKind::NetworkTap => 12,
    }
}

/// Execute a full simulation run. Identical `(config, topo)` produce
/// byte-identical outputs.
pub fn run_simulation(config: &SimConfig, topo: &SiteTopology) -> Result<SimOutput, SimError> {
    let mut sim = Sim::new(config, topo)?;
    sim.run()?;
    Ok(sim.into_output())
}

/// The default attack mix for a profile: bursts aligned to 50-tick window
/// boundaries, three windows on and seven off, rotating over the profile's
/// attackable sources. Spoofing hits network taps, in-path manipulation
/// hits physical stages, flooding rotates over everything.
pub fn default_scenario(profile: Profile, seed: u64, duration: u64) -> SimConfig {
    let mut config = SimConfig::new(seed, duration);
    let plan: Vec<(AttackKind, &str, &str)> = match profile {
        Profile::SwatLike => alloc::vec![
            (AttackKind::Mitm, "site-a", "site-a/sensors"),
            (AttackKind::Spoofing, "site-a", "site-a/tap"),
            (AttackKind::Mitm, "site-a", "site-a/actuators"),
        ],
        Profile::FactoryLike => alloc::vec![
            (AttackKind::Flooding, "site-b", "site-b/conveyor"),
            (AttackKind::Flooding, "site-b", "site-b/tap"),
            (AttackKind::Flooding, "site-b", "site-b/tank"),
            (AttackKind::Flooding, "site-b", "site-b/vessel"),
        ],
        Profile::TwoSite => alloc::vec![
            (AttackKind::Mitm, "site-a", "site-a/sensors"),
            (AttackKind::Flooding, "site-b", "site-b/tap"),
            (AttackKind::Spoofing, "site-a", "site-a/tap"),
            (AttackKind::Flooding, "site-b", "site-b/conveyor"),
        ],
    };
    let cycle = 1000u64; // 20 windows of 50 ticks
    let burst = 150u64; // 3 windows: 15% anomalous overall
    let mut k = 0usize;
    let mut start = 100u64;
    while start + burst <= duration {
        let (kind, site, source) = plan[k % plan.len()];
        config.attacks.push(AttackSpec {
            kind,
            site: site.to_string(),
            source: source.to_string(),
            start,
            end: start + burst,
        });
        k += 1;
        start += cycle;
    }
    config
}
