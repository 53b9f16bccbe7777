//! Deterministic discrete-event core: topology, clock, event queue and
//! hop-by-hop routing.
//!
//! Time is an integer tick. Events are dequeued in `(time, seq)` order where
//! `seq` is assigned at enqueue and never reused; this is the backbone of the
//! determinism contract.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;

/// Simulation time in ticks.
pub type Tick = u64;

/// Default maximum payload size in bytes.
pub const DEFAULT_MTU: usize = 1500;

/// Identifier of a network node.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Identifier of an area (one lymph node per area).
pub type AreaId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("edge references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("graph is not connected")]
    Disconnected,
    #[error("node {0} belongs to {1} areas, expected exactly one")]
    BadAreaCover(NodeId, usize),
    #[error("area {0} has no lymph host")]
    MissingLymphHost(AreaId),
    #[error("lymph host {0} is not a member of area {1}")]
    LymphHostOutsideArea(NodeId, AreaId),
    #[error("cnts host {0} is not a topology node")]
    CntsHostUnknown(NodeId),
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
}

/// Static network graph plus its administrative partition into areas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    areas: BTreeMap<AreaId, BTreeSet<NodeId>>,
    area_of: BTreeMap<NodeId, AreaId>,
    lymph_hosts: BTreeMap<AreaId, NodeId>,
    cnts_host: NodeId,
}

impl Topology {
    /// Builds and validates a topology. Edges are stored unordered
    /// (normalized to `(min, max)`).
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        areas: BTreeMap<AreaId, BTreeSet<NodeId>>,
        lymph_hosts: BTreeMap<AreaId, NodeId>,
        cnts_host: NodeId,
    ) -> Result<Self, TopologyError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut norm = BTreeSet::new();
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> =
            nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        for (a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            for n in [a, b] {
                if !nodes.contains(&n) {
                    return Err(TopologyError::UnknownNode(n));
                }
            }
            let e = if a < b { (a, b) } else { (b, a) };
            norm.insert(e);
            adjacency.get_mut(&a).unwrap().insert(b);
            adjacency.get_mut(&b).unwrap().insert(a);
        }

        // Connectivity over all nodes.
        let start = *nodes.iter().next().unwrap();
        let mut seen = BTreeSet::from([start]);
        let mut frontier = VecDeque::from([start]);
        while let Some(n) = frontier.pop_front() {
            for &m in &adjacency[&n] {
                if seen.insert(m) {
                    frontier.push_back(m);
                }
            }
        }
        if seen.len() != nodes.len() {
            return Err(TopologyError::Disconnected);
        }

        // Areas partition the node set.
        let mut area_of = BTreeMap::new();
        for (&aid, members) in &areas {
            for &n in members {
                if !nodes.contains(&n) {
                    return Err(TopologyError::UnknownNode(n));
                }
                if area_of.insert(n, aid).is_some() {
                    return Err(TopologyError::BadAreaCover(n, 2));
                }
            }
        }
        for &n in &nodes {
            if !area_of.contains_key(&n) {
                return Err(TopologyError::BadAreaCover(n, 0));
            }
        }
        for (&aid, members) in &areas {
            let host = lymph_hosts
                .get(&aid)
                .copied()
                .ok_or(TopologyError::MissingLymphHost(aid))?;
            if !members.contains(&host) {
                return Err(TopologyError::LymphHostOutsideArea(host, aid));
            }
        }
        if !nodes.contains(&cnts_host) {
            return Err(TopologyError::CntsHostUnknown(cnts_host));
        }

        Ok(Self {
            nodes,
            edges: norm,
            adjacency,
            areas,
            area_of,
            lymph_hosts,
            cnts_host,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&n).into_iter().flatten().copied()
    }

    pub fn areas(&self) -> &BTreeMap<AreaId, BTreeSet<NodeId>> {
        &self.areas
    }

    pub fn area_of(&self, n: NodeId) -> AreaId {
        self.area_of[&n]
    }

    pub fn area_members(&self, area: AreaId) -> impl Iterator<Item = NodeId> + '_ {
        self.areas.get(&area).into_iter().flatten().copied()
    }

    pub fn lymph_hosts(&self) -> &BTreeMap<AreaId, NodeId> {
        &self.lymph_hosts
    }

    pub fn lymph_host(&self, area: AreaId) -> NodeId {
        self.lymph_hosts[&area]
    }

    pub fn is_lymph_host(&self, n: NodeId) -> bool {
        self.lymph_hosts.values().any(|&h| h == n)
    }

    pub fn cnts_host(&self) -> NodeId {
        self.cnts_host
    }

    /// Hop-count diameter over the full (healthy) graph.
    pub fn diameter(&self) -> u64 {
        let mut best = 0;
        for &n in &self.nodes {
            let dist = self.bfs_distances(n, |_| true);
            for (_, d) in dist {
                best = best.max(d);
            }
        }
        best
    }

    /// BFS distances from `from` over nodes accepted by `usable`.
    /// `from` itself is always included.
    pub fn bfs_distances(
        &self,
        from: NodeId,
        usable: impl Fn(NodeId) -> bool,
    ) -> BTreeMap<NodeId, u64> {
        let mut dist = BTreeMap::from([(from, 0u64)]);
        let mut frontier = VecDeque::from([from]);
        while let Some(n) = frontier.pop_front() {
            let d = dist[&n];
            for &m in &self.adjacency[&n] {
                if usable(m) && !dist.contains_key(&m) {
                    dist.insert(m, d + 1);
                    frontier.push_back(m);
                }
            }
        }
        dist
    }
}

/// Line topology `0 - 1 - ... - n-1` split into `areas` contiguous chunks.
pub fn line_topology(n: u32, areas: u32) -> Result<Topology, TopologyError> {
    if n == 0 || areas == 0 || areas > n {
        return Err(TopologyError::BadParams(format!(
            "line with {n} nodes and {areas} areas"
        )));
    }
    let nodes: Vec<NodeId> = (0..n).map(NodeId).collect();
    let edges: Vec<(NodeId, NodeId)> = (1..n).map(|i| (NodeId(i - 1), NodeId(i))).collect();
    build_with_chunk_areas(nodes, edges, areas)
}

/// Rectangular grid (row-major ids) split into `areas` column bands.
pub fn grid_topology(width: u32, height: u32, areas: u32) -> Result<Topology, TopologyError> {
    if width == 0 || height == 0 || areas == 0 || areas > width {
        return Err(TopologyError::BadParams(format!(
            "grid {width}x{height} with {areas} areas"
        )));
    }
    let id = |r: u32, c: u32| NodeId(r * width + c);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..height {
        for c in 0..width {
            nodes.push(id(r, c));
            if c + 1 < width {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < height {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    // Column bands keep each area internally connected.
    let mut area_map: BTreeMap<AreaId, BTreeSet<NodeId>> = BTreeMap::new();
    for r in 0..height {
        for c in 0..width {
            let band = (c as u64 * areas as u64 / width as u64) as AreaId;
            area_map.entry(band).or_default().insert(id(r, c));
        }
    }
    finish_areas(nodes, edges, area_map)
}

/// Random geometric graph: `n` seeded uniform points in the unit square,
/// nodes within `radius` connected, then stitched connected by linking the
/// closest pair across components. Areas are `areas` equal bands by x
/// coordinate.
pub fn geometric_topology(
    n: u32,
    radius: f64,
    areas: u32,
    rng: &mut StreamRng,
) -> Result<Topology, TopologyError> {
    if n == 0 || areas == 0 || areas > n || !(0.0..=2.0).contains(&radius) {
        return Err(TopologyError::BadParams(format!(
            "geometric with {n} nodes, radius {radius}, {areas} areas"
        )));
    }
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    for i in 0..n as usize {
        for j in (i + 1)..n as usize {
            if d2(pts[i], pts[j]) <= radius * radius {
                edges.push((NodeId(i as u32), NodeId(j as u32)));
            }
        }
    }
    // Union-find to stitch components.
    let mut parent: Vec<usize> = (0..n as usize).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a.0 as usize), find(&mut parent, b.0 as usize));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    loop {
        let roots: BTreeSet<usize> = (0..n as usize).map(|i| find(&mut parent, i)).collect();
        if roots.len() <= 1 {
            break;
        }
        let first_root = *roots.iter().next().unwrap();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n as usize {
            if find(&mut parent, i) != first_root {
                continue;
            }
            for j in 0..n as usize {
                if find(&mut parent, j) == first_root {
                    continue;
                }
                let d = d2(pts[i], pts[j]);
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.unwrap();
        edges.push((NodeId(i as u32), NodeId(j as u32)));
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        parent[ri] = rj;
    }
    // Bands by x coordinate.
    let mut order: Vec<usize> = (0..n as usize).collect();
    order.sort_by(|&a, &b| pts[a].0.partial_cmp(&pts[b].0).unwrap().then(a.cmp(&b)));
    let mut area_map: BTreeMap<AreaId, BTreeSet<NodeId>> = BTreeMap::new();
    for (rank, &i) in order.iter().enumerate() {
        let band = (rank as u64 * areas as u64 / n as u64) as AreaId;
        area_map.entry(band).or_default().insert(NodeId(i as u32));
    }
    finish_areas((0..n).map(NodeId).collect(), edges, area_map)
}

fn build_with_chunk_areas(
    nodes: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    areas: u32,
) -> Result<Topology, TopologyError> {
    let n = nodes.len() as u64;
    let mut area_map: BTreeMap<AreaId, BTreeSet<NodeId>> = BTreeMap::new();
    for (i, &node) in nodes.iter().enumerate() {
        let band = (i as u64 * areas as u64 / n) as AreaId;
        area_map.entry(band).or_default().insert(node);
    }
    finish_areas(nodes, edges, area_map)
}

/// Lymph host defaults to the median member of each area; the CNTS host to
/// the median node of the whole topology.
fn finish_areas(
    nodes: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    area_map: BTreeMap<AreaId, BTreeSet<NodeId>>,
) -> Result<Topology, TopologyError> {
    let mut lymph_hosts = BTreeMap::new();
    for (&aid, members) in &area_map {
        let sorted: Vec<NodeId> = members.iter().copied().collect();
        lymph_hosts.insert(aid, sorted[sorted.len() / 2]);
    }
    let sorted: Vec<NodeId> = nodes.iter().copied().collect();
    let cnts_host = sorted[sorted.len() / 2];
    Topology::new(nodes, edges, area_map, lymph_hosts, cnts_host)
}

/// Transport protocol of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    Tcp,
    Udp,
    Other,
}

impl Protocol {
    /// Wire number used in the pattern encoding (IANA protocol numbers).
    pub fn wire_number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Other => 0,
        }
    }
}

/// Network endpoint: node plus port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: u16,
}

#[derive(Debug, Error, PartialEq)]
pub enum PacketError {
    #[error("payload of {0} bytes exceeds MTU of {1}")]
    PayloadTooLarge(usize, usize),
    #[error("source and destination node must differ")]
    SameEndpoints,
}

/// A unit of network traffic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Packet {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub protocol: Protocol,
    #[serde(with = "serde_bytes_vec")]
    pub payload: Vec<u8>,
    pub encrypted: bool,
    pub injected_at: Tick,
}

mod serde_bytes_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.iter().map(|b| format!("{b:02x}")).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() % 2 != 0 {
            return Err(serde::de::Error::custom("odd hex length"));
        }
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl Packet {
    pub fn validate(&self, mtu: usize) -> Result<(), PacketError> {
        if self.payload.len() > mtu {
            return Err(PacketError::PayloadTooLarge(self.payload.len(), mtu));
        }
        if self.src.node == self.dst.node {
            return Err(PacketError::SameEndpoints);
        }
        Ok(())
    }
}

/// Terminal outcome of one injected packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DeliveryOutcome {
    Delivered,
    DroppedDetected,
    DroppedNoRoute,
    DroppedQuarantine,
}

/// What an event carries; the engine interprets the kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    PacketHop,
    CellMove,
    CellTick,
    MessageHop,
    ScenarioAction,
    OrganTick,
}

/// One scheduled simulation event. `seq` is assigned by the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub time: Tick,
    pub seq: u64,
    pub kind: EventKind,
    /// Kind-specific handle (packet id, cell id, message hop id, ...).
    pub subject: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("event scheduled at tick {0} is in the past (clock {1})")]
    ScheduledInPast(Tick, Tick),
    #[error("event queue is empty")]
    Empty,
}

/// Min-heap event queue ordered by `(time, seq)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(Tick, u64, EventKind, u64)>>,
    next_seq: u64,
    clock: Tick,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues an event; same-tick scheduling is allowed, the past is not.
    pub fn schedule(&mut self, time: Tick, kind: EventKind, subject: u64) -> Result<u64, QueueError> {
        if time < self.clock {
            return Err(QueueError::ScheduledInPast(time, self.clock));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((time, seq, kind, subject)));
        Ok(seq)
    }

    /// Removes and returns the minimum `(time, seq)` event, advancing the
    /// clock to its time.
    pub fn step(&mut self) -> Result<SimEvent, QueueError> {
        let Reverse((time, seq, kind, subject)) = self.heap.pop().ok_or(QueueError::Empty)?;
        self.clock = time;
        Ok(SimEvent {
            time,
            seq,
            kind,
            subject,
        })
    }
}

/// Traffic classes used by routing: data respects quarantine, admin and
/// disinfection traffic may pass through quarantined nodes. Integrity-failed
/// nodes are unusable for every class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteClass {
    Data,
    Admin,
    Disinfection,
}

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("source equals destination")]
    SameNode,
    #[error("no route from {0} to {1}")]
    Unreachable(NodeId, NodeId),
}

/// View of per-node availability that routing consults.
pub trait NodeAvailability {
    fn is_down(&self, n: NodeId) -> bool;
    fn is_quarantined(&self, n: NodeId) -> bool;
}

/// Shortest path by hop count; among equally short paths the one with the
/// lexicographically smallest node sequence (ties broken by smallest next
/// hop). Endpoints and intermediate hops must be usable for `class`.
pub fn route(
    topo: &Topology,
    from: NodeId,
    to: NodeId,
    avail: &impl NodeAvailability,
    class: RouteClass,
) -> Result<Vec<NodeId>, RouteError> {
    if !topo.contains(from) {
        return Err(RouteError::UnknownNode(from));
    }
    if !topo.contains(to) {
        return Err(RouteError::UnknownNode(to));
    }
    if from == to {
        return Err(RouteError::SameNode);
    }
    let usable = |n: NodeId| {
        if avail.is_down(n) {
            return false;
        }
        match class {
            RouteClass::Data => !avail.is_quarantined(n),
            RouteClass::Admin | RouteClass::Disinfection => true,
        }
    };
    if !usable(from) || !usable(to) {
        return Err(RouteError::Unreachable(from, to));
    }
    // Distances to the target, then greedy descent choosing the smallest
    // next-hop id; this yields the lexicographically smallest shortest path.
    let dist = topo.bfs_distances(to, usable);
    let mut path = vec![from];
    let mut cur = from;
    let mut remaining = *dist.get(&from).ok_or(RouteError::Unreachable(from, to))?;
    while cur != to {
        let next = topo
            .neighbors(cur)
            .find(|m| usable(*m) && dist.get(m) == Some(&(remaining - 1)))
            .expect("BFS distance guarantees a descending neighbor");
        path.push(next);
        cur = next;
        remaining -= 1;
    }
    Ok(path)
}
