//! Discrete-event simulation of multi-node adapter serving.
//!
//! Each retained topic's adapter lives on one node. A node keeps at most `C`
//! adapters resident in an LRU cache; a request for a non-resident adapter
//! pays a load cost and may evict. Requests are processed one at a time in
//! trace order, and costs are abstract integer units.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::RoutingDecision;
use crate::topic_model::TopicModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementPolicy {
    /// `topic mod N`.
    Hash,
    /// Retained topics in index order dealt to nodes cyclically.
    RoundRobin,
    /// Largest topic first onto the least-loaded node, load = doc count.
    SizeBalanced,
}

impl FromStr for PlacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash" => Ok(Self::Hash),
            "rr" | "round_robin" => Ok(Self::RoundRobin),
            "balanced" | "size_balanced" => Ok(Self::SizeBalanced),
            other => Err(Error::InvalidConfig(format!(
                "unknown placement policy {other:?} (expected hash, rr or balanced)"
            ))),
        }
    }
}

/// Node of every retained topic under `policy`. Ties in the balanced policy
/// go to the larger topic index last and the lower node first.
pub fn place(model: &TopicModel, num_nodes: usize, policy: PlacementPolicy) -> Result<BTreeMap<usize, usize>> {
    if num_nodes == 0 {
        return Err(Error::InvalidConfig("num_nodes must be >= 1".into()));
    }
    let topics: Vec<usize> = model.retained_topics().collect();
    Ok(match policy {
        PlacementPolicy::Hash => topics.iter().map(|&t| (t, t % num_nodes)).collect(),
        PlacementPolicy::RoundRobin => topics
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i % num_nodes))
            .collect(),
        PlacementPolicy::SizeBalanced => {
            let mut order = topics;
            order.sort_by_key(|&t| (std::cmp::Reverse(model.doc_counts[t]), t));
            let mut load = vec![0u64; num_nodes];
            let mut map = BTreeMap::new();
            for t in order {
                let node = (0..num_nodes).min_by_key(|&n| (load[n], n)).expect("N >= 1");
                load[node] += model.doc_counts[t];
                map.insert(t, node);
            }
            map
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of one forward pass with a resident adapter.
    pub cost_hit: u64,
    /// Extra cost of moving an adapter into a node's cache.
    pub cost_load: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            cost_hit: 1,
            cost_load: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub num_nodes: usize,
    pub cache_capacity: usize,
    pub placement: BTreeMap<usize, usize>,
    pub costs: CostModel,
    /// Node that serves fallback requests with the bare base model.
    pub base_node: usize,
}

impl Topology {
    pub fn new(
        model: &TopicModel,
        num_nodes: usize,
        cache_capacity: usize,
        policy: PlacementPolicy,
        costs: CostModel,
    ) -> Result<Self> {
        let t = Self {
            num_nodes,
            cache_capacity,
            placement: place(model, num_nodes, policy)?,
            costs,
            base_node: 0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.cache_capacity == 0 {
            return Err(Error::InvalidConfig("need num_nodes >= 1 and cache_capacity >= 1".into()));
        }
        if self.base_node >= self.num_nodes {
            return Err(Error::InvalidConfig("base node out of range".into()));
        }
        if let Some((t, n)) = self.placement.iter().find(|(_, &n)| n >= self.num_nodes) {
            return Err(Error::InvalidConfig(format!("topic {t} placed on missing node {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Hit,
    Miss,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub query_id: u64,
    pub node: usize,
    pub kind: EventKind,
    pub topic_id: Option<usize>,
    pub evicted: Option<usize>,
    pub cost: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node_id: usize,
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub evictions: u64,
    pub fallback_count: u64,
    pub unique_adapters_used: usize,
    pub total_cost: u64,
    pub busy_time: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServingMetrics {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub total_cost: u64,
    pub evictions: u64,
    pub unique_adapters_used: usize,
    pub fallback_count: u64,
    pub per_node: Vec<NodeMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub metrics: ServingMetrics,
    pub events: Vec<Event>,
}

struct NodeState {
    /// Front is least recently used.
    resident: IndexSet<usize>,
    m: NodeMetrics,
    used: BTreeSet<usize>,
}

fn rate(hits: u64, misses: u64) -> f64 {
    if hits + misses == 0 {
        0.0
    } else {
        hits as f64 / (hits + misses) as f64
    }
}

pub fn simulate(topology: &Topology, decisions: &[RoutingDecision]) -> Result<Simulation> {
    topology.validate()?;
    let cap = topology.cache_capacity;
    let CostModel { cost_hit, cost_load } = topology.costs;
    let mut nodes: Vec<NodeState> = (0..topology.num_nodes)
        .map(|node_id| NodeState {
            resident: IndexSet::with_capacity(cap + 1),
            m: NodeMetrics {
                node_id,
                ..Default::default()
            },
            used: BTreeSet::new(),
        })
        .collect();
    let mut events = Vec::with_capacity(decisions.len());

    for d in decisions {
        let event = match d.expert() {
            None if d.fallback => {
                let n = &mut nodes[topology.base_node];
                n.m.fallback_count += 1;
                Event {
                    query_id: d.query_id,
                    node: topology.base_node,
                    kind: EventKind::Fallback,
                    topic_id: d.topic_id,
                    evicted: None,
                    cost: cost_hit,
                }
            }
            None => {
                return Err(Error::Invalid(format!(
                    "query {} has neither a topic nor a fallback",
                    d.query_id
                )))
            }
            Some(topic) => {
                let node = *topology
                    .placement
                    .get(&topic)
                    .ok_or_else(|| Error::Invalid(format!("topic {topic} is not placed on any node")))?;
                let n = &mut nodes[node];
                n.used.insert(topic);
                let (kind, evicted, cost) = if n.resident.shift_remove(&topic) {
                    n.resident.insert(topic);
                    n.m.hits += 1;
                    (EventKind::Hit, None, cost_hit)
                } else {
                    n.resident.insert(topic);
                    n.m.misses += 1;
                    let evicted = if n.resident.len() > cap {
                        n.m.evictions += 1;
                        n.resident.shift_remove_index(0)
                    } else {
                        None
                    };
                    (EventKind::Miss, evicted, cost_hit + cost_load)
                };
                debug_assert!(n.resident.len() <= cap);
                Event {
                    query_id: d.query_id,
                    node,
                    kind,
                    topic_id: Some(topic),
                    evicted,
                    cost,
                }
            }
        };
        let n = &mut nodes[event.node];
        n.m.requests += 1;
        n.m.total_cost += event.cost;
        n.m.busy_time += event.cost;
        events.push(event);
    }

    let mut g = ServingMetrics::default();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for n in &mut nodes {
        n.m.hit_rate = rate(n.m.hits, n.m.misses);
        n.m.unique_adapters_used = n.used.len();
        used.extend(&n.used);
        g.requests += n.m.requests;
        g.hits += n.m.hits;
        g.misses += n.m.misses;
        g.total_cost += n.m.total_cost;
        g.evictions += n.m.evictions;
        g.fallback_count += n.m.fallback_count;
    }
    g.hit_rate = rate(g.hits, g.misses);
    g.unique_adapters_used = used.len();
    g.per_node = nodes.into_iter().map(|n| n.m).collect();
    Ok(Simulation { metrics: g, events })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

pub fn report(metrics: &ServingMetrics, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return Ok(serde_json::to_string_pretty(metrics)?);
    }
    let mut s = String::new();
    let m = metrics;
    let _ = writeln!(s, "requests             {}", m.requests);
    let _ = writeln!(s, "hits / misses        {} / {}", m.hits, m.misses);
    let _ = writeln!(s, "hit rate             {:.4}", m.hit_rate);
    let _ = writeln!(s, "evictions            {}", m.evictions);
    let _ = writeln!(s, "fallback requests    {}", m.fallback_count);
    let _ = writeln!(s, "unique adapters used {}", m.unique_adapters_used);
    let _ = writeln!(s, "total cost           {}", m.total_cost);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>4} {:>8} {:>6} {:>6} {:>8} {:>9} {:>8} {:>8} {:>10}",
        "node", "requests", "hits", "misses", "hit_rate", "evictions", "fallback", "adapters", "busy_time"
    );
    for n in &m.per_node {
        let _ = writeln!(
            s,
            "{:>4} {:>8} {:>6} {:>6} {:>8.4} {:>9} {:>8} {:>8} {:>10}",
            n.node_id,
            n.requests,
            n.hits,
            n.misses,
            n.hit_rate,
            n.evictions,
            n.fallback_count,
            n.unique_adapters_used,
            n.busy_time
        );
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::RoutingMode;

    fn model(counts: Vec<u64>, retained: Vec<bool>) -> TopicModel {
        let k = counts.len();
        TopicModel {
            k,
            dim: 1,
            centroids: vec![0.0; k],
            doc_counts: counts,
            retained,
            keywords: None,
            kmeans_seed: 0,
        }
    }

    fn req(topic: usize) -> RoutingDecision {
        RoutingDecision {
            query_id: 0,
            topic_id: Some(topic),
            similarity: 0.0,
            fallback: false,
            mode: RoutingMode::Fallback,
        }
    }

    fn topo(n: usize, c: usize, placement: BTreeMap<usize, usize>) -> Topology {
        Topology {
            num_nodes: n,
            cache_capacity: c,
            placement,
            costs: CostModel::default(),
            base_node: 0,
        }
    }

    #[test]
    fn placement_policies() {
        let m = model(vec![1; 6], vec![true; 6]);
        let hash: Vec<usize> = place(&m, 3, PlacementPolicy::Hash).unwrap().into_values().collect();
        assert_eq!(hash, vec![0, 1, 2, 0, 1, 2]);
        assert!(place(&m, 1, PlacementPolicy::RoundRobin).unwrap().values().all(|&n| n == 0));
        let pruned = model(vec![1; 4], vec![true, false, true, true]);
        let rr = place(&pruned, 2, PlacementPolicy::RoundRobin).unwrap();
        assert_eq!(rr, BTreeMap::from([(0, 0), (2, 1), (3, 0)]));
        assert_eq!(place(&pruned, 2, PlacementPolicy::Hash).unwrap().len(), 3);
        assert!(place(&m, 0, PlacementPolicy::Hash).is_err());
    }

    #[test]
    fn balanced_hand_trace() {
        let m = model(vec![10, 9, 2, 1], vec![true; 4]);
        let p = place(&m, 2, PlacementPolicy::SizeBalanced).unwrap();
        assert_eq!(p, BTreeMap::from([(0, 0), (1, 1), (2, 1), (3, 0)]));
        let mut load = [0u64; 2];
        for (t, n) in p {
            load[n] += m.doc_counts[t];
        }
        assert_eq!(load, [11, 11]);
    }

    #[test]
    fn thrash_with_capacity_one() {
        let t = topo(1, 1, BTreeMap::from([(0, 0), (1, 0)]));
        let sim = simulate(&t, &[req(0), req(1), req(0), req(1)]).unwrap();
        let m = &sim.metrics;
        assert_eq!((m.hits, m.misses, m.evictions), (0, 4, 3));
        assert_eq!(m.total_cost, 44);
        assert_eq!(sim.events[1].evicted, Some(0));
    }

    #[test]
    fn cold_start_only_when_everything_fits() {
        let t = topo(1, 3, BTreeMap::from([(0, 0), (1, 0), (2, 0)]));
        let trace: Vec<_> = [0, 1, 2, 1, 0, 2, 2].iter().map(|&x| req(x)).collect();
        let m = simulate(&t, &trace).unwrap().metrics;
        assert_eq!((m.misses, m.hits, m.evictions), (3, 4, 0));
        assert_eq!(m.unique_adapters_used, 3);
    }

    #[test]
    fn fallback_touches_no_cache() {
        let t = topo(2, 1, BTreeMap::from([(0, 1)]));
        let mut fb = req(5);
        fb.fallback = true;
        let sim = simulate(&t, &[req(0), fb.clone(), req(0)]).unwrap();
        let m = &sim.metrics;
        assert_eq!((m.hits, m.misses, m.fallback_count), (1, 1, 1));
        assert_eq!(m.total_cost, 1 + 11 + 1);
        assert_eq!(m.per_node[0].fallback_count, 1);
        assert_eq!(m.unique_adapters_used, 1);
    }

    #[test]
    fn unplaced_topic_is_an_error() {
        let t = topo(1, 1, BTreeMap::from([(0, 0)]));
        assert!(simulate(&t, &[req(3)]).is_err());
        assert!(simulate(&topo(1, 0, BTreeMap::new()), &[]).is_err());
    }

    #[test]
    fn empty_trace_and_json_round_trip() {
        let t = topo(2, 2, BTreeMap::from([(0, 0), (1, 1)]));
        let empty = simulate(&t, &[]).unwrap().metrics;
        assert_eq!((empty.requests, empty.total_cost, empty.hit_rate), (0, 0, 0.0));
        let m = simulate(&t, &[req(0), req(1), req(0)]).unwrap().metrics;
        let json = report(&m, ReportFormat::Json).unwrap();
        for field in ["requests", "hit_rate", "total_cost", "evictions", "unique_adapters_used", "fallback_count"] {
            assert!(json.contains(&format!("\"{field}\"")), "{field}");
        }
        let back: ServingMetrics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let text = report(&m, ReportFormat::Text).unwrap();
        assert!(text.contains("hit rate"));
    }
}
