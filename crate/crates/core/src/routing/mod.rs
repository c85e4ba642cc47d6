//! On-demand source routing with NIx-vectors.
//!
//! No node keeps a routing table. A route is computed by breadth-first
//! search when first needed, encoded as a [`NixVector`] and cached in a
//! bounded LRU keyed by (source, destination). Forwarders decode their hop
//! from the vector carried in the packet.

mod nix;

use std::collections::VecDeque;
use std::num::NonZeroUsize;

use lru::LruCache;

pub use nix::{index_width, NixVector};

use crate::radio::{coverage_radius, receivable, PipelineConfig};
use crate::topology::{NodeId, Topology};

pub const DEFAULT_CACHE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("no route from {src} to {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
    #[error("route exhausted at node {0}")]
    RouteExhausted(NodeId),
    #[error("corrupt route at node {node}: index {index} but degree {degree}")]
    CorruptRoute {
        node: NodeId,
        index: u32,
        degree: usize,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Read-only connectivity view. Neighbor lists must come back sorted by
/// ascending id: hop indices are positions in that order.
pub trait Connectivity {
    fn node_count(&self) -> usize;
    fn neighbors(&self, node: NodeId, out: &mut Vec<NodeId>);
}

/// Explicit adjacency lists.
#[derive(Debug, Clone, Default)]
pub struct AdjacencyList {
    lists: Vec<Vec<NodeId>>,
}

impl AdjacencyList {
    pub fn new(n: usize) -> Self {
        AdjacencyList {
            lists: vec![Vec::new(); n],
        }
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.lists[x.index()];
            if let Err(pos) = list.binary_search(&y) {
                list.insert(pos, y);
            }
        }
    }
}

impl Connectivity for AdjacencyList {
    fn node_count(&self) -> usize {
        self.lists.len()
    }

    fn neighbors(&self, node: NodeId, out: &mut Vec<NodeId>) {
        out.clear();
        if let Some(list) = self.lists.get(node.index()) {
            out.extend_from_slice(list);
        }
    }
}

/// Adjacency implied by the radio model: pairs that clear the closure and
/// the reception threshold.
pub struct RadioConnectivity<'a> {
    topology: &'a Topology,
    pipeline: &'a PipelineConfig,
}

impl<'a> RadioConnectivity<'a> {
    pub fn new(topology: &'a Topology, pipeline: &'a PipelineConfig) -> Self {
        RadioConnectivity { topology, pipeline }
    }
}

impl Connectivity for RadioConnectivity<'_> {
    fn node_count(&self) -> usize {
        self.topology.len()
    }

    fn neighbors(&self, node: NodeId, out: &mut Vec<NodeId>) {
        out.clear();
        let Ok(me) = self.topology.node(node) else {
            return;
        };
        let radius = coverage_radius(self.pipeline, &me.radio);
        if self
            .topology
            .neighbors_within_into(node, radius, out)
            .is_err()
        {
            return;
        }
        out.retain(|&n| {
            let other = self.topology.node(n).expect("listed by topology");
            let d = me.position.distance(&other.position);
            receivable(self.pipeline, &me.radio, &other.radio, d)
        });
    }
}

/// Shortest path by BFS, exploring neighbors in ascending id order, so the
/// chosen path has the lexicographically smallest hop-index sequence among
/// shortest paths. Returns the NIx encoding.
pub fn compute_route<C: Connectivity + ?Sized>(
    src: NodeId,
    dst: NodeId,
    graph: &C,
) -> Result<NixVector, RoutingError> {
    let n = graph.node_count();
    for id in [src, dst] {
        if id.index() >= n {
            return Err(RoutingError::UnknownNode(id));
        }
    }
    if src == dst {
        return Ok(NixVector::new());
    }
    const UNSEEN: u32 = u32::MAX;
    let mut parent = vec![UNSEEN; n];
    parent[src.index()] = src.0;
    let mut queue = VecDeque::from([src]);
    let mut buf = Vec::new();
    'search: while let Some(u) = queue.pop_front() {
        graph.neighbors(u, &mut buf);
        for &v in &buf {
            if parent[v.index()] == UNSEEN {
                parent[v.index()] = u.0;
                if v == dst {
                    break 'search;
                }
                queue.push_back(v);
            }
        }
    }
    if parent[dst.index()] == UNSEEN {
        return Err(RoutingError::NoRoute { src, dst });
    }
    let mut path = vec![dst];
    let mut at = dst;
    while at != src {
        at = NodeId(parent[at.index()]);
        path.push(at);
    }
    path.reverse();
    let mut route = NixVector::new();
    for hop in path.windows(2) {
        graph.neighbors(hop[0], &mut buf);
        let index = buf.binary_search(&hop[1]).expect("BFS edge exists");
        route.push(index as u32, index_width(buf.len()));
    }
    Ok(route)
}

/// Decodes the hop for `node` and advances the route cursor.
pub fn next_hop<C: Connectivity + ?Sized>(
    node: NodeId,
    route: &mut NixVector,
    graph: &C,
) -> Result<NodeId, RoutingError> {
    if route.is_exhausted() {
        return Err(RoutingError::RouteExhausted(node));
    }
    let mut buf = Vec::new();
    graph.neighbors(node, &mut buf);
    let index = route
        .read(index_width(buf.len()))
        .ok_or(RoutingError::RouteExhausted(node))?;
    buf.get(index as usize)
        .copied()
        .ok_or(RoutingError::CorruptRoute {
            node,
            index,
            degree: buf.len(),
        })
}

#[derive(Debug, Clone)]
struct CachedRoute {
    generation: u64,
    route: NixVector,
}

/// Route cache plus instrumentation.
pub struct Router {
    cache: LruCache<(NodeId, NodeId), CachedRoute>,
    generation: u64,
    routes_computed: u64,
    cache_hits: u64,
}

impl Default for Router {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl Router {
    pub fn new(capacity: usize) -> Self {
        Router {
            cache: LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("nonzero")),
            generation: 0,
            routes_computed: 0,
            cache_hits: 0,
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn routes_computed(&self) -> u64 {
        self.routes_computed
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits
    }

    pub fn cached_routes(&self) -> usize {
        self.cache.len()
    }

    /// Cached route if still current, otherwise a fresh BFS.
    pub fn route<C: Connectivity + ?Sized>(
        &mut self,
        src: NodeId,
        dst: NodeId,
        graph: &C,
    ) -> Result<NixVector, RoutingError> {
        if let Some(hit) = self.cache.get(&(src, dst)) {
            if hit.generation == self.generation {
                self.cache_hits += 1;
                return Ok(hit.route.clone());
            }
        }
        let route = compute_route(src, dst, graph)?;
        self.routes_computed += 1;
        self.cache.put(
            (src, dst),
            CachedRoute {
                generation: self.generation,
                route: route.clone(),
            },
        );
        Ok(route)
    }

    /// Marks every cached route stale (topology changed).
    pub fn invalidate(&mut self) {
        self.generation += 1;
        self.cache.clear();
    }

    /// Bytes held by cached routes and their keys.
    pub fn memory_bytes(&self) -> usize {
        self.cache
            .iter()
            .map(|(k, v)| {
                std::mem::size_of_val(k) + std::mem::size_of::<u64>() + v.route.memory_bytes()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: u32) -> AdjacencyList {
        let mut g = AdjacencyList::new(n as usize);
        for i in 1..n {
            g.add_edge(NodeId(i - 1), NodeId(i));
        }
        g
    }

    #[test]
    fn line_route_indices() {
        let g = line(3);
        let mut r = compute_route(NodeId(0), NodeId(2), &g).unwrap();
        assert_eq!(r.hops(), 2);
        // A has neighbors [B] -> index 0 in 1 bit; B has [A, C] -> index 1 in 1 bit
        assert_eq!(r.len_bits(), 2);
        assert_eq!(next_hop(NodeId(0), &mut r, &g), Ok(NodeId(1)));
        assert_eq!(next_hop(NodeId(1), &mut r, &g), Ok(NodeId(2)));
        assert_eq!(
            next_hop(NodeId(2), &mut r, &g),
            Err(RoutingError::RouteExhausted(NodeId(2)))
        );
    }

    #[test]
    fn identity_and_disconnected() {
        let mut g = line(3);
        assert_eq!(compute_route(NodeId(1), NodeId(1), &g).unwrap().hops(), 0);
        g = AdjacencyList::new(3);
        g.add_edge(NodeId(0), NodeId(1));
        assert_eq!(
            compute_route(NodeId(0), NodeId(2), &g),
            Err(RoutingError::NoRoute {
                src: NodeId(0),
                dst: NodeId(2)
            })
        );
    }

    #[test]
    fn hop_width_follows_degree() {
        let mut star = AdjacencyList::new(5);
        for i in 1..5 {
            star.add_edge(NodeId(0), NodeId(i));
        }
        let mut r = compute_route(NodeId(0), NodeId(4), &star).unwrap();
        assert_eq!(r.len_bits(), 2);
        next_hop(NodeId(0), &mut r, &star).unwrap();
        assert_eq!(r.cursor(), 2);
    }

    #[test]
    fn corrupt_index_detected() {
        let mut g = AdjacencyList::new(4);
        for i in 1..4 {
            g.add_edge(NodeId(0), NodeId(i));
        }
        // degree 3 -> 2 bits; a hand-built vector whose bits decode to 3
        let mut v = NixVector::new();
        v.push(3, 2);
        assert_eq!(
            next_hop(NodeId(0), &mut v, &g),
            Err(RoutingError::CorruptRoute {
                node: NodeId(0),
                index: 3,
                degree: 3
            })
        );
    }

    #[test]
    fn cache_hits_and_invalidation() {
        let g = line(4);
        let mut router = Router::default();
        router.route(NodeId(0), NodeId(3), &g).unwrap();
        router.route(NodeId(0), NodeId(3), &g).unwrap();
        assert_eq!((router.routes_computed(), router.cache_hits()), (1, 1));
        router.invalidate();
        router.route(NodeId(0), NodeId(3), &g).unwrap();
        assert_eq!((router.routes_computed(), router.cache_hits()), (2, 1));
    }

    #[test]
    fn cache_is_bounded() {
        let g = line(10);
        let mut router = Router::new(3);
        for d in 1..10 {
            router.route(NodeId(0), NodeId(d), &g).unwrap();
        }
        assert_eq!(router.cached_routes(), 3);
    }
}
