//! Bipartite multigraph with stable handles, perfect matchings, the
//! orientation `D(G, M)` and the b⁺/b⁻/component classification derived
//! from its strongly connected components.
//!
//! Vertex ids `0..left_count` are the left side and
//! `left_count..left_count + right_count` the right side. Removing a vertex
//! or an edge only clears its alive flag, so handles held elsewhere stay
//! valid for the lifetime of the graph.

use std::collections::{HashSet, VecDeque};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::circuit::{CircuitArena, NodeId};
use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub side: Side,
    pub alive: bool,
    /// Slice `start..start + len` of the incidence pool, with room for `cap`.
    start: usize,
    len: usize,
    cap: usize,
    degree: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub left: VertexId,
    pub right: VertexId,
    /// Circuit node encoding the matchings of the input graph this edge stands for.
    pub node: NodeId,
    pub alive: bool,
}

impl Edge {
    pub fn touches(&self, v: VertexId) -> bool {
        self.left == v || self.right == v
    }
}

/// Plain edge list with 0-based side-local endpoints; the exchange format of
/// the generators and the file reader.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EdgeList {
    pub left_count: usize,
    pub right_count: usize,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn new(left_count: usize, right_count: usize) -> Self {
        EdgeList { left_count, right_count, edges: Vec::new() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BipartiteGraph {
    left_count: usize,
    right_count: usize,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    /// Incidence lists of all vertices; entries may be stale.
    pool: Vec<EdgeId>,
    live_vertices: usize,
    live_edges: usize,
}

type GraphBuffers = (Vec<Vertex>, Vec<Edge>, Vec<EdgeId>);

const POOL_LIMIT: usize = 64;

thread_local! {
    static GRAPH_POOL: std::cell::RefCell<Vec<GraphBuffers>> = const { std::cell::RefCell::new(Vec::new()) };
    static MATE_POOL: std::cell::RefCell<Vec<Vec<Option<EdgeId>>>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn recycle<T>(pool: &'static std::thread::LocalKey<std::cell::RefCell<Vec<T>>>, item: T) {
    let _ = pool.try_with(|p| {
        let mut p = p.borrow_mut();
        if p.len() < POOL_LIMIT {
            p.push(item);
        }
    });
}

impl Drop for BipartiteGraph {
    fn drop(&mut self) {
        let bufs = (std::mem::take(&mut self.vertices), std::mem::take(&mut self.edges), std::mem::take(&mut self.pool));
        recycle(&GRAPH_POOL, bufs);
    }
}

impl Clone for Matching {
    fn clone(&self) -> Self {
        let mut mate = MATE_POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
        mate.clone_from(&self.mate);
        Matching { mate }
    }
}

impl Drop for Matching {
    fn drop(&mut self) {
        recycle(&MATE_POOL, std::mem::take(&mut self.mate));
    }
}

impl BipartiteGraph {
    pub fn with_sides(left_count: usize, right_count: usize) -> Self {
        let (mut vertices, mut edges, mut pool) = GRAPH_POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
        vertices.clear();
        edges.clear();
        pool.clear();
        for i in 0..left_count + right_count {
            let side = if i < left_count { Side::Left } else { Side::Right };
            vertices.push(Vertex { side, alive: true, start: 0, len: 0, cap: 0, degree: 0 });
        }
        BipartiteGraph {
            left_count,
            right_count,
            vertices,
            edges,
            pool,
            live_vertices: left_count + right_count,
            live_edges: 0,
        }
    }

    pub fn left_count(&self) -> usize {
        self.left_count
    }

    pub fn right_count(&self) -> usize {
        self.right_count
    }

    pub fn left(&self, i: usize) -> VertexId {
        i
    }

    pub fn right(&self, j: usize) -> VertexId {
        self.left_count + j
    }

    /// Side-local index of `v` (the inverse of [`left`](Self::left) / [`right`](Self::right)).
    pub fn local_index(&self, v: VertexId) -> usize {
        if v < self.left_count {
            v
        } else {
            v - self.left_count
        }
    }

    pub fn vertex_capacity(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_capacity(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.live_vertices
    }

    pub fn edge_count(&self) -> usize {
        self.live_edges
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn side(&self, v: VertexId) -> Side {
        self.vertices[v].side
    }

    pub fn is_alive(&self, v: VertexId) -> bool {
        self.vertices[v].alive
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.vertices[v].degree
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len()).filter(move |&v| self.vertices[v].alive)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).filter(move |&e| self.edges[e].alive)
    }

    /// Raw incidence list of `v`, possibly holding dead or moved edges.
    fn slots(&self, v: VertexId) -> &[EdgeId] {
        let x = &self.vertices[v];
        &self.pool[x.start..x.start + x.len]
    }

    fn push_slot(&mut self, v: VertexId, e: EdgeId) {
        let x = &self.vertices[v];
        if x.len == x.cap {
            let (start, len) = (x.start, x.len);
            let cap = (2 * len).max(4);
            let fresh = self.pool.len();
            self.pool.extend_from_within(start..start + len);
            self.pool.resize(fresh + cap, 0);
            let x = &mut self.vertices[v];
            x.start = fresh;
            x.cap = cap;
        }
        let x = &mut self.vertices[v];
        self.pool[x.start + x.len] = e;
        x.len += 1;
    }

    /// Alive edges incident to `v`.
    pub fn incident(&self, v: VertexId) -> impl Iterator<Item = EdgeId> + '_ {
        self.slots(v).iter().copied().filter(move |&e| self.edges[e].alive && self.edges[e].touches(v))
    }

    /// Drops stale entries from the incidence list of `v`.
    pub fn tidy(&mut self, v: VertexId) {
        let Vertex { start, len, .. } = self.vertices[v];
        let mut kept = 0;
        for i in start..start + len {
            let e = self.pool[i];
            if self.edges[e].alive && self.edges[e].touches(v) {
                self.pool[start + kept] = e;
                kept += 1;
            }
        }
        self.vertices[v].len = kept;
    }

    pub fn other(&self, e: EdgeId, v: VertexId) -> VertexId {
        let edge = &self.edges[e];
        if edge.left == v {
            edge.right
        } else {
            edge.left
        }
    }

    /// Graph with the given `(left, right, node)` edges, endpoints given as
    /// vertex ids; edge `i` gets id `i`.
    pub fn from_triples<I>(left_count: usize, right_count: usize, triples: I) -> Self
    where
        I: IntoIterator<Item = (VertexId, VertexId, NodeId)>,
        I::IntoIter: Clone + ExactSizeIterator,
    {
        let triples = triples.into_iter();
        let m = triples.len();
        let mut g = BipartiteGraph::with_sides(left_count, right_count);
        for (l, r, _) in triples.clone() {
            g.vertices[l].cap += 1;
            g.vertices[r].cap += 1;
        }
        let mut start = 0;
        for x in &mut g.vertices {
            x.start = start;
            x.len = x.cap;
            x.degree = x.cap;
            start += x.cap;
            x.cap = 0;
        }
        g.pool.resize(start, 0);
        g.edges.reserve_exact(m);
        for (id, (left, right, node)) in triples.enumerate() {
            g.edges.push(Edge { left, right, node, alive: true });
            for v in [left, right] {
                let x = &mut g.vertices[v];
                g.pool[x.start + x.cap] = id;
                x.cap += 1;
            }
        }
        g.live_edges = m;
        g
    }

    pub fn add_edge(&mut self, left: VertexId, right: VertexId, node: NodeId) -> EdgeId {
        debug_assert_eq!(self.vertices[left].side, Side::Left);
        debug_assert_eq!(self.vertices[right].side, Side::Right);
        debug_assert!(self.vertices[left].alive && self.vertices[right].alive);
        let id = self.edges.len();
        self.edges.push(Edge { left, right, node, alive: true });
        for v in [left, right] {
            self.push_slot(v, id);
            self.vertices[v].degree += 1;
        }
        self.live_edges += 1;
        id
    }

    pub fn set_node(&mut self, e: EdgeId, node: NodeId) {
        self.edges[e].node = node;
    }

    pub fn remove_edge(&mut self, e: EdgeId) {
        if !self.edges[e].alive {
            return;
        }
        let Edge { left, right, .. } = self.edges[e];
        self.edges[e].alive = false;
        self.vertices[left].degree -= 1;
        self.vertices[right].degree -= 1;
        self.live_edges -= 1;
    }

    pub fn remove_vertex(&mut self, v: VertexId) {
        if !self.vertices[v].alive {
            return;
        }
        let incident: Vec<EdgeId> = self.incident(v).collect();
        for e in incident {
            self.remove_edge(e);
        }
        let vertex = &mut self.vertices[v];
        vertex.alive = false;
        vertex.len = 0;
        self.live_vertices -= 1;
    }

    /// Moves the endpoint `from` of edge `e` to vertex `to` on the same side.
    pub fn reattach(&mut self, e: EdgeId, from: VertexId, to: VertexId) {
        debug_assert_eq!(self.vertices[from].side, self.vertices[to].side);
        let edge = &mut self.edges[e];
        if edge.left == from {
            edge.left = to;
        } else {
            debug_assert_eq!(edge.right, from);
            edge.right = to;
        }
        if edge.alive {
            self.vertices[from].degree -= 1;
            self.vertices[to].degree += 1;
        }
        self.push_slot(to, e);
    }

    /// Some alive edge joining `a` and `b`, scanning the shorter incidence list.
    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        let (x, y) = if self.vertices[a].len <= self.vertices[b].len { (a, b) } else { (b, a) };
        self.incident(x).find(|&e| self.edges[e].touches(y))
    }

    /// Copy of the graph with the flagged edges removed; ids are preserved.
    pub fn without_edges(&self, removed: &[bool]) -> BipartiteGraph {
        let mut g = self.clone();
        for e in 0..g.edges.len() {
            if removed[e] {
                g.remove_edge(e);
            }
        }
        g
    }

    pub fn to_edge_list(&self) -> EdgeList {
        let mut list = EdgeList::new(self.left_count, self.right_count);
        for e in self.edge_ids() {
            let edge = &self.edges[e];
            list.edges.push((edge.left, edge.right - self.left_count));
        }
        list
    }
}

/// Builds a graph with one fresh leaf node per edge. Edge `i` of the result
/// is the `i`-th pair and its leaf stores `i`.
pub fn build_graph(
    arena: &mut CircuitArena,
    left_count: usize,
    right_count: usize,
    edge_list: &[(usize, usize)],
) -> Result<BipartiteGraph> {
    let mut g = BipartiteGraph::with_sides(left_count, right_count);
    let mut seen = HashSet::with_capacity(edge_list.len());
    for (i, &(u, v)) in edge_list.iter().enumerate() {
        if u >= left_count || v >= right_count {
            return Err(Error::MalformedInput(format!(
                "edge {i} ({u}, {v}) outside {left_count}x{right_count}"
            )));
        }
        if !seen.insert((u, v)) {
            return Err(Error::MalformedInput(format!("duplicate edge ({u}, {v})")));
        }
        let leaf = arena.leaf(i);
        g.add_edge(u, left_count + v, leaf);
    }
    Ok(g)
}

pub fn build_from_list(arena: &mut CircuitArena, list: &EdgeList) -> Result<BipartiteGraph> {
    build_graph(arena, list.left_count, list.right_count, &list.edges)
}

#[derive(Debug, PartialEq, Eq)]
pub struct Matching {
    mate: Vec<Option<EdgeId>>,
}

impl Matching {
    pub fn empty(g: &BipartiteGraph) -> Self {
        let mut mate = MATE_POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
        mate.clear();
        mate.resize(g.vertex_capacity(), None);
        Matching { mate }
    }

    pub fn from_edges(g: &BipartiteGraph, edges: &[EdgeId]) -> Result<Self> {
        let mut m = Matching::empty(g);
        for &e in edges {
            let edge = g.edge(e);
            if !edge.alive || m.mate[edge.left].is_some() || m.mate[edge.right].is_some() {
                return Err(Error::InvariantViolation(format!("edge {e} cannot join the matching")));
            }
            m.insert(g, e);
        }
        Ok(m)
    }

    pub fn mate(&self, v: VertexId) -> Option<EdgeId> {
        self.mate[v]
    }

    pub fn contains(&self, g: &BipartiteGraph, e: EdgeId) -> bool {
        self.mate[g.edge(e).left] == Some(e)
    }

    pub fn insert(&mut self, g: &BipartiteGraph, e: EdgeId) {
        let edge = g.edge(e);
        self.mate[edge.left] = Some(e);
        self.mate[edge.right] = Some(e);
    }

    pub fn set_mate(&mut self, v: VertexId, e: Option<EdgeId>) {
        self.mate[v] = e;
    }

    /// Matched edges in increasing id order.
    pub fn edges(&self, g: &BipartiteGraph) -> Vec<EdgeId> {
        let mut out: Vec<EdgeId> = (0..g.left_count())
            .filter(|&v| g.is_alive(v))
            .filter_map(|v| self.mate[v])
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_perfect(&self, g: &BipartiteGraph) -> bool {
        g.vertices().all(|v| match self.mate[v] {
            Some(e) => {
                let edge = g.edge(e);
                edge.alive && edge.touches(v) && self.mate[g.other(e, v)] == Some(e)
            }
            None => false,
        })
    }
}

/// Maximum matching by Hopcroft–Karp; fails unless it is perfect.
pub fn find_initial_matching(g: &BipartiteGraph) -> Result<Matching> {
    let lefts: Vec<VertexId> = (0..g.left_count()).filter(|&v| g.is_alive(v)).collect();
    let right_alive = (g.left_count()..g.vertex_capacity()).filter(|&v| g.is_alive(v)).count();
    if lefts.len() != right_alive {
        return Err(Error::NoPerfectMatching);
    }
    let n = g.vertex_capacity();
    let adj: Vec<Vec<EdgeId>> = (0..n)
        .map(|v| if v < g.left_count() && g.is_alive(v) { g.incident(v).collect() } else { Vec::new() })
        .collect();
    let mut m = Matching::empty(g);
    let mut dist = vec![NONE; n];
    let mut it = vec![0usize; n];
    let mut queue = VecDeque::new();
    loop {
        // BFS layering from free left vertices.
        queue.clear();
        for &u in &lefts {
            if m.mate[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = NONE;
            }
        }
        let mut found = false;
        while let Some(x) = queue.pop_front() {
            for &e in &adj[x] {
                match m.mate[g.edge(e).right] {
                    None => found = true,
                    Some(me) => {
                        let y = g.edge(me).left;
                        if dist[y] == NONE {
                            dist[y] = dist[x] + 1;
                            queue.push_back(y);
                        }
                    }
                }
            }
        }
        if !found {
            break;
        }
        for &u in &lefts {
            it[u] = 0;
        }
        let mut stack: Vec<(VertexId, EdgeId)> = Vec::new();
        for &u in &lefts {
            if m.mate[u].is_some() {
                continue;
            }
            stack.clear();
            stack.push((u, NONE));
            while let Some(&(x, _)) = stack.last() {
                if it[x] == adj[x].len() {
                    dist[x] = NONE;
                    stack.pop();
                    continue;
                }
                let e = adj[x][it[x]];
                it[x] += 1;
                let r = g.edge(e).right;
                match m.mate[r] {
                    None => {
                        stack.last_mut().unwrap().1 = e;
                        for &(_, pe) in &stack {
                            m.insert(g, pe);
                        }
                        break;
                    }
                    Some(me) => {
                        let y = g.edge(me).left;
                        if dist[y] != NONE && dist[y] == dist[x] + 1 {
                            stack.last_mut().unwrap().1 = e;
                            stack.push((y, NONE));
                        }
                    }
                }
            }
        }
    }
    if lefts.iter().all(|&u| m.mate[u].is_some()) {
        Ok(m)
    } else {
        Err(Error::NoPerfectMatching)
    }
}

/// The orientation `D(G, M)`: matched edges point left to right, all other
/// edges right to left. Edges flagged in `removed` are ignored.
#[derive(Clone, Copy)]
pub struct OrientedView<'a> {
    pub graph: &'a BipartiteGraph,
    pub matching: &'a Matching,
    pub removed: Option<&'a [bool]>,
}

impl<'a> OrientedView<'a> {
    pub fn new(graph: &'a BipartiteGraph, matching: &'a Matching) -> Self {
        OrientedView { graph, matching, removed: None }
    }

    pub fn with_removed(graph: &'a BipartiteGraph, matching: &'a Matching, removed: &'a [bool]) -> Self {
        OrientedView { graph, matching, removed: Some(removed) }
    }

    pub fn usable(&self, e: EdgeId) -> bool {
        self.graph.edge(e).alive && self.removed.is_none_or(|r| !r[e])
    }

    /// Tail and head of the arc of `e`.
    pub fn arc(&self, e: EdgeId) -> (VertexId, VertexId) {
        let edge = self.graph.edge(e);
        if self.matching.mate(edge.left) == Some(e) {
            (edge.left, edge.right)
        } else {
            (edge.right, edge.left)
        }
    }

    pub fn out_arcs(&self, v: VertexId) -> impl Iterator<Item = (EdgeId, VertexId)> + 'a {
        let view = *self;
        let g = self.graph;
        let mate = self.matching.mate(v);
        let (single, rest): (Option<(EdgeId, VertexId)>, &'a [EdgeId]) = match g.side(v) {
            Side::Left => (mate.filter(|&e| view.usable(e)).map(|e| (e, g.edge(e).right)), &[]),
            Side::Right => (None, g.slots(v)),
        };
        single.into_iter().chain(rest.iter().copied().filter_map(move |e| {
            let edge = g.edge(e);
            (Some(e) != mate && edge.right == v && view.usable(e)).then_some((e, edge.left))
        }))
    }

    /// The `i`-th candidate out-arc of `v`, advancing `i` past skipped
    /// entries; `None` once the candidates are exhausted.
    fn next_arc(&self, v: VertexId, i: &mut usize) -> Option<VertexId> {
        let g = self.graph;
        let mate = self.matching.mate(v);
        if g.side(v) == Side::Left {
            if *i > 0 {
                return None;
            }
            *i = 1;
            return mate.filter(|&e| self.usable(e)).map(|e| g.edge(e).right);
        }
        let list = g.slots(v);
        while *i < list.len() {
            let e = list[*i];
            *i += 1;
            let edge = g.edge(e);
            if Some(e) != mate && edge.right == v && self.usable(e) {
                return Some(edge.left);
            }
        }
        None
    }
}

/// Reusable buffers of [`strong_components_into`].
#[derive(Default)]
pub struct SccScratch {
    index: Vec<usize>,
    low: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<VertexId>,
    calls: Vec<(VertexId, usize)>,
    /// Component index per vertex, `usize::MAX` for dead vertices.
    pub comp: Vec<usize>,
}

thread_local! {
    static SCC_SCRATCH: std::cell::RefCell<SccScratch> = std::cell::RefCell::new(SccScratch::default());
}

fn reset<T: Clone>(v: &mut Vec<T>, n: usize, value: T) {
    v.clear();
    v.resize(n, value);
}

/// Strongly connected components of the view by iterative Tarjan. Returns the
/// component index per vertex (`usize::MAX` for dead vertices) and the count.
pub fn strong_components(view: &OrientedView) -> (Vec<usize>, usize) {
    let mut s = SccScratch::default();
    let count = strong_components_into(view, &mut s);
    (s.comp, count)
}

/// As [`strong_components`], leaving the component indices in `s.comp`.
pub fn strong_components_into(view: &OrientedView, s: &mut SccScratch) -> usize {
    let g = view.graph;
    let n = g.vertex_capacity();
    reset(&mut s.index, n, NONE);
    reset(&mut s.low, n, 0);
    reset(&mut s.on_stack, n, false);
    reset(&mut s.comp, n, NONE);
    s.stack.clear();
    s.calls.clear();
    let SccScratch { index, low, on_stack, stack, calls, comp } = s;
    let mut next_index = 0;
    let mut count = 0;
    for root in g.vertices() {
        if index[root] != NONE {
            continue;
        }
        calls.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = calls.last_mut() {
            if let Some(w) = view.next_arc(v, i) {
                if index[w] == NONE {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            calls.pop();
            if let Some(&(parent, _)) = calls.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeClass {
    /// Inside a non-trivial component of `G^b`.
    Inner,
    /// In every perfect matching.
    Plus,
    /// In no perfect matching.
    Minus,
    /// Dead or removed.
    Absent,
}

#[derive(Clone, Debug)]
pub struct EdgeClassification {
    pub edge_class: Vec<EdgeClass>,
    pub b_plus: Vec<EdgeId>,
    pub b_minus: Vec<EdgeId>,
    /// Component index per vertex, `usize::MAX` for dead vertices.
    pub component: Vec<usize>,
    /// Per component: a single b⁺ edge.
    pub trivial: Vec<bool>,
    /// Per component: vertex count.
    pub sizes: Vec<usize>,
}

/// The vectors of a dropped classification, kept for the next one.
#[derive(Default)]
struct ClassBuffers {
    edge_class: Vec<EdgeClass>,
    b_plus: Vec<EdgeId>,
    b_minus: Vec<EdgeId>,
    component: Vec<usize>,
    trivial: Vec<bool>,
    sizes: Vec<usize>,
}

thread_local! {
    static CLASS_POOL: std::cell::RefCell<Vec<ClassBuffers>> = const { std::cell::RefCell::new(Vec::new()) };
}

impl Drop for EdgeClassification {
    fn drop(&mut self) {
        let bufs = ClassBuffers {
            edge_class: std::mem::take(&mut self.edge_class),
            b_plus: std::mem::take(&mut self.b_plus),
            b_minus: std::mem::take(&mut self.b_minus),
            component: std::mem::take(&mut self.component),
            trivial: std::mem::take(&mut self.trivial),
            sizes: std::mem::take(&mut self.sizes),
        };
        recycle(&CLASS_POOL, bufs);
    }
}

impl EdgeClassification {
    pub fn scc_count(&self) -> usize {
        self.trivial.len()
    }

    pub fn is_bridge(&self, e: EdgeId) -> bool {
        matches!(self.edge_class[e], EdgeClass::Plus | EdgeClass::Minus)
    }

    pub fn component_vertices(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.trivial.len()];
        for (v, &c) in self.component.iter().enumerate() {
            if c != NONE {
                out[c].push(v);
            }
        }
        out
    }

    pub fn nontrivial_count(&self) -> usize {
        self.trivial.iter().filter(|&&t| !t).count()
    }
}

/// Classifies every usable edge as b⁺, b⁻ or internal and partitions the
/// vertices into the components of `G^b`. Component ids follow the smallest
/// vertex of each component.
pub fn classify_edges(view: &OrientedView) -> EdgeClassification {
    SCC_SCRATCH.with(|cell| classify_with(view, &mut cell.borrow_mut()))
}

fn classify_with(view: &OrientedView, s: &mut SccScratch) -> EdgeClassification {
    let g = view.graph;
    let count = strong_components_into(view, s);
    let scc = &s.comp;
    // `index` and `low` are free again: reuse them for sizes and renumbering.
    let scc_size = &mut s.index;
    reset(scc_size, count, 0);
    for v in g.vertices() {
        scc_size[scc[v]] += 1;
    }
    let n = g.vertex_capacity();
    let ClassBuffers { mut edge_class, mut b_plus, mut b_minus, mut component, mut trivial, mut sizes } =
        CLASS_POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
    reset(&mut component, n, NONE);
    let renumber = &mut s.low;
    reset(renumber, count, NONE);
    trivial.clear();
    sizes.clear();
    for v in g.vertices() {
        if component[v] != NONE {
            continue;
        }
        let s = scc[v];
        if scc_size[s] > 1 {
            if renumber[s] == NONE {
                renumber[s] = trivial.len();
                trivial.push(false);
                sizes.push(scc_size[s]);
            }
            component[v] = renumber[s];
        } else {
            let id = trivial.len();
            component[v] = id;
            let mut size = 1;
            if let Some(e) = view.matching.mate(v) {
                if view.usable(e) {
                    let w = g.other(e, v);
                    if component[w] == NONE {
                        component[w] = id;
                        size = 2;
                    }
                }
            }
            trivial.push(true);
            sizes.push(size);
        }
    }
    reset(&mut edge_class, g.edge_capacity(), EdgeClass::Absent);
    b_plus.clear();
    b_minus.clear();
    for e in g.edge_ids() {
        if !view.usable(e) {
            continue;
        }
        let edge = g.edge(e);
        let c = component[edge.left];
        let class = if c == component[edge.right] && !trivial[c] {
            EdgeClass::Inner
        } else if view.matching.mate(edge.left) == Some(e) {
            b_plus.push(e);
            EdgeClass::Plus
        } else {
            b_minus.push(e);
            EdgeClass::Minus
        };
        edge_class[e] = class;
    }
    EdgeClassification { edge_class, b_plus, b_minus, component, trivial, sizes }
}

/// Potential of a graph: the product over the components of `G^b`, where a
/// trivial component contributes the potential of its edge and a non-trivial
/// one the sum of its edge potentials minus its vertex count plus two.
pub fn potential(g: &BipartiteGraph, arena: &CircuitArena, cls: &EdgeClassification) -> BigUint {
    small_potential(g, arena, cls).map_or_else(|| big_potential(g, arena, cls), BigUint::from)
}

fn small_potential(g: &BipartiteGraph, arena: &CircuitArena, cls: &EdgeClassification) -> Option<u128> {
    let mut inline = [0u128; 32];
    let mut spilled = Vec::new();
    let value: &mut [u128] = if cls.trivial.len() <= inline.len() {
        &mut inline[..cls.trivial.len()]
    } else {
        spilled.resize(cls.trivial.len(), 0);
        &mut spilled
    };
    for e in g.edge_ids() {
        if matches!(cls.edge_class[e], EdgeClass::Inner | EdgeClass::Plus) {
            value[cls.component[g.edge(e).left]] += u128::from(arena.small_potential(g.edge(e).node)?);
        }
    }
    let mut total = 1u128;
    for (c, &v) in value.iter().enumerate() {
        let factor = if cls.trivial[c] {
            if cls.sizes[c] != 2 {
                return Some(0);
            }
            v
        } else {
            match (v + 2).checked_sub(cls.sizes[c] as u128) {
                Some(x) => x,
                None => return Some(0),
            }
        };
        total = total.checked_mul(factor)?;
    }
    Some(total)
}

fn big_potential(g: &BipartiteGraph, arena: &CircuitArena, cls: &EdgeClassification) -> BigUint {
    let k = cls.trivial.len();
    let mut value: Vec<BigUint> = vec![BigUint::zero(); k];
    for e in g.edge_ids() {
        match cls.edge_class[e] {
            EdgeClass::Inner | EdgeClass::Plus => {
                value[cls.component[g.edge(e).left]] += &arena.potential(g.edge(e).node);
            }
            _ => {}
        }
    }
    let mut total = BigUint::one();
    for c in 0..k {
        if cls.trivial[c] {
            if cls.sizes[c] == 2 {
                total *= &value[c];
            } else {
                // An unmatched vertex: no perfect matching.
                return BigUint::zero();
            }
        } else {
            let sum = &value[c] + 2u32;
            let size = BigUint::from(cls.sizes[c]);
            if sum < size {
                return BigUint::zero();
            }
            total *= sum - size;
        }
    }
    total
}

/// `Σ Φ(e) − |V| + 2` for a strongly connected `g`.
pub fn strongly_connected_potential(g: &BipartiteGraph, arena: &CircuitArena) -> BigUint {
    let n = g.vertex_count() as u128;
    let mut sum = 2u128;
    for e in g.edge_ids() {
        match arena.small_potential(g.edge(e).node) {
            Some(x) => sum += u128::from(x),
            None => {
                let mut big = BigUint::from(2u32);
                for f in g.edge_ids() {
                    big += arena.potential(g.edge(f).node);
                }
                let n = BigUint::from(n);
                return if big < n { BigUint::zero() } else { big - n };
            }
        }
    }
    BigUint::from(sum.saturating_sub(n))
}

/// Potential of `g` with respect to any of its perfect matchings.
pub fn graph_potential(g: &BipartiteGraph, m: &Matching, arena: &CircuitArena) -> BigUint {
    potential(g, arena, &classify_edges(&OrientedView::new(g, m)))
}

/// A directed cycle of the view through `e`, starting with `e`; `None` iff
/// `e` lies on no alternating cycle.
pub fn alternating_cycle_through(view: &OrientedView, e: EdgeId) -> Option<Vec<EdgeId>> {
    if !view.usable(e) {
        return None;
    }
    let g = view.graph;
    let (tail, head) = view.arc(e);
    let found = BFS_SCRATCH.with(|cell| {
        let (parent, queue) = &mut *cell.borrow_mut();
        reset(parent, g.vertex_capacity(), NONE);
        queue.clear();
        parent[head] = e;
        queue.push(head);
        let mut i = 0;
        while i < queue.len() {
            let x = queue[i];
            i += 1;
            if x == tail {
                break;
            }
            for (f, y) in view.out_arcs(x) {
                if parent[y] == NONE {
                    parent[y] = f;
                    queue.push(y);
                }
            }
        }
        if parent[tail] == NONE {
            return None;
        }
        let mut path = Vec::new();
        let mut x = tail;
        while x != head {
            let f = parent[x];
            path.push(f);
            x = view.arc(f).0;
        }
        Some(path)
    });
    let mut path = found?;
    path.push(e);
    path.reverse();
    Some(path)
}

thread_local! {
    static BFS_SCRATCH: std::cell::RefCell<(Vec<EdgeId>, Vec<VertexId>)> = Default::default();
    static FLIP_SCRATCH: std::cell::RefCell<Vec<u8>> = Default::default();
}

/// Symmetric difference of `m` with an alternating cycle (or a disjoint union
/// of alternating cycles).
pub fn flip(g: &BipartiteGraph, m: &Matching, cycle: &[EdgeId]) -> Result<Matching> {
    if let Some(&e) = cycle.iter().find(|&&e| !g.edge(e).alive) {
        return Err(Error::InvariantViolation(format!("cycle edge {e} is not alive")));
    }
    // Per vertex: matched cycle edges in the low nibble, free ones in the high.
    let bad = FLIP_SCRATCH.with(|cell| {
        let count = &mut *cell.borrow_mut();
        if count.len() < g.vertex_capacity() {
            count.resize(g.vertex_capacity(), 0);
        }
        for &e in cycle {
            let edge = g.edge(e);
            let step = if m.contains(g, e) { 0x01 } else { 0x10 };
            for v in [edge.left, edge.right] {
                count[v] = count[v].saturating_add(step);
            }
        }
        let bad = cycle.iter().flat_map(|&e| [g.edge(e).left, g.edge(e).right]).find(|&v| count[v] != 0x11);
        for &e in cycle {
            count[g.edge(e).left] = 0;
            count[g.edge(e).right] = 0;
        }
        bad
    });
    if let Some(v) = bad {
        return Err(Error::InvariantViolation(format!("cycle is not alternating at vertex {v}")));
    }
    let mut out = m.clone();
    for &e in cycle {
        if !m.contains(g, e) {
            out.insert(g, e);
        }
    }
    Ok(out)
}
