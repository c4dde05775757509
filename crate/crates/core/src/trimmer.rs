//! Trimming: reduces a graph to at most one isolated edge plus strongly
//! connected components of minimum degree three. Every removed vertex and
//! merged edge is folded into the circuit nodes of the surviving edges, so the
//! set of encoded matchings of the input graph is unchanged.
//!
//! Degree-two vertices are removed in two phases. The first contracts, for
//! each side in turn, every tree spanned by the edges of degree-two vertices
//! in one sweep. The second removes the remaining ones one hub at a time and
//! postpones the update of the hub's own edges by keeping them in groups that
//! carry a pending node.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use num_bigint::BigUint;
use num_traits::One;

use crate::circuit::{CircuitArena, NodeId};
use crate::error::{Error, Result};
use crate::graph::{
    classify_edges, potential, strongly_connected_potential, BipartiteGraph, EdgeClass, EdgeClassification, EdgeId, Matching, OrientedView, Side,
    VertexId,
};

const NONE: usize = usize::MAX;
const DENSE_LIMIT: usize = 1 << 22;

/// A strongly connected piece of a graph with one of its perfect matchings,
/// stored compactly (no dead vertices).
#[derive(Clone, Debug)]
pub struct Component {
    pub graph: BipartiteGraph,
    pub matching: Matching,
}

impl Component {
    /// `Σ Φ(e) − |V| + 2`.
    pub fn potential(&self, arena: &CircuitArena) -> BigUint {
        strongly_connected_potential(&self.graph, arena)
    }

    pub fn min_degree(&self) -> usize {
        self.graph.vertices().map(|v| self.graph.degree(v)).min().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrimReport {
    pub removed_vertex_count: usize,
    pub removed_edge_count: usize,
    pub created_node_count: u64,
    pub potential_before: BigUint,
    pub potential_after: BigUint,
    /// Elementary steps: scanned edges and vertices, created nodes.
    pub work: u64,
    pub cycles: usize,
    /// Degree-two vertices of the second phase with both edges of potential one.
    pub flat_vertices: usize,
    /// Hub edges whose potential was below the hub's group count.
    pub invariant3_violations: usize,
    pub hub_steps: usize,
    pub single_steps: usize,
}

impl TrimReport {
    pub fn absorb(&mut self, other: &TrimReport) {
        self.work += other.work;
        self.cycles += other.cycles;
        self.flat_vertices += other.flat_vertices;
        self.invariant3_violations += other.invariant3_violations;
        self.hub_steps += other.hub_steps;
        self.single_steps += other.single_steps;
    }
}

/// Result of [`trim`]: the isolated edge (as its node) and the non-trivial
/// components.
#[derive(Clone, Debug)]
pub struct Trimmed {
    pub iso: Option<NodeId>,
    pub components: Vec<Component>,
    pub report: TrimReport,
}

impl Trimmed {
    pub fn potential(&self, arena: &CircuitArena) -> BigUint {
        let mut total = match self.iso {
            Some(n) => arena.potential(n),
            None => BigUint::one(),
        };
        for c in &self.components {
            total *= c.potential(arena);
        }
        total
    }
}

/// Outcome of trimming one strongly connected component.
#[derive(Clone, Debug)]
pub enum Reduced {
    Edge(NodeId),
    Graph(Component),
}

/// Trims `g` with its perfect matching `m`.
pub fn trim(g: &BipartiteGraph, m: &Matching, arena: &mut CircuitArena) -> Result<Trimmed> {
    let cls = classify_edges(&OrientedView::new(g, m));
    trim_classified(g, m, &cls, arena)
}

/// As [`trim`], for the graph left by ignoring the `Absent` edges of `cls`,
/// which must classify `g` under `m`.
pub fn trim_classified(g: &BipartiteGraph, m: &Matching, cls: &EdgeClassification, arena: &mut CircuitArena) -> Result<Trimmed> {
    let created = arena.created();
    let mut report = TrimReport::default();
    let present = cls.edge_class.iter().filter(|&&c| c != EdgeClass::Absent).count();
    report.work += (g.vertex_count() + present) as u64;
    report.potential_before = potential(g, arena, cls);
    let (mut iso, parts) = strip_bridges(g, m, cls, arena)?;
    let mut components = Vec::new();
    for part in parts {
        let mut sub = TrimReport::default();
        match run(part, arena, &mut sub, Stop::Done)? {
            Reduced::Edge(node) => iso = arena.product_opt(iso, Some(node)),
            Reduced::Graph(c) => components.push(c),
        }
        report.absorb(&sub);
    }
    let mut out = Trimmed { iso, components, report };
    let kept_vertices: usize =
        out.components.iter().map(|c| c.graph.vertex_count()).sum::<usize>() + if iso.is_some() { 2 } else { 0 };
    let kept_edges: usize = out.components.iter().map(|c| c.graph.edge_count()).sum::<usize>() + usize::from(iso.is_some());
    out.report.removed_vertex_count = g.vertex_count().saturating_sub(kept_vertices);
    out.report.removed_edge_count = present.saturating_sub(kept_edges);
    out.report.potential_after = out.potential(arena);
    out.report.created_node_count = arena.created() - created;
    Ok(out)
}

/// Drops the b⁻ edges, multiplies the b⁺ edges into one node, and extracts
/// every non-trivial component of `G^b` as a compact graph.
pub fn strip_bridges(
    g: &BipartiteGraph,
    m: &Matching,
    cls: &EdgeClassification,
    arena: &mut CircuitArena,
) -> Result<(Option<NodeId>, Vec<Component>)> {
    if cls.trivial.iter().zip(&cls.sizes).any(|(&t, &s)| t && s != 2) {
        return Err(Error::InvariantViolation("matching is not perfect".into()));
    }
    let mut iso = None;
    for &e in &cls.b_plus {
        iso = arena.product_opt(iso, Some(g.edge(e).node));
    }
    BRIDGE_SCRATCH.with(|cell| {
        let s = &mut *cell.borrow_mut();
        s.slot.clear();
        s.slot.resize(cls.scc_count(), NONE);
        s.vstart.clear();
        s.vstart.push(0);
        for c in 0..cls.scc_count() {
            if !cls.trivial[c] {
                s.slot[c] = s.vstart.len() - 1;
                s.vstart.push(s.vstart.last().unwrap() + cls.sizes[c]);
            }
        }
        let k = s.vstart.len() - 1;
        s.vertices.clear();
        s.vertices.resize(s.vstart[k], 0);
        s.fill.clear();
        s.fill.extend_from_slice(&s.vstart[..k]);
        for v in g.vertices() {
            let c = s.slot[cls.component[v]];
            if c != NONE {
                s.vertices[s.fill[c]] = v;
                s.fill[c] += 1;
            }
        }
        s.estart.clear();
        s.estart.resize(k + 1, 0);
        for e in g.edge_ids() {
            if cls.edge_class[e] == EdgeClass::Inner {
                s.estart[s.slot[cls.component[g.edge(e).left]] + 1] += 1;
            }
        }
        for c in 0..k {
            s.estart[c + 1] += s.estart[c];
        }
        s.edges.clear();
        s.edges.resize(s.estart[k], 0);
        s.fill.clear();
        s.fill.extend_from_slice(&s.estart[..k]);
        for e in g.edge_ids() {
            if cls.edge_class[e] == EdgeClass::Inner {
                let c = s.slot[cls.component[g.edge(e).left]];
                s.edges[s.fill[c]] = e;
                s.fill[c] += 1;
            }
        }
        if s.index.len() < g.vertex_capacity() {
            s.index.resize(g.vertex_capacity(), NONE);
        }
        let parts = (0..k)
            .map(|c| {
                let (vs, es) = (&s.vertices[s.vstart[c]..s.vstart[c + 1]], &s.edges[s.estart[c]..s.estart[c + 1]]);
                extract(g, m, vs, es, &mut s.index)
            })
            .collect();
        Ok((iso, parts))
    })
}

/// Buffers of [`strip_bridges`]; `index` is all `NONE` between calls.
#[derive(Default)]
struct BridgeScratch {
    slot: Vec<usize>,
    vstart: Vec<usize>,
    estart: Vec<usize>,
    fill: Vec<usize>,
    vertices: Vec<VertexId>,
    edges: Vec<EdgeId>,
    index: Vec<usize>,
}

thread_local! {
    static BRIDGE_SCRATCH: RefCell<BridgeScratch> = RefCell::new(BridgeScratch::default());
}

/// Compact copy of the subgraph on `vertices` (ascending) and `edges`.
fn extract(g: &BipartiteGraph, m: &Matching, vertices: &[VertexId], edges: &[EdgeId], index: &mut [usize]) -> Component {
    let lefts = vertices.iter().filter(|&&v| g.side(v) == Side::Left).count();
    for (i, &v) in vertices.iter().enumerate() {
        index[v] = i;
    }
    let at: &[usize] = index;
    let triples = edges.iter().map(|&e| {
        let edge = g.edge(e);
        (at[edge.left], at[edge.right], edge.node)
    });
    let h = BipartiteGraph::from_triples(lefts, vertices.len() - lefts, triples);
    let mut hm = Matching::empty(&h);
    for (id, &e) in edges.iter().enumerate() {
        if m.contains(g, e) {
            hm.insert(&h, id);
        }
    }
    for &v in vertices {
        index[v] = NONE;
    }
    Component { graph: h, matching: hm }
}

/// Collapses a cycle into the union of the products over its two perfect
/// matchings, creating `|V| − 1` nodes.
pub fn trim_cycle(c: &Component, arena: &mut CircuitArena) -> Result<NodeId> {
    let mut report = TrimReport::default();
    let mut t = Trimmer::new(c.clone(), arena, &mut report);
    t.cycle_node()
}

/// Runs only the first phase on a strongly connected component.
pub fn phase1(c: Component, arena: &mut CircuitArena) -> Result<(Reduced, TrimReport)> {
    let mut report = TrimReport::default();
    let r = run(c, arena, &mut report, Stop::AfterPhase1)?;
    Ok((r, report))
}

/// Trims a strongly connected component completely.
pub fn trim_component(c: Component, arena: &mut CircuitArena) -> Result<(Reduced, TrimReport)> {
    let mut report = TrimReport::default();
    let r = run(c, arena, &mut report, Stop::Done)?;
    Ok((r, report))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stop {
    AfterPhase1,
    Done,
}

fn run(c: Component, arena: &mut CircuitArena, report: &mut TrimReport, stop: Stop) -> Result<Reduced> {
    let g = &c.graph;
    if g.vertex_count() > 2 && g.edge_count() != g.vertex_count() && g.vertices().all(|v| g.degree(v) != 2) {
        report.work += (g.vertex_count() + g.edge_count()) as u64;
        return Ok(Reduced::Graph(c));
    }
    let mut t = Trimmer::new(c, arena, report);
    if let Some(r) = t.settled()? {
        return Ok(r);
    }
    for side in [Side::Left, Side::Right] {
        t.phase1(side)?;
        if let Some(r) = t.settled()? {
            return Ok(r);
        }
    }
    if stop == Stop::AfterPhase1 {
        return Ok(Reduced::Graph(t.compact()));
    }
    t.phase2()
}

/// Edge lookup by endpoints.
/// Dense cells hold `(epoch, edge)`; only cells stamped with the current
/// epoch are set, so the buffer is reused without clearing.
enum Adjacency {
    Dense { cols: usize, epoch: u32, cells: Vec<(u32, u32)> },
    Sparse(HashMap<(VertexId, VertexId), EdgeId>),
}

impl Adjacency {
    fn new(g: &BipartiteGraph, scratch: &mut Scratch) -> Self {
        let cells = g.left_count() * g.right_count();
        let mut adj = if cells <= DENSE_LIMIT && g.edge_capacity() < u32::MAX as usize {
            let mut buf = std::mem::take(&mut scratch.cells);
            scratch.epoch = scratch.epoch.wrapping_add(1);
            if scratch.epoch == 0 {
                buf.iter_mut().for_each(|c| c.0 = 0);
                scratch.epoch = 1;
            }
            if buf.len() < cells {
                buf.resize(cells, (0, 0));
            }
            Adjacency::Dense { cols: g.right_count(), epoch: scratch.epoch, cells: buf }
        } else {
            Adjacency::Sparse(HashMap::new())
        };
        for e in g.edge_ids() {
            let edge = g.edge(e);
            adj.set(g, edge.left, edge.right, Some(e));
        }
        adj
    }

    fn key(g: &BipartiteGraph, a: VertexId, b: VertexId) -> (VertexId, VertexId) {
        if g.side(a) == Side::Left {
            (a, g.local_index(b))
        } else {
            (b, g.local_index(a))
        }
    }

    fn get(&self, g: &BipartiteGraph, a: VertexId, b: VertexId) -> Option<EdgeId> {
        let (l, r) = Self::key(g, a, b);
        match self {
            Adjacency::Dense { cols, epoch, cells } => match cells[l * cols + r] {
                (t, e) if t == *epoch => Some(e as EdgeId),
                _ => None,
            },
            Adjacency::Sparse(map) => map.get(&(l, r)).copied(),
        }
    }

    fn set(&mut self, g: &BipartiteGraph, a: VertexId, b: VertexId, e: Option<EdgeId>) {
        let (l, r) = Self::key(g, a, b);
        match self {
            Adjacency::Dense { cols, epoch, cells } => cells[l * *cols + r] = e.map_or((0, 0), |e| (*epoch, e as u32)),
            Adjacency::Sparse(map) => {
                match e {
                    Some(e) => map.insert((l, r), e),
                    None => map.remove(&(l, r)),
                };
            }
        }
    }
}

/// Edge groups of the second phase. Every edge sits in one group at each
/// endpoint; its true node is its stored node times both group nodes. Each
/// vertex has exactly one group without a node, which receives fresh edges.
#[derive(Default)]
struct Groups {
    active: bool,
    node: Vec<Option<NodeId>>,
    size: Vec<usize>,
    of_vertex: Vec<Vec<usize>>,
    empty: Vec<usize>,
    of_edge: Vec<[usize; 2]>,
}

impl Groups {
    fn activate(&mut self, g: &BipartiteGraph) {
        self.active = true;
        let n = g.vertex_capacity();
        self.node.clear();
        self.size.clear();
        if self.of_vertex.len() < n {
            self.of_vertex.resize_with(n, Vec::new);
        }
        self.of_vertex[..n].iter_mut().for_each(Vec::clear);
        self.empty.clear();
        self.empty.resize(n, NONE);
        for v in g.vertices() {
            let id = self.create();
            self.size[id] = g.degree(v);
            self.of_vertex[v].push(id);
            self.empty[v] = id;
        }
        self.of_edge.clear();
        self.of_edge.resize(g.edge_capacity(), [NONE; 2]);
        for e in g.edge_ids() {
            let edge = g.edge(e);
            self.of_edge[e] = [self.empty[edge.left], self.empty[edge.right]];
        }
    }

    fn create(&mut self) -> usize {
        self.node.push(None);
        self.size.push(0);
        self.node.len() - 1
    }

    /// Groups of `v` that hold edges, plus its empty group.
    fn live_count(&mut self, v: VertexId) -> usize {
        self.prune(v);
        self.of_vertex[v].len()
    }

    fn prune(&mut self, v: VertexId) {
        let (empty, size) = (self.empty[v], &self.size);
        self.of_vertex[v].retain(|&x| x == empty || size[x] > 0);
    }
}

fn slot(g: &BipartiteGraph, v: VertexId) -> usize {
    match g.side(v) {
        Side::Left => 0,
        Side::Right => 1,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cat {
    None,
    Case1,
    Flat,
    Hub(VertexId),
}

#[derive(Default)]
struct Worklists {
    case1: BTreeSet<VertexId>,
    flat: BTreeSet<VertexId>,
    hubs: BTreeMap<VertexId, BTreeSet<VertexId>>,
    cat: Vec<Cat>,
}

/// A tree to contract, listed parents first. `kids[start[i]..start[i + 1]]`
/// holds, for each child `a` of `verts[i]`, the edge to `a`, the edge from
/// `a` to its own child and that child's index.
struct Tree {
    verts: Vec<VertexId>,
    start: Vec<usize>,
    kids: Vec<(EdgeId, EdgeId, usize)>,
}

/// Index ranges into the `W` and `N` lists of each piece, from the list of
/// their end positions.
fn pieces(ends: &[usize]) -> impl Iterator<Item = (Range<usize>, Range<usize>)> + '_ {
    let mut prev = (0, 0);
    ends.chunks(2).map(move |c| {
        let r = (prev.0..c[0], prev.1..c[1]);
        prev = (c[0], c[1]);
        r
    })
}

/// Buffers kept between trimmer runs on one thread.
#[derive(Default)]
struct Scratch {
    cells: Vec<(u32, u32)>,
    epoch: u32,
    in_w: Vec<bool>,
    seen: Vec<bool>,
    buf: Vec<EdgeId>,
    touched: Vec<VertexId>,
    groups: Groups,
    lists: Lists,
}

/// Cleared buffers handed out and taken back by the trimmer.
#[derive(Default)]
struct Lists {
    plain: Vec<Vec<usize>>,
    nodes: Vec<Vec<Option<NodeId>>>,
    kids: Vec<Vec<(EdgeId, EdgeId, usize)>>,
    items: Vec<NodeId>,
    pairs: Vec<Vec<(VertexId, Option<NodeId>)>>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

struct Trimmer<'a> {
    g: BipartiteGraph,
    m: Matching,
    arena: &'a mut CircuitArena,
    report: &'a mut TrimReport,
    adj: Adjacency,
    groups: Groups,
    /// Per vertex, all false between calls.
    in_w: Vec<bool>,
    seen: Vec<bool>,
    /// Spare buffer for incidence lists that are edited while scanned.
    buf: Vec<EdgeId>,
    /// Vertices affected by the last contraction.
    touched: Vec<VertexId>,
    epoch: u32,
    /// The dense cell buffer when `adj` is sparse.
    spare_cells: Vec<(u32, u32)>,
    lists: Lists,
}

impl Drop for Trimmer<'_> {
    fn drop(&mut self) {
        let n = self.g.vertex_capacity();
        self.in_w[..n].fill(false);
        self.seen[..n].fill(false);
        let cells = match &mut self.adj {
            Adjacency::Dense { cells, .. } => std::mem::take(cells),
            Adjacency::Sparse(_) => std::mem::take(&mut self.spare_cells),
        };
        let s = Scratch {
            cells,
            epoch: self.epoch,
            in_w: std::mem::take(&mut self.in_w),
            seen: std::mem::take(&mut self.seen),
            buf: std::mem::take(&mut self.buf),
            touched: std::mem::take(&mut self.touched),
            groups: std::mem::take(&mut self.groups),
            lists: std::mem::take(&mut self.lists),
        };
        SCRATCH.with(|cell| *cell.borrow_mut() = s);
    }
}

impl<'a> Trimmer<'a> {
    fn new(c: Component, arena: &'a mut CircuitArena, report: &'a mut TrimReport) -> Self {
        let mut s = SCRATCH.with(|cell| std::mem::take(&mut *cell.borrow_mut()));
        let adj = Adjacency::new(&c.graph, &mut s);
        let n = c.graph.vertex_capacity();
        for flags in [&mut s.in_w, &mut s.seen] {
            if flags.len() < n {
                flags.resize(n, false);
            }
        }
        s.groups.active = false;
        report.work += (c.graph.vertex_count() + c.graph.edge_count()) as u64;
        Trimmer {
            g: c.graph,
            m: c.matching,
            arena,
            report,
            adj,
            groups: s.groups,
            in_w: s.in_w,
            seen: s.seen,
            buf: s.buf,
            touched: s.touched,
            epoch: s.epoch,
            spare_cells: s.cells,
            lists: s.lists,
        }
    }

    fn take_vec(&mut self) -> Vec<usize> {
        self.lists.plain.pop().unwrap_or_default()
    }

    fn give_vec(&mut self, mut v: Vec<usize>) {
        v.clear();
        self.lists.plain.push(v);
    }

    fn take_nodes(&mut self, n: usize) -> Vec<Option<NodeId>> {
        let mut v = self.lists.nodes.pop().unwrap_or_default();
        v.resize(n, None);
        v
    }

    fn give_nodes(&mut self, mut v: Vec<Option<NodeId>>) {
        v.clear();
        self.lists.nodes.push(v);
    }

    fn new_tree(&mut self) -> Tree {
        let (verts, start) = (self.take_vec(), self.take_vec());
        let kids = self.lists.kids.pop().unwrap_or_default();
        Tree { verts, start, kids }
    }

    fn give_tree(&mut self, t: Tree) {
        self.give_vec(t.verts);
        self.give_vec(t.start);
        let mut kids = t.kids;
        kids.clear();
        self.lists.kids.push(kids);
    }

    fn give_pairs(&mut self, mut v: Vec<(VertexId, Option<NodeId>)>) {
        v.clear();
        self.lists.pairs.push(v);
    }

    fn take_incident(&mut self, v: VertexId) -> Vec<EdgeId> {
        let mut edges = std::mem::take(&mut self.buf);
        edges.clear();
        edges.extend(self.g.incident(v));
        edges
    }

    fn node(&self, e: EdgeId) -> NodeId {
        self.g.edge(e).node
    }

    fn two_edges(&self, u: VertexId) -> [EdgeId; 2] {
        let mut it = self.g.incident(u);
        let a = it.next().expect("degree two");
        let b = it.next().expect("degree two");
        [a, b]
    }

    /// A finished shape: a single edge or a cycle.
    fn settled(&mut self) -> Result<Option<Reduced>> {
        if self.g.vertex_count() == 2 {
            self.clear_all();
            let e = self.g.edge_ids().next().ok_or_else(|| Error::InvariantViolation("component lost its edge".into()))?;
            return Ok(Some(Reduced::Edge(self.node(e))));
        }
        if self.g.edge_count() == self.g.vertex_count() {
            self.clear_all();
            return Ok(Some(Reduced::Edge(self.cycle_node()?)));
        }
        Ok(None)
    }

    fn cycle_node(&mut self) -> Result<NodeId> {
        let g = &self.g;
        if g.vertices().any(|v| g.degree(v) != 2) {
            return Err(Error::InvariantViolation("cycle trim on a vertex of degree other than two".into()));
        }
        let start = g.vertices().next().ok_or_else(|| Error::InvariantViolation("empty cycle".into()))?;
        let first = g.incident(start).min().unwrap();
        let mut walk = self.lists.plain.pop().unwrap_or_default();
        walk.push(first);
        let mut at = g.other(first, start);
        let mut last = first;
        while at != start {
            let next = g.incident(at).find(|&e| e != last).unwrap();
            walk.push(next);
            at = g.other(next, at);
            last = next;
        }
        if walk.len() != g.vertex_count() {
            self.give_vec(walk);
            return Err(Error::InvariantViolation("graph is not a single cycle".into()));
        }
        self.report.work += walk.len() as u64;
        self.report.cycles += 1;
        let mut sides = [None, None];
        for (i, &e) in walk.iter().enumerate().rev() {
            sides[i % 2] = self.arena.product_opt(Some(self.g.edge(e).node), sides[i % 2]);
        }
        self.give_vec(walk);
        Ok(self.arena.union(sides[0].unwrap(), sides[1].unwrap()))
    }

    fn compact(&mut self) -> Component {
        let (mut vertices, mut edges, mut index) = (self.take_vec(), self.take_vec(), self.take_vec());
        vertices.extend(self.g.vertices());
        edges.extend(self.g.edge_ids());
        index.resize(self.g.vertex_capacity(), NONE);
        self.report.work += (vertices.len() + edges.len()) as u64;
        let c = extract(&self.g, &self.m, &vertices, &edges, &mut index);
        self.give_vec(vertices);
        self.give_vec(edges);
        self.give_vec(index);
        c
    }

    fn clear_vertex(&mut self, v: VertexId) {
        if !self.groups.active {
            return;
        }
        let s = slot(&self.g, v);
        let empty = self.groups.empty[v];
        let edges = self.take_incident(v);
        self.report.work += edges.len() as u64;
        for &e in &edges {
            let gid = self.groups.of_edge[e][s];
            if gid != empty {
                if let Some(n) = self.groups.node[gid] {
                    let p = self.arena.product(self.node(e), n);
                    self.g.set_node(e, p);
                }
                self.groups.size[gid] -= 1;
                self.groups.size[empty] += 1;
                self.groups.of_edge[e][s] = empty;
            }
        }
        self.buf = edges;
        let groups = &mut self.groups.of_vertex[v];
        groups.clear();
        groups.push(empty);
    }

    fn clear_edge(&mut self, e: EdgeId) {
        if !self.groups.active {
            return;
        }
        let edge = *self.g.edge(e);
        for (s, v) in [(0, edge.left), (1, edge.right)] {
            let gid = self.groups.of_edge[e][s];
            let empty = self.groups.empty[v];
            if gid != empty {
                if let Some(n) = self.groups.node[gid] {
                    let p = self.arena.product(self.node(e), n);
                    self.g.set_node(e, p);
                }
                self.groups.size[gid] -= 1;
                self.groups.size[empty] += 1;
                self.groups.of_edge[e][s] = empty;
            }
        }
    }

    fn clear_all(&mut self) {
        if !self.groups.active {
            return;
        }
        let mut vertices = self.take_vec();
        vertices.extend(self.g.vertices());
        for &v in &vertices {
            self.clear_vertex(v);
        }
        self.give_vec(vertices);
    }

    fn drop_edge(&mut self, e: EdgeId) {
        let edge = *self.g.edge(e);
        self.adj.set(&self.g, edge.left, edge.right, None);
        if self.groups.active {
            for s in 0..2 {
                self.groups.size[self.groups.of_edge[e][s]] -= 1;
            }
        }
        self.g.remove_edge(e);
    }

    /// Node of the product over each child's subtree matching, and, per
    /// child, the product over all other children, written to `excl`.
    fn exclusive_products(&mut self, items: &[NodeId], excl: &mut [Option<NodeId>]) -> Option<NodeId> {
        let k = items.len();
        if k == 0 {
            return None;
        }
        let mut all = items[0];
        excl[0] = None;
        for j in 1..k {
            excl[j] = Some(all);
            all = self.arena.product(all, items[j]);
        }
        let mut after = None;
        for j in (0..k).rev() {
            excl[j] = self.arena.product_opt(excl[j], after);
            if j > 0 {
                after = Some(match after {
                    None => items[j],
                    Some(a) => self.arena.product(items[j], a),
                });
            }
        }
        self.report.work += 3 * k as u64;
        Some(all)
    }

    /// For every vertex `x` of the tree, the product over the unique perfect
    /// matching of the tree without `x`.
    fn tree_nodes(&mut self, tree: &Tree) -> Vec<(VertexId, Option<NodeId>)> {
        let n = tree.verts.len();
        let mut down = self.take_nodes(n);
        let mut excl = self.take_nodes(tree.kids.len());
        let mut items = std::mem::take(&mut self.lists.items);
        for i in (0..n).rev() {
            let range = tree.start[i]..tree.start[i + 1];
            items.clear();
            for &(_, e, c) in &tree.kids[range.clone()] {
                let own = self.node(e);
                items.push(self.arena.product_opt(Some(own), down[c]).unwrap());
            }
            down[i] = self.exclusive_products(&items, &mut excl[range]);
        }
        self.lists.items = items;
        let mut up = self.take_nodes(n);
        for i in 0..n {
            for j in tree.start[i]..tree.start[i + 1] {
                let (e, _, c) = tree.kids[j];
                let own = self.node(e);
                let base = self.arena.product_opt(Some(own), up[i]);
                up[c] = self.arena.product_opt(base, excl[j]);
            }
        }
        let mut out = self.lists.pairs.pop().unwrap_or_default();
        for i in 0..n {
            out.push((tree.verts[i], self.arena.product_opt(down[i], up[i])));
        }
        self.give_nodes(down);
        self.give_nodes(excl);
        self.give_nodes(up);
        out
    }

    /// Spanning tree of the component of `N_E(W)` containing `root`.
    fn bfs_tree(&mut self, root: VertexId) -> Tree {
        let Tree { mut verts, mut start, mut kids } = self.new_tree();
        let mut from = self.take_vec();
        verts.push(root);
        from.push(NONE);
        start.push(0);
        let mut i = 0;
        while i < verts.len() {
            let x = verts[i];
            let edges = self.take_incident(x);
            self.report.work += edges.len() as u64;
            for &e in &edges {
                let a = self.g.other(e, x);
                if !self.in_w[a] || a == from[i] {
                    continue;
                }
                let onward = self.g.incident(a).find(|&f| f != e).expect("degree two");
                let c = self.g.other(onward, a);
                kids.push((e, onward, verts.len()));
                verts.push(c);
                from.push(a);
            }
            self.buf = edges;
            start.push(kids.len());
            i += 1;
        }
        self.give_vec(from);
        Tree { verts, start, kids }
    }

    /// Removes the vertices `w` and merges the vertices of `n` into `z`,
    /// multiplying each moved edge by the node of its old endpoint. With
    /// `delay`, the edges already at `z` keep their nodes and the node of `z`
    /// goes into its groups instead. Leaves in `touched` the vertices whose
    /// degree or incident potentials may have changed.
    fn contract(
        &mut self,
        w: &[VertexId],
        n: &[(VertexId, Option<NodeId>)],
        z: VertexId,
        delay: bool,
    ) -> Result<()> {
        for &a in w {
            self.in_w[a] = true;
        }
        let mut outside = None;
        for &(x, _) in n {
            let e = self.m.mate(x).ok_or_else(|| Error::InvariantViolation(format!("vertex {x} unmatched")))?;
            if !self.in_w[self.g.other(e, x)] {
                if outside.is_some() {
                    return Err(Error::InvariantViolation("two contracted vertices matched outside".into()));
                }
                outside = Some(e);
            }
        }
        let mut mate_edge = outside.ok_or_else(|| Error::InvariantViolation("no contracted vertex matched outside".into()))?;
        for &a in w {
            self.in_w[a] = false;
        }
        let mut touched = std::mem::take(&mut self.touched);
        touched.clear();
        touched.extend_from_slice(w);
        for &a in w {
            let edges = self.take_incident(a);
            self.report.work += edges.len() as u64;
            for &e in &edges {
                self.drop_edge(e);
            }
            self.buf = edges;
            self.g.remove_vertex(a);
        }
        let tz = n.iter().find(|&&(x, _)| x == z).map(|&(_, t)| t).expect("z among contracted vertices");
        if delay {
            self.groups.prune(z);
            let gids = self.groups.of_vertex[z].clone();
            self.report.work += gids.len() as u64;
            for gid in gids {
                self.groups.node[gid] = self.arena.product_opt(self.groups.node[gid], tz);
            }
            let fresh = self.groups.create();
            self.groups.of_vertex[z].push(fresh);
            self.groups.empty[z] = fresh;
        } else if let Some(t) = tz {
            let edges = self.take_incident(z);
            self.report.work += edges.len() as u64;
            for &e in &edges {
                let p = self.arena.product(self.node(e), t);
                self.g.set_node(e, p);
                touched.push(self.g.other(e, z));
            }
            self.buf = edges;
        }
        let zs = slot(&self.g, z);
        for &(x, tx) in n {
            if x == z {
                continue;
            }
            let edges = self.take_incident(x);
            self.report.work += edges.len() as u64;
            for &e in &edges {
                let y = self.g.other(e, x);
                if let Some(t) = tx {
                    let p = self.arena.product(self.node(e), t);
                    self.g.set_node(e, p);
                }
                self.adj.set(&self.g, x, y, None);
                touched.push(y);
                if let Some(f) = self.adj.get(&self.g, z, y) {
                    self.clear_edge(f);
                    self.clear_edge(e);
                    let u = self.arena.union(self.node(f), self.node(e));
                    self.g.set_node(f, u);
                    self.drop_edge(e);
                    if mate_edge == e {
                        mate_edge = f;
                    }
                } else {
                    if self.groups.active {
                        let old = self.groups.of_edge[e][zs];
                        self.groups.size[old] -= 1;
                        let fresh = self.groups.empty[z];
                        self.groups.of_edge[e][zs] = fresh;
                        self.groups.size[fresh] += 1;
                    }
                    self.g.reattach(e, x, z);
                    self.adj.set(&self.g, z, y, Some(e));
                }
            }
            self.buf = edges;
            self.g.remove_vertex(x);
            touched.push(x);
        }
        self.m.insert(&self.g, mate_edge);
        touched.push(z);
        self.touched = touched;
        Ok(())
    }

    fn phase1(&mut self, side: Side) -> Result<()> {
        let mut w = self.take_vec();
        w.extend(self.g.vertices().filter(|&v| self.g.side(v) == side && self.g.degree(v) == 2));
        if w.is_empty() {
            self.give_vec(w);
            return Ok(());
        }
        for &a in &w {
            self.in_w[a] = true;
        }
        let (mut ws, mut ns, mut ends, mut stack) = (self.take_vec(), self.take_vec(), self.take_vec(), self.take_vec());
        for &a in &w {
            if self.seen[a] {
                continue;
            }
            self.seen[a] = true;
            let (w0, n0) = (ws.len(), ns.len());
            stack.push(a);
            while let Some(x) = stack.pop() {
                let in_w = self.in_w[x];
                if in_w {
                    ws.push(x);
                } else {
                    ns.push(x);
                }
                for e in self.g.incident(x) {
                    let y = self.g.other(e, x);
                    if (in_w || self.in_w[y]) && !self.seen[y] {
                        self.seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            self.report.work += (ws.len() - w0 + ns.len() - n0) as u64;
            ends.push(ws.len());
            ends.push(ns.len());
        }
        self.give_vec(stack);
        for &x in ws.iter().chain(&ns) {
            self.seen[x] = false;
        }
        let mut result = Ok(());
        if pieces(&ends).any(|(wr, nr)| nr.len() != wr.len() + 1) {
            result = Err(Error::InvariantViolation("degree-two edges contain a cycle in a non-cycle graph".into()));
        } else {
            for (wr, nr) in pieces(&ends) {
                if self.g.vertex_count() == 2 {
                    break;
                }
                let root = *ns[nr].iter().min().unwrap();
                let tree = self.bfs_tree(root);
                let t = self.tree_nodes(&tree);
                self.give_tree(tree);
                for &a in &ws[wr.clone()] {
                    self.in_w[a] = false;
                }
                result = self.contract(&ws[wr], &t, root, false);
                self.give_pairs(t);
                if result.is_err() {
                    break;
                }
            }
        }
        for v in [ws, ns, ends] {
            self.give_vec(v);
        }
        for &a in &w {
            self.in_w[a] = false;
        }
        self.give_vec(w);
        result
    }

    fn recategorize(&mut self, lists: &mut Worklists, x: VertexId) {
        match std::mem::replace(&mut lists.cat[x], Cat::None) {
            Cat::None => {}
            Cat::Case1 => {
                lists.case1.remove(&x);
            }
            Cat::Flat => {
                lists.flat.remove(&x);
            }
            Cat::Hub(v) => {
                if let Some(set) = lists.hubs.get_mut(&v) {
                    set.remove(&x);
                    if set.is_empty() {
                        lists.hubs.remove(&v);
                    }
                }
            }
        }
        if !self.g.is_alive(x) || self.g.degree(x) != 2 {
            return;
        }
        self.report.work += 1;
        let [e1, e2] = self.two_edges(x);
        let (m1, m2) = (self.arena.is_multi(self.node(e1)), self.arena.is_multi(self.node(e2)));
        let cat = match (m1, m2) {
            (true, true) => {
                lists.case1.insert(x);
                Cat::Case1
            }
            (false, false) => {
                lists.flat.insert(x);
                Cat::Flat
            }
            (true, false) | (false, true) => {
                let hub = self.g.other(if m1 { e1 } else { e2 }, x);
                lists.hubs.entry(hub).or_default().insert(x);
                Cat::Hub(hub)
            }
        };
        lists.cat[x] = cat;
    }

    fn phase2(&mut self) -> Result<Reduced> {
        self.groups.activate(&self.g);
        let mut lists = Worklists { cat: vec![Cat::None; self.g.vertex_capacity()], ..Default::default() };
        let start: Vec<VertexId> = self.g.vertices().filter(|&v| self.g.degree(v) == 2).collect();
        for v in start {
            self.recategorize(&mut lists, v);
        }
        loop {
            if let Some(r) = self.settled()? {
                return Ok(r);
            }
            if let Some(&u) = lists.case1.iter().next() {
                self.case1(u)?
            } else if let Some(&u) = lists.flat.iter().next() {
                self.report.flat_vertices += 1;
                self.case1(u)?
            } else if let Some((&v, us)) = lists.hubs.iter().next() {
                let us: Vec<VertexId> = us.iter().copied().collect();
                self.case2(v, &us)?
            } else {
                break;
            }
            let touched = std::mem::take(&mut self.touched);
            for &x in &touched {
                self.recategorize(&mut lists, x);
            }
            self.touched = touched;
        }
        self.clear_all();
        Ok(Reduced::Graph(self.compact()))
    }

    /// Trims the degree-two vertex `u` with every node up to date.
    fn case1(&mut self, u: VertexId) -> Result<()> {
        self.report.single_steps += 1;
        let [e1, e2] = self.two_edges(u);
        let (v, w) = (self.g.other(e1, u), self.g.other(e2, u));
        self.clear_vertex(u);
        self.clear_vertex(v);
        self.clear_vertex(w);
        let (root, leaf, to_root, to_leaf) = if v < w { (v, w, e1, e2) } else { (w, v, e2, e1) };
        let mut tree = self.new_tree();
        tree.verts.extend([root, leaf]);
        tree.start.extend([0, 1, 1]);
        tree.kids.push((to_root, to_leaf, 1));
        let t = self.tree_nodes(&tree);
        self.give_tree(tree);
        let result = self.contract(&[u], &t, root, false);
        self.give_pairs(t);
        result?;
        self.g.tidy(root);
        Ok(())
    }

    /// Trims all degree-two neighbours `us` of the hub `v` whose edge to `v`
    /// has potential at least two, delaying the update of the hub's edges.
    fn case2(&mut self, v: VertexId, us: &[VertexId]) -> Result<()> {
        self.report.hub_steps += 1;
        let groups = self.groups.live_count(v) as u64;
        let mut spokes = Vec::with_capacity(us.len());
        let mut repeated = None;
        for &u in us {
            let [e1, e2] = self.two_edges(u);
            let (to_v, to_w) = if self.g.other(e1, u) == v { (e1, e2) } else { (e2, e1) };
            let w = self.g.other(to_w, u);
            if std::mem::replace(&mut self.seen[w], true) {
                repeated.get_or_insert(w);
            }
            // A potential beyond `u64` exceeds any group count.
            if self.arena.small_potential(self.node(to_v)).is_some_and(|p| p < groups) {
                self.report.invariant3_violations += 1;
            }
            spokes.push((u, to_v, to_w, w));
        }
        for s in &spokes {
            self.seen[s.3] = false;
        }
        if let Some(w) = repeated {
            return Err(Error::InvariantViolation(format!("hub {v} has two spokes ending at {w}")));
        }
        for &(u, to_v, _, w) in &spokes {
            self.clear_vertex(u);
            self.clear_vertex(w);
            self.clear_edge(to_v);
        }
        let k = spokes.len();
        let mut tree = self.new_tree();
        tree.verts.push(v);
        tree.verts.extend(spokes.iter().map(|s| s.3));
        tree.kids.extend(spokes.iter().enumerate().map(|(i, &(_, to_v, to_w, _))| (to_v, to_w, i + 1)));
        tree.start.push(0);
        tree.start.resize(k + 2, k);
        let t = self.tree_nodes(&tree);
        self.give_tree(tree);
        let mut w = self.take_vec();
        w.extend(spokes.iter().map(|s| s.0));
        let result = self.contract(&w, &t, v, true);
        self.give_vec(w);
        self.give_pairs(t);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_list, build_graph, find_initial_matching};
    use crate::oracle::{self, complete, cycle, path_substituted};

    fn component(list: &crate::graph::EdgeList, arena: &mut CircuitArena) -> Component {
        let g = build_from_list(arena, list).unwrap();
        let m = find_initial_matching(&g).unwrap();
        Component { graph: g, matching: m }
    }

    fn encoded_count(t: &Trimmed, arena: &CircuitArena) -> BigUint {
        let mut total = t.iso.map_or(BigUint::one(), |n| arena.potential(n));
        for c in &t.components {
            total *= oracle::encoded_count(&c.graph, arena).unwrap();
        }
        total
    }

    #[test]
    fn single_edge_is_kept() {
        let mut arena = CircuitArena::new();
        let g = build_graph(&mut arena, 1, 1, &[(0, 0)]).unwrap();
        let m = find_initial_matching(&g).unwrap();
        let t = trim(&g, &m, &mut arena).unwrap();
        assert_eq!(t.iso, Some(0));
        assert!(t.components.is_empty());
        assert_eq!(t.report.created_node_count, 0);
    }

    #[test]
    fn cycles_collapse_to_one_edge() {
        for (len, nodes) in [(4usize, 3u64), (6, 5), (10, 9)] {
            let mut arena = CircuitArena::new();
            let list = cycle(len).unwrap();
            let c = component(&list, &mut arena);
            let before = arena.created();
            let node = trim_cycle(&c, &mut arena).unwrap();
            assert_eq!(arena.created() - before, nodes);
            assert_eq!(arena.potential(node), BigUint::from(2u32));
            let g = build_from_list(&mut CircuitArena::new(), &list).unwrap();
            let expected = oracle::brute_force(&g).unwrap().matchings;
            let mut got = arena.materialize(node, 8).unwrap();
            got.sort();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn c6_trims_to_isolated_edge() {
        let mut arena = CircuitArena::new();
        let g = build_from_list(&mut arena, &cycle(6).unwrap()).unwrap();
        let m = find_initial_matching(&g).unwrap();
        let t = trim(&g, &m, &mut arena).unwrap();
        assert!(t.components.is_empty());
        assert_eq!(arena.potential(t.iso.unwrap()), BigUint::from(2u32));
        assert_eq!(t.report.cycles, 1);
    }

    #[test]
    fn complete_graphs_are_already_trimmed() {
        let mut arena = CircuitArena::new();
        let g = build_from_list(&mut arena, &complete(3)).unwrap();
        let m = find_initial_matching(&g).unwrap();
        let t = trim(&g, &m, &mut arena).unwrap();
        assert_eq!(t.components.len(), 1);
        assert_eq!(t.components[0].graph.edge_count(), 9);
        assert_eq!(t.report.created_node_count, 0);
        assert_eq!(t.report.potential_after, BigUint::from(5u32));
    }

    #[test]
    fn single_degree_two_vertex() {
        // u = left 0 sees right 0 and 1 only; left 1..3 see every right vertex.
        let mut edges = vec![(0, 0), (0, 1)];
        for l in 1..4 {
            for r in 0..4 {
                edges.push((l, r));
            }
        }
        let mut arena = CircuitArena::new();
        let g = build_graph(&mut arena, 4, 4, &edges).unwrap();
        let m = find_initial_matching(&g).unwrap();
        let t = trim(&g, &m, &mut arena).unwrap();
        assert_eq!(t.components.len(), 1);
        let c = &t.components[0];
        assert_eq!((c.graph.vertex_count(), c.graph.edge_count()), (6, 9));
        let doubled = c.graph.edge_ids().filter(|&e| arena.is_multi(c.graph.edge(e).node)).count();
        assert_eq!(doubled, 3);
        assert_eq!(encoded_count(&t, &arena), BigUint::from(12u32));
        assert!(t.report.potential_after >= t.report.potential_before);
    }

    #[test]
    fn path_substituted_trims_to_complete() {
        for (n, k) in [(3usize, 3usize), (3, 5), (4, 3)] {
            let mut arena = CircuitArena::new();
            let g = build_from_list(&mut arena, &path_substituted(n, k).unwrap()).unwrap();
            let m = find_initial_matching(&g).unwrap();
            let t = trim(&g, &m, &mut arena).unwrap();
            assert_eq!(t.components.len(), 1);
            let c = &t.components[0];
            assert_eq!((c.graph.vertex_count(), c.graph.edge_count()), (2 * n, n * n));
            let fact: u32 = (1..=n as u32).product();
            assert_eq!(encoded_count(&t, &arena), BigUint::from(fact));
        }
    }

    #[test]
    fn phase1_removes_path_interiors() {
        let mut arena = CircuitArena::new();
        let list = path_substituted(3, 5).unwrap();
        let c = component(&list, &mut arena);
        let (r, _) = phase1(c, &mut arena).unwrap();
        let Reduced::Graph(c) = r else { panic!("expected a graph") };
        assert_eq!(c.min_degree(), 3);
        assert_eq!(oracle::encoded_count(&c.graph, &arena).unwrap(), BigUint::from(6u32));
    }

    #[test]
    fn two_joined_squares() {
        // Two 4-cycles u v v1 w and u' v' v1' w' joined by the edge v1 v1'.
        // Left: u 0, v1 1, v' 2, w' 3. Right: v 0, w 1, v1' 2, u' 3.
        let edges = [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 2), (3, 2), (2, 3), (3, 3)];
        let mut arena = CircuitArena::new();
        let g = build_graph(&mut arena, 4, 4, &edges).unwrap();
        let m = find_initial_matching(&g).unwrap();
        let t = trim(&g, &m, &mut arena).unwrap();
        assert!(t.components.is_empty());
        let root = t.iso.unwrap();
        assert_eq!(arena.potential(root), BigUint::from(4u32));
        let mut got = arena.materialize(root, 16).unwrap();
        got.sort();
        let expected = oracle::brute_force(&g).unwrap().matchings;
        assert_eq!(got, expected);
    }

    fn encoded_set(t: &Trimmed, arena: &CircuitArena) -> Vec<Vec<EdgeId>> {
        let mut partial: Vec<Vec<EdgeId>> = match t.iso {
            Some(n) => arena.materialize(n, 1 << 16).unwrap(),
            None => vec![Vec::new()],
        };
        for c in &t.components {
            let sets = oracle::encoded_matchings(&c.graph, arena, 1 << 16).unwrap();
            let mut next = Vec::new();
            for p in &partial {
                for q in &sets {
                    let mut r = p.clone();
                    r.extend_from_slice(q);
                    next.push(r);
                }
            }
            partial = next;
        }
        for m in &mut partial {
            m.sort_unstable();
        }
        partial.sort();
        partial
    }

    #[test]
    fn sparse_graphs_exercise_both_cases() {
        let mut total = TrimReport::default();
        for seed in 0..400u64 {
            let mut arena = CircuitArena::new();
            let n = 4 + (seed % 6) as usize;
            let list = oracle::random_with_matching(n, seed, 0.3).unwrap();
            let g = build_from_list(&mut arena, &list).unwrap();
            let m = find_initial_matching(&g).unwrap();
            let t = trim(&g, &m, &mut arena).unwrap();
            total.absorb(&t.report);
            if n <= 6 {
                assert_eq!(encoded_set(&t, &arena), oracle::brute_force(&g).unwrap().matchings);
            }
        }
        assert!(total.single_steps > 0 && total.hub_steps > 0, "{total:?}");
        assert_eq!(total.flat_vertices, 0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(96))]
        #[test]
        fn trimming_preserves_matchings(n in 2usize..8, seed in 0u64..10_000, density in 0.2f64..0.7) {
            let mut arena = CircuitArena::new();
            let list = oracle::random_with_matching(n, seed, density).unwrap();
            let g = build_from_list(&mut arena, &list).unwrap();
            let m = find_initial_matching(&g).unwrap();
            let t = trim(&g, &m, &mut arena).unwrap();
            proptest::prop_assert!(t.report.potential_after >= t.report.potential_before);
            for c in &t.components {
                proptest::prop_assert!(c.min_degree() >= 3);
                proptest::prop_assert!(c.matching.is_perfect(&c.graph));
                let cls = classify_edges(&OrientedView::new(&c.graph, &c.matching));
                proptest::prop_assert_eq!(cls.scc_count(), 1);
            }
            let expected = oracle::brute_force(&g).unwrap().matchings;
            proptest::prop_assert_eq!(encoded_set(&t, &arena), expected);
        }
    }
}
