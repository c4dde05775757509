//! Union-product circuit: an append-only DAG whose nodes encode sets of
//! matchings of the input graph, together with the enumeration of all
//! visiting trees of a node.
//!
//! A visiting tree of `u` picks one child at every union node and both
//! children at every product node; its leaves form one matching of `Υ(u)`.
//! Enumeration keeps two pointer slots per free product node and walks the
//! trees in recursive left-to-right order, so that the number of stack
//! operations stays within a constant factor of the number of trees.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::rc::Rc;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeList};

pub type NodeId = u32;

const NIL: NodeId = NodeId::MAX;
// Bootstrap nodes live outside the arena: a1 is an empty product, a2 the
// union of a1 and the root, a3 a product whose left child is a2.
const A1: NodeId = NodeId::MAX - 1;
const A2: NodeId = NodeId::MAX - 2;
const A3: NodeId = NodeId::MAX - 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    Left = 0,
    Right = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf(EdgeId),
    Union(NodeId, NodeId),
    Product(NodeId, NodeId),
}

/// Number of sets encoded by a node, inline while it fits a machine word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Potential {
    Small(u64),
    Big(BigUint),
}

impl Potential {
    pub fn to_biguint(&self) -> BigUint {
        match self {
            Potential::Small(x) => BigUint::from(*x),
            Potential::Big(x) => x.clone(),
        }
    }

    pub fn small(&self) -> Option<u64> {
        match self {
            Potential::Small(x) => Some(*x),
            Potential::Big(_) => None,
        }
    }

    fn normalized(x: BigUint) -> Self {
        match x.to_u64() {
            Some(v) => Potential::Small(v),
            None => Potential::Big(x),
        }
    }

    fn add(&self, other: &Potential) -> Potential {
        match (self.small(), other.small()) {
            (Some(a), Some(b)) if a.checked_add(b).is_some() => Potential::Small(a + b),
            _ => Potential::normalized(self.to_biguint() + other.to_biguint()),
        }
    }

    fn mul(&self, other: &Potential) -> Potential {
        match (self.small(), other.small()) {
            (Some(a), Some(b)) if a.checked_mul(b).is_some() => Potential::Small(a * b),
            _ => Potential::normalized(self.to_biguint() * other.to_biguint()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CircuitNode {
    pub kind: NodeKind,
    pub potential: Potential,
    multi: bool,
    skip: NodeId,
    visit: [NodeId; 2],
}

impl CircuitNode {
    /// Product node whose visit slots are driven by the enumerator.
    pub fn is_free(&self, id: NodeId) -> bool {
        self.skip == id
    }
}

#[derive(Clone, Debug, Default)]
pub struct CircuitArena {
    nodes: Vec<CircuitNode>,
    created: u64,
}

impl CircuitArena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node with id `len` or above. The creation counter is kept.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn created(&self) -> u64 {
        self.created
    }

    pub fn node(&self, id: NodeId) -> &CircuitNode {
        &self.nodes[id as usize]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id as usize].kind
    }

    pub fn potential(&self, id: NodeId) -> BigUint {
        self.nodes[id as usize].potential.to_biguint()
    }

    /// The potential of `id` if it fits a `u64`.
    pub fn small_potential(&self, id: NodeId) -> Option<u64> {
        self.nodes[id as usize].potential.small()
    }

    /// Potential at least two.
    pub fn is_multi(&self, id: NodeId) -> bool {
        self.nodes[id as usize].multi
    }

    pub fn skip(&self, id: NodeId) -> Option<NodeId> {
        match self.nodes[id as usize].skip {
            NIL => None,
            s => Some(s),
        }
    }

    pub fn visit_slots(&self, id: NodeId) -> [NodeId; 2] {
        self.nodes[id as usize].visit
    }

    fn push(&mut self, node: CircuitNode) -> NodeId {
        let id = self.nodes.len();
        assert!(id < A3 as usize, "circuit arena exhausted");
        self.nodes.push(node);
        self.created += 1;
        id as NodeId
    }

    pub fn leaf(&mut self, edge: EdgeId) -> NodeId {
        self.push(CircuitNode {
            kind: NodeKind::Leaf(edge),
            potential: Potential::Small(1),
            multi: false,
            skip: NIL,
            visit: [NIL, NIL],
        })
    }

    pub fn union(&mut self, l: NodeId, r: NodeId) -> NodeId {
        let potential = self.nodes[l as usize].potential.add(&self.nodes[r as usize].potential);
        self.push(CircuitNode { kind: NodeKind::Union(l, r), potential, multi: true, skip: NIL, visit: [NIL, NIL] })
    }

    pub fn product(&mut self, l: NodeId, r: NodeId) -> NodeId {
        let potential = self.nodes[l as usize].potential.mul(&self.nodes[r as usize].potential);
        let (ml, mr) = (self.is_multi(l), self.is_multi(r));
        let id = self.nodes.len() as NodeId;
        let any_union =
            matches!(self.kind(l), NodeKind::Union(..)) || matches!(self.kind(r), NodeKind::Union(..));
        let (skip, visit) = if !ml && !mr {
            (NIL, [l, r])
        } else if any_union || (ml && mr) {
            (id, [l, r])
        } else if ml {
            (self.nodes[l as usize].skip, [l, r])
        } else {
            (self.nodes[r as usize].skip, [l, r])
        };
        let multi = ml || mr;
        self.push(CircuitNode { kind: NodeKind::Product(l, r), potential, multi, skip, visit })
    }

    /// Product where an absent operand acts as the identity.
    pub fn product_opt(&mut self, a: Option<NodeId>, b: Option<NodeId>) -> Option<NodeId> {
        match (a, b) {
            (Some(a), Some(b)) => Some(self.product(a, b)),
            (a, None) => a,
            (None, b) => b,
        }
    }

    pub fn union_opt(&mut self, a: Option<NodeId>, b: Option<NodeId>) -> Option<NodeId> {
        match (a, b) {
            (Some(a), Some(b)) => Some(self.union(a, b)),
            (a, None) => a,
            (None, b) => b,
        }
    }

    /// Right-nested product `a₁ □ (a₂ □ (… □ a_k))`.
    pub fn product_chain(&mut self, items: &[NodeId]) -> Option<NodeId> {
        let mut acc: Option<NodeId> = None;
        for &x in items.iter().rev() {
            acc = self.product_opt(Some(x), acc);
        }
        acc
    }

    /// Nodes reachable from `root`, children before parents.
    pub fn cone(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = std::collections::HashSet::new();
        let mut order = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((u, expanded)) = stack.pop() {
            if expanded {
                order.push(u);
                continue;
            }
            if !seen.insert(u) {
                continue;
            }
            stack.push((u, true));
            match self.kind(u) {
                NodeKind::Leaf(_) => {}
                NodeKind::Union(l, r) | NodeKind::Product(l, r) => {
                    stack.push((r, false));
                    stack.push((l, false));
                }
            }
        }
        order
    }

    /// One line per node of the cone of `root`: `id kind left right potential`.
    pub fn dump(&self, root: NodeId) -> String {
        let mut out = String::new();
        for u in self.cone(root) {
            let (kind, l, r) = match self.kind(u) {
                NodeKind::Leaf(e) => ("leaf", e.to_string(), "-".to_string()),
                NodeKind::Union(l, r) => ("union", l.to_string(), r.to_string()),
                NodeKind::Product(l, r) => ("product", l.to_string(), r.to_string()),
            };
            let _ = writeln!(out, "{u} {kind} {l} {r} {}", self.potential(u));
        }
        out
    }

    /// `Υ(u)` spelled out, each matching sorted by edge id, in the order the
    /// recursive definition produces them.
    pub fn materialize(&self, u: NodeId, cap: usize) -> Result<Vec<Vec<EdgeId>>> {
        let count = self.potential(u).to_usize().unwrap_or(usize::MAX);
        if count > cap {
            return Err(Error::TestGuard(format!("potential {} above cap {cap}", self.potential(u))));
        }
        let mut memo = HashMap::new();
        Ok(self.materialize_rec(u, &mut memo).as_ref().clone())
    }

    fn materialize_rec(&self, u: NodeId, memo: &mut HashMap<NodeId, Rc<Vec<Vec<EdgeId>>>>) -> Rc<Vec<Vec<EdgeId>>> {
        if let Some(v) = memo.get(&u) {
            return v.clone();
        }
        let value = match self.kind(u) {
            NodeKind::Leaf(e) => vec![vec![e]],
            NodeKind::Union(l, r) => {
                let mut out = self.materialize_rec(l, memo).as_ref().clone();
                out.extend(self.materialize_rec(r, memo).iter().cloned());
                out
            }
            NodeKind::Product(l, r) => {
                let a = self.materialize_rec(l, memo);
                let b = self.materialize_rec(r, memo);
                let mut out = Vec::with_capacity(a.len() * b.len());
                for x in a.iter() {
                    for y in b.iter() {
                        let mut m = x.clone();
                        m.extend_from_slice(y);
                        m.sort_unstable();
                        out.push(m);
                    }
                }
                out
            }
        };
        let value = Rc::new(value);
        memo.insert(u, value.clone());
        value
    }
}

/// Checks the proper-encoding conditions on every node of the cone of
/// `root`: potentials count the encoded sets, every encoded set is a matching
/// of `input`, union children encode disjoint families and product children
/// use disjoint edge supports.
pub fn audit_encoding(arena: &CircuitArena, root: NodeId, input: &EdgeList, cap: usize) -> Result<()> {
    arena.materialize(root, cap)?;
    let fail = |msg: String| Err(Error::InvariantViolation(msg));
    let mut memo = HashMap::new();
    for u in arena.cone(root) {
        let sets = arena.materialize_rec(u, &mut memo);
        if BigUint::from(sets.len()) != arena.potential(u) {
            return fail(format!("node {u}: potential {} but {} sets", arena.potential(u), sets.len()));
        }
        for m in sets.iter() {
            let mut lefts: Vec<usize> = m.iter().map(|&e| input.edges[e].0).collect();
            let mut rights: Vec<usize> = m.iter().map(|&e| input.edges[e].1).collect();
            lefts.sort_unstable();
            rights.sort_unstable();
            if lefts.windows(2).any(|w| w[0] == w[1]) || rights.windows(2).any(|w| w[0] == w[1]) {
                return fail(format!("node {u}: {m:?} is not a matching"));
            }
        }
        match arena.kind(u) {
            NodeKind::Leaf(_) => {}
            NodeKind::Union(l, r) => {
                let a = arena.materialize_rec(l, &mut memo);
                let b = arena.materialize_rec(r, &mut memo);
                let left: std::collections::HashSet<&Vec<EdgeId>> = a.iter().collect();
                if b.iter().any(|m| left.contains(m)) {
                    return fail(format!("union node {u}: children share a matching"));
                }
            }
            NodeKind::Product(l, r) => {
                let a = arena.materialize_rec(l, &mut memo);
                let b = arena.materialize_rec(r, &mut memo);
                let support: std::collections::HashSet<EdgeId> = a.iter().flatten().copied().collect();
                if b.iter().flatten().any(|e| support.contains(e)) {
                    return fail(format!("product node {u}: children share an edge"));
                }
            }
        }
    }
    Ok(())
}

/// The members of `P^side_u`: maximal product or leaf descendants of the
/// chosen child reached through union nodes only, left to right.
pub fn side_sequence(arena: &CircuitArena, u: NodeId, side: Dir) -> SideSequence<'_> {
    let child = match arena.kind(u) {
        NodeKind::Product(l, r) => {
            if side == Dir::Left {
                l
            } else {
                r
            }
        }
        _ => panic!("side_sequence needs a product node"),
    };
    SideSequence { arena, stack: vec![child] }
}

pub struct SideSequence<'a> {
    arena: &'a CircuitArena,
    stack: Vec<NodeId>,
}

impl Iterator for SideSequence<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        while let Some(u) = self.stack.pop() {
            match self.arena.kind(u) {
                NodeKind::Union(l, r) => {
                    self.stack.push(r);
                    self.stack.push(l);
                }
                _ => return Some(u),
            }
        }
        None
    }
}

/// Handle on the visiting tree currently held by the enumerator. Valid only
/// inside the sink callback.
pub struct VisitTree<'a> {
    arena: &'a CircuitArena,
    root: NodeId,
}

impl VisitTree<'_> {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn edges(&self) -> Vec<EdgeId> {
        current_leaves(self.arena, self.root)
    }

    pub fn edges_into(&self, out: &mut Vec<EdgeId>) {
        leaves_into(self.arena, self.root, out);
    }
}

/// Leaves of the visiting tree rooted at `root`, following the visit slots.
pub fn current_leaves(arena: &CircuitArena, root: NodeId) -> Vec<EdgeId> {
    let mut out = Vec::new();
    leaves_into(arena, root, &mut out);
    out
}

fn leaves_into(arena: &CircuitArena, root: NodeId, out: &mut Vec<EdgeId>) {
    out.clear();
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        let node = arena.node(u);
        match node.kind {
            NodeKind::Leaf(e) => out.push(e),
            NodeKind::Product(..) => {
                stack.push(node.visit[1]);
                stack.push(node.visit[0]);
            }
            NodeKind::Union(..) => unreachable!("union node inside a visiting tree"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VisitStats {
    pub trees: u64,
    /// Iterations of the outer (ready stack) and inner (waiting stack) loops.
    pub steps: u64,
    /// Moves of the depth-first walks over union regions.
    pub dfs_moves: u64,
    pub completed: bool,
}

impl VisitStats {
    /// Whether `steps ≤ 6·Φ(r)`.
    pub fn within_bound(&self, potential: &BigUint) -> bool {
        BigUint::from(self.steps) <= potential * 6u32
    }
}

struct Cursor<'a> {
    arena: &'a mut CircuitArena,
    root: NodeId,
    a3_left: NodeId,
    ready: Vec<(NodeId, NodeId, Dir, usize)>,
    waiting: Vec<(NodeId, Dir)>,
    // Union nodes on the current walk of each ready entry, with the branch taken.
    path: Vec<(NodeId, bool)>,
    stats: VisitStats,
}

impl Cursor<'_> {
    fn child(&self, u: NodeId, d: Dir) -> NodeId {
        match u {
            A3 => {
                debug_assert_eq!(d, Dir::Left);
                A2
            }
            A2 => {
                if d == Dir::Left {
                    A1
                } else {
                    self.root
                }
            }
            _ => match self.arena.kind(u) {
                NodeKind::Union(l, r) | NodeKind::Product(l, r) => {
                    if d == Dir::Left {
                        l
                    } else {
                        r
                    }
                }
                NodeKind::Leaf(_) => unreachable!(),
            },
        }
    }

    fn is_union(&self, u: NodeId) -> bool {
        u == A2 || (u != A1 && matches!(self.arena.kind(u), NodeKind::Union(..)))
    }

    fn multi(&self, u: NodeId) -> bool {
        u != A1 && self.arena.is_multi(u)
    }

    fn leftmost(&mut self, mut u: NodeId) -> NodeId {
        while self.is_union(u) {
            self.path.push((u, false));
            self.stats.dfs_moves += 1;
            u = self.child(u, Dir::Left);
        }
        u
    }

    /// Moves the walk stored in `path[start..]` to the next member of the
    /// sequence, or truncates it and returns `None` at the end.
    fn advance(&mut self, start: usize) -> Option<NodeId> {
        while self.path.len() > start {
            let (u, went_right) = *self.path.last().unwrap();
            self.stats.dfs_moves += 1;
            if went_right {
                self.path.pop();
            } else {
                self.path.last_mut().unwrap().1 = true;
                let r = self.child(u, Dir::Right);
                return Some(self.leftmost(r));
            }
        }
        None
    }

    fn ready_op(&mut self, u: NodeId, v: NodeId, d: Dir, start: usize) {
        if u == A3 {
            self.a3_left = v;
        } else {
            self.arena.nodes[u as usize].visit[d as usize] = v;
        }
        self.ready.push((u, v, d, start));
        if self.multi(v) {
            // A side of potential one keeps the pointer set at creation.
            let s = self.arena.nodes[v as usize].skip;
            for side in [Dir::Right, Dir::Left] {
                if self.multi(self.child(s, side)) {
                    self.waiting.push((s, side));
                }
            }
        }
    }
}

/// Calls `sink` once per visiting tree of `r` in recursive left-to-right
/// order. Stops early when the sink breaks.
pub fn visit_all<F>(arena: &mut CircuitArena, r: NodeId, mut sink: F) -> Result<VisitStats>
where
    F: FnMut(&VisitTree) -> ControlFlow<()>,
{
    let (mut ready, mut waiting, mut path) = VISIT_BUFFERS.with(|b| std::mem::take(&mut *b.borrow_mut()));
    ready.clear();
    ready.push((A3, A1, Dir::Left, 0));
    waiting.clear();
    path.clear();
    path.push((A2, false));
    let mut c = Cursor { arena, root: r, a3_left: A1, ready, waiting, path, stats: VisitStats::default() };
    let result = run_cursor(&mut c, &mut sink);
    VISIT_BUFFERS.with(|b| *b.borrow_mut() = (c.ready, c.waiting, c.path));
    result
}

type VisitBuffers = (Vec<(NodeId, NodeId, Dir, usize)>, Vec<(NodeId, Dir)>, Vec<(NodeId, bool)>);

thread_local! {
    static VISIT_BUFFERS: RefCell<VisitBuffers> = RefCell::new(Default::default());
}

fn run_cursor<F>(c: &mut Cursor, sink: &mut F) -> Result<VisitStats>
where
    F: FnMut(&VisitTree) -> ControlFlow<()>,
{
    while let Some((u, _v, d, start)) = c.ready.pop() {
        c.stats.steps += 1;
        match c.advance(start) {
            None => {
                if u == A3 {
                    continue;
                }
                if d == Dir::Right && c.multi(c.child(u, Dir::Left)) {
                    c.waiting.push((u, Dir::Right));
                } else if d == Dir::Left && c.multi(c.child(u, Dir::Right))
                    && c.waiting.pop() != Some((u, Dir::Right)) {
                        return Err(Error::InvariantViolation(format!("waiting stack out of step at node {u}")));
                    }
            }
            Some(w) => {
                c.ready_op(u, w, d, start);
                while let Some((x, dx)) = c.waiting.pop() {
                    c.stats.steps += 1;
                    let start = c.path.len();
                    let child = c.child(x, dx);
                    let first = c.leftmost(child);
                    c.ready_op(x, first, dx, start);
                }
                c.stats.trees += 1;
                let tree = VisitTree { arena: c.arena, root: c.a3_left };
                if sink(&tree).is_break() {
                    return Ok(c.stats);
                }
            }
        }
    }
    if !c.waiting.is_empty() {
        return Err(Error::InvariantViolation("waiting stack not empty after enumeration".into()));
    }
    c.stats.completed = true;
    Ok(c.stats)
}
