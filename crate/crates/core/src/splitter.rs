//! Choosing the edge sets `A` and `B` whose removal splits the perfect
//! matchings of a trimmed strongly connected graph and charges its potential.
//!
//! The split is built around an M⁺-minimal edge `π = στ`, oriented from `σ`
//! to `τ` in `D(G, M_π)`. Removing the other edges at `σ` and `τ` leaves a
//! graph whose components, together with `σ` and `τ`, form a poset; `A` and
//! `B` always partition `δ(I) ∪ {π}` for an ideal `I` of that poset.

use num_bigint::{BigInt, BigUint};

use crate::circuit::CircuitArena;
use crate::error::{Error, Result};
use crate::graph::{
    alternating_cycle_through, classify_edges, flip, potential, strongly_connected_potential, BipartiteGraph, EdgeClass,
    EdgeClassification, EdgeId, Matching, OrientedView, VertexId,
};

/// Poset node of `τ`.
pub const TAU: usize = 0;
/// Poset node of `σ`.
pub const SIGMA: usize = 1;

/// The decomposition of `G` around `π`.
#[derive(Clone, Debug)]
pub struct SplitContext {
    pub pi: EdgeId,
    pub sigma: VertexId,
    pub tau: VertexId,
    /// Poset node per vertex: `TAU`, `SIGMA`, or `2 + i` for the `i`-th component.
    pub node_of: Vec<usize>,
    /// Per poset node: whether it is a trivial component (or `σ`, `τ`).
    pub trivial: Vec<bool>,
    pub external: Vec<EdgeId>,
    /// Tail and head node per edge, for external edges.
    pub arc: Vec<(usize, usize)>,
    pub out_edges: Vec<Vec<EdgeId>>,
    pub in_edges: Vec<Vec<EdgeId>>,
    /// Deduplicated successor lists.
    pub succ: Vec<Vec<usize>>,
    pub topo: Vec<usize>,
    /// `reach[x]` is the bitset of nodes `y` with `x ≤ y`.
    reach: Vec<Vec<u64>>,
    /// τ, κ₁, …, κ_ζ, σ.
    pub chain: Vec<usize>,
    pub m_pi: Matching,
}

impl SplitContext {
    pub fn node_count(&self) -> usize {
        self.trivial.len()
    }

    pub fn component_count(&self) -> usize {
        self.node_count() - 2
    }

    pub fn leq(&self, x: usize, y: usize) -> bool {
        self.reach[x][y / 64] >> (y % 64) & 1 == 1
    }

    pub fn comparable(&self, x: usize, y: usize) -> bool {
        self.leq(x, y) || self.leq(y, x)
    }

    pub fn nontrivial(&self) -> Vec<usize> {
        (2..self.node_count()).filter(|&x| !self.trivial[x]).collect()
    }

    /// Length ζ of the chain without τ and σ.
    pub fn zeta(&self) -> usize {
        self.chain.len() - 2
    }

    pub fn is_ideal(&self, members: &[bool]) -> bool {
        self.external.iter().all(|&e| {
            let (x, y) = self.arc[e];
            !members[y] || members[x]
        }) && members[TAU]
            && !members[SIGMA]
    }

    /// External edges leaving the ideal.
    pub fn boundary(&self, members: &[bool]) -> Vec<EdgeId> {
        self.external
            .iter()
            .copied()
            .filter(|&e| {
                let (x, y) = self.arc[e];
                members[x] && !members[y]
            })
            .collect()
    }

    /// Ideal generated by `tops`.
    pub fn down_closure(&self, tops: &[usize]) -> Vec<bool> {
        (0..self.node_count()).map(|x| tops.iter().any(|&t| self.leq(x, t))).collect()
    }

    fn members(&self, nodes: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.node_count()];
        for &x in nodes {
            m[x] = true;
        }
        m
    }
}

/// The chosen split.
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub a: Vec<EdgeId>,
    pub b: Vec<EdgeId>,
    pub case_tag: u8,
    pub delta: BigInt,
    /// Whether `10·delta ≥ |E|`.
    pub charged: bool,
    /// Candidates rejected before this one.
    pub fallbacks: usize,
    /// Perfect matching of `G ∖ A`.
    pub matching_a: Matching,
    /// Perfect matching of `G ∖ B` (it contains `π`).
    pub matching_b: Matching,
    /// Classification of `G ∖ A` under `matching_a`.
    pub classes_a: EdgeClassification,
    /// Classification of `G ∖ B` under `matching_b`.
    pub classes_b: EdgeClassification,
    pub work: u64,
}

impl SplitResult {
    pub fn trace_line(&self) -> String {
        format!("case={} |A|={} |B|={} delta={}", self.case_tag, self.a.len(), self.b.len(), self.delta)
    }
}

/// Reachability of external edges and components after removing edges.
#[derive(Clone, Debug, Default)]
pub struct ReachabilityReport {
    pub reachable_edges: Vec<EdgeId>,
    pub unreachable_edges: Vec<EdgeId>,
    pub reachable_components: Vec<usize>,
    pub unreachable_components: Vec<usize>,
}

fn mask(g: &BipartiteGraph, edges: &[EdgeId]) -> Vec<bool> {
    let mut m = vec![false; g.edge_capacity()];
    for &e in edges {
        m[e] = true;
    }
    m
}

fn matching_with(g: &BipartiteGraph, m: &Matching, e: EdgeId, removed: Option<&[bool]>) -> Option<Matching> {
    if m.contains(g, e) {
        return Some(m.clone());
    }
    let view = match removed {
        Some(r) => OrientedView::with_removed(g, m, r),
        None => OrientedView::new(g, m),
    };
    let cycle = alternating_cycle_through(&view, e)?;
    flip(g, m, &cycle).ok()
}

fn matching_without(g: &BipartiteGraph, m: &Matching, e: EdgeId) -> Option<Matching> {
    if !m.contains(g, e) {
        return Some(m.clone());
    }
    let cycle = alternating_cycle_through(&OrientedView::new(g, m), e)?;
    flip(g, m, &cycle).ok()
}

/// Edges sharing an endpoint with `e`.
fn adjacent(g: &BipartiteGraph, e: EdgeId) -> Vec<EdgeId> {
    let edge = g.edge(e);
    g.incident(edge.left).chain(g.incident(edge.right)).filter(|&f| f != e).collect()
}

/// The two classifications that decide minimality of `e`.
struct Witness {
    minus: Matching,
    cls_minus: EdgeClassification,
    violators: Vec<EdgeId>,
    plus: Matching,
    cls_plus: EdgeClassification,
}

fn witness(g: &BipartiteGraph, m: &Matching, e: EdgeId) -> Result<Witness> {
    let lost = || Error::InvariantViolation(format!("edge {e} lies on no alternating cycle"));
    let minus = matching_without(g, m, e).ok_or_else(lost)?;
    let plus = matching_with(g, m, e, None).ok_or_else(lost)?;
    let only = mask(g, &[e]);
    let cls_minus = classify_edges(&OrientedView::with_removed(g, &minus, &only));
    let around = mask(g, &adjacent(g, e));
    let cls_plus = classify_edges(&OrientedView::with_removed(g, &plus, &around));
    let violators = cls_minus
        .b_minus
        .iter()
        .copied()
        .filter(|&h| cls_plus.edge_class[h] != EdgeClass::Plus)
        .collect();
    Ok(Witness { minus, cls_minus, violators, plus, cls_plus })
}

/// `b⁻(G_e⁻) ⊆ b⁺(G_e⁺)`.
pub fn is_m_plus_minimal(g: &BipartiteGraph, m: &Matching, e: EdgeId) -> Result<bool> {
    Ok(witness(g, m, e)?.violators.is_empty())
}

/// An M⁺-minimal edge and a perfect matching containing it.
pub fn find_m_plus_minimal(g: &BipartiteGraph, m: &Matching) -> Result<(EdgeId, Matching)> {
    let (pi, m_pi, _) = find_m_plus_minimal_counted(g, m)?;
    Ok((pi, m_pi))
}

/// As [`find_m_plus_minimal`], also returning how many extra candidates were
/// tested after the cycle traversal.
pub fn find_m_plus_minimal_counted(g: &BipartiteGraph, m: &Matching) -> Result<(EdgeId, Matching, usize)> {
    let (e, w, extra) = minimal_witness(g, m)?;
    Ok((e, w.plus, extra))
}

/// An M⁺-minimal edge with the classifications that certify it.
fn minimal_witness(g: &BipartiteGraph, m: &Matching) -> Result<(EdgeId, Witness, usize)> {
    let mut e = g.edge_ids().next().ok_or_else(|| Error::InvariantViolation("graph has no edges".into()))?;
    let mut extra = 0;
    for round in 0..=g.edge_count() {
        let w = witness(g, m, e)?;
        let Some(&h) = w.violators.first() else {
            return Ok((e, w, extra));
        };
        if round > 0 {
            extra += 1;
        }
        let candidate = traverse(g, &w, e, h)?;
        e = candidate.unwrap_or(h);
    }
    Err(Error::InvariantViolation("no M⁺-minimal edge found".into()))
}

/// Follows a cycle through `h` from `e` to the first b⁻ edge entering a
/// component of `G_e⁻` that has two incoming b⁻ edges.
fn traverse(g: &BipartiteGraph, w: &Witness, e: EdgeId, h: EdgeId) -> Result<Option<EdgeId>> {
    let view = OrientedView::new(g, &w.minus);
    let cycle = alternating_cycle_through(&view, h)
        .ok_or_else(|| Error::InvariantViolation(format!("edge {h} lies on no alternating cycle")))?;
    let Some(start) = cycle.iter().position(|&f| f == e) else {
        return Err(Error::InvariantViolation("cycle through a dominated edge misses its dominator".into()));
    };
    let mut incoming = vec![0usize; w.cls_minus.scc_count()];
    for &f in &w.cls_minus.b_minus {
        incoming[w.cls_minus.component[view.arc(f).1]] += 1;
    }
    let n = cycle.len();
    for i in 1..n {
        let f = cycle[(start + i) % n];
        if w.cls_minus.edge_class[f] == EdgeClass::Minus && incoming[w.cls_minus.component[view.arc(f).1]] >= 2 {
            return Ok(Some(f));
        }
    }
    Ok(None)
}

/// Components, external edges and poset of `G` around `π`.
pub fn decompose(g: &BipartiteGraph, pi: EdgeId, m_pi: &Matching) -> Result<SplitContext> {
    let view = OrientedView::new(g, m_pi);
    let (sigma, tau) = view.arc(pi);
    let around = adjacent(g, pi);
    let removed = mask(g, &around);
    let cls = classify_edges(&OrientedView::with_removed(g, m_pi, &removed));
    let home = cls.component[sigma];
    let mut renumber = vec![usize::MAX; cls.scc_count()];
    let mut trivial = vec![true, true];
    for c in 0..cls.scc_count() {
        if c != home {
            renumber[c] = trivial.len();
            trivial.push(cls.trivial[c]);
        }
    }
    let mut node_of = vec![usize::MAX; g.vertex_capacity()];
    for v in g.vertices() {
        node_of[v] = renumber[cls.component[v]];
    }
    node_of[sigma] = SIGMA;
    node_of[tau] = TAU;
    let n = trivial.len();
    let mut external = Vec::new();
    let mut arc = vec![(usize::MAX, usize::MAX); g.edge_capacity()];
    let mut out_edges = vec![Vec::new(); n];
    let mut in_edges = vec![Vec::new(); n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in g.edge_ids() {
        if e == pi || !(removed[e] || cls.edge_class[e] == EdgeClass::Minus) {
            continue;
        }
        let (u, v) = view.arc(e);
        let (x, y) = (node_of[u], node_of[v]);
        external.push(e);
        arc[e] = (x, y);
        out_edges[x].push(e);
        in_edges[y].push(e);
        succ[x].push(y);
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &y in s {
            indeg[y] += 1;
        }
    }
    let mut topo = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&x| indeg[x] == 0).collect();
    ready.sort_unstable_by(|a, b| b.cmp(a));
    while let Some(x) = ready.pop() {
        topo.push(x);
        for &y in &succ[x] {
            indeg[y] -= 1;
            if indeg[y] == 0 {
                ready.push(y);
                ready.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
    }
    if topo.len() != n {
        return Err(Error::InvariantViolation("component poset has a cycle".into()));
    }
    let words = n.div_ceil(64);
    let mut reach = vec![vec![0u64; words]; n];
    for &x in topo.iter().rev() {
        reach[x][x / 64] |= 1 << (x % 64);
        for i in 0..succ[x].len() {
            let y = succ[x][i];
            let (lo, hi) = if x < y { reach.split_at_mut(y) } else { reach.split_at_mut(x) };
            let (rx, ry) = if x < y { (&mut lo[x], &hi[0]) } else { (&mut hi[0], &lo[y]) };
            for w in 0..words {
                rx[w] |= ry[w];
            }
        }
    }
    let mut ctx = SplitContext {
        pi,
        sigma,
        tau,
        node_of,
        trivial,
        external,
        arc,
        out_edges,
        in_edges,
        succ,
        topo,
        reach,
        chain: Vec::new(),
        m_pi: m_pi.clone(),
    };
    if !ctx.leq(TAU, SIGMA) || (0..n).any(|x| !ctx.leq(TAU, x) || !ctx.leq(x, SIGMA)) {
        return Err(Error::InvariantViolation("τ and σ do not bound the poset".into()));
    }
    ctx.chain = maximal_chain(&ctx);
    Ok(ctx)
}

/// A saturated chain from τ to σ through every non-trivial component, when
/// those are pairwise comparable.
fn maximal_chain(ctx: &SplitContext) -> Vec<usize> {
    let pos: Vec<usize> = {
        let mut p = vec![0; ctx.node_count()];
        for (i, &x) in ctx.topo.iter().enumerate() {
            p[x] = i;
        }
        p
    };
    let mut targets = ctx.nontrivial();
    targets.sort_by_key(|&x| pos[x]);
    if targets.windows(2).any(|w| !ctx.leq(w[0], w[1])) {
        return vec![TAU, SIGMA];
    }
    targets.push(SIGMA);
    let mut chain = vec![TAU];
    let mut cur = TAU;
    for t in targets {
        while cur != t {
            let covers: Vec<usize> = ctx.succ[cur]
                .iter()
                .copied()
                .filter(|&s| ctx.leq(s, t))
                .filter(|&s| !ctx.succ[cur].iter().any(|&o| o != s && ctx.leq(o, s)))
                .collect();
            let next = *covers.iter().min_by_key(|&&s| pos[s]).expect("a cover towards the target");
            chain.push(next);
            cur = next;
        }
    }
    chain
}

/// Which external edges and components stay on a τ–σ path of
/// `D(G, M_π) ∖ removed` (with `π` excluded).
pub fn reachability(ctx: &SplitContext, g: &BipartiteGraph, removed: &[EdgeId]) -> ReachabilityReport {
    let mut gone = mask(g, removed);
    gone[ctx.pi] = true;
    let view = OrientedView::with_removed(g, &ctx.m_pi, &gone);
    let n = g.vertex_capacity();
    let mut fwd = vec![false; n];
    let mut stack = vec![ctx.tau];
    fwd[ctx.tau] = true;
    while let Some(x) = stack.pop() {
        for (_, y) in view.out_arcs(x) {
            if !fwd[y] {
                fwd[y] = true;
                stack.push(y);
            }
        }
    }
    let mut preds: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    for v in g.vertices() {
        for (_, y) in view.out_arcs(v) {
            preds[y].push(v);
        }
    }
    let mut bwd = vec![false; n];
    stack.push(ctx.sigma);
    bwd[ctx.sigma] = true;
    while let Some(x) = stack.pop() {
        for &y in &preds[x] {
            if !bwd[y] {
                bwd[y] = true;
                stack.push(y);
            }
        }
    }
    let mut report = ReachabilityReport::default();
    for &e in &ctx.external {
        if gone[e] {
            continue;
        }
        let (u, v) = view.arc(e);
        if fwd[u] && bwd[v] {
            report.reachable_edges.push(e);
        } else {
            report.unreachable_edges.push(e);
        }
    }
    let mut hit = vec![false; ctx.node_count()];
    for v in g.vertices() {
        if fwd[v] && bwd[v] {
            hit[ctx.node_of[v]] = true;
        }
    }
    for x in 2..ctx.node_count() {
        if hit[x] {
            report.reachable_components.push(x);
        } else {
            report.unreachable_components.push(x);
        }
    }
    report
}

/// Splits `δ(I) ∪ {π}` so that every maximal element of `I` and every minimal
/// element of its complement keeps an edge on both sides. Edges of `forced`
/// go to `B`; leftover edges go to `A`.
pub fn greedy_boundary_split(ctx: &SplitContext, members: &[bool], forced: &[EdgeId]) -> Option<(Vec<EdgeId>, Vec<EdgeId>)> {
    let delta = ctx.boundary(members);
    if delta.is_empty() {
        return None;
    }
    let n = ctx.node_count();
    let mut constrained = vec![false; n];
    for x in 0..n {
        let outside = ctx.succ[x].iter().all(|&y| !members[y]);
        let inside = ctx.in_edges[x].iter().all(|&e| members[ctx.arc[e].0]);
        constrained[x] = if members[x] { outside } else { inside };
    }
    let mut at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &e) in delta.iter().enumerate() {
        let (x, y) = ctx.arc[e];
        at[x].push(i);
        at[y].push(i);
    }
    // 0 unset, 1 in A, 2 in B.
    let mut color = vec![0u8; delta.len()];
    for (i, e) in delta.iter().enumerate() {
        if forced.contains(e) {
            color[i] = 2;
        }
    }
    let far = |i: usize, x: usize| {
        let (a, b) = ctx.arc[delta[i]];
        if a == x {
            b
        } else {
            a
        }
    };
    let touched = |color: &[u8], x: usize| at[x].iter().any(|&i| color[i] != 0);
    for start in 0..n {
        if !constrained[start] || at[start].is_empty() || touched(&color, start) {
            continue;
        }
        let mut used = vec![false; delta.len()];
        let mut in_trail = vec![false; n];
        in_trail[start] = true;
        let mut halves: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for half in &mut halves {
            let mut cur = start;
            loop {
                let Some(&i) = at[cur].iter().find(|&&i| color[i] == 0 && !used[i]) else {
                    break;
                };
                used[i] = true;
                half.push(i);
                let next = far(i, cur);
                if touched(&color, next) || !constrained[next] || in_trail[next] {
                    break;
                }
                in_trail[next] = true;
                cur = next;
            }
        }
        let [fwd, bwd] = halves;
        let sequence: Vec<usize> = bwd.into_iter().rev().chain(fwd).collect();
        for (k, i) in sequence.into_iter().enumerate() {
            color[i] = if k % 2 == 0 { 1 } else { 2 };
        }
    }
    for x in 0..n {
        if !constrained[x] {
            continue;
        }
        for want in [1u8, 2] {
            if at[x].iter().all(|&i| color[i] != want) {
                if let Some(&i) = at[x].iter().find(|&&i| color[i] == 0) {
                    color[i] = want;
                }
            }
        }
    }
    let mut a = vec![ctx.pi];
    let mut b = Vec::new();
    for (i, &e) in delta.iter().enumerate() {
        if color[i] == 2 {
            b.push(e);
        } else {
            a.push(e);
        }
    }
    if b.is_empty() {
        return None;
    }
    a.sort_unstable();
    b.sort_unstable();
    Some((a, b))
}

struct Evaluator<'a> {
    g: &'a BipartiteGraph,
    arena: &'a CircuitArena,
    pi: EdgeId,
    m_pi: Matching,
    base: BigInt,
    edges: usize,
    work: u64,
}

struct Candidate {
    a: Vec<EdgeId>,
    b: Vec<EdgeId>,
    tag: u8,
    delta: BigInt,
    m_a: Matching,
    cls_a: EdgeClassification,
    cls_b: EdgeClassification,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, tag: u8, a: Vec<EdgeId>, b: Vec<EdgeId>) -> Option<Candidate> {
        if b.is_empty() || b.contains(&self.pi) || !a.contains(&self.pi) {
            return None;
        }
        self.work += 3 * (self.g.vertex_count() + self.g.edge_count()) as u64;
        let removed_a = mask(self.g, &a);
        let mut others = removed_a.clone();
        others[self.pi] = false;
        let m_a = {
            let view = OrientedView::with_removed(self.g, &self.m_pi, &others);
            let cycle = alternating_cycle_through(&view, self.pi)?;
            flip(self.g, &self.m_pi, &cycle).ok()?
        };
        let cls_a = classify_edges(&OrientedView::with_removed(self.g, &m_a, &removed_a));
        let removed_b = mask(self.g, &b);
        let cls_b = classify_edges(&OrientedView::with_removed(self.g, &self.m_pi, &removed_b));
        let phi_a = potential(self.g, self.arena, &cls_a);
        let phi_b = potential(self.g, self.arena, &cls_b);
        let delta = BigInt::from(phi_a) + BigInt::from(phi_b) - &self.base;
        Some(Candidate { a, b, tag, delta, m_a, cls_a, cls_b })
    }

    /// Case 1 from the witness of `π`: `G ∖ {π}` is the graph classified
    /// under `M⁻`, and `G ∖ B` is the graph classified under `M⁺` with the
    /// other edges at `σ` restored as b⁻ edges.
    fn case_one(&mut self, w: Witness, b: Vec<EdgeId>) -> Option<Candidate> {
        if b.is_empty() {
            return None;
        }
        self.work += (self.g.vertex_count() + self.g.edge_count()) as u64;
        let sigma = OrientedView::new(self.g, &self.m_pi).arc(self.pi).0;
        let mut cls_b = w.cls_plus;
        for f in self.g.incident(sigma) {
            if f != self.pi {
                cls_b.edge_class[f] = EdgeClass::Minus;
                cls_b.b_minus.push(f);
            }
        }
        cls_b.b_minus.sort_unstable();
        let phi_a = potential(self.g, self.arena, &w.cls_minus);
        let phi_b = potential(self.g, self.arena, &cls_b);
        let delta = BigInt::from(phi_a) + BigInt::from(phi_b) - &self.base;
        Some(Candidate { a: vec![self.pi], b, tag: 1, delta, m_a: w.minus, cls_a: w.cls_minus, cls_b })
    }

    fn charges(&self, c: &Candidate) -> bool {
        BigInt::from(10) * &c.delta >= BigInt::from(self.edges)
    }
}

/// Chooses `A` and `B` for the strongly connected trimmed graph `g` with
/// perfect matching `m`, following the case order of the split algorithm.
/// Candidates are checked with exact potentials; a candidate that fails to
/// charge is skipped, and if none charges the best one is returned with
/// `charged = false`.
pub fn choose_split(g: &BipartiteGraph, m: &Matching, arena: &CircuitArena) -> Result<SplitResult> {
    if g.edge_count() < 2 {
        return Err(Error::InvariantViolation("split needs at least two edges".into()));
    }
    let (pi, w, extra) = minimal_witness(g, m)?;
    let m_pi = w.plus.clone();
    let base = BigInt::from(strongly_connected_potential(g, arena));
    let mut ev = Evaluator {
        g,
        arena,
        pi,
        m_pi: m_pi.clone(),
        base,
        edges: g.edge_count(),
        work: (4 + 2 * extra as u64) * (g.vertex_count() + g.edge_count()) as u64,
    };
    let mut best: Option<Candidate> = None;
    let mut rejected = 0usize;
    let finish = |c: Candidate, charged: bool, rejected: usize, ev: &Evaluator| SplitResult {
        a: c.a,
        b: c.b,
        case_tag: c.tag,
        delta: c.delta,
        charged,
        fallbacks: rejected,
        matching_a: c.m_a,
        matching_b: ev.m_pi.clone(),
        classes_a: c.cls_a,
        classes_b: c.cls_b,
        work: ev.work,
    };

    let tau = OrientedView::new(g, &m_pi).arc(pi).1;
    let mut b1: Vec<EdgeId> = g.incident(tau).filter(|&e| e != pi).collect();
    b1.sort_unstable();
    if let Some(c) = ev.case_one(w, b1) {
        if ev.charges(&c) {
            return Ok(finish(c, true, rejected, &ev));
        }
        rejected += 1;
        best = Some(c);
    }

    let ctx = decompose(g, pi, &m_pi)?;
    ev.work += (g.vertex_count() + g.edge_count()) as u64;
    for (tag, a, b) in candidates(&ctx, g) {
        let Some(c) = ev.evaluate(tag, a, b) else { continue };
        if ev.charges(&c) {
            return Ok(finish(c, true, rejected, &ev));
        }
        rejected += 1;
        if best.as_ref().is_none_or(|x| c.delta > x.delta) {
            best = Some(c);
        }
    }
    match best {
        Some(c) => Ok(finish(c, false, rejected, &ev)),
        None => Err(Error::InvariantViolation("no split candidate applies".into())),
    }
}

fn sorted(mut v: Vec<EdgeId>) -> Vec<EdgeId> {
    v.sort_unstable();
    v.dedup();
    v
}

/// The decomposition around the M⁺-minimal edge together with every
/// applicable candidate of cases 2–6, in the order they are tried.
pub fn all_candidates(g: &BipartiteGraph, m: &Matching) -> Result<(SplitContext, Vec<(u8, Vec<EdgeId>, Vec<EdgeId>)>)> {
    let (pi, m_pi) = find_m_plus_minimal(g, m)?;
    let ctx = decompose(g, pi, &m_pi)?;
    let list = candidates(&ctx, g);
    Ok((ctx, list))
}

/// `A = δ(I) ∖ B ∪ {π}` for a prescribed `B`.
fn complement_in(ctx: &SplitContext, members: &[bool], b: &[EdgeId]) -> Option<(Vec<EdgeId>, Vec<EdgeId>)> {
    if !ctx.is_ideal(members) {
        return None;
    }
    let delta = ctx.boundary(members);
    if b.is_empty() || b.iter().any(|e| !delta.contains(e)) {
        return None;
    }
    let mut a: Vec<EdgeId> = delta.into_iter().filter(|e| !b.contains(e)).collect();
    a.push(ctx.pi);
    Some((sorted(a), sorted(b.to_vec())))
}

/// Candidate splits of cases 2–6, in order, including the mirrored variants.
fn candidates(ctx: &SplitContext, _g: &BipartiteGraph) -> Vec<(u8, Vec<EdgeId>, Vec<EdgeId>)> {
    let mut out = Vec::new();
    let nontrivial = ctx.nontrivial();

    // Case 2: two incomparable non-trivial components.
    'pairs: for (i, &x) in nontrivial.iter().enumerate() {
        for &y in &nontrivial[i + 1..] {
            if !ctx.comparable(x, y) {
                let (k_b, k_a) = (x, y);
                let members = ctx.down_closure(&[k_a, k_b]);
                let b = ctx.out_edges[k_b].clone();
                if let Some((a, b)) = complement_in(ctx, &members, &b) {
                    out.push((2, a, b));
                }
                break 'pairs;
            }
        }
    }
    if ctx.chain.len() < 3 {
        return out;
    }
    let chain = &ctx.chain;
    let zeta = ctx.zeta();
    let k1 = chain[1];
    let kz = chain[zeta];
    let i1 = ctx.members(&[TAU, k1]);
    let i2: Vec<bool> = ctx.members(&[SIGMA, kz]).iter().map(|&x| !x).collect();

    // Case 3: two edges from τ into κ₁, or from κ_ζ into σ.
    let into_k1: Vec<EdgeId> = ctx.out_edges[TAU].iter().copied().filter(|&e| ctx.arc[e].1 == k1).collect();
    if into_k1.len() >= 2 {
        if let Some(split) = complement_in(ctx, &ctx.members(&[TAU]), &[into_k1[0]]) {
            out.push((3, split.0, split.1));
        }
    }
    let from_kz: Vec<EdgeId> = ctx.in_edges[SIGMA].iter().copied().filter(|&e| ctx.arc[e].0 == kz).collect();
    if from_kz.len() >= 2 {
        let members: Vec<bool> = (0..ctx.node_count()).map(|x| x != SIGMA).collect();
        if let Some(split) = complement_in(ctx, &members, &[from_kz[0]]) {
            out.push((3, split.0, split.1));
        }
    }

    // Case 4: κ₁ with one outgoing edge, or κ_ζ with one incoming edge.
    if ctx.out_edges[k1].len() == 1 {
        if let Some(split) = complement_in(ctx, &i1, &ctx.out_edges[k1]) {
            out.push((4, split.0, split.1));
        }
    }
    if ctx.in_edges[kz].len() == 1 {
        if let Some(split) = complement_in(ctx, &i2, &ctx.in_edges[kz]) {
            out.push((4, split.0, split.1));
        }
    }

    // Case 5: κ₂ with one incoming edge, or κ_{ζ−1} with one outgoing edge.
    if zeta >= 2 {
        let k2 = chain[2];
        if ctx.in_edges[k2].len() == 1 {
            if let Some(split) = complement_in(ctx, &i1, &ctx.in_edges[k2]) {
                out.push((5, split.0, split.1));
            }
        }
        let kz1 = chain[zeta - 1];
        if ctx.out_edges[kz1].len() == 1 {
            if let Some(split) = complement_in(ctx, &i2, &ctx.out_edges[kz1]) {
                out.push((5, split.0, split.1));
            }
        }
    }

    // Case 6: the ideals {τ, κ₁} and V ∖ {σ, κ_ζ}.
    let ideals: Vec<&Vec<bool>> = [&i1, &i2].into_iter().filter(|m| ctx.is_ideal(m)).collect();
    let d1 = ctx.boundary(&i1);
    let d2 = ctx.boundary(&i2);
    let shared: Vec<EdgeId> = d1.iter().copied().filter(|e| d2.contains(e)).collect();
    if let Some(&e_delta) = shared.first() {
        let e_tau = ctx.out_edges[TAU].iter().copied().find(|&e| ctx.arc[e].1 != k1);
        let e_sigma = ctx.in_edges[SIGMA].iter().copied().find(|&e| ctx.arc[e].0 != kz);
        for members in &ideals {
            let delta = ctx.boundary(members);
            let forced: Vec<EdgeId> =
                [Some(e_delta), e_tau, e_sigma].into_iter().flatten().filter(|e| delta.contains(e)).collect();
            if let Some((a, b)) = greedy_boundary_split(ctx, members, &forced) {
                out.push((6, a, b));
            }
        }
    }
    let mut plain: Vec<&Vec<bool>> = ideals.clone();
    plain.sort_by_key(|m| ctx.boundary(m).len());
    for members in plain {
        if let Some((a, b)) = greedy_boundary_split(ctx, members, &[]) {
            out.push((6, a, b));
        }
    }
    out
}

/// Potential of `g ∖ removed` where `m` is a perfect matching of it.
pub fn potential_without(g: &BipartiteGraph, m: &Matching, removed: &[EdgeId], arena: &CircuitArena) -> BigUint {
    let r = mask(g, removed);
    potential(g, arena, &classify_edges(&OrientedView::with_removed(g, m, &r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_list, find_initial_matching};
    use crate::oracle::{self, complete};
    use crate::trimmer::trim;

    fn setup(list: &crate::graph::EdgeList) -> (CircuitArena, BipartiteGraph, Matching) {
        let mut arena = CircuitArena::new();
        let g = build_from_list(&mut arena, list).unwrap();
        let m = find_initial_matching(&g).unwrap();
        (arena, g, m)
    }

    fn strict_subset(a: &[Vec<EdgeId>], b: &[Vec<EdgeId>]) -> bool {
        a.len() < b.len() && a.iter().all(|x| b.contains(x))
    }

    fn certify_minimal(g: &BipartiteGraph, pi: EdgeId) {
        let mine = oracle::m_plus_set(g, pi).unwrap();
        for e in g.edge_ids() {
            let other = oracle::m_plus_set(g, e).unwrap();
            assert!(!strict_subset(&other, &mine), "edge {e} dominates {pi}");
        }
    }

    fn restricted(g: &BipartiteGraph, removed: &[EdgeId]) -> Vec<Vec<EdgeId>> {
        let r = mask(g, removed);
        oracle::brute_force(&g.without_edges(&r)).unwrap().matchings
    }

    fn check_split(g: &BipartiteGraph, s: &SplitResult) {
        let all = oracle::brute_force(g).unwrap().matchings;
        let in_a = restricted(g, &s.a);
        let in_b = restricted(g, &s.b);
        assert!(in_a.iter().all(|m| !in_b.contains(m)));
        let mut union: Vec<Vec<EdgeId>> = in_a.iter().chain(&in_b).cloned().collect();
        union.sort();
        assert_eq!(union, all);
        assert!(s.matching_a.is_perfect(&g.without_edges(&mask(g, &s.a))));
        assert!(s.matching_b.is_perfect(&g.without_edges(&mask(g, &s.b))));
    }

    #[test]
    fn every_edge_of_k33_is_minimal() {
        let (_, g, m) = setup(&complete(3));
        for e in g.edge_ids() {
            assert!(is_m_plus_minimal(&g, &m, e).unwrap());
        }
    }

    #[test]
    fn k33_splits_by_case_one() {
        let (arena, g, m) = setup(&complete(3));
        let s = choose_split(&g, &m, &arena).unwrap();
        assert_eq!(s.case_tag, 1);
        assert_eq!(s.a.len(), 1);
        assert_eq!(s.b.len(), 2);
        assert!(s.charged);
        assert!(BigInt::from(10) * &s.delta >= BigInt::from(9));
        check_split(&g, &s);
        assert_eq!(s.trace_line(), format!("case=1 |A|=1 |B|=2 delta={}", s.delta));
    }

    #[test]
    fn k33_decomposition() {
        let (_, g, m) = setup(&complete(3));
        let (pi, m_pi) = find_m_plus_minimal(&g, &m).unwrap();
        let ctx = decompose(&g, pi, &m_pi).unwrap();
        assert_eq!(ctx.component_count(), 1);
        assert_eq!(ctx.nontrivial().len(), 1);
        assert_eq!(ctx.external.len(), 4);
        assert_eq!(ctx.chain.len(), 3);
        assert!(reachability(&ctx, &g, &[]).unreachable_edges.is_empty());
    }

    #[test]
    fn minimal_edges_on_random_graphs() {
        for seed in 0..60u64 {
            let list = oracle::random_with_matching(5, seed, 0.6).unwrap();
            let (mut arena, g, m) = setup(&list);
            let t = trim(&g, &m, &mut arena).unwrap();
            for c in &t.components {
                let (pi, m_pi) = find_m_plus_minimal(&c.graph, &c.matching).unwrap();
                assert!(m_pi.contains(&c.graph, pi));
                certify_minimal(&c.graph, pi);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn splits_are_sound(n in 3usize..7, seed in 0u64..100_000, density in 0.35f64..0.9) {
            let list = oracle::random_with_matching(n, seed, density).unwrap();
            let (mut arena, g, m) = setup(&list);
            let t = trim(&g, &m, &mut arena).unwrap();
            for c in &t.components {
                let s = choose_split(&c.graph, &c.matching, &arena).unwrap();
                proptest::prop_assert!(s.charged, "{}", s.trace_line());
                check_split(&c.graph, &s);
                if s.case_tag > 1 {
                    let count = oracle::brute_force(&c.graph).unwrap().count;
                    proptest::prop_assert!(count >= BigUint::from(c.graph.edge_count() - c.graph.vertex_count() + 2));
                }
            }
        }
    }

    #[test]
    fn unreachable_external_edges_leave_the_matchings() {
        for seed in 0..80u64 {
            let list = oracle::random_with_matching(6, seed, 0.5).unwrap();
            let (mut arena, g, m) = setup(&list);
            let t = trim(&g, &m, &mut arena).unwrap();
            for c in &t.components {
                let s = choose_split(&c.graph, &c.matching, &arena).unwrap();
                let (pi, m_pi) = find_m_plus_minimal(&c.graph, &c.matching).unwrap();
                let ctx = decompose(&c.graph, pi, &m_pi).unwrap();
                let r = reachability(&ctx, &c.graph, &s.a);
                let rest = c.graph.without_edges(&mask(&c.graph, &s.a));
                let used: Vec<Vec<EdgeId>> = oracle::brute_force(&rest).unwrap().matchings;
                for &e in &r.unreachable_edges {
                    assert!(used.iter().all(|m| !m.contains(&e)));
                }
                for &e in &r.reachable_edges {
                    assert!(used.iter().any(|m| m.contains(&e)));
                }
            }
        }
    }

    #[test]
    fn every_candidate_partitions_the_matchings() {
        let mut seen = [0usize; 7];
        for seed in 0..120u64 {
            let list = oracle::random_with_matching(6, seed, 0.55).unwrap();
            let (mut arena, g, m) = setup(&list);
            let t = trim(&g, &m, &mut arena).unwrap();
            for c in &t.components {
                let all = oracle::brute_force(&c.graph).unwrap().matchings;
                let (ctx, list) = all_candidates(&c.graph, &c.matching).unwrap();
                for (tag, a, b) in list {
                    seen[tag as usize] += 1;
                    assert!(a.contains(&ctx.pi) && !b.is_empty());
                    let mut union = restricted(&c.graph, &a);
                    union.extend(restricted(&c.graph, &b));
                    union.sort();
                    assert_eq!(union, all, "case {tag}");
                }
            }
        }
        assert!(seen[3] > 0 && seen[6] > 0);
    }
}
