//! The main recursion: trim, split one component, trim both children and
//! recurse; at a single isolated edge, list the matchings its circuit node
//! encodes with the visiting-tree enumerator.

use std::ops::ControlFlow;
use std::rc::Rc;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::circuit::{audit_encoding, visit_all, CircuitArena, NodeId, VisitTree};
use crate::error::{Error, Result};
use crate::graph::{build_from_list, find_initial_matching, BipartiteGraph, EdgeClassification, EdgeId, EdgeList, Matching};
use crate::splitter::choose_split;
use crate::trimmer::{trim, trim_classified, Component, TrimReport, Trimmed};

#[derive(Clone, Debug, Default)]
pub struct Options {
    /// Record one trace line per split.
    pub trace: bool,
    /// Check the proper-encoding conditions at every leaf when the input has
    /// at most this many vertices.
    pub audit_vertices: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub matchings: u64,
    /// Work of the recursion: splits, trims of children, visits.
    pub elementary_steps: u64,
    /// Work of the first trim, not part of `elementary_steps`.
    pub initial_trim_steps: u64,
    pub splits: u64,
    pub trims: u64,
    pub leaves: u64,
    pub nodes_created: u64,
    pub peak_memory_nodes: usize,
    pub max_depth: usize,
    pub charging_violations: u64,
    pub fallbacks: u64,
    pub visit_bound_violations: u64,
    pub trim_potential_violations: u64,
    pub trim_degree_violations: u64,
    pub invariant3_violations: u64,
    pub encoding_audits: u64,
    /// Splits per case tag.
    pub case_counts: [u64; 7],
    pub completed: bool,
    pub trace: Vec<String>,
}

impl Stats {
    pub fn steps_per_matching(&self) -> f64 {
        if self.matchings == 0 {
            0.0
        } else {
            self.elementary_steps as f64 / self.matchings as f64
        }
    }

    /// `key=value` lines in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        vec![
            format!("matchings={}", self.matchings),
            format!("elementary_steps={}", self.elementary_steps),
            format!("steps_per_matching={:.3}", self.steps_per_matching()),
            format!("splits={}", self.splits),
            format!("nodes_created={}", self.nodes_created),
            format!("peak_memory_nodes={}", self.peak_memory_nodes),
            format!("max_depth={}", self.max_depth),
            format!("trims={}", self.trims),
            format!("initial_trim_steps={}", self.initial_trim_steps),
            format!("charging_violations={}", self.charging_violations),
            format!("fallbacks={}", self.fallbacks),
            format!("visit_bound_violations={}", self.visit_bound_violations),
        ]
    }
}

/// A product of an optional isolated-edge node and strongly connected
/// components still to be split.
struct Instance {
    iso: Option<NodeId>,
    components: Vec<Rc<Component>>,
}

enum Task {
    Process(Instance, usize),
    /// The `B` side of a split, run after the `A` side is exhausted.
    Second {
        iso: Option<NodeId>,
        rest: Vec<Rc<Component>>,
        parent: Rc<Component>,
        matching: Matching,
        classes: EdgeClassification,
        mark: usize,
        depth: usize,
    },
}

pub struct EnumerationSession {
    pub arena: CircuitArena,
    pub root_graph: BipartiteGraph,
    pub input: EdgeList,
    pub options: Options,
    pub stats: Stats,
}

impl EnumerationSession {
    pub fn new(input: &EdgeList, options: Options) -> Result<Self> {
        let mut arena = CircuitArena::new();
        let root_graph = build_from_list(&mut arena, input)?;
        Ok(Self { arena, root_graph, input: input.clone(), options, stats: Stats::default() })
    }

    /// Runs the enumeration, calling `sink` once per perfect matching in a
    /// deterministic order. Returns the number of sink calls.
    pub fn run<F>(&mut self, mut sink: F) -> Result<BigUint>
    where
        F: FnMut(&VisitTree) -> ControlFlow<()>,
    {
        if self.root_graph.vertex_count() == 0 {
            return Err(Error::MalformedInput("graph has no vertices".into()));
        }
        let m = find_initial_matching(&self.root_graph)?;
        let base = self.arena.created();
        let first = trim(&self.root_graph, &m, &mut self.arena)?;
        self.audit_trim(&first);
        self.stats.initial_trim_steps = first.report.work;
        let mut stack = vec![Task::Process(self.instance(None, Vec::new(), first), 0)];
        self.stats.completed = true;
        while let Some(task) = stack.pop() {
            self.stats.peak_memory_nodes = self.stats.peak_memory_nodes.max(self.arena.len());
            match task {
                Task::Process(inst, depth) => {
                    self.stats.max_depth = self.stats.max_depth.max(depth);
                    if self.process(inst, depth, &mut stack, &mut sink)?.is_break() {
                        self.stats.completed = false;
                        break;
                    }
                }
                Task::Second { iso, rest, parent, matching, classes, mark, depth } => {
                    self.arena.truncate(mark);
                    let t = self.trim_child(&parent.graph, &matching, &classes)?;
                    stack.push(Task::Process(self.instance(iso, rest, t), depth + 1));
                }
            }
        }
        self.stats.nodes_created = self.arena.created() - base;
        Ok(BigUint::from(self.stats.matchings))
    }

    fn instance(&mut self, iso: Option<NodeId>, mut rest: Vec<Rc<Component>>, t: Trimmed) -> Instance {
        let iso = self.arena.product_opt(iso, t.iso);
        rest.extend(t.components.into_iter().map(Rc::new));
        Instance { iso, components: rest }
    }

    fn trim_child(&mut self, g: &BipartiteGraph, m: &Matching, cls: &EdgeClassification) -> Result<Trimmed> {
        let t = trim_classified(g, m, cls, &mut self.arena)?;
        self.stats.trims += 1;
        self.stats.elementary_steps += t.report.work;
        self.audit_trim(&t);
        Ok(t)
    }

    fn audit_trim(&mut self, t: &Trimmed) {
        let r: &TrimReport = &t.report;
        if r.potential_after < r.potential_before {
            self.stats.trim_potential_violations += 1;
        }
        if t.components.iter().any(|c| c.min_degree() < 3) {
            self.stats.trim_degree_violations += 1;
        }
        self.stats.invariant3_violations += r.invariant3_violations as u64;
    }

    fn process<F>(&mut self, inst: Instance, depth: usize, stack: &mut Vec<Task>, sink: &mut F) -> Result<ControlFlow<()>>
    where
        F: FnMut(&VisitTree) -> ControlFlow<()>,
    {
        let Instance { iso, mut components } = inst;
        let Some(h) = components.pop() else {
            let root = iso.ok_or_else(|| Error::InvariantViolation("leaf without an edge".into()))?;
            return self.leaf(root, sink);
        };
        let s = choose_split(&h.graph, &h.matching, &self.arena)?;
        self.stats.splits += 1;
        self.stats.elementary_steps += s.work;
        self.stats.fallbacks += s.fallbacks as u64;
        self.stats.case_counts[s.case_tag as usize] += 1;
        if !s.charged {
            self.stats.charging_violations += 1;
        }
        if self.options.trace {
            self.stats.trace.push(s.trace_line());
        }
        stack.push(Task::Second {
            iso,
            rest: components.clone(),
            parent: Rc::clone(&h),
            matching: s.matching_b,
            classes: s.classes_b,
            mark: self.arena.len(),
            depth,
        });
        let t = self.trim_child(&h.graph, &s.matching_a, &s.classes_a)?;
        stack.push(Task::Process(self.instance(iso, components, t), depth + 1));
        Ok(ControlFlow::Continue(()))
    }

    fn leaf<F>(&mut self, root: NodeId, sink: &mut F) -> Result<ControlFlow<()>>
    where
        F: FnMut(&VisitTree) -> ControlFlow<()>,
    {
        self.stats.leaves += 1;
        if self.options.audit_vertices.is_some_and(|cap| self.root_graph.vertex_count() <= cap) {
            audit_encoding(&self.arena, root, &self.input, usize::MAX)?;
            self.stats.encoding_audits += 1;
        }
        let mut stopped = false;
        let mut delivered = 0u64;
        let visit = visit_all(&mut self.arena, root, |t| {
            delivered += 1;
            let flow = sink(t);
            stopped = flow.is_break();
            flow
        })?;
        self.stats.matchings += delivered;
        self.stats.elementary_steps += visit.steps + visit.dfs_moves;
        let within = match self.arena.small_potential(root) {
            Some(p) => u128::from(visit.steps) <= 6 * u128::from(p),
            None => visit.within_bound(&self.arena.potential(root)),
        };
        if !stopped && !within {
            self.stats.visit_bound_violations += 1;
        }
        Ok(if stopped { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    }
}

/// Enumerates the perfect matchings of `input`. Edge ids handed out by the
/// visiting trees index `input.edges`.
pub fn enumerate<F>(input: &EdgeList, sink: F) -> Result<(BigUint, Stats)>
where
    F: FnMut(&VisitTree) -> ControlFlow<()>,
{
    let mut session = EnumerationSession::new(input, Options::default())?;
    let count = session.run(sink)?;
    Ok((count, session.stats))
}

/// Number of perfect matchings, by enumeration.
pub fn count(input: &EdgeList) -> Result<BigUint> {
    Ok(enumerate(input, |_| ControlFlow::Continue(()))?.0)
}

/// All perfect matchings as sorted edge-id lists, in enumeration order.
pub fn collect(input: &EdgeList) -> Result<Vec<Vec<EdgeId>>> {
    let mut out = Vec::new();
    enumerate(input, |t| {
        let mut m = t.edges();
        m.sort_unstable();
        out.push(m);
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// The edges of the matching held by `tree`.
pub fn matching_of_tree(tree: &VisitTree) -> Vec<EdgeId> {
    tree.edges()
}

impl Stats {
    pub fn matchings_big(&self) -> BigUint {
        BigUint::from(self.matchings)
    }

    pub fn steps_ratio_to(&self, other: &Stats) -> Option<f64> {
        let a = self.steps_per_matching();
        let b = other.steps_per_matching();
        (a > 0.0 && b > 0.0).then(|| a.max(b) / a.min(b))
    }

    pub fn matchings_f64(&self) -> f64 {
        self.matchings_big().to_f64().unwrap_or(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, complete, cycle, path_substituted, random_with_matching};

    fn check_against_oracle(list: &EdgeList) {
        let mut arena = CircuitArena::new();
        let g = build_from_list(&mut arena, list).unwrap();
        let want = oracle::brute_force_capped(&g, 64).unwrap().matchings;
        let mut got = Vec::new();
        let mut session = EnumerationSession::new(list, Options { trace: false, audit_vertices: Some(12) }).unwrap();
        let n = session.root_graph.vertex_count();
        session
            .run(|t| {
                let m = matching_of_tree(t);
                assert_eq!(m.len(), n / 2);
                got.push(m);
                ControlFlow::Continue(())
            })
            .unwrap();
        for m in &mut got {
            m.sort_unstable();
        }
        got.sort();
        assert_eq!(got, want);
        assert_eq!(session.stats.charging_violations, 0);
        assert_eq!(session.stats.visit_bound_violations, 0);
        assert_eq!(session.stats.trim_potential_violations, 0);
        assert_eq!(session.stats.trim_degree_violations, 0);
    }

    #[test]
    fn single_edge() {
        let mut list = EdgeList::new(1, 1);
        list.edges.push((0, 0));
        assert_eq!(collect(&list).unwrap(), vec![vec![0]]);
    }

    #[test]
    fn k33_has_six() {
        let got = collect(&complete(3)).unwrap();
        assert_eq!(got.len(), 6);
        check_against_oracle(&complete(3));
        let (_, stats) = enumerate(&complete(3), |_| ControlFlow::Continue(())).unwrap();
        assert!(stats.splits >= 1);
    }

    #[test]
    fn cycles_have_two() {
        for n in 2..=20 {
            assert_eq!(count(&cycle(2 * n).unwrap()).unwrap(), BigUint::from(2u32));
        }
    }

    #[test]
    fn c10_creates_nine_nodes() {
        let (_, stats) = enumerate(&cycle(10).unwrap(), |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(stats.nodes_created, 9);
        assert_eq!(stats.splits, 0);
    }

    #[test]
    fn path_substituted_counts() {
        assert_eq!(count(&path_substituted(4, 3).unwrap()).unwrap(), BigUint::from(24u32));
        check_against_oracle(&path_substituted(3, 3).unwrap());
    }

    #[test]
    fn disjoint_union_multiplies() {
        let k = complete(3);
        let mut list = EdgeList::new(6, 6);
        for &(u, v) in &k.edges {
            list.edges.push((u, v));
            list.edges.push((u + 3, v + 3));
        }
        assert_eq!(count(&list).unwrap(), BigUint::from(36u32));
        check_against_oracle(&list);
    }

    #[test]
    fn no_perfect_matching() {
        let mut list = EdgeList::new(1, 2);
        list.edges.push((0, 0));
        list.edges.push((0, 1));
        assert!(matches!(count(&list), Err(Error::NoPerfectMatching)));
        let mut list = EdgeList::new(2, 2);
        list.edges.push((0, 0));
        list.edges.push((1, 0));
        assert!(matches!(count(&list), Err(Error::NoPerfectMatching)));
    }

    #[test]
    fn limit_stops_early() {
        let mut seen = 0;
        let (n, stats) = enumerate(&complete(4), |_| {
            seen += 1;
            if seen == 5 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(n, BigUint::from(5u32));
        assert!(!stats.completed);
    }

    #[test]
    fn deterministic_order() {
        let list = random_with_matching(6, 7, 0.6).unwrap();
        assert_eq!(collect(&list).unwrap(), collect(&list).unwrap());
    }

    #[test]
    fn random_graphs_match_the_oracle() {
        for n in 1..=6 {
            for seed in 0..40u64 {
                for d in [0.3, 0.5, 0.8] {
                    check_against_oracle(&random_with_matching(n, seed, d).unwrap());
                }
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn counts_match_the_permanent(n in 1usize..9, seed in 0u64..1_000_000, density in 0.2f64..0.9) {
            let list = random_with_matching(n, seed, density).unwrap();
            let mut arena = CircuitArena::new();
            let g = build_from_list(&mut arena, &list).unwrap();
            proptest::prop_assert_eq!(count(&list).unwrap(), oracle::permanent(&g).unwrap());
        }
    }
}
