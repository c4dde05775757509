//! Independent ground truth for tests and the `check` command: exhaustive
//! enumeration, the Ryser permanent, and instance generators.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::ops::ControlFlow;

use crate::circuit::{visit_all, CircuitArena, NodeId, VisitStats};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, EdgeId, EdgeList, VertexId};

pub const DEFAULT_BRUTE_FORCE_CAP: usize = 10;
pub const DEFAULT_PERMANENT_CAP: usize = 24;
pub const CAP_ENV: &str = "PMENUM_ORACLE_CAP";

fn env_cap() -> Option<usize> {
    std::env::var(CAP_ENV).ok().and_then(|s| s.trim().parse().ok())
}

/// Largest left side handled by [`brute_force`].
pub fn brute_force_cap() -> usize {
    env_cap().unwrap_or(DEFAULT_BRUTE_FORCE_CAP)
}

/// Largest side handled by [`permanent`].
pub fn permanent_cap() -> usize {
    env_cap().unwrap_or(DEFAULT_PERMANENT_CAP)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    /// Each matching as sorted edge ids; the list itself is sorted.
    pub matchings: Vec<Vec<EdgeId>>,
    pub count: BigUint,
}

pub fn brute_force(g: &BipartiteGraph) -> Result<OracleResult> {
    brute_force_capped(g, brute_force_cap())
}

/// Backtracking over the left vertices in id order.
pub fn brute_force_capped(g: &BipartiteGraph, cap: usize) -> Result<OracleResult> {
    let lefts: Vec<VertexId> = (0..g.left_count()).filter(|&v| g.is_alive(v)).collect();
    if lefts.len() > cap {
        return Err(Error::TestGuard(format!("{} left vertices above cap {cap}", lefts.len())));
    }
    let rights = (g.left_count()..g.vertex_capacity()).filter(|&v| g.is_alive(v)).count();
    let mut matchings = Vec::new();
    if lefts.len() == rights {
        let options: Vec<Vec<EdgeId>> = lefts
            .iter()
            .map(|&u| {
                let mut es: Vec<EdgeId> = g.incident(u).collect();
                es.sort_unstable();
                es
            })
            .collect();
        let mut used = vec![false; g.vertex_capacity()];
        let mut current = Vec::with_capacity(lefts.len());
        extend(g, &options, 0, &mut used, &mut current, &mut matchings);
    }
    for m in &mut matchings {
        m.sort_unstable();
    }
    matchings.sort();
    let count = BigUint::from(matchings.len());
    Ok(OracleResult { matchings, count })
}

fn extend(
    g: &BipartiteGraph,
    options: &[Vec<EdgeId>],
    depth: usize,
    used: &mut [bool],
    current: &mut Vec<EdgeId>,
    out: &mut Vec<Vec<EdgeId>>,
) {
    if depth == options.len() {
        out.push(current.clone());
        return;
    }
    for &e in &options[depth] {
        let r = g.edge(e).right;
        if used[r] {
            continue;
        }
        used[r] = true;
        current.push(e);
        extend(g, options, depth + 1, used, current, out);
        current.pop();
        used[r] = false;
    }
}

/// Perfect matchings containing `e`.
pub fn m_plus_set(g: &BipartiteGraph, e: EdgeId) -> Result<Vec<Vec<EdgeId>>> {
    Ok(brute_force(g)?.matchings.into_iter().filter(|m| m.binary_search(&e).is_ok()).collect())
}

/// Number of perfect matchings by Ryser's formula with Gray-code subset order.
/// Parallel edges count with multiplicity.
pub fn permanent(g: &BipartiteGraph) -> Result<BigUint> {
    let lefts: Vec<VertexId> = (0..g.left_count()).filter(|&v| g.is_alive(v)).collect();
    let rights: Vec<VertexId> = (g.left_count()..g.vertex_capacity()).filter(|&v| g.is_alive(v)).collect();
    let cap = permanent_cap();
    if lefts.len() > cap || rights.len() > cap {
        return Err(Error::TestGuard(format!("side of {} above cap {cap}", lefts.len().max(rights.len()))));
    }
    if lefts.len() != rights.len() {
        return Ok(BigUint::zero());
    }
    let n = lefts.len();
    if n == 0 {
        return Ok(BigUint::one());
    }
    let mut col_of = vec![usize::MAX; g.vertex_capacity()];
    for (j, &r) in rights.iter().enumerate() {
        col_of[r] = j;
    }
    let mut a = vec![vec![0i64; n]; n];
    for (i, &u) in lefts.iter().enumerate() {
        for e in g.incident(u) {
            a[i][col_of[g.edge(e).right]] += 1;
        }
    }
    if let Some(p) = ryser_i128(&a) {
        return Ok(BigUint::try_from(p).expect("permanent is non-negative"));
    }
    Ok(ryser_big(&a))
}

fn ryser_i128(a: &[Vec<i64>]) -> Option<i128> {
    let n = a.len();
    if n > 30 {
        return None;
    }
    let mut row_sum = vec![0i128; n];
    let mut in_set = vec![false; n];
    let mut total: i128 = 0;
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        let add = !in_set[j];
        in_set[j] = add;
        for (i, s) in row_sum.iter_mut().enumerate() {
            if add {
                *s += a[i][j] as i128;
            } else {
                *s -= a[i][j] as i128;
            }
        }
        let mut prod: i128 = 1;
        for &s in &row_sum {
            prod = prod.checked_mul(s)?;
            if prod == 0 {
                break;
            }
        }
        // Sign (-1)^(n - |S|) where |S| has the parity of the Gray code word.
        let size_parity = (k ^ (k >> 1)).count_ones() as usize % 2;
        if (n - size_parity).is_multiple_of(2) {
            total = total.checked_add(prod)?;
        } else {
            total = total.checked_sub(prod)?;
        }
    }
    Some(total)
}

fn ryser_big(a: &[Vec<i64>]) -> BigUint {
    let n = a.len();
    let mut row_sum = vec![0i64; n];
    let mut in_set = vec![false; n];
    let mut total = BigInt::zero();
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        let add = !in_set[j];
        in_set[j] = add;
        for (i, s) in row_sum.iter_mut().enumerate() {
            *s += if add { a[i][j] } else { -a[i][j] };
        }
        let mut prod = BigInt::one();
        for &s in &row_sum {
            prod *= s;
        }
        if ((k ^ (k >> 1)).count_ones() as usize % 2 + n).is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    debug_assert!(!total.is_negative());
    total.magnitude().clone()
}

/// Number of matchings of the input graph encoded by `g`: the sum over the
/// perfect matchings of `g` of the product of their edge potentials.
pub fn encoded_count(g: &BipartiteGraph, arena: &CircuitArena) -> Result<BigUint> {
    let mut total = BigUint::zero();
    for m in brute_force(g)?.matchings {
        let mut prod = BigUint::one();
        for e in m {
            prod *= &arena.potential(g.edge(e).node);
        }
        total += prod;
    }
    Ok(total)
}

/// The encoded matchings themselves, each sorted, the list sorted.
pub fn encoded_matchings(g: &BipartiteGraph, arena: &CircuitArena, cap: usize) -> Result<Vec<Vec<EdgeId>>> {
    let mut out: Vec<Vec<EdgeId>> = Vec::new();
    for m in brute_force(g)?.matchings {
        let mut partial: Vec<Vec<EdgeId>> = vec![Vec::new()];
        for e in m {
            let sets = arena.materialize(g.edge(e).node, cap)?;
            let mut next = Vec::with_capacity(partial.len() * sets.len());
            for p in &partial {
                for s in &sets {
                    let mut q = p.clone();
                    q.extend_from_slice(s);
                    next.push(q);
                }
            }
            if next.len() > cap {
                return Err(Error::TestGuard(format!("more than {cap} encoded matchings")));
            }
            partial = next;
        }
        out.extend(partial);
    }
    for m in &mut out {
        m.sort_unstable();
    }
    out.sort();
    Ok(out)
}

/// A circuit with edge labels for tests: the root and the label per edge id.
pub struct LabelledCircuit {
    pub root: NodeId,
    pub labels: Vec<&'static str>,
}

impl LabelledCircuit {
    /// Visiting trees in enumeration order, each as `{x, y, …}` in leaf order.
    pub fn visit_listing(&self, arena: &mut CircuitArena) -> Result<(String, VisitStats)> {
        let mut parts = Vec::new();
        let stats = visit_all(arena, self.root, |t| {
            let names: Vec<&str> = t.edges().iter().map(|&e| self.labels[e]).collect();
            parts.push(format!("{{{}}}", names.join(", ")));
            ControlFlow::Continue(())
        })?;
        Ok((parts.join(", "), stats))
    }
}

fn labelled_leaves(arena: &mut CircuitArena, labels: &[&'static str]) -> Vec<NodeId> {
    (0..labels.len()).map(|e| arena.leaf(e)).collect()
}

/// Two joined squares trimmed to one edge: a product of two unions of two
/// products of leaves.
pub fn two_squares_circuit(arena: &mut CircuitArena) -> LabelledCircuit {
    let labels = vec!["uv", "wv1", "vv1", "uw", "u'v'", "w'v'1", "v'v'1", "u'w'"];
    let l = labelled_leaves(arena, &labels);
    let p0 = arena.product(l[0], l[1]);
    let p1 = arena.product(l[2], l[3]);
    let left = arena.union(p0, p1);
    let p2 = arena.product(l[4], l[5]);
    let p3 = arena.product(l[6], l[7]);
    let right = arena.union(p2, p3);
    let root = arena.product(left, right);
    LabelledCircuit { root, labels }
}

/// A circuit that is not a tree: the leaves `a` and `b` have two parents.
pub fn shared_leaves_circuit(arena: &mut CircuitArena) -> LabelledCircuit {
    let labels = vec!["a", "b", "c", "d", "e", "f", "g", "h"];
    let l = labelled_leaves(arena, &labels);
    let (a, b, c, d, e, f, g, h) = (l[0], l[1], l[2], l[3], l[4], l[5], l[6], l[7]);
    let ea = arena.product(e, a);
    let cb = arena.product(c, b);
    let x = arena.union(ea, cb);
    let af = arena.product(a, f);
    let bd = arena.product(b, d);
    let y = arena.union(af, bd);
    let hx = arena.product(h, x);
    let yg = arena.product(y, g);
    let root = arena.union(hx, yg);
    LabelledCircuit { root, labels }
}

/// `K_{n,n}` with edges in lexicographic order.
pub fn complete(n: usize) -> EdgeList {
    let mut g = EdgeList::new(n, n);
    for i in 0..n {
        for j in 0..n {
            g.edges.push((i, j));
        }
    }
    g
}

/// The cycle on `len` vertices alternating between the sides.
pub fn cycle(len: usize) -> Result<EdgeList> {
    if len < 4 || !len.is_multiple_of(2) {
        return Err(Error::MalformedInput(format!("cycle length {len} must be even and at least 4")));
    }
    let n = len / 2;
    let mut g = EdgeList::new(n, n);
    for i in 0..n {
        g.edges.push((i, i));
        g.edges.push((i, (i + 1) % n));
    }
    Ok(g)
}

/// `H_{n,k}`: every edge of `K_{n,n}` replaced by a path with `k` edges.
pub fn path_substituted(n: usize, k: usize) -> Result<EdgeList> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::MalformedInput(format!("path length {k} must be odd")));
    }
    if n == 0 {
        return Err(Error::MalformedInput("n must be positive".into()));
    }
    let inner = n * n * (k - 1) / 2;
    let mut g = EdgeList::new(n + inner, n + inner);
    let (mut next_left, mut next_right) = (n, n);
    for i in 0..n {
        for j in 0..n {
            // Walk l_i, R, L, R, ..., r_j.
            let mut at_left = i;
            for t in 1..=k {
                if t % 2 == 1 {
                    let r = if t == k {
                        j
                    } else {
                        next_right += 1;
                        next_right - 1
                    };
                    g.edges.push((at_left, r));
                    if t < k {
                        next_left += 1;
                        at_left = next_left - 1;
                        g.edges.push((at_left, r));
                    }
                }
            }
        }
    }
    debug_assert_eq!(g.edges.len(), n * n * k);
    Ok(g)
}

/// Strongly connected graph on `n` vertices and `m` edges with exactly
/// `m - n + 2` perfect matchings: the cycle `1, 2, …, n, 1` plus the first
/// `m - n` chords between small odd and large even vertices.
pub fn min_count_graph(n: usize, m: usize) -> Result<EdgeList> {
    if n < 2 || !(n + 2).is_multiple_of(4) {
        return Err(Error::MalformedInput(format!("n = {n}: n + 2 must be divisible by 4")));
    }
    // m <= n²/16 + 5n/4 - 7/4, scaled by 16.
    if m < n || 16 * m + 28 > n * n + 20 * n {
        return Err(Error::MalformedInput(format!("m = {m} outside the admissible range for n = {n}")));
    }
    // Odd vertex v is left (v-1)/2, even vertex v is right v/2 - 1.
    let pair = |a: usize, b: usize| -> (usize, usize) {
        let (odd, even) = if a % 2 == 1 { (a, b) } else { (b, a) };
        ((odd - 1) / 2, even / 2 - 1)
    };
    let mut g = EdgeList::new(n / 2, n / 2);
    for v in 1..=n {
        g.edges.push(pair(v, v % n + 1));
    }
    let mut chords = Vec::new();
    for a in (1..=n).filter(|&a| a % 2 == 1 && 2 * a <= n) {
        for b in (1..=n).filter(|&b| b % 2 == 0 && 2 * b >= n) {
            let on_cycle = b == a + 1 || a == b + 1 || (a == 1 && b == n);
            if !on_cycle {
                chords.push(pair(a, b));
            }
        }
    }
    if m - n > chords.len() {
        return Err(Error::MalformedInput(format!("m = {m} needs more chords than exist")));
    }
    g.edges.extend_from_slice(&chords[..m - n]);
    Ok(g)
}

/// `n × n` instance with a planted perfect matching; every other pair is an
/// edge independently with probability `density`. ChaCha8 seeded with `seed`.
pub fn random_with_matching(n: usize, seed: u64, density: f64) -> Result<EdgeList> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::MalformedInput(format!("density {density} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut g = EdgeList::new(n, n);
    for (i, &planted) in perm.iter().enumerate() {
        for j in 0..n {
            if j == planted || rng.gen_bool(density) {
                g.edges.push((i, j));
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_from_list;

    fn graph(list: &EdgeList) -> BipartiteGraph {
        build_from_list(&mut CircuitArena::new(), list).unwrap()
    }

    fn factorial(n: u32) -> BigUint {
        (1..=n).map(BigUint::from).product()
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force(&graph(&complete(3))).unwrap().count, BigUint::from(6u32));
        assert_eq!(brute_force(&graph(&cycle(6).unwrap())).unwrap().count, BigUint::from(2u32));
        let star = EdgeList { left_count: 1, right_count: 2, edges: vec![(0, 0), (0, 1)] };
        assert!(brute_force(&graph(&star)).unwrap().matchings.is_empty());
        assert!(matches!(brute_force_capped(&graph(&complete(4)), 3), Err(Error::TestGuard(_))));
    }

    #[test]
    fn permanent_examples() {
        assert_eq!(permanent(&graph(&complete(4))).unwrap(), BigUint::from(24u32));
        let identity = EdgeList { left_count: 5, right_count: 5, edges: (0..5).map(|i| (i, i)).collect() };
        assert_eq!(permanent(&graph(&identity)).unwrap(), BigUint::one());
        assert_eq!(permanent(&graph(&path_substituted(3, 5).unwrap())).unwrap(), BigUint::from(6u32));
        assert_eq!(permanent(&graph(&complete(10))).unwrap(), factorial(10));
    }

    #[test]
    fn big_and_small_ryser_agree() {
        let list = random_with_matching(7, 3, 0.6).unwrap();
        let g = graph(&list);
        let mut a = vec![vec![0i64; 7]; 7];
        for &(i, j) in &list.edges {
            a[i][j] = 1;
        }
        assert_eq!(BigUint::try_from(ryser_i128(&a).unwrap()).unwrap(), ryser_big(&a));
        assert_eq!(permanent(&g).unwrap(), brute_force(&g).unwrap().count);
    }

    #[test]
    fn m_plus_examples() {
        let single = graph(&EdgeList { left_count: 1, right_count: 1, edges: vec![(0, 0)] });
        assert_eq!(m_plus_set(&single, 0).unwrap().len(), 1);
        let k33 = graph(&complete(3));
        for e in k33.edge_ids() {
            assert_eq!(m_plus_set(&k33, e).unwrap().len(), 2);
        }
        let c6 = graph(&cycle(6).unwrap());
        for e in c6.edge_ids() {
            assert_eq!(m_plus_set(&c6, e).unwrap().len(), 1);
        }
    }

    #[test]
    fn generator_shapes() {
        let h = path_substituted(3, 5).unwrap();
        assert_eq!(h.left_count + h.right_count, 2 * 3 + 9 * 4);
        assert_eq!(h.edges.len(), 45);
        assert_eq!(path_substituted(2, 1).unwrap(), complete(2));
        assert!(path_substituted(3, 4).is_err());
        let c = cycle(6).unwrap();
        assert_eq!((c.left_count, c.edges.len()), (3, 6));
        assert!(cycle(5).is_err());
        assert!(min_count_graph(6, 9).is_err());
        assert!(min_count_graph(8, 8).is_err());
        assert_eq!(min_count_graph(10, 17).unwrap().edges.len(), 17);
        assert!(min_count_graph(10, 18).is_err());
        let r1 = random_with_matching(6, 42, 0.5).unwrap();
        assert_eq!(r1, random_with_matching(6, 42, 0.5).unwrap());
        assert!(random_with_matching(3, 1, 1.5).is_err());
    }

    #[test]
    fn min_count_identity() {
        for (n, m) in [(6, 6), (6, 7), (6, 8), (10, 10), (10, 13), (10, 17)] {
            let g = graph(&min_count_graph(n, m).unwrap());
            assert_eq!(permanent(&g).unwrap(), BigUint::from(m - n + 2), "n={n} m={m}");
        }
    }

    #[test]
    fn path_substituted_counts() {
        for n in 1..=4u32 {
            for k in [1, 3, 5] {
                let list = path_substituted(n as usize, k).unwrap();
                if list.left_count > 21 {
                    continue;
                }
                let g = graph(&list);
                assert_eq!(permanent(&g).unwrap(), factorial(n), "n={n} k={k}");
            }
        }
    }
}
