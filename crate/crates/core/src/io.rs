//! The graph file format: a header `p pm <nL> <nR> <m>` followed by `m` lines
//! `e <u> <v>` with 1-based endpoints; lines starting with `c` are comments.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeList};

fn malformed(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::MalformedInput(format!("line {line}: {msg}"))
}

fn number(line: usize, token: Option<&str>, what: &str) -> Result<usize> {
    let token = token.ok_or_else(|| malformed(line, format!("missing {what}")))?;
    token.parse().map_err(|_| malformed(line, format!("bad {what} `{token}`")))
}

pub fn parse_graph(text: &str) -> Result<EdgeList> {
    let mut list: Option<EdgeList> = None;
    let mut expected = 0;
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            None => continue,
            Some(t) if t.starts_with('c') => continue,
            Some("p") => {
                if list.is_some() {
                    return Err(malformed(line, "second header"));
                }
                if tokens.next() != Some("pm") {
                    return Err(malformed(line, "header must read `p pm <nL> <nR> <m>`"));
                }
                let left = number(line, tokens.next(), "left count")?;
                let right = number(line, tokens.next(), "right count")?;
                expected = number(line, tokens.next(), "edge count")?;
                if tokens.next().is_some() {
                    return Err(malformed(line, "trailing tokens"));
                }
                let mut l = EdgeList::new(left, right);
                l.edges.reserve(expected.min(1 << 24));
                list = Some(l);
            }
            Some("e") => {
                let l = list.as_mut().ok_or_else(|| malformed(line, "edge before header"))?;
                let u = number(line, tokens.next(), "left endpoint")?;
                let v = number(line, tokens.next(), "right endpoint")?;
                if tokens.next().is_some() {
                    return Err(malformed(line, "trailing tokens"));
                }
                if u == 0 || u > l.left_count {
                    return Err(malformed(line, format!("left endpoint {u} outside 1..={}", l.left_count)));
                }
                if v == 0 || v > l.right_count {
                    return Err(malformed(line, format!("right endpoint {v} outside 1..={}", l.right_count)));
                }
                if !seen.insert((u, v)) {
                    return Err(malformed(line, format!("duplicate edge {u} {v}")));
                }
                l.edges.push((u - 1, v - 1));
            }
            Some(t) => return Err(malformed(line, format!("unknown line type `{t}`"))),
        }
    }
    let list = list.ok_or_else(|| Error::MalformedInput("missing header".into()))?;
    if list.edges.len() != expected {
        return Err(Error::MalformedInput(format!("header announces {expected} edges, found {}", list.edges.len())));
    }
    Ok(list)
}

pub fn write_graph(list: &EdgeList) -> String {
    let mut out = String::with_capacity(16 * (list.edges.len() + 1));
    let _ = writeln!(out, "p pm {} {} {}", list.left_count, list.right_count, list.edges.len());
    for &(u, v) in &list.edges {
        let _ = writeln!(out, "e {} {}", u + 1, v + 1);
    }
    out
}

/// `u1-v1 u2-v2 …` with 1-based endpoints, sorted by the left endpoint.
pub fn format_matching(list: &EdgeList, edges: &[EdgeId]) -> String {
    let mut pairs: Vec<(usize, usize)> = edges.iter().map(|&e| list.edges[e]).collect();
    pairs.sort_unstable();
    let mut out = String::with_capacity(8 * pairs.len());
    for (i, (u, v)) in pairs.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}-{}", u + 1, v + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{complete, path_substituted};

    #[test]
    fn round_trip() {
        for list in [complete(3), path_substituted(3, 5).unwrap()] {
            let text = write_graph(&list);
            let back = parse_graph(&text).unwrap();
            assert_eq!(back.edges, list.edges);
            assert_eq!(write_graph(&back), text);
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let list = parse_graph("c a graph\n\np pm 1 1 1\nc edge follows\ne 1 1\n").unwrap();
        assert_eq!(list.edges, vec![(0, 0)]);
        assert_eq!(format_matching(&list, &[0]), "1-1");
    }

    #[test]
    fn rejects_malformed() {
        for text in [
            "",
            "e 1 1\n",
            "p pm 1 1 2\ne 1 1\n",
            "p pm 1 1 1\ne 1 2\n",
            "p pm 1 1 1\ne 0 1\n",
            "p pm 2 2 2\ne 1 1\ne 1 1\n",
            "p pm 1 1 1\ne 1 x\n",
            "p xx 1 1 1\ne 1 1\n",
            "p pm 1 1 1\np pm 1 1 1\ne 1 1\n",
            "p pm 1 1 1\nq 1 1\n",
        ] {
            assert!(matches!(parse_graph(text), Err(Error::MalformedInput(_))), "{text:?}");
        }
    }
}
