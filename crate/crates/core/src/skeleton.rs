//! Adjacency phase of the PC algorithm and majority voting over replicate
//! skeletons.
//!
//! Adjacency sets are frozen at the start of every conditioning order and
//! removals are applied once the order is finished, so the result does not
//! depend on the order in which pairs are visited.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::CiTest;
use crate::dataset::Dataset;
use crate::{QuaccError, Result};

/// Canonical (lexicographically sorted) key of an undirected pair.
pub fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sepset {
    pub x: String,
    pub y: String,
    pub set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub vertices: Vec<String>,
    pub edges: BTreeSet<(String, String)>,
    pub sepsets: Vec<Sepset>,
    pub alpha: f64,
    pub test_id: String,
}

impl Skeleton {
    pub fn complete(vertices: &[&str], alpha: f64, test_id: impl Into<String>) -> Self {
        let edges = vertices
            .iter()
            .tuple_combinations()
            .map(|(a, b)| unordered(a, b))
            .collect();
        Skeleton {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            edges,
            sepsets: Vec::new(),
            alpha,
            test_id: test_id.into(),
        }
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&unordered(a, b))
    }

    pub fn sepset(&self, a: &str, b: &str) -> Option<&[String]> {
        let key = unordered(a, b);
        self.sepsets
            .iter()
            .find(|s| unordered(&s.x, &s.y) == key)
            .map(|s| s.set.as_slice())
    }

    pub fn neighbours(&self, v: &str) -> Vec<&str> {
        self.vertices
            .iter()
            .filter(|w| w.as_str() != v && self.has_edge(v, w))
            .map(String::as_str)
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph skeleton {\n");
        for v in &self.vertices {
            let _ = writeln!(out, "  \"{v}\";");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  \"{a}\" -- \"{b}\";");
        }
        out.push_str("}\n");
        out
    }
}

fn join(set: &[&str]) -> String {
    set.join(",")
}

/// Runs the PC adjacency search over `vars` with conditioning sets of size
/// up to `max_order` (default |vars| − 2).
pub fn pc_skeleton(
    data: &Dataset,
    vars: &[&str],
    test: &dyn CiTest,
    alpha: f64,
    max_order: Option<usize>,
) -> Result<Skeleton> {
    let p = vars.len();
    if p < 2 {
        return Err(QuaccError::invalid("PC needs at least two variables"));
    }
    if vars.iter().collect::<BTreeSet<_>>().len() != p {
        return Err(QuaccError::invalid("variable list contains duplicates"));
    }
    let max_order = max_order.unwrap_or(p - 2);
    let mut adj: Vec<BTreeSet<usize>> = (0..p)
        .map(|i| (0..p).filter(|&j| j != i).collect())
        .collect();
    let mut sepsets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();

    for order in 0..=max_order {
        let snapshot = adj.clone();
        let pairs: Vec<(usize, usize)> = (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                snapshot[i].contains(&j) && (snapshot[i].len() > order || snapshot[j].len() > order)
            })
            .collect();
        if pairs.is_empty() {
            break;
        }
        let decisions: Vec<Option<Vec<usize>>> = pairs
            .par_iter()
            .map(|&(i, j)| separate(data, vars, test, alpha, &snapshot, i, j, order))
            .collect::<Result<_>>()?;
        for (&(i, j), found) in pairs.iter().zip(decisions) {
            if let Some(set) = found {
                adj[i].remove(&j);
                adj[j].remove(&i);
                sepsets.insert((i, j), set);
            }
        }
    }

    let mut skeleton = Skeleton::complete(vars, alpha, test.id());
    skeleton.edges = (0..p)
        .flat_map(|i| adj[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .map(|(i, j)| unordered(vars[i], vars[j]))
        .collect();
    skeleton.sepsets = sepsets
        .into_iter()
        .map(|((i, j), set)| Sepset {
            x: vars[i].to_string(),
            y: vars[j].to_string(),
            set: set.into_iter().map(|k| vars[k].to_string()).collect(),
        })
        .collect();
    Ok(skeleton)
}

/// First separating set of size `order` for (i, j), searching adj(i)\{j}
/// and then adj(j)\{i} in lexicographic order of vertex positions.
#[allow(clippy::too_many_arguments)]
fn separate(
    data: &Dataset,
    vars: &[&str],
    test: &dyn CiTest,
    alpha: f64,
    snapshot: &[BTreeSet<usize>],
    i: usize,
    j: usize,
    order: usize,
) -> Result<Option<Vec<usize>>> {
    let mut tried = BTreeSet::new();
    for (a, b) in [(i, j), (j, i)] {
        let candidates: Vec<usize> = snapshot[a].iter().copied().filter(|&k| k != b).collect();
        if candidates.len() < order {
            continue;
        }
        for set in candidates.into_iter().combinations(order) {
            if !tried.insert(set.clone()) {
                continue;
            }
            let names: Vec<&str> = set.iter().map(|&k| vars[k]).collect();
            let outcome = test
                .test(data, vars[i], vars[j], &names, alpha)
                .map_err(|e| QuaccError::CiTest {
                    x: vars[i].to_string(),
                    y: vars[j].to_string(),
                    set: join(&names),
                    source: Box::new(e),
                })?;
            if outcome.independent {
                return Ok(Some(set));
            }
        }
    }
    Ok(None)
}

/// Keeps the edges present in strictly more than half of the inputs.
pub fn majority_vote(skeletons: &[Skeleton]) -> Result<Skeleton> {
    let first = skeletons
        .first()
        .ok_or_else(|| QuaccError::invalid("majority vote needs at least one skeleton"))?;
    let vertex_set: BTreeSet<&String> = first.vertices.iter().collect();
    let mut counts: BTreeMap<&(String, String), usize> = BTreeMap::new();
    for s in skeletons {
        if s.vertices.iter().collect::<BTreeSet<_>>() != vertex_set {
            return Err(QuaccError::VertexMismatch);
        }
        for e in &s.edges {
            *counts.entry(e).or_default() += 1;
        }
    }
    let edges = counts
        .into_iter()
        .filter(|&(_, c)| 2 * c > skeletons.len())
        .map(|(e, _)| e.clone())
        .collect();
    Ok(Skeleton {
        vertices: first.vertices.clone(),
        edges,
        sepsets: Vec::new(),
        alpha: first.alpha,
        test_id: first.test_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citest::CiOutcome;

    /// Declares a fixed list of pairs independent given any set containing
    /// the listed separator (or unconditionally when the separator is empty).
    struct Scripted(Vec<(&'static str, &'static str, &'static [&'static str])>);

    impl CiTest for Scripted {
        fn test(&self, _: &Dataset, x: &str, y: &str, s: &[&str], _: f64) -> Result<CiOutcome> {
            let hit = self.0.iter().any(|(a, b, sep)| {
                unordered(a, b) == unordered(x, y) && sep.iter().all(|v| s.contains(v))
            });
            Ok(CiOutcome {
                p_value: if hit { 1.0 } else { 0.0 },
                statistic: 0.0,
                n_used: 0,
                independent: hit,
                warning: None,
            })
        }

        fn id(&self) -> String {
            "scripted".into()
        }
    }

    fn empty() -> Dataset {
        Dataset::from_columns::<&str>(vec![]).unwrap()
    }

    #[test]
    fn chain_removes_ends() {
        let test = Scripted(vec![("a", "c", &["b"])]);
        let s = pc_skeleton(&empty(), &["a", "b", "c"], &test, 0.05, None).unwrap();
        assert!(s.has_edge("a", "b") && s.has_edge("b", "c"));
        assert!(!s.has_edge("a", "c"));
        assert_eq!(s.sepset("c", "a").unwrap(), ["b".to_string()]);
    }

    #[test]
    fn marginal_independence_at_order_zero() {
        let test = Scripted(vec![("a", "b", &[])]);
        let s = pc_skeleton(&empty(), &["a", "b"], &test, 0.05, None).unwrap();
        assert!(s.edges.is_empty());
        assert_eq!(s.sepset("a", "b").unwrap().len(), 0);
    }

    #[test]
    fn max_order_caps_search() {
        let test = Scripted(vec![("a", "c", &["b"])]);
        let s = pc_skeleton(&empty(), &["a", "b", "c"], &test, 0.05, Some(0)).unwrap();
        assert_eq!(s.edges.len(), 3);
    }

    #[test]
    fn errors_carry_context() {
        struct Failing;
        impl CiTest for Failing {
            fn test(&self, _: &Dataset, _: &str, _: &str, _: &[&str], _: f64) -> Result<CiOutcome> {
                Err(QuaccError::NoConvergence(3))
            }
            fn id(&self) -> String {
                "failing".into()
            }
        }
        let err = pc_skeleton(&empty(), &["a", "b"], &Failing, 0.05, None).unwrap_err();
        assert!(matches!(err, QuaccError::CiTest { .. }));
        assert!(pc_skeleton(&empty(), &["a"], &Failing, 0.05, None).is_err());
    }

    #[test]
    fn dot_output() {
        let mut s = Skeleton::complete(&["a", "b"], 0.05, "t");
        assert!(s.to_dot().contains("\"a\" -- \"b\";"));
        s.edges.clear();
        assert!(!s.to_dot().contains("--"));
    }

    fn with_edges(edges: &[(&str, &str)]) -> Skeleton {
        let mut s = Skeleton::complete(&["a", "b", "c"], 0.05, "t");
        s.edges = edges.iter().map(|(a, b)| unordered(a, b)).collect();
        s
    }

    #[test]
    fn vote_threshold() {
        let mut list = vec![with_edges(&[("a", "b")]); 7];
        list.extend(vec![with_edges(&[]); 8]);
        assert!(majority_vote(&list).unwrap().edges.is_empty());
        let mut list = vec![with_edges(&[("a", "b")]); 8];
        list.extend(vec![with_edges(&[]); 7]);
        assert!(majority_vote(&list).unwrap().has_edge("a", "b"));
        let same = vec![with_edges(&[("a", "c"), ("b", "c")]); 15];
        assert_eq!(majority_vote(&same).unwrap().edges, same[0].edges);
        assert!(majority_vote(&[with_edges(&[])]).unwrap().edges.is_empty());
        assert!(majority_vote(&[]).is_err());
        let other = Skeleton::complete(&["a", "b"], 0.05, "t");
        assert!(matches!(
            majority_vote(&[with_edges(&[]), other]),
            Err(QuaccError::VertexMismatch)
        ));
    }
}
