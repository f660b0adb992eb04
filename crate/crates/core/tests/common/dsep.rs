//! Exact d-separation on a DAG, usable as a conditional-independence test.

use std::collections::{BTreeSet, VecDeque};

use quacc::citest::{CiOutcome, CiTest};
use quacc::dataset::Dataset;
use quacc::synth::TrueGraph;
use quacc::Result;

#[derive(Debug, Clone)]
pub struct Dag {
    pub vertices: Vec<String>,
    /// (parent, child)
    pub arcs: Vec<(String, String)>,
}

impl Dag {
    pub fn new(vertices: &[&str], arcs: &[(&str, &str)]) -> Self {
        Dag {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            arcs: arcs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    fn parents(&self, v: &str) -> Vec<&str> {
        self.arcs
            .iter()
            .filter(|(_, c)| c == v)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    fn ancestors(&self, seeds: &[&str]) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = seeds.iter().map(|s| s.to_string()).collect();
        let mut queue: VecDeque<String> = out.iter().cloned().collect();
        while let Some(v) = queue.pop_front() {
            for p in self.parents(&v) {
                if out.insert(p.to_string()) {
                    queue.push_back(p.to_string());
                }
            }
        }
        out
    }

    /// x and y are d-separated by s iff they are disconnected in the
    /// moralized ancestral graph of {x, y} ∪ s after deleting s.
    pub fn d_separated(&self, x: &str, y: &str, s: &[&str]) -> bool {
        let mut seeds = vec![x, y];
        seeds.extend_from_slice(s);
        let anc = self.ancestors(&seeds);
        let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
        let mut add = |a: &str, b: &str| {
            if a != b {
                edges.insert((a.to_string(), b.to_string()));
                edges.insert((b.to_string(), a.to_string()));
            }
        };
        for v in &anc {
            let ps = self.parents(v);
            for p in &ps {
                add(p, v);
            }
            for (i, a) in ps.iter().enumerate() {
                for b in &ps[i + 1..] {
                    add(a, b);
                }
            }
        }
        let blocked: BTreeSet<&str> = s.iter().copied().collect();
        let mut seen = BTreeSet::from([x.to_string()]);
        let mut queue = VecDeque::from([x.to_string()]);
        while let Some(v) = queue.pop_front() {
            if v == y {
                return false;
            }
            for (a, b) in &edges {
                if *a == v && !blocked.contains(b.as_str()) && seen.insert(b.clone()) {
                    queue.push_back(b.clone());
                }
            }
        }
        true
    }

    pub fn skeleton(&self) -> TrueGraph {
        let names: Vec<&str> = self.vertices.iter().map(String::as_str).collect();
        let arcs: Vec<(&str, &str)> = self
            .arcs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        TrueGraph::new(&names, &arcs)
    }
}

impl CiTest for Dag {
    fn test(&self, _: &Dataset, x: &str, y: &str, s: &[&str], _: f64) -> Result<CiOutcome> {
        let independent = self.d_separated(x, y, s);
        Ok(CiOutcome {
            p_value: if independent { 1.0 } else { 0.0 },
            statistic: 0.0,
            n_used: 0,
            independent,
            warning: None,
        })
    }

    fn id(&self) -> String {
        "d-separation".into()
    }
}

/// The five canonical structures on at most four vertices.
pub fn canonical() -> Vec<(&'static str, Dag)> {
    vec![
        (
            "chain",
            Dag::new(&["a", "b", "c"], &[("a", "b"), ("b", "c")]),
        ),
        (
            "fork",
            Dag::new(&["a", "b", "c"], &[("b", "a"), ("b", "c")]),
        ),
        (
            "collider",
            Dag::new(&["a", "b", "c"], &[("a", "b"), ("c", "b")]),
        ),
        (
            "square",
            Dag::new(
                &["a", "b", "c", "d"],
                &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
            ),
        ),
        (
            "disconnected",
            Dag::new(&["a", "b", "c", "d"], &[("a", "b")]),
        ),
    ]
}
