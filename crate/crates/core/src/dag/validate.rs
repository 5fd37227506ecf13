use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TaskDag;
use crate::scalar::Scalar;

/// One broken invariant of a task DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyGraph,
    EmptyId { index: usize },
    DuplicateId { id: String },
    NonPositiveWeight { id: String, weight: f64 },
    SelfEdge { id: String },
    DanglingEdge { from: String, to: String, missing: String },
    DuplicateEdge { from: String, to: String },
    CouplingOutOfRange { from: String, to: String, coupling: f64 },
    /// Witness path, first vertex repeated at the end.
    Cycle { path: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGraph => write!(f, "graph has no vertices"),
            Violation::EmptyId { index } => write!(f, "vertex #{index} has an empty id"),
            Violation::DuplicateId { id } => write!(f, "duplicate vertex id `{id}`"),
            Violation::NonPositiveWeight { id, weight } => {
                write!(f, "vertex `{id}` has non-positive weight {weight}")
            }
            Violation::SelfEdge { id } => write!(f, "self edge on `{id}`"),
            Violation::DanglingEdge { from, to, missing } => {
                write!(f, "edge {from} -> {to} references unknown vertex `{missing}`")
            }
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from} -> {to}"),
            Violation::CouplingOutOfRange { from, to, coupling } => {
                write!(f, "edge {from} -> {to} coupling {coupling} outside [0,1]")
            }
            Violation::Cycle { path } => write!(f, "cycle {}", path.join(" -> ")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn cycle(&self) -> Option<&[String]> {
        self.violations.iter().find_map(|v| match v {
            Violation::Cycle { path } => Some(path.as_slice()),
            _ => None,
        })
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every TaskDag invariant and lists all violations found.
pub fn validate_dag<S: Scalar>(dag: &TaskDag<S>) -> ValidationReport {
    let mut violations = Vec::new();
    if dag.vertices.is_empty() {
        violations.push(Violation::EmptyGraph);
    }

    let mut seen: HashSet<&str> = HashSet::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, v) in dag.vertices.iter().enumerate() {
        if v.id.is_empty() {
            violations.push(Violation::EmptyId { index: i });
        }
        if !seen.insert(v.id.as_str()) {
            violations.push(Violation::DuplicateId { id: v.id.clone() });
        } else {
            index.insert(v.id.as_str(), i);
        }
        if !(v.weight > S::zero()) || !v.weight.is_finite() {
            violations.push(Violation::NonPositiveWeight { id: v.id.clone(), weight: v.weight.as_f64() });
        }
    }

    let n = dag.vertices.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut edge_seen: HashSet<(&str, &str)> = HashSet::new();
    for e in &dag.edges {
        if !(e.coupling >= S::zero() && e.coupling <= S::one()) {
            violations.push(Violation::CouplingOutOfRange {
                from: e.from.clone(),
                to: e.to.clone(),
                coupling: e.coupling.as_f64(),
            });
        }
        if e.from == e.to {
            violations.push(Violation::SelfEdge { id: e.from.clone() });
            continue;
        }
        let missing = [&e.from, &e.to].into_iter().find(|id| !index.contains_key(id.as_str()));
        if let Some(missing) = missing {
            violations.push(Violation::DanglingEdge {
                from: e.from.clone(),
                to: e.to.clone(),
                missing: missing.clone(),
            });
            continue;
        }
        if !edge_seen.insert((e.from.as_str(), e.to.as_str())) {
            violations.push(Violation::DuplicateEdge { from: e.from.clone(), to: e.to.clone() });
            continue;
        }
        succ[index[e.from.as_str()]].push(index[e.to.as_str()]);
    }

    if let Some(cycle) = find_cycle(&succ) {
        violations.push(Violation::Cycle {
            path: cycle.into_iter().map(|i| dag.vertices[i].id.clone()).collect(),
        });
    }

    ValidationReport { violations }
}

/// Iterative three-colour DFS; returns a closed witness path on the first
/// back edge found.
fn find_cycle(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let n = succ.len();
    let mut colour = vec![Colour::White; n];
    for root in 0..n {
        if colour[root] != Colour::White {
            continue;
        }
        // (vertex, next successor position)
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        colour[root] = Colour::Grey;
        while let Some(&mut (u, ref mut pos)) = stack.last_mut() {
            if *pos < succ[u].len() {
                let v = succ[u][*pos];
                *pos += 1;
                match colour[v] {
                    Colour::White => {
                        colour[v] = Colour::Grey;
                        stack.push((v, 0));
                    }
                    Colour::Grey => {
                        let start = stack.iter().position(|&(w, _)| w == v).expect("grey on stack");
                        let mut path: Vec<usize> = stack[start..].iter().map(|&(w, _)| w).collect();
                        path.push(v);
                        return Some(path);
                    }
                    Colour::Black => {}
                }
            } else {
                colour[u] = Colour::Black;
                stack.pop();
            }
        }
    }
    None
}
