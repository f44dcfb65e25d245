//! Per-document temporal graphs.
//!
//! Each event is read as an interval `[start, end]` with `start < end`.
//! BEFORE(a, b) means `end(a) < start(b)`; INCLUDES(a, b) means
//! `start(a) < start(b)` and `end(b) < end(a)`. Closure adds every BEFORE /
//! INCLUDES (or inverse) relation entailed by those endpoint constraints,
//! which covers the compositions BEFORE∘BEFORE, INCLUDES∘INCLUDES,
//! BEFORE∘INCLUDES and IS_INCLUDED∘BEFORE together with any relation only
//! derivable through several paths. OVERLAP and labels outside those four
//! carry no endpoint constraint and never compose.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label, LabelSchema};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Gold,
    Model,
    Sieve,
    Inferred,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub label: Label,
    pub provenance: Provenance,
}

/// Which schema labels carry interval semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Semantics {
    before: Option<Label>,
    after: Option<Label>,
    includes: Option<Label>,
    is_included: Option<Label>,
}

impl Semantics {
    fn of(schema: &LabelSchema) -> Self {
        Semantics {
            before: schema.get("BEFORE"),
            after: schema.get("AFTER"),
            includes: schema.get("INCLUDES"),
            is_included: schema.get("IS_INCLUDED"),
        }
    }
}

/// Relation families whose cycles are conflicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    Before,
    Includes,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conflict {
    /// Both directions of a pair are stored with labels that are not
    /// inverses of each other. `first` is stored on (a, b), `second` on (b, a).
    Contradiction {
        a: String,
        b: String,
        first: String,
        second: String,
    },
    /// Events lying on a common BEFORE or INCLUDES cycle, sorted.
    Cycle { relation: CycleKind, nodes: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    schema: LabelSchema,
    sem: Semantics,
    nodes: Vec<String>,
    display: Vec<String>,
    edges: BTreeMap<(usize, usize), (Label, Provenance)>,
}

impl TemporalGraph {
    pub fn new(schema: &LabelSchema) -> Self {
        TemporalGraph {
            schema: schema.clone(),
            sem: Semantics::of(schema),
            nodes: Vec::new(),
            display: Vec::new(),
            edges: BTreeMap::new(),
        }
    }

    /// Nodes are the document's events in text order; edges are the gold
    /// annotations.
    pub fn from_gold(doc: &Document, schema: &LabelSchema) -> Self {
        let mut g = TemporalGraph::new(schema);
        let mut events: Vec<_> = doc.events.iter().collect();
        events.sort_by(|a, b| a.head_tok.cmp(&b.head_tok).then_with(|| a.event_id.cmp(&b.event_id)));
        for e in events {
            let text: Vec<&str> = doc.sentences[e.sent_idx][e.first..=e.last]
                .iter()
                .map(|t| t.surface.as_str())
                .collect();
            g.add_node_labeled(&e.event_id, &text.join(" "));
        }
        for r in &doc.relations {
            g.add_edge(&r.source, &r.target, r.label, Provenance::Gold)
                .expect("validated documents have consistent gold edges");
        }
        g
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn add_node(&mut self, id: &str) -> usize {
        self.add_node_labeled(id, id)
    }

    pub fn add_node_labeled(&mut self, id: &str, display: &str) -> usize {
        if let Some(i) = self.index(id) {
            return i;
        }
        self.nodes.push(id.to_string());
        self.display.push(display.to_string());
        self.nodes.len() - 1
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Stores `label` on the ordered pair. Re-adding the same label is a
    /// no-op; a different label on an already stored ordered pair is an
    /// error. The reverse direction may be stored independently, which is
    /// how contradictions enter a graph.
    pub fn add_edge(&mut self, source: &str, target: &str, label: Label, provenance: Provenance) -> Result<()> {
        if source == target {
            return Err(Error::Invalid(format!("self loop on '{source}'")));
        }
        if label.is_none() {
            return Err(Error::Invalid("NONE is not an edge label".into()));
        }
        let s = self.add_node(source);
        let t = self.add_node(target);
        match self.edges.get(&(s, t)) {
            Some(&(existing, _)) if existing == label => Ok(()),
            Some(&(existing, _)) => Err(Error::Invalid(format!(
                "edge ({source}, {target}) already labeled {}",
                self.schema.name(existing)
            ))),
            None => {
                self.edges.insert((s, t), (label, provenance));
                Ok(())
            }
        }
    }

    /// Label of (a, b): the stored label, else the inverse of a stored (b, a).
    pub fn query(&self, a: &str, b: &str) -> Option<Label> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        self.query_idx(i, j)
    }

    fn query_idx(&self, i: usize, j: usize) -> Option<Label> {
        self.edges
            .get(&(i, j))
            .map(|&(l, _)| l)
            .or_else(|| self.edges.get(&(j, i)).map(|&(l, _)| self.schema.inverse(l)))
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|(&(s, t), &(label, provenance))| Edge {
            source: self.nodes[s].clone(),
            target: self.nodes[t].clone(),
            label,
            provenance,
        })
    }

    /// Endpoint ordering constraints of `label` on (a, b): point `2i` is the
    /// start of node `i`, `2i + 1` its end.
    fn constraints(&self, a: usize, b: usize, label: Label) -> Vec<(usize, usize)> {
        match self.family(label) {
            Some((kind, forward)) => {
                let (a, b) = if forward { (a, b) } else { (b, a) };
                match kind {
                    CycleKind::Before => vec![(2 * a + 1, 2 * b)],
                    CycleKind::Includes => vec![(2 * a, 2 * b), (2 * b + 1, 2 * a + 1)],
                }
            }
            None => Vec::new(),
        }
    }

    fn point_graph(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); 2 * n];
        for i in 0..n {
            adj[2 * i].push(2 * i + 1);
        }
        for (&(a, b), &(label, _)) in &self.edges {
            for (u, v) in self.constraints(a, b, label) {
                adj[u].push(v);
            }
        }
        adj
    }

    /// Whether adding `label` on (a, b) keeps a consistent graph consistent.
    pub fn admits(&self, a: &str, b: &str, label: Label) -> bool {
        if a == b {
            return false;
        }
        let mut g = self.clone();
        let (i, j) = (g.add_node(a), g.add_node(b));
        if let Some(existing) = g.query_idx(i, j) {
            return existing == label;
        }
        let mut adj = g.point_graph();
        let added = g.constraints(i, j, label);
        for &(u, v) in &added {
            adj[u].push(v);
        }
        // Any new cycle runs through one of the added constraints.
        added.iter().all(|&(u, v)| !reaches(&adj, v, u))
    }

    /// True when some assignment of intervals satisfies every edge.
    pub fn is_consistent(&self) -> bool {
        let reach = reachability(&self.point_graph());
        (0..reach.len()).all(|p| !reach[p][p])
    }

    /// Relation between nodes `i` and `j` entailed by the endpoint constraints,
    /// when exactly one of the four interval labels is entailed.
    fn entailed(&self, reach: &[Vec<bool>], i: usize, j: usize) -> Option<Label> {
        let (si, ei, sj, ej) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        let candidates = [
            (reach[ei][sj], self.sem.before),
            (reach[ej][si], self.sem.after),
            (reach[si][sj] && reach[ej][ei], self.sem.includes),
            (reach[sj][si] && reach[ei][ej], self.sem.is_included),
        ];
        let mut found = candidates.iter().filter(|(holds, _)| *holds);
        match (found.next(), found.next()) {
            (Some(&(_, label)), None) => label,
            _ => None,
        }
    }

    /// Adds every entailed relation between unconnected pairs, tagged
    /// [`Provenance::Inferred`]. Asserted edges are kept as they are.
    pub fn closure(&self) -> TemporalGraph {
        let mut out = self.clone();
        let reach = reachability(&self.point_graph());
        let n = self.nodes.len();
        for i in 0..n {
            for j in i + 1..n {
                if self.edges.contains_key(&(i, j)) || self.edges.contains_key(&(j, i)) {
                    continue;
                }
                if let Some(label) = self.entailed(&reach, i, j) {
                    out.edges.insert((i, j), (label, Provenance::Inferred));
                }
            }
        }
        out
    }

    fn cycle_edges(&self, kind: CycleKind) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        let (fwd, back) = match kind {
            CycleKind::Before => (self.sem.before, self.sem.after),
            CycleKind::Includes => (self.sem.includes, self.sem.is_included),
        };
        for (&(a, b), &(label, _)) in &self.edges {
            if Some(label) == fwd {
                adj[a].push(b);
            } else if Some(label) == back {
                adj[b].push(a);
            }
        }
        adj
    }

    fn family(&self, label: Label) -> Option<(CycleKind, bool)> {
        let l = Some(label);
        if l == self.sem.before {
            Some((CycleKind::Before, true))
        } else if l == self.sem.after {
            Some((CycleKind::Before, false))
        } else if l == self.sem.includes {
            Some((CycleKind::Includes, true))
        } else if l == self.sem.is_included {
            Some((CycleKind::Includes, false))
        } else {
            None
        }
    }

    /// Contradictory parallel edges plus BEFORE and INCLUDES cycles. A pair
    /// stored in both directions as the same oriented relation (for example
    /// BEFORE(a, b) and BEFORE(b, a)) is reported once, as a cycle.
    pub fn detect_conflicts(&self) -> Vec<Conflict> {
        let mut out = BTreeSet::new();
        for (&(a, b), &(l1, _)) in &self.edges {
            if a > b {
                continue;
            }
            let Some(&(l2, _)) = self.edges.get(&(b, a)) else {
                continue;
            };
            if l2 == self.schema.inverse(l1) {
                continue;
            }
            let two_cycle = matches!(
                (self.family(l1), self.family(l2)),
                (Some((k1, o1)), Some((k2, o2))) if k1 == k2 && o1 == o2
            );
            if !two_cycle {
                out.insert(Conflict::Contradiction {
                    a: self.nodes[a].clone(),
                    b: self.nodes[b].clone(),
                    first: self.schema.name(l1).to_string(),
                    second: self.schema.name(l2).to_string(),
                });
            }
        }
        for kind in [CycleKind::Before, CycleKind::Includes] {
            for comp in cyclic_components(&self.cycle_edges(kind)) {
                let mut nodes: Vec<String> = comp.iter().map(|&i| self.nodes[i].clone()).collect();
                nodes.sort();
                out.insert(Conflict::Cycle { relation: kind, nodes });
            }
        }
        out.into_iter().collect()
    }

    /// Graphviz rendering. Nodes in insertion order, edges sorted by
    /// endpoint order, inferred edges dashed.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
        writeln!(out, "  rankdir=LR;").unwrap();
        writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
        for (id, display) in self.nodes.iter().zip(&self.display) {
            writeln!(out, "  \"{}\" [label=\"{}\"];", escape(id), escape(display)).unwrap();
        }
        for (&(s, t), &(label, prov)) in &self.edges {
            let name = self.schema.name(label);
            let color = match name {
                "BEFORE" | "AFTER" => "black",
                "INCLUDES" | "IS_INCLUDED" => "blue",
                "OVERLAP" => "darkgreen",
                _ => "gray40",
            };
            let style = if prov == Provenance::Inferred { "dashed" } else { "solid" };
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\", color={}, style={}];",
                escape(&self.nodes[s]),
                escape(&self.nodes[t]),
                escape(name),
                color,
                style
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }

    /// JSON-lines edge dump with provenance.
    pub fn edge_dump(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            source: &'a str,
            target: &'a str,
            label: &'a str,
            provenance: Provenance,
        }
        let mut out = String::new();
        for (&(s, t), &(label, provenance)) in &self.edges {
            let row = Row {
                source: &self.nodes[s],
                target: &self.nodes[t],
                label: self.schema.name(label),
                provenance,
            };
            out.push_str(&serde_json::to_string(&row).expect("edge rows serialize"));
            out.push('\n');
        }
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `reach[p][q]` is true when a non-empty path leads from `p` to `q`.
fn reachability(adj: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut reach = vec![vec![false; n]; n];
    for (p, row) in reach.iter_mut().enumerate() {
        let mut stack: Vec<usize> = adj[p].clone();
        while let Some(q) = stack.pop() {
            if row[q] {
                continue;
            }
            row[q] = true;
            stack.extend(adj[q].iter().copied().filter(|&r| !row[r]));
        }
    }
    reach
}

fn reaches(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    while let Some(p) = stack.pop() {
        if p == to {
            return true;
        }
        if std::mem::replace(&mut seen[p], true) {
            continue;
        }
        stack.extend(adj[p].iter().copied().filter(|&q| !seen[q]));
    }
    false
}

/// Strongly connected components with a cycle (two or more nodes).
fn cyclic_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let reach = reachability(adj);
    let n = adj.len();
    let mut assigned = vec![false; n];
    let mut comps = Vec::new();
    for u in 0..n {
        if assigned[u] || !reach[u][u] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&v| v == u || (reach[u][v] && reach[v][u])).collect();
        for &v in &comp {
            assigned[v] = true;
        }
        if comp.len() >= 2 {
            comps.push(comp);
        }
    }
    comps
}
