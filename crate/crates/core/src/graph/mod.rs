//! Precedent/dependent graph over workbook cells, circularity detection and
//! review-effort metrics.

mod metrics;
mod scc;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::formula::{collect_refs, parse_formula, CollectedRef, DanglingReason, Expr, ParseError};
use crate::model::{quote_sheet_name, CellRef, Coord, RangeRef, Workbook};

pub use metrics::{
    compute_metrics, compute_metrics_with, formula_groups, HistogramBucket, Metrics, OriginalToRepeated,
    DEFAULT_FORMULAS_PER_HOUR,
};
pub use scc::{cyclic_components, tarjan_scc};

/// Ranges with more member cells than this are not expanded into edges.
pub const RANGE_EXPANSION_CAP: u64 = 1_000_000;

/// Position of a cell: sheet index plus coordinate. Orders by sheet, then
/// row, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub sheet: usize,
    pub coord: Coord,
}

impl CellKey {
    pub fn new(sheet: usize, col: u32, row: u32) -> Self {
        CellKey { sheet, coord: Coord::new(col, row) }
    }
}

/// Parsed formula of every formula cell in a workbook.
#[derive(Debug, Clone, Default)]
pub struct ParsedFormulas {
    pub cells: BTreeMap<CellKey, Result<Expr, ParseError>>,
}

impl ParsedFormulas {
    pub fn parse(wb: &Workbook) -> Self {
        let mut cells = BTreeMap::new();
        for (si, sheet) in wb.sheets().iter().enumerate() {
            for (coord, cell) in sheet.cells() {
                if let Some(text) = cell.formula_text() {
                    cells.insert(CellKey { sheet: si, coord }, parse_formula(text));
                }
            }
        }
        ParsedFormulas { cells }
    }

    pub fn get(&self, key: &CellKey) -> Option<&Result<Expr, ParseError>> {
        self.cells.get(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Non-formula content (label, number, bool, error literal).
    Literal,
    Formula,
    /// Formula text that failed to parse; kept as an isolated node.
    Defective,
    /// Blank cell that some formula references.
    ReferencedBlank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cross_sheet: bool,
}

/// A range reference left unexpanded because it exceeds [`RANGE_EXPANSION_CAP`].
/// Only its non-blank members get ordinary edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryEdge {
    pub range: RangeRef,
    pub dependent: CellKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingUse {
    pub cell: CellKey,
    pub text: String,
    pub reason: DanglingReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Precedents,
    Dependents,
}

/// Directed graph with an edge precedent -> dependent for every expanded
/// reference occurrence. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    sheet_names: Vec<String>,
    nodes: Vec<CellKey>,
    kinds: Vec<NodeKind>,
    index: HashMap<CellKey, usize>,
    edges: Vec<Edge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    summary_edges: Vec<SummaryEdge>,
    dangling: Vec<DanglingUse>,
    name_uses: BTreeMap<String, BTreeSet<CellKey>>,
}

pub fn build_graph(wb: &Workbook) -> DepGraph {
    DepGraph::build(wb, &ParsedFormulas::parse(wb))
}

impl DepGraph {
    pub fn build(wb: &Workbook, parsed: &ParsedFormulas) -> DepGraph {
        let sheet_names: Vec<String> = wb.sheets().iter().map(|s| s.name().to_string()).collect();
        let mut kinds: BTreeMap<CellKey, NodeKind> = BTreeMap::new();
        for (si, sheet) in wb.sheets().iter().enumerate() {
            for (coord, cell) in sheet.cells() {
                let kind = if cell.is_formula() { NodeKind::Formula } else { NodeKind::Literal };
                kinds.insert(CellKey { sheet: si, coord }, kind);
            }
        }

        // (precedent, dependent) pairs in formula order
        let mut raw_edges: Vec<(CellKey, CellKey)> = Vec::new();
        let mut summary_edges = Vec::new();
        let mut dangling = Vec::new();
        let mut name_uses: BTreeMap<String, BTreeSet<CellKey>> = BTreeMap::new();

        for (key, ast) in &parsed.cells {
            let ast = match ast {
                Ok(ast) => ast,
                Err(_) => {
                    kinds.insert(*key, NodeKind::Defective);
                    continue;
                }
            };
            let origin = CellRef::on_sheet(sheet_names[key.sheet].clone(), key.coord.col, key.coord.row);
            for r in collect_refs(ast, &origin, wb) {
                let range = match r {
                    CollectedRef::Cell(c) => RangeRef::single(c),
                    CollectedRef::Range(rg) => rg,
                    CollectedRef::Name { name, target } => {
                        name_uses.entry(name).or_default().insert(*key);
                        target
                    }
                    CollectedRef::Dangling { text, reason } => {
                        if let DanglingReason::DanglingName(n) = &reason {
                            name_uses.entry(n.clone()).or_default().insert(*key);
                        }
                        dangling.push(DanglingUse { cell: *key, text, reason });
                        continue;
                    }
                };
                let sheet = range.sheet().and_then(|s| wb.sheet_index(s)).expect("collect_refs qualifies sheets");
                if range.area() > RANGE_EXPANSION_CAP {
                    // keep evaluation order sound: link the non-blank members only
                    for (coord, _) in wb.sheets()[sheet].cells_in(&range) {
                        raw_edges.push((CellKey { sheet, coord }, *key));
                    }
                    summary_edges.push(SummaryEdge { range, dependent: *key });
                    continue;
                }
                for coord in range.coords() {
                    raw_edges.push((CellKey { sheet, coord }, *key));
                }
            }
        }
        for (from, _) in &raw_edges {
            kinds.entry(*from).or_insert(NodeKind::ReferencedBlank);
        }

        let nodes: Vec<CellKey> = kinds.keys().copied().collect();
        let kinds: Vec<NodeKind> = kinds.values().copied().collect();
        let index: HashMap<CellKey, usize> = nodes.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut pred = vec![Vec::new(); nodes.len()];
        let edges: Vec<Edge> = raw_edges
            .iter()
            .map(|(f, t)| {
                let (from, to) = (index[f], index[t]);
                succ[from].push(to);
                pred[to].push(from);
                Edge { from, to, cross_sheet: f.sheet != t.sheet }
            })
            .collect();

        DepGraph { sheet_names, nodes, kinds, index, edges, succ, pred, summary_edges, dangling, name_uses }
    }

    pub fn sheet_names(&self) -> &[String] {
        &self.sheet_names
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[CellKey] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> CellKey {
        self.nodes[id]
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.kinds[id]
    }

    pub fn node_id(&self, key: &CellKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Direct dependents of node `id`, one entry per edge.
    pub fn successors(&self, id: usize) -> &[usize] {
        &self.succ[id]
    }

    /// Direct precedents of node `id`, one entry per edge.
    pub fn predecessors(&self, id: usize) -> &[usize] {
        &self.pred[id]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.succ
    }

    pub fn summary_edges(&self) -> &[SummaryEdge] {
        &self.summary_edges
    }

    pub fn dangling(&self) -> &[DanglingUse] {
        &self.dangling
    }

    /// Formula cells that reference each defined name (uppercase).
    pub fn name_uses(&self) -> &BTreeMap<String, BTreeSet<CellKey>> {
        &self.name_uses
    }

    pub fn defective(&self) -> impl Iterator<Item = CellKey> + '_ {
        self.nodes.iter().zip(&self.kinds).filter(|(_, k)| **k == NodeKind::Defective).map(|(n, _)| *n)
    }

    /// Resolves a sheet-qualified reference to a key. Unqualified references
    /// and unknown sheets give `None`.
    pub fn key_of(&self, r: &CellRef) -> Option<CellKey> {
        let sheet = r.sheet.as_deref()?;
        let si = self.sheet_names.iter().position(|s| s.eq_ignore_ascii_case(sheet))?;
        Some(CellKey { sheet: si, coord: r.coord() })
    }

    pub fn cell_ref(&self, key: CellKey) -> CellRef {
        CellRef::on_sheet(self.sheet_names[key.sheet].clone(), key.coord.col, key.coord.row)
    }

    /// `Sheet!A1` rendering of a key.
    pub fn label(&self, key: CellKey) -> String {
        format!("{}!{}", quote_sheet_name(&self.sheet_names[key.sheet]), key.coord)
    }

    /// Direct or transitive precedents/dependents of `key`. The start cell is
    /// included only when it lies on a cycle.
    pub fn query_links(&self, key: CellKey, direction: Direction, transitive: bool) -> BTreeSet<CellKey> {
        let Some(start) = self.node_id(&key) else {
            return BTreeSet::new();
        };
        let next = |id: usize| match direction {
            Direction::Precedents => &self.pred[id],
            Direction::Dependents => &self.succ[id],
        };
        if !transitive {
            return next(start).iter().map(|&i| self.nodes[i]).collect();
        }
        self.reach(next(start).iter().copied(), next).into_iter().map(|i| self.nodes[i]).collect()
    }

    /// Every node reachable from `seeds` (seeds included).
    fn reach<'a>(&'a self, seeds: impl IntoIterator<Item = usize>, next: impl Fn(usize) -> &'a Vec<usize>) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in seeds {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in next(v) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Union of transitive dependents of every key in `changed`.
    pub fn transitive_dependents(&self, changed: impl IntoIterator<Item = CellKey>) -> BTreeSet<CellKey> {
        let seeds: Vec<usize> = changed
            .into_iter()
            .filter_map(|k| self.node_id(&k))
            .flat_map(|id| self.succ[id].iter().copied())
            .collect();
        self.reach(seeds, |id| &self.succ[id]).into_iter().map(|i| self.nodes[i]).collect()
    }

    /// Every cycle as a sorted set of cells; self-references are singletons.
    /// Empty iff the graph is acyclic.
    pub fn find_circularity(&self) -> Vec<Vec<CellKey>> {
        let mut cycles: Vec<Vec<CellKey>> = cyclic_components(&self.succ)
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.nodes[i]).collect())
            .collect();
        cycles.sort();
        cycles
    }

    /// Formula nodes outside `skip` in an order that respects every edge
    /// between them; ties broken by cell position.
    pub fn evaluation_order(&self, skip: &BTreeSet<usize>) -> Vec<usize> {
        let evaluable = |i: usize| {
            matches!(self.kinds[i], NodeKind::Formula) && !skip.contains(&i)
        };
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            if evaluable(e.from) && evaluable(e.to) {
                indeg[e.to] += 1;
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..self.nodes.len()).filter(|&i| evaluable(i) && indeg[i] == 0).map(Reverse).collect();
        let mut order = Vec::new();
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in &self.succ[v] {
                if evaluable(w) {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        ready.push(Reverse(w));
                    }
                }
            }
        }
        order
    }

    /// One line per edge: `Sheet!A1 -> Sheet!B2`; unexpanded ranges as
    /// `Sheet!A1:A2000000 => Sheet!B1 (summary)`.
    pub fn edge_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .edges
            .iter()
            .map(|e| format!("{} -> {}", self.label(self.nodes[e.from]), self.label(self.nodes[e.to])))
            .collect();
        lines.extend(
            self.summary_edges.iter().map(|s| format!("{} => {} (summary)", s.range, self.label(s.dependent))),
        );
        lines
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}!{}", self.sheet, self.coord)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::workbook_from_json;

    fn wb(cells: &str) -> Workbook {
        workbook_from_json(&format!(r#"{{"sheets":[{{"name":"S","cells":{{{cells}}}}}]}}"#)).unwrap()
    }

    fn k(a1: &str) -> CellKey {
        CellKey { sheet: 0, coord: Coord::parse_a1(a1).unwrap() }
    }

    #[test]
    fn single_edge() {
        let g = build_graph(&wb(r#""A1":{"v":1},"A2":{"f":"=A1"}"#));
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edge_lines(), vec!["S!A1 -> S!A2"]);
    }

    #[test]
    fn range_expands_to_members() {
        let g = build_graph(&wb(r#""B1":{"f":"=SUM(A1:A3)"}"#));
        assert_eq!(g.edge_lines(), vec!["S!A1 -> S!B1", "S!A2 -> S!B1", "S!A3 -> S!B1"]);
        assert_eq!(g.kind(g.node_id(&k("A2")).unwrap()), NodeKind::ReferencedBlank);
    }

    #[test]
    fn empty_workbook() {
        let g = build_graph(&Workbook::default());
        assert_eq!(g.node_count(), 0);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn repeated_occurrences_are_separate_edges() {
        let g = build_graph(&wb(r#""A1":{"v":1},"B1":{"f":"=A1+A1*A1"}"#));
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn chain_queries() {
        let g = build_graph(&wb(r#""A1":{"v":1},"A2":{"f":"=A1"},"A3":{"f":"=A2"}"#));
        let deps = g.query_links(k("A1"), Direction::Dependents, true);
        assert_eq!(deps, [k("A2"), k("A3")].into_iter().collect());
        assert!(g.query_links(k("A1"), Direction::Precedents, false).is_empty());
        assert_eq!(g.query_links(k("A3"), Direction::Precedents, false), [k("A2")].into_iter().collect());
        assert!(g.query_links(k("Z99"), Direction::Dependents, true).is_empty());
    }

    #[test]
    fn circularity() {
        let g = build_graph(&wb(r#""A1":{"f":"=B1"},"B1":{"f":"=A1"}"#));
        assert_eq!(g.find_circularity(), vec![vec![k("A1"), k("B1")]]);
        assert!(g.query_links(k("A1"), Direction::Dependents, true).contains(&k("A1")));
        let g = build_graph(&wb(r#""A1":{"f":"=A1"}"#));
        assert_eq!(g.find_circularity(), vec![vec![k("A1")]]);
        let g = build_graph(&wb(r#""A1":{"v":1},"A2":{"f":"=A1"}"#));
        assert!(g.find_circularity().is_empty());
    }

    #[test]
    fn defective_and_dangling() {
        let g = build_graph(&wb(r#""A1":{"f":"=1+"},"A2":{"f":"=Nope!A1+Ghost"}"#));
        assert_eq!(g.defective().collect::<Vec<_>>(), vec![k("A1")]);
        assert_eq!(g.dangling().len(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn huge_range_is_summarized() {
        let g = build_graph(&wb(r#""A5":{"v":2},"B1":{"f":"=SUM(A1:A1048576)"}"#));
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.summary_edges().len(), 1);
        assert!(g.edge_lines()[1].ends_with("(summary)"));
    }

    #[test]
    fn evaluation_order_respects_edges() {
        let g = build_graph(&wb(r#""A3":{"f":"=A2+A1"},"A2":{"f":"=A1*2"},"A1":{"v":1},"B1":{"f":"=A3"}"#));
        let order = g.evaluation_order(&BTreeSet::new());
        let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        for e in g.edges() {
            if let (Some(a), Some(b)) = (pos.get(&e.from), pos.get(&e.to)) {
                assert!(a < b);
            }
        }
        assert_eq!(order.len(), 3);
    }
}
