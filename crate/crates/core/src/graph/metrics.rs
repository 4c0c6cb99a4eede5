use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::formula::normalize_r1c1;
use crate::model::{CellRef, Workbook};

use super::{CellKey, DepGraph, NodeKind, ParsedFormulas};

/// Review throughput assumed when sizing an audit, in unique formulas per hour.
pub const DEFAULT_FORMULAS_PER_HOUR: f64 = 40.0;

const LENGTH_BUCKETS: [(usize, Option<usize>); 6] =
    [(1, Some(10)), (11, Some(20)), (21, Some(40)), (41, Some(80)), (81, Some(160)), (161, None)];
const LOCALITY_BUCKETS: [(usize, Option<usize>); 6] =
    [(0, Some(0)), (1, Some(1)), (2, Some(5)), (6, Some(20)), (21, Some(100)), (101, None)];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub label: String,
    pub count: usize,
}

/// `original:repeated`, e.g. `1:9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginalToRepeated {
    pub original: usize,
    pub repeated: usize,
}

impl fmt::Display for OriginalToRepeated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.original, self.repeated)
    }
}

impl Serialize for OriginalToRepeated {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OriginalToRepeated {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let parsed = text.split_once(':').and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
        let (original, repeated) =
            parsed.ok_or_else(|| serde::de::Error::custom(format!("expected `original:repeated`, got `{text}`")))?;
        Ok(OriginalToRepeated { original, repeated })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_cells: usize,
    pub formula_cells: usize,
    pub unique_formula_count: usize,
    pub repeated_cells: usize,
    pub original_to_repeated_ratio: OriginalToRepeated,
    pub formula_length_histogram: Vec<HistogramBucket>,
    pub max_precedents: usize,
    pub mean_precedents: f64,
    pub max_dependents: usize,
    pub mean_dependents: f64,
    pub edge_count: usize,
    pub cross_sheet_edge_count: usize,
    pub same_sheet_edge_count: usize,
    pub locality_histogram: Vec<HistogramBucket>,
    pub summary_edge_count: usize,
    pub defective_cells: usize,
    pub formulas_per_hour: f64,
    pub estimated_review_hours: f64,
}

pub fn compute_metrics(wb: &Workbook, graph: &DepGraph) -> Metrics {
    compute_metrics_with(wb, graph, &ParsedFormulas::parse(wb), DEFAULT_FORMULAS_PER_HOUR)
}

fn histogram(buckets: &[(usize, Option<usize>)], values: impl Iterator<Item = usize>) -> Vec<HistogramBucket> {
    let mut counts = vec![0usize; buckets.len()];
    for v in values {
        if let Some(i) = buckets.iter().position(|&(lo, hi)| v >= lo && hi.is_none_or(|h| v <= h)) {
            counts[i] += 1;
        }
    }
    buckets
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(&(lo, hi), count)| {
            let label = match hi {
                Some(h) if h == lo => lo.to_string(),
                Some(h) => format!("{lo}-{h}"),
                None => format!("{lo}+"),
            };
            HistogramBucket { label, count }
        })
        .collect()
}

pub fn compute_metrics_with(wb: &Workbook, graph: &DepGraph, parsed: &ParsedFormulas, formulas_per_hour: f64) -> Metrics {
    let total_cells = wb.cell_count();
    let mut unique: HashSet<String> = HashSet::new();
    let mut lengths = Vec::new();
    for (key, ast) in &parsed.cells {
        let sheet = &graph.sheet_names()[key.sheet];
        let text = wb.cell(key.sheet, key.coord).and_then(|c| c.formula_text()).unwrap_or_default();
        lengths.push(text.chars().count());
        match ast {
            Ok(ast) => {
                let origin = CellRef::on_sheet(sheet.clone(), key.coord.col, key.coord.row);
                unique.insert(normalize_r1c1(ast, &origin).as_str().to_string());
            }
            // unparseable text never collides with a normalized formula
            Err(_) => {
                unique.insert(format!("!{text}"));
            }
        }
    }
    let formula_cells = parsed.cells.len();
    let unique_formula_count = unique.len();
    let repeated_cells = formula_cells - unique_formula_count;

    // distinct precedents per formula cell, distinct dependents per node
    let mut prec_counts = Vec::new();
    let mut dep_counts = Vec::new();
    for id in 0..graph.node_count() {
        let deps: BTreeSet<usize> = graph.successors(id).iter().copied().collect();
        dep_counts.push(deps.len());
        if matches!(graph.kind(id), NodeKind::Formula | NodeKind::Defective) {
            let precs: BTreeSet<usize> = graph.predecessors(id).iter().copied().collect();
            prec_counts.push(precs.len());
        }
    }
    let mean = |v: &[usize]| if v.is_empty() { 0.0 } else { v.iter().sum::<usize>() as f64 / v.len() as f64 };

    let mut cross = 0;
    let mut distances = Vec::new();
    for e in graph.edges() {
        if e.cross_sheet {
            cross += 1;
        } else {
            let (a, b): (CellKey, CellKey) = (graph.node(e.from), graph.node(e.to));
            distances.push(a.coord.chebyshev(b.coord) as usize);
        }
    }

    Metrics {
        total_cells,
        formula_cells,
        unique_formula_count,
        repeated_cells,
        original_to_repeated_ratio: OriginalToRepeated { original: unique_formula_count, repeated: repeated_cells },
        formula_length_histogram: histogram(&LENGTH_BUCKETS, lengths.into_iter()),
        max_precedents: prec_counts.iter().copied().max().unwrap_or(0),
        mean_precedents: mean(&prec_counts),
        max_dependents: dep_counts.iter().copied().max().unwrap_or(0),
        mean_dependents: mean(&dep_counts),
        edge_count: graph.edges().len(),
        cross_sheet_edge_count: cross,
        same_sheet_edge_count: distances.len(),
        locality_histogram: histogram(&LOCALITY_BUCKETS, distances.into_iter()),
        summary_edge_count: graph.summary_edges().len(),
        defective_cells: graph.defective().count(),
        formulas_per_hour,
        estimated_review_hours: unique_formula_count as f64 / formulas_per_hour,
    }
}

/// Count of formula cells grouped by normalized formula, keyed by the
/// normalized text.
pub fn formula_groups(wb: &Workbook, parsed: &ParsedFormulas) -> BTreeMap<String, Vec<CellKey>> {
    let mut groups: BTreeMap<String, Vec<CellKey>> = BTreeMap::new();
    for (key, ast) in &parsed.cells {
        let Ok(ast) = ast else { continue };
        let origin = CellRef::on_sheet(wb.sheets()[key.sheet].name().to_string(), key.coord.col, key.coord.row);
        groups.entry(normalize_r1c1(ast, &origin).as_str().to_string()).or_default().push(*key);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::model::workbook_from_json;

    fn metrics(cells: &str) -> Metrics {
        let wb = workbook_from_json(&format!(r#"{{"sheets":[{{"name":"S","cells":{{{cells}}}}}]}}"#)).unwrap();
        compute_metrics(&wb, &build_graph(&wb))
    }

    #[test]
    fn copied_down_formula() {
        let cells: Vec<String> = (1..=10).map(|r| format!(r#""B{r}":{{"f":"=A{r}*2"}}"#)).collect();
        let m = metrics(&cells.join(","));
        assert_eq!(m.formula_cells, 10);
        assert_eq!(m.unique_formula_count, 1);
        assert_eq!(m.repeated_cells, 9);
        assert_eq!(m.original_to_repeated_ratio.to_string(), "1:9");
        assert_eq!(m.locality_histogram, vec![HistogramBucket { label: "1".into(), count: 10 }]);
    }

    #[test]
    fn literal_sheet() {
        let m = metrics(r#""A1":{"v":1},"A2":{"v":"x"}"#);
        assert_eq!(m.total_cells, 2);
        assert_eq!(m.formula_cells, 0);
        assert!(m.formula_length_histogram.is_empty());
        assert_eq!(m.estimated_review_hours, 0.0);
    }

    #[test]
    fn review_hours_from_throughput() {
        let cells: Vec<String> = (1..=80).map(|r| format!(r#""B{r}":{{"f":"=A1*{r}"}}"#)).collect();
        let m = metrics(&cells.join(","));
        assert_eq!(m.unique_formula_count, 80);
        assert_eq!(m.estimated_review_hours, 2.0);
    }

    #[test]
    fn degrees_and_distance() {
        let m = metrics(r#""A1":{"v":1},"C5":{"f":"=A1+A1"},"D5":{"f":"=SUM(A1:A2)"}"#);
        assert_eq!(m.edge_count, 4);
        assert_eq!(m.max_precedents, 2);
        assert_eq!(m.max_dependents, 2);
        assert_eq!(m.mean_precedents, 1.5);
        let labels: Vec<_> = m.locality_histogram.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["2-5"]);
    }
}
