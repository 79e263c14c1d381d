//! Layer assignment for the graph view.

use std::collections::{BTreeMap, HashMap};

use petgraph::algo::{condensation, toposort};
use petgraph::graph::DiGraph;
use petgraph::Direction;

/// Longest-path layering: sources sit on layer 0 and every investee lies
/// strictly below each of its investors. Members of an ownership cycle
/// share one layer.
pub fn longest_path_layers<'a>(
    nodes: impl IntoIterator<Item = &'a str>,
    edges: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> BTreeMap<String, usize> {
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let mut index = HashMap::new();
    for id in nodes {
        index.entry(id).or_insert_with(|| g.add_node(id));
    }
    for (a, b) in edges {
        if let (Some(&x), Some(&y)) = (index.get(a), index.get(b)) {
            g.add_edge(x, y, ());
        }
    }
    let dag = condensation(g, true);
    let order = toposort(&dag, None).expect("condensation is acyclic");
    let mut layer = vec![0usize; dag.node_count()];
    for c in order {
        let l = dag
            .neighbors_directed(c, Direction::Incoming)
            .map(|p| layer[p.index()] + 1)
            .max()
            .unwrap_or(0);
        layer[c.index()] = l;
    }
    dag.node_indices()
        .flat_map(|c| {
            let l = layer[c.index()];
            dag[c].iter().map(move |id| (id.to_string(), l))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn owner_above_two_taxpayers() {
        let l = longest_path_layers(["o", "a", "b"], [("o", "a"), ("o", "b")]);
        assert_eq!(l["o"], 0);
        assert_eq!(l["a"], 1);
        assert_eq!(l["b"], 1);
    }

    #[test]
    fn longest_path_wins() {
        let l = longest_path_layers(
            ["o", "h", "a"],
            [("o", "h"), ("h", "a"), ("o", "a")],
        );
        assert_eq!((l["o"], l["h"], l["a"]), (0, 1, 2));
    }

    #[test]
    fn cycle_members_share_a_layer() {
        let l = longest_path_layers(
            ["p", "x", "y", "z"],
            [("p", "x"), ("x", "y"), ("y", "x"), ("y", "z")],
        );
        assert_eq!(l["x"], l["y"]);
        assert!(l["z"] > l["y"]);
        assert_eq!(l["p"], 0);
    }
}
