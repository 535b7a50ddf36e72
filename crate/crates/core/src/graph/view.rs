// SPDX-License-Identifier: Apache-2.0

use super::{merge_sorted, DirectedGraph, GraphError, NodeId, Result};
use std::collections::VecDeque;

/// Symmetrized, unweighted view of a [`DirectedGraph`]: `u ~ v` iff `u -> v`
/// or `v -> u`. Modularity and all path lengths are computed here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedView {
    adj: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl UndirectedView {
    pub fn new(graph: &DirectedGraph) -> Self {
        let adj: Vec<Vec<NodeId>> = graph
            .out_adj
            .iter()
            .zip(&graph.in_adj)
            .map(|(o, i)| merge_sorted(o, i))
            .collect();
        let edge_count = adj.iter().map(Vec::len).sum::<usize>() / 2;
        UndirectedView { adj, edge_count }
    }

    /// Builds a view directly from undirected edges. Duplicates and
    /// self-loops are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = DirectedGraph::with_nodes(n);
        for (u, v) in edges {
            if u != v {
                g.add_edge(NodeId::from(u), NodeId::from(v))
                    .expect("self-loops filtered");
            }
        }
        UndirectedView::new(&g)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Number of undirected edges `m`.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u.index()]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u.index()].len()
    }

    pub fn contains(&self, u: NodeId) -> bool {
        u.index() < self.adj.len()
    }

    /// Each undirected edge once, with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, vs)| {
            let u = NodeId::from(u);
            vs.iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }
}

/// Newman-Girvan modularity of `community_of` over `view`:
/// `Q = sum_c [ e_c / m - (d_c / 2m)^2 ]`.
pub fn modularity(view: &UndirectedView, community_of: &[usize]) -> Result<f64> {
    let n = view.node_count();
    if community_of.len() != n {
        return Err(GraphError::PartitionSize {
            expected: n,
            got: community_of.len(),
        });
    }
    if view.edge_count == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let k = community_of.iter().copied().max().map_or(0, |c| c + 1);
    let mut intra = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for (u, vs) in view.adj.iter().enumerate() {
        let cu = community_of[u];
        degree[cu] += vs.len();
        intra[cu] += vs.iter().filter(|v| community_of[v.index()] == cu).count();
    }
    let m = view.edge_count as f64;
    Ok(intra
        .iter()
        .zip(&degree)
        .map(|(&e2, &d)| (e2 as f64 / 2.0) / m - (d as f64 / (2.0 * m)).powi(2))
        .sum())
}

/// Hop distances from `source`; `None` where unreachable.
pub fn bfs_distances(view: &UndirectedView, source: NodeId) -> Vec<Option<u32>> {
    let mut dist = vec![None; view.node_count()];
    let mut queue = VecDeque::new();
    dist[source.index()] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let d = dist[u.index()].unwrap() + 1;
        for &v in view.neighbors(u) {
            if dist[v.index()].is_none() {
                dist[v.index()] = Some(d);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Mean BFS distance from `u` to the reachable members of `targets`.
/// Unreachable targets are left out of the mean; `u` itself counts at
/// distance 0. Returns `f64::INFINITY` when no target is reachable.
pub fn avg_path_length<'a>(
    view: &UndirectedView,
    u: NodeId,
    targets: impl IntoIterator<Item = &'a NodeId>,
) -> Result<f64> {
    if !view.contains(u) {
        return Err(GraphError::UnknownNode(u, view.node_count()));
    }
    let dist = bfs_distances(view, u);
    let mut sum = 0u64;
    let mut reached = 0u64;
    let mut any = false;
    for t in targets {
        any = true;
        if let Some(Some(d)) = dist.get(t.index()) {
            sum += u64::from(*d);
            reached += 1;
        }
    }
    if !any {
        return Err(GraphError::EmptyTargets);
    }
    Ok(if reached == 0 {
        f64::INFINITY
    } else {
        sum as f64 / reached as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangles() -> UndirectedView {
        UndirectedView::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    }

    // literal sum over ordered node pairs: Q = 1/2m sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j]
    fn brute_force_q(view: &UndirectedView, c: &[usize]) -> f64 {
        let n = view.node_count();
        let m2 = 2.0 * view.edge_count() as f64;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if c[i] != c[j] {
                    continue;
                }
                let a = if view.neighbors(NodeId::from(i)).contains(&NodeId::from(j)) {
                    1.0
                } else {
                    0.0
                };
                let ki = view.degree(NodeId::from(i)) as f64;
                let kj = view.degree(NodeId::from(j)) as f64;
                q += a - ki * kj / m2;
            }
        }
        q / m2
    }

    #[test]
    fn two_triangles_split() {
        let v = triangles();
        let c = [0, 0, 0, 1, 1, 1];
        let q = modularity(&v, &c).unwrap();
        assert!((q - brute_force_q(&v, &c)).abs() < 1e-12);
        assert!((q - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_community_is_zero() {
        let v = triangles();
        assert!(modularity(&v, &[0; 6]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn empty_graph_errors() {
        let v = UndirectedView::from_edges(3, []);
        assert_eq!(modularity(&v, &[0, 1, 2]), Err(GraphError::EmptyGraph));
    }

    #[test]
    fn karate_club_known_split() {
        let v = UndirectedView::from_edges(34, crate::testutil::KARATE_EDGES.iter().copied());
        assert_eq!(v.edge_count(), 78);
        let q = modularity(&v, &crate::testutil::KARATE_FACTIONS).unwrap();
        assert!((q - brute_force_q(&v, &crate::testutil::KARATE_FACTIONS)).abs() < 1e-12);
        // the two-faction split of Zachary's club
        assert!((q - 0.358_234_714_003_944_8).abs() < 1e-12, "{q}");
    }

    #[test]
    fn path_lengths() {
        let v = UndirectedView::from_edges(4, [(0, 1), (1, 2)]);
        let n = NodeId::from;
        assert_eq!(avg_path_length(&v, n(0), &[n(2)]).unwrap(), 2.0);
        assert_eq!(avg_path_length(&v, n(0), &[n(0), n(2)]).unwrap(), 1.0);
        assert_eq!(avg_path_length(&v, n(3), &[n(0)]).unwrap(), f64::INFINITY);
        // unreachable target dropped from the mean
        assert_eq!(avg_path_length(&v, n(0), &[n(1), n(3)]).unwrap(), 1.0);
        assert!(avg_path_length(&v, n(7), &[n(0)]).is_err());
        assert_eq!(
            avg_path_length(&v, n(0), &[]),
            Err(GraphError::EmptyTargets)
        );
    }

    fn arb_graph() -> impl Strategy<Value = UndirectedView> {
        (2usize..40).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..(3 * n))
                .prop_map(move |es| UndirectedView::from_edges(n, es))
        })
    }

    fn floyd_warshall(v: &UndirectedView) -> Vec<Vec<u32>> {
        let n = v.node_count();
        let inf = u32::MAX / 2;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in v.neighbors(NodeId::from(i)) {
                d[i][j.index()] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    proptest! {
        #[test]
        fn relabeling_preserves_q(v in arb_graph(), seed in any::<u64>()) {
            prop_assume!(v.edge_count() > 0);
            let n = v.node_count();
            let c: Vec<usize> = (0..n).map(|i| ((i as u64 ^ seed) % 4) as usize).collect();
            let relabeled: Vec<usize> = c.iter().map(|&x| 7 - x).collect();
            let a = modularity(&v, &c).unwrap();
            let b = modularity(&v, &relabeled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((a - brute_force_q(&v, &c)).abs() < 1e-12);
            prop_assert!((-0.5..1.0).contains(&a));
        }

        #[test]
        fn singletons_nonpositive(v in arb_graph()) {
            prop_assume!(v.edge_count() > 0);
            let c: Vec<usize> = (0..v.node_count()).collect();
            prop_assert!(modularity(&v, &c).unwrap() <= 1e-12);
        }

        #[test]
        fn bfs_matches_floyd_warshall(v in arb_graph(), src in any::<prop::sample::Index>(),
                                      picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..8)) {
            let n = v.node_count();
            let fw = floyd_warshall(&v);
            let u = src.index(n);
            let targets: Vec<NodeId> = picks.iter().map(|p| NodeId::from(p.index(n))).collect();
            let reach: Vec<u32> = targets.iter().map(|t| fw[u][t.index()]).filter(|&d| d < u32::MAX / 2).collect();
            let expected = if reach.is_empty() {
                f64::INFINITY
            } else {
                reach.iter().map(|&d| d as f64).sum::<f64>() / reach.len() as f64
            };
            let got = avg_path_length(&v, NodeId::from(u), &targets).unwrap();
            prop_assert_eq!(got, expected);
        }
    }
}
