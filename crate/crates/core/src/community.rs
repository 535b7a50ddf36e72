// SPDX-License-Identifier: Apache-2.0

//! Louvain modularity maximization on the undirected view.

use crate::graph::{modularity, GraphError, NodeId, NodeTable, UndirectedView};
use crate::rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Smallest modularity gain worth a move, so rounding noise cannot cycle.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CommunityError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("need at least one run")]
    NoRuns,
    #[error("partition line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CommunityError {
    fn from(e: std::io::Error) -> Self {
        CommunityError::Io(e.to_string())
    }
}

pub type Result<T, E = CommunityError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    community_of: Vec<usize>,
    n_communities: usize,
    modularity: f64,
}

impl Partition {
    /// Relabels `labels` densely in order of first appearance and scores it.
    pub fn from_labels(view: &UndirectedView, labels: &[usize]) -> Result<Self> {
        let community_of = dense_labels(labels);
        let n_communities = community_of.iter().max().map_or(0, |&c| c + 1);
        let modularity = modularity(view, &community_of)?;
        Ok(Partition {
            community_of,
            n_communities,
            modularity,
        })
    }

    pub fn community_of(&self, n: NodeId) -> usize {
        self.community_of[n.index()]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.community_of
    }

    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    pub fn len(&self) -> usize {
        self.community_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.community_of.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_communities];
        for &c in &self.community_of {
            s[c] += 1;
        }
        s
    }
}

fn dense_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Weighted undirected graph with self-loops, the working form of each
/// Louvain level.
#[derive(Clone, Debug)]
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    /// Weighted degree, self-loops counted twice.
    degree: Vec<f64>,
    /// Total edge weight m.
    total: f64,
}

impl Level {
    fn from_view(view: &UndirectedView) -> Self {
        let n = view.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|u| {
                view.neighbors(NodeId::from(u))
                    .iter()
                    .map(|v| (v.index(), 1.0))
                    .collect()
            })
            .collect();
        let degree = adj.iter().map(|a| a.len() as f64).collect();
        Level {
            adj,
            self_loop: vec![0.0; n],
            degree,
            total: view.edge_count() as f64,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community: &[usize]) -> f64 {
        let k = community.iter().max().map_or(0, |&c| c + 1);
        let mut inside = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for u in 0..self.len() {
            let c = community[u];
            tot[c] += self.degree[u];
            inside[c] += 2.0 * self.self_loop[u];
            for &(v, w) in &self.adj[u] {
                if community[v] == c {
                    inside[c] += w;
                }
            }
        }
        let m2 = 2.0 * self.total;
        inside
            .iter()
            .zip(&tot)
            .map(|(i, t)| i / m2 - (t / m2).powi(2))
            .sum()
    }

    /// One meta-node per community of `community`, which must be dense.
    fn aggregate(&self, community: &[usize], k: usize) -> Level {
        let mut self_loop = vec![0.0; k];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for u in 0..self.len() {
            let cu = community[u];
            self_loop[cu] += self.self_loop[u];
            for &(v, w) in &self.adj[u] {
                let cv = community[v];
                if cu == cv {
                    // each intra edge is seen from both ends
                    self_loop[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_default() += w;
                }
            }
        }
        let mut degree = vec![0.0; k];
        for u in 0..self.len() {
            degree[community[u]] += self.degree[u];
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
            degree,
            total: self.total,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LouvainOptions {
    /// Recompute modularity from scratch after every accepted move and
    /// check it against the incremental value. Quadratic; for tests.
    pub validate_moves: bool,
}

/// Local moves on one level. Returns the community of every level node,
/// densely labelled, and whether anything moved.
fn local_moves(level: &Level, rng: &mut rng::Rng, opts: LouvainOptions) -> (Vec<usize>, bool) {
    let n = level.len();
    let m = level.total;
    let mut community: Vec<usize> = (0..n).collect();
    let mut tot = level.degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut weight_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut q = if opts.validate_moves {
        level.modularity(&community)
    } else {
        0.0
    };
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let a = community[i];
            let ki = level.degree[i];
            for &(j, w) in &level.adj[i] {
                let c = community[j];
                if weight_to[c] == 0.0 {
                    touched.push(c);
                }
                weight_to[c] += w;
            }
            tot[a] -= ki;
            let gain = |c: usize, wc: f64| wc / m - tot[c] * ki / (2.0 * m * m);
            let stay = gain(a, weight_to[a]);
            let (mut best, mut best_gain) = (a, stay);
            for &c in &touched {
                let g = gain(c, weight_to[c]);
                if g > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += ki;
            community[i] = best;
            for &c in &touched {
                weight_to[c] = 0.0;
            }
            touched.clear();
            if best != a {
                moved = true;
                moved_any = true;
                if opts.validate_moves {
                    let delta = best_gain - stay;
                    let after = level.modularity(&community);
                    assert!(
                        after >= q - 1e-12,
                        "move lowered modularity: {q} -> {after}"
                    );
                    assert!(
                        ((after - q) - delta).abs() <= 1e-9,
                        "incremental gain {delta} disagrees with recomputed {}",
                        after - q
                    );
                    q = after;
                }
            }
        }
        if !moved {
            break;
        }
    }
    (dense_labels(&community), moved_any)
}

/// Multi-level Louvain. Visit order is the only randomness.
pub fn louvain(view: &UndirectedView, rng_seed: u64) -> Result<Partition> {
    louvain_with(view, rng_seed, LouvainOptions::default())
}

pub fn louvain_with(
    view: &UndirectedView,
    rng_seed: u64,
    opts: LouvainOptions,
) -> Result<Partition> {
    if view.node_count() == 0 || view.edge_count() == 0 {
        return Err(GraphError::EmptyGraph.into());
    }
    let mut rng = rng::seeded(rng_seed);
    let mut level = Level::from_view(view);
    let mut flat: Vec<usize> = (0..view.node_count()).collect();
    let mut q = level.modularity(&flat);
    loop {
        let (community, moved) = local_moves(&level, &mut rng, opts);
        if !moved {
            break;
        }
        let k = community.iter().max().map_or(0, |&c| c + 1);
        for c in flat.iter_mut() {
            *c = community[*c];
        }
        level = level.aggregate(&community, k);
        let singletons: Vec<usize> = (0..k).collect();
        let level_q = level.modularity(&singletons);
        assert!(
            level_q >= q - 1e-12,
            "level lowered modularity: {q} -> {level_q}"
        );
        q = level_q;
    }
    let part = Partition::from_labels(view, &flat)?;
    debug_assert!((part.modularity - q).abs() <= 1e-9);
    Ok(part)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LouvainRunStats {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub modularities: Vec<f64>,
    pub communities: Vec<usize>,
    pub best_run: usize,
    pub mean_modularity: f64,
}

impl LouvainRunStats {
    pub fn spread(&self) -> f64 {
        let max = self.modularities.iter().copied().fold(f64::MIN, f64::max);
        let min = self.modularities.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}

/// Independent runs seeded `derive_seed(base_seed, r)`; keeps the best
/// modularity, earliest run on ties.
pub fn louvain_repeated(
    view: &UndirectedView,
    runs: usize,
    base_seed: u64,
) -> Result<(Partition, LouvainRunStats)> {
    if runs == 0 {
        return Err(CommunityError::NoRuns);
    }
    let seeds: Vec<u64> = (0..runs as u64)
        .map(|r| rng::derive_seed(base_seed, r))
        .collect();
    let mut parts: Vec<Partition> = seeds
        .par_iter()
        .map(|&s| louvain(view, s))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in parts.iter().enumerate() {
        if p.modularity > parts[best].modularity {
            best = i;
        }
    }
    let modularities: Vec<f64> = parts.iter().map(|p| p.modularity).collect();
    let stats = LouvainRunStats {
        runs,
        mean_modularity: modularities.iter().sum::<f64>() / runs as f64,
        communities: parts.iter().map(|p| p.n_communities).collect(),
        modularities,
        seeds,
        best_run: best,
    };
    Ok((parts.swap_remove(best), stats))
}

/// Share of items whose predicted group is matched to their true group
/// under a greedy one-to-one matching of groups by overlap.
pub fn best_match_agreement(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return 1.0;
    }
    let mut overlap: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        *overlap.entry((p, t)).or_default() += 1;
    }
    let mut pairs: Vec<((usize, usize), usize)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_p = std::collections::BTreeSet::new();
    let mut used_t = std::collections::BTreeSet::new();
    let mut matched = 0;
    for ((p, t), c) in pairs {
        if used_p.contains(&p) || used_t.contains(&t) {
            continue;
        }
        used_p.insert(p);
        used_t.insert(t);
        matched += c;
    }
    matched as f64 / truth.len() as f64
}

pub fn write_partition<W: Write>(mut w: W, part: &Partition, table: &NodeTable) -> Result<()> {
    writeln!(w, "external_id,community")?;
    for (i, &c) in part.community_of.iter().enumerate() {
        writeln!(w, "{},{c}", table.external(NodeId::from(i)))?;
    }
    Ok(())
}

/// Reads a partition file for the graph behind `view`, in any row order.
pub fn read_partition<R: BufRead>(
    r: R,
    view: &UndirectedView,
    table: &NodeTable,
) -> Result<Partition> {
    let bad = |line: usize, msg: String| CommunityError::Parse { line, msg };
    let mut labels = vec![None; view.node_count()];
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "external_id,community" {
                return Err(bad(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (ext, c) = line
            .split_once(',')
            .ok_or_else(|| bad(i + 1, "expected two fields".into()))?;
        let ext: u64 = ext
            .trim()
            .parse()
            .map_err(|_| bad(i + 1, format!("bad id {ext:?}")))?;
        let c: usize = c
            .trim()
            .parse()
            .map_err(|_| bad(i + 1, format!("bad community {c:?}")))?;
        let id = table
            .internal(ext)
            .filter(|id| id.index() < labels.len())
            .ok_or_else(|| bad(i + 1, format!("unknown node {ext}")))?;
        if labels[id.index()].replace(c).is_some() {
            return Err(bad(i + 1, format!("node {ext} listed twice")));
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| {
                bad(
                    0,
                    format!("node {} has no community", table.external(NodeId::from(i))),
                )
            })
        })
        .collect::<Result<_>>()?;
    Partition::from_labels(view, &labels)
}

pub fn write_stats<W: Write>(w: W, stats: &LouvainRunStats) -> Result<()> {
    serde_json::to_writer_pretty(w, stats).map_err(|e| CommunityError::Io(e.to_string()))
}
