// SPDX-License-Identifier: Apache-2.0

//! Party structure of a detected partition: where the annotated supporters
//! landed, how embedded every node is in each party, and a classifier over
//! community membership.

mod classifier;

pub use classifier::{
    featurize, gradient, loss, predict, train, AffiliationModel, Prediction, TrainParams,
    MODEL_VERSION,
};

use crate::community::Partition;
use crate::graph::{avg_path_length, bfs_distances, GraphError, NodeId, NodeTable, UndirectedView};
use crate::seeds::SeedDatabase;
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum AffiliationError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("party {0} has no known supporter in the graph")]
    NoSupporters(String),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("training data holds a single class")]
    SingleClass,
    #[error("feature vector has length {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature or label out of range at sample {0}")]
    BadSample(usize),
    #[error("loss rose from {before} to {after} at epoch {epoch}; use a smaller learning rate")]
    Diverged {
        epoch: usize,
        before: f64,
        after: f64,
    },
    #[error("model file: {0}")]
    Model(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for AffiliationError {
    fn from(e: std::io::Error) -> Self {
        AffiliationError::Io(e.to_string())
    }
}

pub type Result<T, E = AffiliationError> = std::result::Result<T, E>;

/// Annotated supporters per community and party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDistribution {
    pub parties: Vec<String>,
    /// `table[community][party]`.
    pub table: Vec<Vec<usize>>,
    /// Annotated nodes absent from the graph, per party.
    pub not_crawled: Vec<usize>,
}

impl ClusterDistribution {
    pub fn located(&self) -> usize {
        self.table.iter().flatten().sum()
    }

    pub fn community_total(&self, c: usize) -> usize {
        self.table[c].iter().sum()
    }

    pub fn party_total(&self, p: usize) -> usize {
        self.table.iter().map(|r| r[p]).sum::<usize>() + self.not_crawled[p]
    }
}

/// Places every annotated node of `db` in its community. `locate` maps a
/// database node to its id in the partitioned graph.
pub fn cluster_distribution(
    partition: &Partition,
    db: &SeedDatabase,
    locate: impl Fn(NodeId) -> Option<NodeId>,
) -> ClusterDistribution {
    let p = db.party_count();
    let mut table = vec![vec![0; p]; partition.n_communities()];
    let mut not_crawled = vec![0; p];
    for (node, party) in db.annotated() {
        match locate(node).filter(|n| n.index() < partition.len()) {
            Some(n) => table[partition.community_of(n)][party] += 1,
            None => not_crawled[party] += 1,
        }
    }
    ClusterDistribution {
        parties: db.parties().to_vec(),
        table,
        not_crawled,
    }
}

/// Mean of `score` over each community's members.
pub fn community_mean(partition: &Partition, score: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; partition.n_communities()];
    let mut n = vec![0usize; partition.n_communities()];
    for (i, &c) in partition.assignment().iter().enumerate() {
        sum[c] += score[i];
        n[c] += 1;
    }
    sum.iter()
        .zip(&n)
        .map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 })
        .collect()
}

/// Communities holding no annotated node whose mean reference score is
/// below `floor`.
pub fn flag_irrelevant(dist: &ClusterDistribution, mean_score: &[f64], floor: f64) -> Vec<bool> {
    (0..dist.table.len())
        .map(|c| dist.community_total(c) == 0 && mean_score[c] < floor)
        .collect()
}

/// Rows are communities, columns parties; a last row counts annotated
/// nodes that were never crawled.
pub fn write_distribution<W: Write>(
    mut w: W,
    dist: &ClusterDistribution,
    mean_score: &[f64],
    flagged: &[bool],
) -> Result<()> {
    writeln!(
        w,
        "community,{},total,mean_reference_score,flagged",
        dist.parties.join(",")
    )?;
    let join = |r: &[usize]| r.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    for (c, row) in dist.table.iter().enumerate() {
        writeln!(
            w,
            "{c},{},{},{:.6},{}",
            join(row),
            dist.community_total(c),
            mean_score[c],
            flagged[c]
        )?;
    }
    let total: usize = dist.not_crawled.iter().sum();
    writeln!(w, "not_crawled,{},{total},,", join(&dist.not_crawled))?;
    Ok(())
}

/// Reference score over mean hop distance to the party's supporters,
/// `node` itself left out of the targets. Zero when no other supporter is
/// reachable.
pub fn embeddedness(
    view: &UndirectedView,
    node: NodeId,
    reference_score: f64,
    supporters: &[NodeId],
) -> Result<f64> {
    if !view.contains(node) {
        return Err(AffiliationError::UnknownNode(node));
    }
    let targets: Vec<&NodeId> = supporters.iter().filter(|&&s| s != node).collect();
    if targets.is_empty() {
        return Ok(0.0);
    }
    let avg = avg_path_length(view, node, targets)?;
    Ok(if avg.is_finite() {
        reference_score / avg
    } else {
        0.0
    })
}

/// Embeddedness of every node toward every party, `[node][party]`, from
/// one BFS per supporter.
pub fn embeddedness_all(
    view: &UndirectedView,
    reference_scores: &[f64],
    parties: &[String],
    supporters: &[Vec<NodeId>],
) -> Result<Vec<Vec<f64>>> {
    let n = view.node_count();
    let p = supporters.len();
    for (i, s) in supporters.iter().enumerate() {
        if s.is_empty() {
            return Err(AffiliationError::NoSupporters(parties[i].clone()));
        }
    }
    let sources: Vec<(usize, NodeId)> = supporters
        .iter()
        .enumerate()
        .flat_map(|(party, s)| s.iter().map(move |&n| (party, n)))
        .collect();
    let zero = || (vec![0u64; n * p], vec![0u32; n * p]);
    let (dist_sum, reached) = sources
        .par_iter()
        .fold(zero, |(mut sum, mut cnt), &(party, s)| {
            for (v, d) in bfs_distances(view, s).into_iter().enumerate() {
                if let Some(d) = d {
                    if v != s.index() {
                        sum[v * p + party] += d as u64;
                        cnt[v * p + party] += 1;
                    }
                }
            }
            (sum, cnt)
        })
        .reduce(zero, |(mut a, mut b), (c, d)| {
            a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
            b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
            (a, b)
        });
    Ok((0..n)
        .map(|v| {
            (0..p)
                .map(|party| {
                    let k = reached[v * p + party];
                    if k == 0 {
                        0.0
                    } else {
                        let avg = dist_sum[v * p + party] as f64 / k as f64;
                        reference_scores[v] / avg
                    }
                })
                .collect()
        })
        .collect())
}

pub fn write_embeddedness<W: Write>(
    mut w: W,
    scores: &[Vec<f64>],
    parties: &[String],
    table: &NodeTable,
) -> Result<()> {
    writeln!(w, "external_id,party,score")?;
    for (i, row) in scores.iter().enumerate() {
        let ext = table.external(NodeId::from(i));
        for (party, s) in parties.iter().zip(row) {
            writeln!(w, "{ext},{party},{s:.9}")?;
        }
    }
    Ok(())
}

pub fn write_predictions<W: Write>(
    mut w: W,
    predictions: &[Prediction],
    parties: &[String],
    table: &NodeTable,
) -> Result<()> {
    writeln!(w, "external_id,party,confidence")?;
    for (i, p) in predictions.iter().enumerate() {
        writeln!(
            w,
            "{},{},{:.9}",
            table.external(NodeId::from(i)),
            parties[p.party],
            p.confidence
        )?;
    }
    Ok(())
}
