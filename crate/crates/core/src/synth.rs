// SPDX-License-Identifier: Apache-2.0

//! Synthetic host graphs with a planted multi-party context.
//!
//! Node ids are laid out as the parties in order, then the background
//! population, then the hubs. Every ordered pair of distinct nodes gets an
//! independent follow edge with the probability of its block:
//!
//! | source \ target | same party | other party | background   | hub        |
//! |-----------------|------------|-------------|--------------|------------|
//! | party member    | `p_intra`  | `p_inter`   | `p_context_bg` | `hub_attach` |
//! | background      | `p_context_bg` | `p_context_bg` | `p_background` | `hub_attach` |
//! | hub             | 0          | 0           | 0            | `hub_attach` |
//!
//! Blocks are sampled with geometric skips, so cost scales with the number
//! of edges rather than the number of pairs.

use crate::graph::{DirectedGraph, NodeId, NodeTable};
use crate::rng;
use crate::seeds::SeedDatabase;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("per_party = {per_party} exceeds party {party:?} of size {size}")]
    SampleTooLarge {
        party: String,
        size: usize,
        per_party: usize,
    },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartySpec {
    pub label: String,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub parties: Vec<PartySpec>,
    pub p_intra: f64,
    pub p_inter: f64,
    pub p_context_bg: f64,
    /// Follow probability among background nodes.
    pub p_background: f64,
    pub bg_size: usize,
    pub hub_count: usize,
    pub hub_attach: f64,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    /// Five parties of 500, 10k background accounts and five hubs.
    fn default() -> Self {
        SynthParams {
            parties: ["fi", "ps", "em", "lr", "fn"]
                .iter()
                .map(|l| PartySpec {
                    label: l.to_string(),
                    size: 500,
                })
                .collect(),
            p_intra: 0.2,
            p_inter: 0.01,
            p_context_bg: 0.001,
            p_background: 0.002,
            bg_size: 10_000,
            hub_count: 5,
            hub_attach: 0.01,
            rng_seed: 7,
        }
    }
}

impl SynthParams {
    pub fn context_size(&self) -> usize {
        self.parties.iter().map(|p| p.size).sum()
    }

    pub fn node_count(&self) -> usize {
        self.context_size() + self.bg_size + self.hub_count
    }

    pub fn party_labels(&self) -> Vec<String> {
        self.parties.iter().map(|p| p.label.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.parties.is_empty() {
            return bad("parties: at least one party is required".into());
        }
        for p in &self.parties {
            if p.size == 0 {
                return bad(format!("parties: party {:?} has size 0", p.label));
            }
            if p.label.is_empty() || p.label.contains([',', '\t', '\n']) {
                return bad(format!(
                    "parties: label {:?} is empty or has separators",
                    p.label
                ));
            }
            if p.label == "BACKGROUND" || p.label == "HUB" {
                return bad(format!("parties: label {:?} is reserved", p.label));
            }
        }
        let mut labels = self.party_labels();
        labels.sort();
        labels.dedup();
        if labels.len() != self.parties.len() {
            return bad("parties: labels must be unique".into());
        }
        for (name, p) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("p_context_bg", self.p_context_bg),
            ("p_background", self.p_background),
            ("hub_attach", self.hub_attach),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        let multi = self.parties.len() > 1;
        let has_bg = self.bg_size > 0;
        if multi && self.p_intra <= self.p_inter {
            return bad(format!(
                "p_intra ({}) must exceed p_inter ({})",
                self.p_intra, self.p_inter
            ));
        }
        if has_bg && multi && self.p_inter <= self.p_context_bg {
            return bad(format!(
                "p_inter ({}) must exceed p_context_bg ({})",
                self.p_inter, self.p_context_bg
            ));
        }
        if has_bg && self.p_intra <= self.p_context_bg {
            return bad(format!(
                "p_intra ({}) must exceed p_context_bg ({})",
                self.p_intra, self.p_context_bg
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeLabel {
    Party(usize),
    Background,
    Hub,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub parties: Vec<String>,
    pub labels: Vec<NodeLabel>,
}

impl GroundTruth {
    pub fn label(&self, n: NodeId) -> NodeLabel {
        self.labels[n.index()]
    }

    pub fn party_of(&self, n: NodeId) -> Option<usize> {
        match self.labels[n.index()] {
            NodeLabel::Party(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_context(&self, n: NodeId) -> bool {
        self.party_of(n).is_some()
    }

    pub fn party_members(&self, party: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == NodeLabel::Party(party))
            .map(|(i, _)| NodeId::from(i))
    }

    pub fn context_size(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| matches!(l, NodeLabel::Party(_)))
            .count()
    }

    pub fn label_name(&self, n: NodeId) -> &str {
        match self.labels[n.index()] {
            NodeLabel::Party(p) => &self.parties[p],
            NodeLabel::Background => "BACKGROUND",
            NodeLabel::Hub => "HUB",
        }
    }

    /// `external_id,party,context_member`
    pub fn write_csv<W: Write>(&self, mut w: W, table: &NodeTable) -> Result<(), SynthError> {
        writeln!(w, "external_id,party,context_member")?;
        for i in 0..self.labels.len() {
            let n = NodeId::from(i);
            writeln!(
                w,
                "{},{},{}",
                table.external(n),
                self.label_name(n),
                self.is_context(n)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R, table: &NodeTable) -> Result<Self, SynthError> {
        let mut parties: Vec<String> = Vec::new();
        let mut labels = vec![NodeLabel::Background; table.len()];
        let bad = |line: usize, m: &str| SynthError::Io(format!("ground truth line {line}: {m}"));
        for (i, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(i + 1, "expected 3 fields"));
            }
            let ext: u64 = f[0].parse().map_err(|_| bad(i + 1, "bad id"))?;
            let n = table
                .internal(ext)
                .ok_or_else(|| bad(i + 1, "unknown id"))?;
            labels[n.index()] = match f[1] {
                "BACKGROUND" => NodeLabel::Background,
                "HUB" => NodeLabel::Hub,
                p => {
                    let idx = parties.iter().position(|x| x == p).unwrap_or_else(|| {
                        parties.push(p.to_string());
                        parties.len() - 1
                    });
                    NodeLabel::Party(idx)
                }
            };
        }
        Ok(GroundTruth { parties, labels })
    }
}

struct Group {
    start: usize,
    len: usize,
    kind: NodeLabel,
}

fn block_probability(params: &SynthParams, from: NodeLabel, to: NodeLabel) -> f64 {
    use NodeLabel::*;
    match (from, to) {
        (_, Hub) => params.hub_attach,
        (Hub, _) => 0.0,
        (Party(a), Party(b)) if a == b => params.p_intra,
        (Party(_), Party(_)) => params.p_inter,
        (Party(_), Background) | (Background, Party(_)) => params.p_context_bg,
        (Background, Background) => params.p_background,
    }
}

/// Calls `emit(i)` for each index in `0..total` independently with
/// probability `p`, in increasing order.
fn bernoulli_indices(rng: &mut rng::Rng, total: u64, p: f64, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut k: u64 = 0;
    loop {
        let u: f64 = rng.random();
        let skip = ((-u).ln_1p() / log_q).floor();
        if !skip.is_finite() || skip >= (total - k) as f64 {
            return;
        }
        k += skip as u64;
        emit(k);
        k += 1;
        if k >= total {
            return;
        }
    }
}

/// Samples a host graph and its ground truth. Pure in `params`.
pub fn generate(params: &SynthParams) -> Result<(DirectedGraph, GroundTruth), SynthError> {
    params.validate()?;
    let mut groups = Vec::new();
    let mut start = 0;
    for (i, p) in params.parties.iter().enumerate() {
        groups.push(Group {
            start,
            len: p.size,
            kind: NodeLabel::Party(i),
        });
        start += p.size;
    }
    for (len, kind) in [
        (params.bg_size, NodeLabel::Background),
        (params.hub_count, NodeLabel::Hub),
    ] {
        if len > 0 {
            groups.push(Group { start, len, kind });
            start += len;
        }
    }
    let n = start;
    let mut labels = Vec::with_capacity(n);
    for g in &groups {
        labels.extend(std::iter::repeat_n(g.kind, g.len));
    }

    let mut rng = rng::seeded(params.rng_seed);
    let mut graph = DirectedGraph::with_nodes(n);
    for from in &groups {
        for to in &groups {
            let p = block_probability(params, from.kind, to.kind);
            let same = from.start == to.start;
            let cols = if same { to.len - 1 } else { to.len } as u64;
            let total = from.len as u64 * cols;
            bernoulli_indices(&mut rng, total, p, |k| {
                let r = (k / cols) as usize;
                let mut c = (k % cols) as usize;
                if same && c >= r {
                    c += 1;
                }
                let u = NodeId::from(from.start + r);
                let v = NodeId::from(to.start + c);
                graph.add_edge(u, v).expect("distinct endpoints");
            });
        }
    }
    Ok((
        graph,
        GroundTruth {
            parties: params.party_labels(),
            labels,
        },
    ))
}

/// Observed edge densities of the planted blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityReport {
    pub context: f64,
    pub context_background: f64,
}

pub fn density_report(graph: &DirectedGraph, gt: &GroundTruth) -> DensityReport {
    let nc = gt.context_size() as f64;
    let nb = gt
        .labels
        .iter()
        .filter(|l| **l == NodeLabel::Background)
        .count() as f64;
    let (mut cc, mut cb) = (0usize, 0usize);
    for (u, v) in graph.edges() {
        match (gt.label(u), gt.label(v)) {
            (NodeLabel::Party(_), NodeLabel::Party(_)) => cc += 1,
            (NodeLabel::Party(_), NodeLabel::Background)
            | (NodeLabel::Background, NodeLabel::Party(_)) => cb += 1,
            _ => {}
        }
    }
    let ratio = |e: usize, pairs: f64| if pairs > 0.0 { e as f64 / pairs } else { 0.0 };
    DensityReport {
        context: ratio(cc, nc * (nc - 1.0)),
        context_background: ratio(cb, 2.0 * nc * nb),
    }
}

/// Annotated database: `per_party` members of every party, sampled
/// uniformly without replacement. Friend sets are left empty.
pub fn sample_annotated_seeds(
    gt: &GroundTruth,
    per_party: usize,
    rng_seed: u64,
) -> Result<SeedDatabase, SynthError> {
    let mut db = SeedDatabase::new(gt.parties.iter().cloned());
    for p in 0..gt.parties.len() {
        let members: Vec<NodeId> = gt.party_members(p).collect();
        if per_party > members.len() {
            return Err(SynthError::SampleTooLarge {
                party: gt.parties[p].clone(),
                size: members.len(),
                per_party,
            });
        }
        let mut rng = rng::seeded(rng::derive_seed(rng_seed, p as u64));
        for i in rand::seq::index::sample(&mut rng, members.len(), per_party) {
            db.add_member(p, members[i]).expect("parties are disjoint");
        }
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_party(seed: u64) -> SynthParams {
        SynthParams {
            parties: vec![
                PartySpec {
                    label: "A".into(),
                    size: 50,
                },
                PartySpec {
                    label: "B".into(),
                    size: 50,
                },
            ],
            p_intra: 0.2,
            p_inter: 0.02,
            p_context_bg: 0.001,
            p_background: 0.0,
            bg_size: 500,
            hub_count: 2,
            hub_attach: 0.05,
            rng_seed: seed,
        }
    }

    fn edge_bytes(g: &DirectedGraph) -> Vec<u8> {
        let mut out = Vec::new();
        crate::graph::write_edge_list(&mut out, g, &NodeTable::identity(g.node_count())).unwrap();
        out
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (a, _) = generate(&two_party(7)).unwrap();
        let (b, _) = generate(&two_party(7)).unwrap();
        assert_eq!(edge_bytes(&a), edge_bytes(&b));
        let (c, _) = generate(&two_party(8)).unwrap();
        assert_ne!(edge_bytes(&a), edge_bytes(&c));
        a.check_invariants().unwrap();
    }

    #[test]
    fn degenerate_probabilities_give_cliques() {
        let mut p = two_party(1);
        p.p_intra = 1.0;
        p.p_inter = 0.0;
        p.bg_size = 0;
        p.hub_count = 0;
        let (g, gt) = generate(&p).unwrap();
        assert_eq!(g.edge_count(), 2 * 50 * 49);
        for u in g.nodes() {
            for v in g.nodes() {
                if u != v {
                    assert_eq!(g.has_edge(u, v), gt.party_of(u) == gt.party_of(v));
                }
            }
        }
    }

    #[test]
    fn ground_truth_labels() {
        let (g, gt) = generate(&two_party(3)).unwrap();
        assert_eq!(gt.labels.len(), g.node_count());
        assert_eq!(gt.label(NodeId(0)), NodeLabel::Party(0));
        assert_eq!(gt.label(NodeId(50)), NodeLabel::Party(1));
        assert_eq!(gt.label(NodeId(100)), NodeLabel::Background);
        assert_eq!(gt.label(NodeId(600)), NodeLabel::Hub);
        assert!(!gt.is_context(NodeId(601)));
        // hubs never follow non-hubs
        for h in 600..602 {
            assert!(g.friends(NodeId(h)).unwrap().iter().all(|v| v.0 >= 600));
        }
    }

    #[test]
    fn intra_party_count_within_three_sigma() {
        for seed in 0..20 {
            let p = two_party(seed);
            let (g, gt) = generate(&p).unwrap();
            let observed = g
                .edges()
                .filter(|&(u, v)| gt.party_of(u) == Some(0) && gt.party_of(v) == Some(0))
                .count() as f64;
            let pairs = 50.0 * 49.0;
            let mean = p.p_intra * pairs;
            let sd = (pairs * p.p_intra * (1.0 - p.p_intra)).sqrt();
            assert!(
                (observed - mean).abs() <= 3.0 * sd,
                "seed {seed}: {observed} vs {mean}±{sd}"
            );
        }
    }

    #[test]
    fn context_denser_than_boundary() {
        for seed in 0..5 {
            let (g, gt) = generate(&two_party(seed)).unwrap();
            let d = density_report(&g, &gt);
            assert!(d.context > d.context_background, "{d:?}");
        }
    }

    #[test]
    fn invalid_params_name_the_field() {
        let mut p = two_party(0);
        p.p_inter = 0.5;
        let err = generate(&p).unwrap_err().to_string();
        assert!(err.contains("p_intra"), "{err}");
        let mut p = two_party(0);
        p.hub_attach = 1.5;
        assert!(generate(&p).unwrap_err().to_string().contains("hub_attach"));
        let mut p = two_party(0);
        p.parties[1].size = 0;
        assert!(generate(&p).unwrap_err().to_string().contains("size 0"));
    }

    #[test]
    fn annotated_sampling() {
        let mut p = two_party(0);
        p.parties = (0..5)
            .map(|i| PartySpec {
                label: format!("P{i}"),
                size: 120,
            })
            .collect();
        p.bg_size = 0;
        p.hub_count = 0;
        let (_, gt) = generate(&p).unwrap();
        let db = sample_annotated_seeds(&gt, 10, 1).unwrap();
        assert_eq!(db.len(), 50);
        for party in 0..5 {
            assert_eq!(db.members(party).len(), 10);
            assert!(db
                .members(party)
                .iter()
                .all(|&n| gt.party_of(n) == Some(party)));
        }
        let full = sample_annotated_seeds(&gt, 120, 1).unwrap();
        assert!(full.members(2).iter().copied().eq(gt.party_members(2)));
        assert!(matches!(
            sample_annotated_seeds(&gt, 121, 1),
            Err(SynthError::SampleTooLarge { .. })
        ));
        for trial in 0..5 {
            let a = sample_annotated_seeds(&gt, 10, 100 + trial).unwrap();
            let b = sample_annotated_seeds(&gt, 10, 200 + trial).unwrap();
            assert_ne!(a.members(0), b.members(0));
        }
        assert_eq!(db, sample_annotated_seeds(&gt, 10, 1).unwrap());
    }

    #[test]
    fn geometric_skips_hit_expected_rate() {
        let mut r = rng::seeded(5);
        let mut hits = 0u64;
        bernoulli_indices(&mut r, 1_000_000, 0.01, |_| hits += 1);
        // mean 10000, sd ~99.5
        assert!((hits as f64 - 10_000.0).abs() < 400.0, "{hits}");
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let (g, gt) = generate(&two_party(2)).unwrap();
        let table = NodeTable::identity(g.node_count());
        let mut out = Vec::new();
        gt.write_csv(&mut out, &table).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("external_id,party,context_member\n0,A,true\n"));
        let back = GroundTruth::read_csv(out.as_slice(), &table).unwrap();
        assert_eq!(back, gt);
    }
}
