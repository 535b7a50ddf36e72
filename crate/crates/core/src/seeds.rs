// SPDX-License-Identifier: Apache-2.0

//! Seed profile selection.
//!
//! A party's annotated supporters form the universe; every account one of
//! them follows is a candidate whose "covering set" is the supporters that
//! follow it. Seeds are picked greedily by marginal coverage, then any seed
//! whose in-database followers are not dominated by a single party is
//! dropped by the exclusivity filter.

use crate::graph::{DirectedGraph, NodeId, NodeTable};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

/// Exclusivity ratio below which a candidate seed is discarded.
pub const DEFAULT_EXCLUSIVITY: f64 = 0.8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SeedError {
    #[error("seed database has no annotated members")]
    EmptyDatabase,
    #[error("unknown party {0:?}")]
    UnknownParty(String),
    #[error("node {node} already belongs to party {party:?}")]
    AlreadyAnnotated { node: NodeId, party: String },
    #[error("invalid stop rule: {0}")]
    InvalidStop(String),
    #[error("exclusivity threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SeedError {
    fn from(e: std::io::Error) -> Self {
        SeedError::Io(e.to_string())
    }
}

pub type Result<T, E = SeedError> = std::result::Result<T, E>;

/// Annotated supporters per party and the friend sets collected for them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedDatabase {
    parties: Vec<String>,
    members: Vec<BTreeSet<NodeId>>,
    friends_of: Vec<BTreeMap<NodeId, BTreeSet<NodeId>>>,
    party_of: BTreeMap<NodeId, usize>,
}

impl SeedDatabase {
    pub fn new(parties: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let parties: Vec<String> = parties.into_iter().map(Into::into).collect();
        let n = parties.len();
        SeedDatabase {
            parties,
            members: vec![BTreeSet::new(); n],
            friends_of: vec![BTreeMap::new(); n],
            party_of: BTreeMap::new(),
        }
    }

    pub fn parties(&self) -> &[String] {
        &self.parties
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    pub fn party_index(&self, label: &str) -> Result<usize> {
        self.parties
            .iter()
            .position(|p| p == label)
            .ok_or_else(|| SeedError::UnknownParty(label.to_string()))
    }

    pub fn add_member(&mut self, party: usize, node: NodeId) -> Result<()> {
        if party >= self.parties.len() {
            return Err(SeedError::UnknownParty(format!("#{party}")));
        }
        if let Some(&p) = self.party_of.get(&node) {
            if p == party {
                return Ok(());
            }
            return Err(SeedError::AlreadyAnnotated {
                node,
                party: self.parties[p].clone(),
            });
        }
        self.members[party].insert(node);
        self.party_of.insert(node, party);
        Ok(())
    }

    pub fn members(&self, party: usize) -> &BTreeSet<NodeId> {
        &self.members[party]
    }

    pub fn party_of(&self, node: NodeId) -> Option<usize> {
        self.party_of.get(&node).copied()
    }

    /// All annotated nodes with their party, ascending by node.
    pub fn annotated(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.party_of.iter().map(|(&n, &p)| (n, p))
    }

    pub fn len(&self) -> usize {
        self.party_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.party_of.is_empty()
    }

    pub fn friends_of(&self, party: usize) -> &BTreeMap<NodeId, BTreeSet<NodeId>> {
        &self.friends_of[party]
    }

    /// Records the friend list of an annotated supporter. Unannotated nodes
    /// are ignored.
    pub fn set_friends(&mut self, node: NodeId, friends: impl IntoIterator<Item = NodeId>) {
        if let Some(&p) = self.party_of.get(&node) {
            self.friends_of[p].insert(node, friends.into_iter().collect());
        }
    }

    /// Fills every supporter's friend set straight from a graph.
    pub fn populate_from_graph(&mut self, graph: &DirectedGraph) {
        let nodes: Vec<NodeId> = self.party_of.keys().copied().collect();
        for n in nodes {
            let friends = graph.friends(n).map(<[NodeId]>::to_vec).unwrap_or_default();
            self.set_friends(n, friends);
        }
    }
}

/// How many annotated supporters of each party follow a candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateCounts {
    pub by_party: Vec<usize>,
    pub total: usize,
}

impl CandidateCounts {
    pub fn exclusivity(&self, party: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.by_party[party] as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateIndex {
    counts: BTreeMap<NodeId, CandidateCounts>,
}

impl CandidateIndex {
    pub fn get(&self, node: NodeId) -> Option<&CandidateCounts> {
        self.counts.get(&node)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &CandidateCounts)> {
        self.counts.iter().map(|(&n, c)| (n, c))
    }
}

/// Inverted index from candidate to per-party follower counts.
pub fn build_candidate_index(db: &SeedDatabase) -> Result<CandidateIndex> {
    if db.is_empty() {
        return Err(SeedError::EmptyDatabase);
    }
    let k = db.party_count();
    let mut counts: BTreeMap<NodeId, CandidateCounts> = BTreeMap::new();
    for (p, friends) in db.friends_of.iter().enumerate() {
        for fs in friends.values() {
            for &c in fs {
                let e = counts.entry(c).or_insert_with(|| CandidateCounts {
                    by_party: vec![0; k],
                    total: 0,
                });
                e.by_party[p] += 1;
                e.total += 1;
            }
        }
    }
    Ok(CandidateIndex { counts })
}

/// When greedy selection halts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_picks: Option<usize>,
    pub coverage_target: Option<f64>,
}

impl StopRule {
    pub fn picks(k: usize) -> Self {
        StopRule {
            max_picks: Some(k),
            coverage_target: None,
        }
    }

    pub fn coverage(target: f64) -> Self {
        StopRule {
            max_picks: None,
            coverage_target: Some(target),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_picks.is_none() && self.coverage_target.is_none() {
            return Err(SeedError::InvalidStop(
                "needs a pick limit or a coverage target".into(),
            ));
        }
        if self.max_picks == Some(0) {
            return Err(SeedError::InvalidStop(
                "pick limit must be at least 1".into(),
            ));
        }
        if let Some(t) = self.coverage_target {
            if !(t > 0.0 && t <= 1.0) {
                return Err(SeedError::InvalidStop(format!(
                    "coverage target {t} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverOutcome<K> {
    /// Picks in selection order with their marginal gain.
    pub picks: Vec<(K, usize)>,
    pub covered: usize,
    /// Halted because no remaining set adds coverage while elements are
    /// still uncovered.
    pub saturated: bool,
}

/// Greedy maximum coverage over `sets` (elements are `0..universe`). Each
/// step takes the set with the most still-uncovered elements; ties go to
/// the smallest key.
pub fn max_cover<K: Ord + Copy>(
    universe: usize,
    sets: &BTreeMap<K, Vec<usize>>,
    stop: StopRule,
) -> CoverOutcome<K> {
    let mut covered = vec![false; universe];
    let mut n_covered = 0usize;
    let mut taken: BTreeSet<K> = BTreeSet::new();
    let mut picks = Vec::new();
    let mut saturated = false;
    loop {
        if stop.max_picks.is_some_and(|k| picks.len() >= k) {
            break;
        }
        if let Some(t) = stop.coverage_target {
            if universe == 0 || n_covered as f64 / universe as f64 >= t {
                break;
            }
        }
        let mut best: Option<(K, usize)> = None;
        for (&key, elems) in sets {
            if taken.contains(&key) {
                continue;
            }
            let gain = elems.iter().filter(|&&e| !covered[e]).count();
            if gain > best.map_or(0, |b| b.1) {
                best = Some((key, gain));
            }
        }
        let Some((key, gain)) = best else {
            saturated = n_covered < universe;
            break;
        };
        for &e in &sets[&key] {
            if !covered[e] {
                covered[e] = true;
                n_covered += 1;
            }
        }
        taken.insert(key);
        picks.push((key, gain));
    }
    CoverOutcome {
        picks,
        covered: n_covered,
        saturated,
    }
}

/// Follower sets of every candidate among `party`'s members, as element
/// indices into the sorted member list.
fn party_cover_sets(
    db: &SeedDatabase,
    index: &CandidateIndex,
    party: usize,
    excluded: &BTreeSet<NodeId>,
) -> BTreeMap<NodeId, Vec<usize>> {
    let pos: BTreeMap<NodeId, usize> = db.members[party]
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let mut sets: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (supporter, friends) in &db.friends_of[party] {
        let e = pos[supporter];
        for c in friends {
            if excluded.contains(c) || index.get(*c).is_none_or(|cc| cc.by_party[party] == 0) {
                continue;
            }
            sets.entry(*c).or_default().push(e);
        }
    }
    sets
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyCover {
    pub party: usize,
    pub picks: Vec<(NodeId, usize)>,
    pub coverage: f64,
    pub saturated: bool,
}

/// Greedy seed picks for one party. The coverage denominator is every
/// member of the party, including members with empty friend sets.
pub fn greedy_cover(
    db: &SeedDatabase,
    index: &CandidateIndex,
    party: usize,
    stop: StopRule,
    excluded: &BTreeSet<NodeId>,
) -> Result<GreedyCover> {
    stop.validate()?;
    if party >= db.party_count() {
        return Err(SeedError::UnknownParty(format!("#{party}")));
    }
    let universe = db.members[party].len();
    let sets = party_cover_sets(db, index, party, excluded);
    let out = max_cover(universe, &sets, stop);
    Ok(GreedyCover {
        party,
        picks: out.picks,
        coverage: fraction(out.covered, universe),
        saturated: out.saturated,
    })
}

fn fraction(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedProfile {
    pub node: NodeId,
    /// 1-based position in the greedy order.
    pub rank: usize,
    pub marginal_gain: usize,
    pub exclusivity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub party: String,
    pub seeds: Vec<SeedProfile>,
    pub coverage: f64,
    pub saturated: bool,
    /// Greedy picks removed by the exclusivity filter.
    pub rejected: Vec<NodeId>,
}

impl SeedSet {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.seeds.iter().map(|s| s.node)
    }
}

/// Fraction of `party`'s members following at least one of `seeds`.
pub fn coverage_of(db: &SeedDatabase, party: usize, seeds: &BTreeSet<NodeId>) -> f64 {
    let members = &db.members[party];
    let hit = members
        .iter()
        .filter(|m| {
            db.friends_of[party]
                .get(m)
                .is_some_and(|fs| fs.iter().any(|f| seeds.contains(f)))
        })
        .count();
    fraction(hit, members.len())
}

/// Keeps the seeds whose share of in-database followers from `cover.party`
/// is at least `threshold` (inclusive), and recomputes coverage.
pub fn exclusivity_filter(
    db: &SeedDatabase,
    index: &CandidateIndex,
    cover: &GreedyCover,
    threshold: f64,
) -> Result<SeedSet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SeedError::InvalidThreshold(threshold));
    }
    let party = cover.party;
    let mut seeds = Vec::new();
    let mut rejected = Vec::new();
    for (i, &(node, gain)) in cover.picks.iter().enumerate() {
        let ratio = index.get(node).map_or(0.0, |c| c.exclusivity(party));
        if ratio >= threshold {
            seeds.push(SeedProfile {
                node,
                rank: i + 1,
                marginal_gain: gain,
                exclusivity: ratio,
            });
        } else {
            rejected.push(node);
        }
    }
    let kept: BTreeSet<NodeId> = seeds.iter().map(|s| s.node).collect();
    Ok(SeedSet {
        party: db.parties[party].clone(),
        coverage: coverage_of(db, party, &kept),
        saturated: cover.saturated,
        seeds,
        rejected,
    })
}

/// Greedy cover followed by the exclusivity filter, per party. When the
/// filter removes picks, the removed candidates are barred and the greedy
/// step is rerun, until the filter removes nothing.
pub fn select_all_seeds(
    db: &SeedDatabase,
    index: &CandidateIndex,
    threshold: f64,
    stop: StopRule,
) -> Result<Vec<SeedSet>> {
    if db.is_empty() {
        return Err(SeedError::EmptyDatabase);
    }
    (0..db.party_count())
        .map(|party| {
            let mut barred = BTreeSet::new();
            loop {
                let cover = greedy_cover(db, index, party, stop, &barred)?;
                let mut set = exclusivity_filter(db, index, &cover, threshold)?;
                if set.rejected.is_empty() {
                    set.rejected = barred.into_iter().collect();
                    return Ok(set);
                }
                barred.extend(set.rejected.iter().copied());
            }
        })
        .collect()
}

/// `party,seed_external_id,rank,marginal_gain,exclusivity`
pub fn write_seed_report<W: Write>(mut w: W, sets: &[SeedSet], table: &NodeTable) -> Result<()> {
    writeln!(w, "party,seed_external_id,rank,marginal_gain,exclusivity")?;
    for set in sets {
        for s in &set.seeds {
            writeln!(
                w,
                "{},{},{},{},{:.6}",
                set.party,
                table.external(s.node),
                s.rank,
                s.marginal_gain,
                s.exclusivity
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `party,seed_count,coverage_percent,saturated`, one row per party.
pub fn write_seed_summary<W: Write>(mut w: W, sets: &[SeedSet]) -> Result<()> {
    writeln!(w, "party,seed_count,coverage_percent,saturated")?;
    for set in sets {
        writeln!(
            w,
            "{},{},{:.3},{}",
            set.party,
            set.seeds.len(),
            100.0 * set.coverage,
            set.saturated
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `external_id,party`, one row per annotated node.
pub fn write_annotations<W: Write>(mut w: W, db: &SeedDatabase, table: &NodeTable) -> Result<()> {
    writeln!(w, "external_id,party")?;
    for (node, party) in db.annotated() {
        writeln!(w, "{},{}", table.external(node), db.parties[party])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_rows<R: BufRead>(r: R, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != header {
                return Err(SeedError::Io(format!(
                    "expected header {header:?}, got {line:?}"
                )));
            }
            continue;
        }
        if !line.trim().is_empty() {
            rows.push((
                i + 1,
                line.split(',').map(|f| f.trim().to_string()).collect(),
            ));
        }
    }
    Ok(rows)
}

fn lookup_external(table: &NodeTable, field: &str, line: usize) -> Result<NodeId> {
    let ext: u64 = field
        .parse()
        .map_err(|_| SeedError::Io(format!("line {line}: bad id {field:?}")))?;
    table
        .internal(ext)
        .ok_or_else(|| SeedError::Io(format!("line {line}: unknown node {ext}")))
}

/// Reads [`write_annotations`] output; friend sets start empty.
pub fn read_annotations<R: BufRead>(
    r: R,
    parties: &[String],
    table: &NodeTable,
) -> Result<SeedDatabase> {
    let mut db = SeedDatabase::new(parties.iter().cloned());
    for (line, f) in csv_rows(r, "external_id,party")? {
        if f.len() != 2 {
            return Err(SeedError::Io(format!("line {line}: expected 2 fields")));
        }
        let node = lookup_external(table, &f[0], line)?;
        let party = db.party_index(&f[1])?;
        db.add_member(party, node)?;
    }
    Ok(db)
}

/// Seed nodes per party from [`write_seed_report`] output, in rank order.
pub fn read_seed_nodes<R: BufRead>(
    r: R,
    parties: &[String],
    table: &NodeTable,
) -> Result<Vec<Vec<NodeId>>> {
    let mut out = vec![Vec::new(); parties.len()];
    for (line, f) in csv_rows(r, "party,seed_external_id,rank,marginal_gain,exclusivity")? {
        if f.len() != 5 {
            return Err(SeedError::Io(format!("line {line}: expected 5 fields")));
        }
        let party = parties
            .iter()
            .position(|p| *p == f[0])
            .ok_or_else(|| SeedError::UnknownParty(f[0].clone()))?;
        out[party].push(lookup_external(table, &f[1], line)?);
    }
    Ok(out)
}
