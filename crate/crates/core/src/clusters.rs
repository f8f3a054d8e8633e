//! Work-cluster partitions.
//!
//! Two transitions that consume from a common place must run on the same
//! worker. The finest partition meeting that rule is the set of connected
//! components of the "shares an input place" relation; every other valid
//! partition is a coarsening of it.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::mem;

use thiserror::Error;

use crate::net::{Net, PlaceId, TransitionId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("not a partition of the net's transitions: {0}")]
    NotAPartition(String),
    #[error("cluster index {index} out of range ({len} clusters)")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug)]
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let mut a = self.find(a);
        let mut b = self.find(b);
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }

    fn sets(&mut self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.parent.len()];
        for x in 0..self.parent.len() {
            let root = self.find(x);
            sets[root].push(x);
        }
        sets.retain(|s| !s.is_empty());
        sets
    }
}

/// Clusters sorted internally and by least member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorkClusterPartition {
    clusters: Vec<Vec<TransitionId>>,
}

impl WorkClusterPartition {
    /// Canonicalizes the given grouping. Disjointness and coverage are not
    /// checked here; see [`validate_partition`].
    pub fn new(clusters: Vec<Vec<TransitionId>>) -> Self {
        let mut clusters: Vec<Vec<TransitionId>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        clusters.sort();
        WorkClusterPartition { clusters }
    }

    /// Every transition of `net` in one cluster.
    pub fn single(net: &Net) -> Self {
        if net.transition_count() == 0 {
            return WorkClusterPartition { clusters: vec![] };
        }
        WorkClusterPartition {
            clusters: vec![net.transition_ids().collect()],
        }
    }

    pub fn clusters(&self) -> &[Vec<TransitionId>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, t: TransitionId) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&t))
    }

    fn check_covers(&self, net: &Net) -> Result<(), PartitionError> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.is_empty() {
                return Err(PartitionError::NotAPartition("empty cluster".into()));
            }
            for t in c {
                if t.index() >= net.transition_count() {
                    return Err(PartitionError::NotAPartition(format!("unknown transition {t}")));
                }
                if !seen.insert(*t) {
                    return Err(PartitionError::NotAPartition(format!("{t} appears twice")));
                }
            }
        }
        if seen.len() != net.transition_count() {
            return Err(PartitionError::NotAPartition(format!(
                "covers {} of {} transitions",
                seen.len(),
                net.transition_count()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for WorkClusterPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clusters.iter().enumerate() {
            write!(f, "cluster {i}:")?;
            for t in c {
                write!(f, " {t}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn compute_work_clusters(net: &Net) -> WorkClusterPartition {
    let mut uf = UnionFind::new(net.transition_count());
    let mut first_consumer: HashMap<PlaceId, usize> = HashMap::new();
    for (id, t) in net.transitions() {
        for place in t.input_places() {
            match first_consumer.get(&place) {
                Some(&other) => uf.union(other, id.index()),
                None => {
                    first_consumer.insert(place, id.index());
                }
            }
        }
    }
    WorkClusterPartition::new(
        uf.sets()
            .into_iter()
            .map(|s| s.into_iter().map(|i| TransitionId(i as u32)).collect())
            .collect(),
    )
}

/// True iff no place is an input of transitions in two different clusters.
pub fn validate_partition(net: &Net, p: &WorkClusterPartition) -> Result<bool, PartitionError> {
    p.check_covers(net)?;
    let mut owner: HashMap<PlaceId, usize> = HashMap::new();
    for (ci, cluster) in p.clusters.iter().enumerate() {
        for &t in cluster {
            let spec = net.transition(t).expect("checked by check_covers");
            for place in spec.input_places() {
                match owner.insert(place, ci) {
                    Some(prev) if prev != ci => return Ok(false),
                    _ => {}
                }
            }
        }
    }
    Ok(true)
}

/// Unions the requested clusters. Indices refer to `p` as given.
pub fn coarsen(p: &WorkClusterPartition, merges: &[(usize, usize)]) -> Result<WorkClusterPartition, PartitionError> {
    let len = p.clusters.len();
    let mut uf = UnionFind::new(len);
    for &(a, b) in merges {
        for index in [a, b] {
            if index >= len {
                return Err(PartitionError::IndexOutOfRange { index, len });
            }
        }
        uf.union(a, b);
    }
    Ok(WorkClusterPartition::new(
        uf.sets()
            .into_iter()
            .map(|group| group.into_iter().flat_map(|i| p.clusters[i].iter().copied()).collect())
            .collect(),
    ))
}
