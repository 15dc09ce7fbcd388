//! Agglomerative clustering and the clustering-based identification framework.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::seeds;
use crate::setdist::{actor_distance_matrix, normalize_columns, DistanceMatrix, FeatureMatrix, SetMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkageKind {
    /// Nearest points.
    Single,
    /// Furthest points.
    Complete,
    /// Mean over all cross pairs.
    Centroid,
    /// Mean over all pairs of distinct points in the union, intra-cluster
    /// pairs included.
    Average,
    /// Conventional average linkage: mean over cross pairs only.
    AverageInter,
}

impl LinkageKind {
    pub const ALL: [LinkageKind; 5] = [
        LinkageKind::Single,
        LinkageKind::Complete,
        LinkageKind::Centroid,
        LinkageKind::Average,
        LinkageKind::AverageInter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkageKind::Single => "single",
            LinkageKind::Complete => "complete",
            LinkageKind::Centroid => "centroid",
            LinkageKind::Average => "average",
            LinkageKind::AverageInter => "average-inter",
        }
    }

    /// Linkage between two clusters, each given by sorted member indices.
    pub fn between(self, d: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
        match self {
            LinkageKind::Single => cross(d, a, b).fold(f64::INFINITY, f64::min),
            LinkageKind::Complete => cross(d, a, b).fold(f64::NEG_INFINITY, f64::max),
            LinkageKind::Centroid | LinkageKind::AverageInter => {
                cross(d, a, b).sum::<f64>() / (a.len() * b.len()) as f64
            }
            LinkageKind::Average => {
                let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
                u.sort_unstable();
                let mut s = 0.0;
                for (p, &i) in u.iter().enumerate() {
                    for &j in &u[p + 1..] {
                        s += d.get(i, j);
                    }
                }
                // Ordered pairs count each unordered pair twice.
                let n = u.len() as f64;
                2.0 * s / (n * n - n)
            }
        }
    }
}

fn cross<'a>(d: &'a DistanceMatrix, a: &'a [usize], b: &'a [usize]) -> impl Iterator<Item = f64> + 'a {
    a.iter().flat_map(move |&i| b.iter().map(move |&j| d.get(i, j)))
}

impl fmt::Display for LinkageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LinkageKind::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown linkage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Members of the operand with the lower minimum index, sorted.
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub height: f64,
}

/// Merge sequence over items `0..n` (indices into the distance matrix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: LinkageKind,
    pub merges: Vec<Merge>,
}

/// Repeatedly merges the closest pair of active clusters. Ties go to the
/// pair with the lowest minimum index in the first operand, then in the
/// second.
pub fn agglomerate(d: &DistanceMatrix, linkage: LinkageKind) -> Result<Dendrogram> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidArgument("clustering needs at least 2 items".into()));
    }
    // Active clusters kept sorted by their minimum member.
    let mut active: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // link[i][j] for i < j, indexed by position in `active`.
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i < j { d.get(i, j) } else { 0.0 }).collect())
        .collect();
    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        let k = active.len();
        let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
        for i in 0..k {
            for j in i + 1..k {
                // Strict comparison keeps the lexicographically first pair.
                if link[i][j] < best {
                    best = link[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        let b = active.remove(bj);
        let a = std::mem::take(&mut active[bi]);
        let mut u = a.clone();
        u.extend_from_slice(&b);
        u.sort_unstable();
        merges.push(Merge { a, b, height: best });
        active[bi] = u;
        link.remove(bj);
        for row in link.iter_mut() {
            row.remove(bj);
        }
        // Recompute links involving the merged cluster from point distances.
        for j in 0..active.len() {
            if j != bi {
                let v = linkage.between(d, &active[bi], &active[j]);
                let (lo, hi) = if bi < j { (bi, j) } else { (j, bi) };
                link[lo][hi] = v;
            }
        }
    }
    Ok(Dendrogram { n, linkage, merges })
}

impl Dendrogram {
    /// Active clusters just before the final merge, smaller first (ties:
    /// lower minimum index first).
    pub fn final_two_clusters(&self) -> (Vec<usize>, Vec<usize>) {
        let last = self.merges.last().expect("dendrogram has n-1 >= 1 merges");
        let (a, b) = (last.a.clone(), last.b.clone());
        if b.len() < a.len() {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// Cluster memberships after the first `steps` merges, sorted by minimum member.
    pub fn clusters_after(&self, steps: usize) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for m in self.merges.iter().take(steps) {
            clusters.retain(|c| c[0] != m.a[0] && c[0] != m.b[0]);
            let mut u = m.a.clone();
            u.extend_from_slice(&m.b);
            u.sort_unstable();
            clusters.push(u);
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }
}

/// Outcome of the clustering framework.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accusation {
    pub accused: Vec<usize>,
    pub c1_size: usize,
    pub c2_size: usize,
    /// All actors, most suspicious first: the members of C1 in random order,
    /// then those of C2. `accused` is the first k entries.
    pub ranking: Vec<usize>,
}

impl Accusation {
    /// 1-based position of `actor` in the ranking.
    pub fn rank_of(&self, actor: usize) -> Option<usize> {
        self.ranking.iter().position(|&a| a == actor).map(|p| p + 1)
    }
}

/// Accuses k actors: random picks from the smaller cluster, then from the
/// larger one once the smaller is exhausted.
pub fn accuse<R: Rng + ?Sized>(c1: &[usize], c2: &[usize], k: usize, rng: &mut R) -> Result<Accusation> {
    if k == 0 || k > c1.len() + c2.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot accuse {k} of {} actors",
            c1.len() + c2.len()
        )));
    }
    let mut first = c1.to_vec();
    let mut second = c2.to_vec();
    first.sort_unstable();
    second.sort_unstable();
    first.shuffle(rng);
    second.shuffle(rng);
    let ranking: Vec<usize> = first.into_iter().chain(second).collect();
    Ok(Accusation {
        accused: ranking[..k].to_vec(),
        c1_size: c1.len(),
        c2_size: c2.len(),
        ranking,
    })
}

/// Intermediate products of [`identify_clustering`], kept for export.
#[derive(Debug, Clone)]
pub struct ClusteringRun {
    pub distances: DistanceMatrix,
    pub dendrogram: Dendrogram,
    pub accusation: Accusation,
}

/// Normalizes all features jointly, measures inter-actor distances,
/// clusters, and accuses `k` actors. Actor ids in the result are those of
/// the input sets; processing is done in ascending actor id order so the
/// result does not depend on input order.
pub fn identify_clustering(
    sets: &[FeatureSet],
    linkage: LinkageKind,
    measure: &SetMeasure,
    k: usize,
    seed: u64,
) -> Result<ClusteringRun> {
    if sets.len() < 3 {
        return Err(Error::InvalidArgument("clustering identification needs at least 3 actors".into()));
    }
    let mut sorted: Vec<FeatureSet> = sets.to_vec();
    sorted.sort_by_key(|s| s.actor);
    if sorted.windows(2).any(|w| w[0].actor == w[1].actor) {
        return Err(Error::InvalidArgument("duplicate actor id".into()));
    }
    let normalized = normalize_columns(&FeatureMatrix::from_sets(&sorted)?)?.to_sets();
    let distances = actor_distance_matrix(&normalized, measure, seeds::derive(seed, "distances", &[]))?;
    let dendrogram = agglomerate(&distances, linkage)?;
    let (c1, c2) = dendrogram.final_two_clusters();
    let ids = distances.labels();
    let to_ids = |c: &[usize]| c.iter().map(|&i| ids[i]).collect::<Vec<_>>();
    let mut rng = seeds::child_rng(seed, "accuse", &[]);
    let accusation = accuse(&to_ids(&c1), &to_ids(&c2), k, &mut rng)?;
    Ok(ClusteringRun {
        distances,
        dendrogram,
        accusation,
    })
}
