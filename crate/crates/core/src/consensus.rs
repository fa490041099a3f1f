//! Symmetric-difference distance between dominance relations, weak-order
//! consensus ranking and complete-linkage clustering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Relation;

/// Ranking with ties: `tiers[i]` is the 1-based tier of item `i`, tiers are
/// contiguous and lower tiers beat higher ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeakOrder {
    pub tiers: Vec<usize>,
}

impl WeakOrder {
    /// Relabels arbitrary tier numbers to contiguous tiers `1..=T`,
    /// preserving their order.
    pub fn normalized(raw: &[usize]) -> WeakOrder {
        let mut used: Vec<usize> = raw.to_vec();
        used.sort_unstable();
        used.dedup();
        WeakOrder {
            tiers: raw.iter().map(|t| used.binary_search(t).unwrap() + 1).collect(),
        }
    }

    pub fn n_tiers(&self) -> usize {
        self.tiers.iter().copied().max().unwrap_or(0)
    }

    pub fn is_valid(&self) -> bool {
        let t = self.n_tiers();
        (1..=t).all(|k| self.tiers.contains(&k))
    }

    pub fn beats(&self, i: usize, j: usize) -> bool {
        self.tiers[i] < self.tiers[j]
    }

    pub fn relation(&self, labels: Vec<String>) -> Relation {
        let m = self.tiers.len();
        Relation {
            labels,
            beats: (0..m).map(|i| (0..m).map(|j| self.beats(i, j)).collect()).collect(),
        }
    }

    /// Items grouped by tier, best tier first.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_tiers()];
        for (i, &t) in self.tiers.iter().enumerate() {
            groups[t - 1].push(i);
        }
        groups
    }
}

fn check_labels(a: &Relation, b: &Relation) -> Result<()> {
    if a.labels != b.labels {
        return Err(Error::InvalidArgument(format!(
            "relations cover different conditions: {:?} vs {:?}",
            a.labels, b.labels
        )));
    }
    Ok(())
}

/// Ordered pairs `(i, j)` on which the two relations disagree.
pub fn symdiff_distance(a: &Relation, b: &Relation) -> Result<usize> {
    check_labels(a, b)?;
    let m = a.len();
    Ok((0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && a.beats[i][j] != b.beats[i][j])
        .count())
}

/// Pairwise win counts across relations, used to score candidate orders.
struct Profile {
    m: usize,
    b: usize,
    wins: Vec<usize>,
}

impl Profile {
    fn new(relations: &[Relation]) -> Result<Profile> {
        let first = relations
            .first()
            .ok_or_else(|| Error::InvalidArgument("consensus needs at least one relation".into()))?;
        let m = first.len();
        let mut wins = vec![0; m * m];
        for r in relations {
            check_labels(first, r)?;
            for i in 0..m {
                for j in 0..m {
                    if r.beats[i][j] {
                        wins[i * m + j] += 1;
                    }
                }
            }
        }
        Ok(Profile {
            m,
            b: relations.len(),
            wins,
        })
    }

    /// Total symmetric-difference distance from every relation to `tiers`.
    fn cost(&self, tiers: &[usize]) -> usize {
        let m = self.m;
        let mut total = 0;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let w = self.wins[i * m + j];
                total += if tiers[i] < tiers[j] { self.b - w } else { w };
            }
        }
        total
    }
}

/// Result of a consensus search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub labels: Vec<String>,
    pub order: WeakOrder,
    pub total_distance: usize,
    /// Whether the optimum was found by exhaustive enumeration.
    pub exact: bool,
}

/// Every weak order on `m` items as tier vectors, in lexicographic order.
pub fn enumerate_weak_orders(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut t = vec![1usize; m];
    loop {
        if (WeakOrder { tiers: t.clone() }).is_valid() {
            out.push(t.clone());
        }
        // Odometer increment over {1..m}^m.
        let mut k = m;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if t[k] < m {
                t[k] += 1;
                break;
            }
            t[k] = 1;
        }
    }
}

/// Largest condition count solved by enumeration.
pub const EXACT_LIMIT: usize = 6;

/// Exact consensus by enumeration; ties go to the lexicographically
/// smallest tier vector.
pub fn exhaustive_consensus(relations: &[Relation]) -> Result<Consensus> {
    let profile = Profile::new(relations)?;
    let mut best: Option<(usize, Vec<usize>)> = None;
    for t in enumerate_weak_orders(profile.m) {
        let c = profile.cost(&t);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, t));
        }
    }
    let (total_distance, tiers) = best.expect("at least one weak order");
    Ok(Consensus {
        labels: relations[0].labels.clone(),
        order: WeakOrder { tiers },
        total_distance,
        exact: true,
    })
}

/// Candidate neighbours of a weak order: move one item to another tier or
/// to a new tier at any position, or merge two adjacent tiers.
fn neighbours(tiers: &[usize]) -> Vec<Vec<usize>> {
    let t = tiers.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    for i in 0..tiers.len() {
        for k in 1..=t {
            if k != tiers[i] {
                let mut n = tiers.to_vec();
                n[i] = k;
                out.push(WeakOrder::normalized(&n).tiers);
            }
        }
        // New singleton tier inserted before tier k (doubled coordinates).
        for k in 0..=t {
            let mut n: Vec<usize> = tiers.iter().map(|x| 2 * x).collect();
            n[i] = 2 * k + 1;
            out.push(WeakOrder::normalized(&n).tiers);
        }
    }
    for k in 1..t {
        let n: Vec<usize> = tiers.iter().map(|&x| if x > k { x - 1 } else { x }).collect();
        out.push(n);
    }
    out
}

fn descend(profile: &Profile, start: Vec<usize>) -> (usize, Vec<usize>) {
    let mut current = WeakOrder::normalized(&start).tiers;
    let mut cost = profile.cost(&current);
    loop {
        let mut improved = false;
        for cand in neighbours(&current) {
            let c = profile.cost(&cand);
            if c < cost || (c == cost && improved && cand < current) {
                cost = c;
                current = cand;
                improved = true;
            }
        }
        if !improved {
            return (cost, current);
        }
    }
}

/// Multi-start best-improvement local search.
pub fn local_search_consensus(relations: &[Relation], restarts: usize, seed: u64) -> Result<Consensus> {
    let profile = Profile::new(relations)?;
    let m = profile.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<usize>> = vec![vec![1; m]];
    // Copeland scores: net pairwise wins.
    let score: Vec<i64> = (0..m)
        .map(|i| (0..m).map(|j| profile.wins[i * m + j] as i64 - profile.wins[j * m + i] as i64).sum())
        .collect();
    let max = score.iter().copied().max().unwrap_or(0);
    starts.push(score.iter().map(|s| (max - s) as usize).collect());
    while starts.len() < restarts.max(2) {
        starts.push((0..m).map(|_| rng.random_range(1..=m.max(1))).collect());
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    for s in starts {
        let (c, t) = descend(&profile, s);
        if best.as_ref().is_none_or(|(bc, bt)| c < *bc || (c == *bc && t < *bt)) {
            best = Some((c, t));
        }
    }
    let (total_distance, tiers) = best.expect("at least one start");
    Ok(Consensus {
        labels: relations[0].labels.clone(),
        order: WeakOrder { tiers },
        total_distance,
        exact: false,
    })
}

/// Weak order minimizing the summed distance to `relations`: exact for up
/// to [`EXACT_LIMIT`] conditions, local search with 50 restarts beyond.
pub fn consensus_weak_order(relations: &[Relation], seed: u64) -> Result<Consensus> {
    let m = relations
        .first()
        .ok_or_else(|| Error::InvalidArgument("consensus needs at least one relation".into()))?
        .len();
    if m <= EXACT_LIMIT {
        exhaustive_consensus(relations)
    } else {
        local_search_consensus(relations, 50, seed)
    }
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step
/// `k` gets id `n + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

/// Complete-linkage clustering of a symmetric distance matrix. Among equally
/// close pairs the one with the smallest leaf indices merges first.
pub fn complete_linkage_matrix(labels: Vec<String>, dist: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = labels.len();
    if dist.len() != n || dist.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("distance matrix does not match labels".into()));
    }
    // (id, members, smallest leaf)
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let d = clusters[x]
                    .1
                    .iter()
                    .flat_map(|&i| clusters[y].1.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| dist[i][j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let key = {
                    let (a, b) = (clusters[x].1[0], clusters[y].1[0]);
                    (a.min(b), a.max(b))
                };
                if best.is_none_or(|(bd, bk, _, _)| d < bd || (d == bd && key < bk)) {
                    best = Some((d, key, x, y));
                }
            }
        }
        let (height, _, x, y) = best.expect("two clusters remain");
        let (cy_id, cy) = clusters.remove(y);
        let (cx_id, cx) = clusters.remove(x);
        let (a, b) = if cx[0] <= cy[0] { (cx_id, cy_id) } else { (cy_id, cx_id) };
        let mut members: Vec<usize> = cx.into_iter().chain(cy).collect();
        members.sort_unstable();
        merges.push(Merge {
            a,
            b,
            height,
            size: members.len(),
        });
        clusters.push((n + merges.len() - 1, members));
        clusters.sort_by_key(|c| c.1[0]);
    }
    Ok(Dendrogram { labels, merges })
}

/// Complete-linkage clustering of relations by symmetric-difference
/// distance.
pub fn complete_linkage(names: Vec<String>, relations: &[Relation]) -> Result<Dendrogram> {
    if relations.len() < 2 || names.len() != relations.len() {
        return Err(Error::InvalidArgument("clustering needs at least two named relations".into()));
    }
    let n = relations.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = symdiff_distance(&relations[i], &relations[j])? as f64;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    complete_linkage_matrix(names, &dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: usize) -> Vec<String> {
        (0..m).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
    }

    fn order(tiers: &[usize]) -> Relation {
        WeakOrder { tiers: tiers.to_vec() }.relation(labels(tiers.len()))
    }

    #[test]
    fn ordered_bell_numbers() {
        let counts: Vec<usize> = (1..=6).map(|m| enumerate_weak_orders(m).len()).collect();
        assert_eq!(counts, vec![1, 3, 13, 75, 541, 4683]);
        let three = enumerate_weak_orders(3);
        assert!(three.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn distance_examples() {
        let empty = Relation::empty(labels(3));
        let strict = order(&[1, 2, 3]);
        assert_eq!(symdiff_distance(&empty, &strict).unwrap(), 3);
        assert_eq!(symdiff_distance(&strict, &strict).unwrap(), 0);
        assert!(symdiff_distance(&strict, &Relation::empty(labels(2))).is_err());
    }

    #[test]
    fn three_relation_example() {
        let rels = [order(&[1, 2, 3]), order(&[1, 2, 3]), order(&[3, 2, 1])];
        let c = exhaustive_consensus(&rels).unwrap();
        assert_eq!(c.order.tiers, vec![1, 2, 3]);
        assert_eq!(c.total_distance, 6);
        let local = local_search_consensus(&rels, 50, 1).unwrap();
        assert_eq!(local.total_distance, 6);
    }

    #[test]
    fn identical_relations_are_their_own_consensus() {
        let rels = vec![order(&[2, 1, 3, 1]); 4];
        let c = consensus_weak_order(&rels, 0).unwrap();
        assert_eq!(c.order.tiers, vec![2, 1, 3, 1]);
        assert_eq!(c.total_distance, 0);
    }

    #[test]
    fn linkage_merges_identical_first_and_splits_blocks() {
        let rels = [order(&[1, 2, 3, 4]), order(&[1, 2, 3, 4]), order(&[4, 3, 2, 1]), order(&[4, 3, 1, 2])];
        let d = complete_linkage(labels(4), &rels).unwrap();
        assert_eq!(d.merges.len(), 3);
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].height), (0, 1, 0.0));
        assert_eq!((d.merges[1].a, d.merges[1].b), (2, 3));
        assert!(d.merges.windows(2).all(|w| w[0].height <= w[1].height));
        assert_eq!(d.merges[2].size, 4);
    }
}
