//! Shared-feature similarity graph, clusters and photo group strategies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{match_features_with, FeatureSet, MatchParams};

/// Shared-feature count at which two images are considered similar.
pub const DEFAULT_THRESHOLD: usize = 10;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("duplicate image id `{0}`")]
    DuplicateImageId(String),
    #[error("tag `{tag}` has {available} entries, {requested} requested")]
    NotEnoughEntries {
        tag: String,
        requested: usize,
        available: usize,
    },
    #[error("pool has {available} entries, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("threshold must be at least 1")]
    BadThreshold,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("failed to start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityGraph {
    n: usize,
    threshold: usize,
    /// (i, j) with i < j mapped to the shared-feature count.
    edges: BTreeMap<(usize, usize), usize>,
}

impl SimilarityGraph {
    /// Keeps exactly the pairs whose count reaches `threshold`. Self pairs are ignored.
    pub fn from_counts(
        n: usize,
        counts: impl IntoIterator<Item = ((usize, usize), usize)>,
        threshold: usize,
    ) -> Self {
        let edges = counts
            .into_iter()
            .filter(|&((i, j), c)| i != j && i < n && j < n && c >= threshold)
            .map(|((i, j), c)| ((i.min(j), i.max(j)), c))
            .collect();
        Self { n, threshold, edges }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.edges.iter().map(|(&e, &w)| (e, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted ascending, never empty.
    pub members: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_ids(sets: &[FeatureSet]) -> Result<(), SimilarityError> {
    let mut seen = HashSet::new();
    for s in sets {
        if !seen.insert(s.image_id.as_str()) {
            return Err(SimilarityError::DuplicateImageId(s.image_id.clone()));
        }
    }
    Ok(())
}

/// Runs `f` on a pool of `jobs` workers. `0` runs it in the current rayon
/// pool, which is how nested calls share their caller's budget.
pub fn with_workers<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, SimilarityError> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimilarityError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

/// `((i, j), shared_count)` with `i < j`.
pub type PairCount = ((usize, usize), usize);

/// Shared-feature counts for every unordered pair, in (i, j) order.
pub fn shared_counts(
    sets: &[FeatureSet],
    params: &MatchParams,
    jobs: usize,
) -> Result<Vec<PairCount>, SimilarityError> {
    check_ids(sets)?;
    let n = sets.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    with_workers(jobs, || {
        pairs
            .par_iter()
            .map(|&(i, j)| ((i, j), match_features_with(&sets[i], &sets[j], params).shared_count()))
            .collect()
    })
}

pub fn build_graph(sets: &[FeatureSet], threshold: usize) -> Result<SimilarityGraph, SimilarityError> {
    build_graph_with(sets, threshold, &MatchParams::default(), 0)
}

pub fn build_graph_with(
    sets: &[FeatureSet],
    threshold: usize,
    params: &MatchParams,
    jobs: usize,
) -> Result<SimilarityGraph, SimilarityError> {
    if threshold == 0 {
        return Err(SimilarityError::BadThreshold);
    }
    let counts = shared_counts(sets, params, jobs)?;
    Ok(SimilarityGraph::from_counts(sets.len(), counts, threshold))
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
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
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Components sorted by size (descending), ties broken by smallest member.
/// Isolated nodes come last as singletons.
pub fn connected_components(g: &SimilarityGraph) -> Vec<Cluster> {
    let mut dsu = DisjointSet::new(g.n);
    for &(i, j) in g.edges.keys() {
        dsu.union(i, j);
    }
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for node in 0..g.n {
        let root = dsu.find(node);
        by_root.entry(root).or_default().push(node);
    }
    let mut clusters: Vec<Cluster> = by_root.into_values().map(|members| Cluster { members }).collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.members[0].cmp(&b.members[0])));
    clusters
}

/// The first cluster of [`connected_components`]; `None` only for an empty graph.
pub fn largest_cluster(g: &SimilarityGraph) -> Option<Cluster> {
    connected_components(g).into_iter().next()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TopN,
    SiftPicked,
    Mixed,
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::TopN => "top_n",
            Strategy::SiftPicked => "sift_picked",
            Strategy::Mixed => "mixed",
            Strategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoGroup {
    pub label: String,
    pub strategy: Strategy,
    /// Concatenation order used when packing.
    pub image_ids: Vec<String>,
}

impl PhotoGroup {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(rename = "id")]
    pub image_id: String,
    pub tags: Vec<String>,
    #[serde(rename = "rank")]
    pub relevance_rank: u32,
    #[serde(rename = "bytes")]
    pub size_bytes: u64,
}

/// Checks ids are unique, ranks are positive and unique per tag.
pub fn validate_manifest(entries: &[ManifestEntry]) -> Result<(), SimilarityError> {
    let mut ids = HashSet::new();
    let mut ranks: HashSet<(&str, u32)> = HashSet::new();
    for e in entries {
        if !ids.insert(e.image_id.as_str()) {
            return Err(SimilarityError::DuplicateImageId(e.image_id.clone()));
        }
        if e.relevance_rank == 0 {
            return Err(SimilarityError::Manifest(format!("`{}`: rank must be at least 1", e.image_id)));
        }
        for tag in &e.tags {
            if !ranks.insert((tag.as_str(), e.relevance_rank)) {
                return Err(SimilarityError::Manifest(format!(
                    "rank {} appears twice under tag `{tag}`",
                    e.relevance_rank
                )));
            }
        }
    }
    Ok(())
}

/// Reads a manifest, resolving relative paths against the manifest's directory
/// and checking every file exists.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, SimilarityError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimilarityError::Manifest(format!("{}: {e}", path.display())))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| SimilarityError::Manifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        if !e.path.is_file() {
            return Err(SimilarityError::Manifest(format!(
                "`{}`: file {} does not exist",
                e.image_id,
                e.path.display()
            )));
        }
    }
    validate_manifest(&entries)?;
    Ok(entries)
}

/// Tags in order of first appearance.
pub fn tags_in_order(entries: &[ManifestEntry]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e in entries {
        for t in &e.tags {
            if seen.insert(t.as_str()) {
                out.push(t.clone());
            }
        }
    }
    out
}

/// The `n` most relevant entries for `tag`, by ascending rank.
pub fn top_n(entries: &[ManifestEntry], tag: &str, n: usize) -> Result<PhotoGroup, SimilarityError> {
    let mut tagged: Vec<&ManifestEntry> = entries.iter().filter(|e| e.tags.iter().any(|t| t == tag)).collect();
    if tagged.len() < n {
        return Err(SimilarityError::NotEnoughEntries {
            tag: tag.to_string(),
            requested: n,
            available: tagged.len(),
        });
    }
    tagged.sort_by_key(|e| e.relevance_rank);
    Ok(PhotoGroup {
        label: format!("top_{n}"),
        strategy: Strategy::TopN,
        image_ids: tagged[..n].iter().map(|e| e.image_id.clone()).collect(),
    })
}

/// Images of the largest shared-feature cluster, in node order.
pub fn sift_picked(sets: &[FeatureSet], threshold: usize) -> Result<PhotoGroup, SimilarityError> {
    sift_picked_with(sets, threshold, &MatchParams::default(), 0)
}

pub fn sift_picked_with(
    sets: &[FeatureSet],
    threshold: usize,
    params: &MatchParams,
    jobs: usize,
) -> Result<PhotoGroup, SimilarityError> {
    let graph = build_graph_with(sets, threshold, params, jobs)?;
    Ok(sift_picked_from_graph(sets, &graph))
}

pub fn sift_picked_from_graph(sets: &[FeatureSet], graph: &SimilarityGraph) -> PhotoGroup {
    let members = largest_cluster(graph).map(|c| c.members).unwrap_or_default();
    PhotoGroup {
        label: "sift_picked".into(),
        strategy: Strategy::SiftPicked,
        image_ids: members.into_iter().map(|i| sets[i].image_id.clone()).collect(),
    }
}

/// Seeded sample without replacement, in draw order.
pub fn mixed_group(pool: &[ManifestEntry], size: usize, seed: u64) -> Result<PhotoGroup, SimilarityError> {
    if size > pool.len() {
        return Err(SimilarityError::PoolTooSmall {
            requested: size,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut ids = Vec::with_capacity(size);
    for i in 0..size {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
        ids.push(pool[order[i]].image_id.clone());
    }
    Ok(PhotoGroup {
        label: format!("mixed_{seed}"),
        strategy: Strategy::Mixed,
        image_ids: ids,
    })
}

/// Seeded sample that spreads draws across tags: the tag order is shuffled and
/// each round takes one random unused entry per tag, so members are as
/// unrelated as the pool allows. Entries are grouped by their first tag.
pub fn random_group(pool: &[ManifestEntry], size: usize, seed: u64) -> Result<PhotoGroup, SimilarityError> {
    if size > pool.len() {
        return Err(SimilarityError::PoolTooSmall {
            requested: size,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in pool.iter().enumerate() {
        let key = e.tags.first().map_or("", String::as_str);
        buckets.entry(key).or_default().push(i);
    }
    let mut buckets: Vec<Vec<usize>> = buckets.into_values().collect();
    for k in (1..buckets.len()).rev() {
        let j = rng.gen_range(0..=k);
        buckets.swap(k, j);
    }
    let mut ids = Vec::with_capacity(size);
    while ids.len() < size {
        for bucket in buckets.iter_mut() {
            if ids.len() == size {
                break;
            }
            if bucket.is_empty() {
                continue;
            }
            let j = rng.gen_range(0..bucket.len());
            let idx = bucket.swap_remove(j);
            ids.push(pool[idx].image_id.clone());
        }
    }
    Ok(PhotoGroup {
        label: format!("random_{seed}"),
        strategy: Strategy::Random,
        image_ids: ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, tag: &str, rank: u32) -> ManifestEntry {
        ManifestEntry {
            path: PathBuf::from(format!("{id}.ppm")),
            image_id: id.into(),
            tags: vec![tag.into()],
            relevance_rank: rank,
            size_bytes: 10,
        }
    }

    fn tagged(tag: &str, n: u32) -> Vec<ManifestEntry> {
        // Stored out of rank order on purpose.
        (1..=n).rev().map(|r| entry(&format!("{tag}-{r}"), tag, r)).collect()
    }

    #[test]
    fn threshold_comparison() {
        let g = SimilarityGraph::from_counts(5, [((0, 1), 12), ((1, 2), 10), ((3, 4), 9)], 10);
        assert_eq!(g.edges().map(|(e, _)| e).collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert!(g.edges().all(|(_, w)| w >= 10));
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let g = SimilarityGraph::from_counts(5, [((0, 1), 3)], 10);
        let cc = connected_components(&g);
        assert_eq!(cc.len(), 5);
        assert!(cc.iter().enumerate().all(|(i, c)| c.members == vec![i]));
        assert_eq!(largest_cluster(&g).unwrap().members, vec![0]);
    }

    #[test]
    fn equal_sized_clusters_tie_break_on_smallest_member() {
        let g = SimilarityGraph::from_counts(4, [((2, 3), 20), ((0, 1), 20)], 10);
        assert_eq!(largest_cluster(&g).unwrap().members, vec![0, 1]);
        let single = SimilarityGraph::from_counts(1, [], 10);
        assert_eq!(largest_cluster(&single).unwrap().members, vec![0]);
        assert!(largest_cluster(&SimilarityGraph::from_counts(0, [], 10)).is_none());
    }

    #[test]
    fn hundred_node_group() {
        let g = SimilarityGraph::from_counts(100, [((0, 99), 11)], 10);
        assert_eq!(g.node_count(), 100);
        assert_eq!(largest_cluster(&g).unwrap().members, vec![0, 99]);
    }

    #[test]
    fn top_n_orders_by_rank() {
        let entries = tagged("bigben", 100);
        let g = top_n(&entries, "bigben", 20).unwrap();
        let expected: Vec<String> = (1..=20).map(|r| format!("bigben-{r}")).collect();
        assert_eq!(g.image_ids, expected);
        assert!(matches!(
            top_n(&entries, "bigben", 101),
            Err(SimilarityError::NotEnoughEntries { requested: 101, available: 100, .. })
        ));
    }

    #[test]
    fn top_n_groups_nest() {
        let entries = tagged("t", 100);
        let t100 = top_n(&entries, "t", 100).unwrap();
        let t50 = top_n(&entries, "t", 50).unwrap();
        let t20 = top_n(&entries, "t", 20).unwrap();
        assert_eq!(t50.image_ids[..], t100.image_ids[..50]);
        assert_eq!(t20.image_ids[..], t50.image_ids[..20]);
    }

    #[test]
    fn mixed_group_is_seeded() {
        let pool: Vec<ManifestEntry> = (0..3).flat_map(|t| tagged(&format!("t{t}"), 10)).collect();
        let a = mixed_group(&pool, 12, 1).unwrap();
        assert_eq!(a, mixed_group(&pool, 12, 1).unwrap());
        let b = mixed_group(&pool, 12, 2).unwrap();
        assert_ne!(a.image_ids, b.image_ids);
        let all = mixed_group(&pool, pool.len(), 9).unwrap();
        let mut got = all.image_ids.clone();
        got.sort();
        let mut want: Vec<String> = pool.iter().map(|e| e.image_id.clone()).collect();
        want.sort();
        assert_eq!(got, want);
        assert!(matches!(mixed_group(&pool, 31, 1), Err(SimilarityError::PoolTooSmall { .. })));
    }

    #[test]
    fn random_group_spreads_over_tags() {
        let pool: Vec<ManifestEntry> = (0..5).flat_map(|t| tagged(&format!("t{t}"), 4)).collect();
        let g = random_group(&pool, 5, 3).unwrap();
        let tags: HashSet<&str> = g.image_ids.iter().map(|id| id.split('-').next().unwrap()).collect();
        assert_eq!(tags.len(), 5);
        let whole = random_group(&pool, 20, 3).unwrap();
        assert_eq!(whole.image_ids.iter().collect::<HashSet<_>>().len(), 20);
    }

    #[test]
    fn manifest_validation() {
        let mut entries = tagged("a", 3);
        assert!(validate_manifest(&entries).is_ok());
        entries.push(entry("a-1", "b", 1));
        assert!(matches!(validate_manifest(&entries), Err(SimilarityError::DuplicateImageId(_))));
        entries.pop();
        entries.push(entry("x", "a", 2));
        assert!(matches!(validate_manifest(&entries), Err(SimilarityError::Manifest(_))));
    }

    #[test]
    fn manifest_json_field_names() {
        let json = r#"[{"path":"a.ppm","id":"a","tags":["x","y"],"rank":3,"bytes":12}]"#;
        let v: Vec<ManifestEntry> = serde_json::from_str(json).unwrap();
        assert_eq!(v[0].image_id, "a");
        assert_eq!(v[0].relevance_rank, 3);
        assert_eq!(v[0].size_bytes, 12);
        let back = serde_json::to_string(&v).unwrap();
        assert_eq!(back, json);
    }
}
