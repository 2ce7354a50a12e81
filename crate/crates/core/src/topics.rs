//! Topic discovery: embeddings, density clustering, c-TF-IDF naming and
//! topic concatenation.
//!
//! The clusterer works on the mutual-reachability graph used by HDBSCAN:
//! the core distance of a point is the distance to its `min_samples`-th
//! neighbour and the reachability between two points is
//! `max(core_a, core_b, dist(a, b))`. Clusters are the connected components
//! of that graph at a radius picked as the knee of the sorted minimum
//! spanning tree edge weights; components smaller than `min_cluster_size`
//! are labeled `-1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, Result};
use crate::normalize::{NormalizerConfig, TOPIC_MARKER};

pub const OUTLIER: i64 = -1;

/// Text embedding backend.
pub trait Embedder: Send + Sync {
    /// Fits corpus statistics; a no-op for pretrained embedders.
    fn fit(&mut self, _texts: &[String]) {}

    fn dim(&self) -> usize;

    fn embed(&self, texts: &[String]) -> Vec<Vec<f64>>;
}

/// Content words of a normalized text: alphanumeric runs of two or more
/// characters, lowercased, excluding stopwords and placeholder tokens.
pub fn content_words(text: &str, config: &NormalizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    for token in text.split_whitespace() {
        if config.is_placeholder(token) {
            continue;
        }
        for run in token.split(|c: char| !c.is_alphanumeric()) {
            if run.chars().count() < 2 {
                continue;
            }
            let word = run.to_lowercase();
            if !config.english_stopwords.contains(&word) {
                out.push(word);
            }
        }
    }
    out
}

/// TF-IDF over content words followed by a seeded Gaussian random projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfProjectionEmbedder {
    pub dim: usize,
    pub seed: u64,
    pub idf: BTreeMap<String, f64>,
    #[serde(skip)]
    normalizer: NormalizerConfig,
}

impl PartialEq for TfidfProjectionEmbedder {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.seed == other.seed && self.idf == other.idf
    }
}

impl Default for TfidfProjectionEmbedder {
    fn default() -> Self {
        Self::new(64, 0)
    }
}

impl TfidfProjectionEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        TfidfProjectionEmbedder {
            dim,
            seed,
            idf: BTreeMap::new(),
            normalizer: NormalizerConfig::default(),
        }
    }

    fn projection(&self, word: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ xxh3_64(word.as_bytes()));
        let scale = 1.0 / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    }
}

impl Embedder for TfidfProjectionEmbedder {
    fn fit(&mut self, texts: &[String]) {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let words: BTreeSet<String> = content_words(t, &self.normalizer).into_iter().collect();
            for w in words {
                *df.entry(w).or_default() += 1;
            }
        }
        let n = texts.len() as f64;
        self.idf = df
            .into_iter()
            .map(|(w, d)| (w, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Vec<Vec<f64>> {
        let words: Vec<Vec<String>> = texts
            .par_iter()
            .map(|t| content_words(t, &self.normalizer))
            .collect();
        let vocab: BTreeSet<&String> = words
            .iter()
            .flatten()
            .filter(|w| self.idf.contains_key(*w))
            .collect();
        let projections: HashMap<&String, Vec<f64>> = vocab
            .into_par_iter()
            .map(|w| (w, self.projection(w)))
            .collect();
        words
            .par_iter()
            .map(|ws| {
                let mut tf: BTreeMap<&String, f64> = BTreeMap::new();
                for w in ws {
                    if self.idf.contains_key(w) {
                        *tf.entry(w).or_default() += 1.0;
                    }
                }
                let mut v = vec![0.0; self.dim];
                for (w, count) in tf {
                    let weight = count * self.idf[w];
                    for (vi, pi) in v.iter_mut().zip(&projections[w]) {
                        *vi += weight * pi;
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize, min_samples: usize) -> Self {
        ClusterParams {
            min_cluster_size,
            min_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 || self.min_samples < 1 || self.min_samples > self.min_cluster_size {
            return Err(Error::Config(format!(
                "invalid cluster params {self:?}: need min_cluster_size >= 2 and 1 <= min_samples <= min_cluster_size"
            )));
        }
        Ok(())
    }

    /// Default tuning grid. `min_samples` never goes below `min_samples_floor`
    /// (e.g. the size of the smallest target class).
    pub fn default_grid(min_samples_floor: usize) -> Vec<ClusterParams> {
        let floor = min_samples_floor.max(1);
        let mut sizes: BTreeSet<usize> = [5, 10, 15, 25, 50].into_iter().collect();
        sizes.insert(floor.max(2));
        let mut grid = Vec::new();
        for &mcs in &sizes {
            for ms in [floor, floor * 2, floor * 4] {
                if ms <= mcs && !grid.contains(&ClusterParams::new(mcs, ms)) {
                    grid.push(ClusterParams::new(mcs, ms));
                }
            }
        }
        grid
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sorted nearest-neighbour distances, shared across parameter settings.
struct DensityIndex<'a> {
    vectors: &'a [Vec<f64>],
    knn: Vec<Vec<f64>>,
}

impl<'a> DensityIndex<'a> {
    fn new(vectors: &'a [Vec<f64>], k_max: usize) -> Self {
        let k = k_max.min(vectors.len().saturating_sub(1));
        let knn = (0..vectors.len())
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<f64> = (0..vectors.len())
                    .filter(|&j| j != i)
                    .map(|j| distance(&vectors[i], &vectors[j]))
                    .collect();
                if k > 0 && k < d.len() {
                    d.select_nth_unstable_by(k - 1, f64::total_cmp);
                    d.truncate(k);
                }
                d.sort_by(f64::total_cmp);
                d
            })
            .collect();
        DensityIndex { vectors, knn }
    }

    fn cluster(&self, params: &ClusterParams) -> Vec<i64> {
        let n = self.vectors.len();
        if n < params.min_cluster_size || params.min_samples > n.saturating_sub(1) {
            warn!("{n} points cannot form a cluster under {params:?}; all labeled outliers");
            return vec![OUTLIER; n];
        }
        let core: Vec<f64> = self.knn.iter().map(|d| d[params.min_samples - 1]).collect();
        let edges = mutual_reachability_mst(self.vectors, &core);
        let mut weights: Vec<f64> = edges.iter().map(|e| e.2).collect();
        weights.sort_by(f64::total_cmp);
        let radius = knee(&weights);

        let mut uf = UnionFind::new(n);
        for &(a, b, w) in &edges {
            if w <= radius {
                uf.union(a, b);
            }
        }
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            *sizes.entry(uf.find(i)).or_default() += 1;
        }
        let mut ids: HashMap<usize, i64> = HashMap::new();
        let mut labels = vec![OUTLIER; n];
        for (i, label) in labels.iter_mut().enumerate() {
            let root = uf.find(i);
            if sizes[&root] >= params.min_cluster_size {
                let next = ids.len() as i64;
                *label = *ids.entry(root).or_insert(next);
            }
        }
        labels
    }
}

/// Prim's algorithm on the complete mutual-reachability graph.
fn mutual_reachability_mst(vectors: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = vectors.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = distance(&vectors[current], &vectors[j])
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .unwrap();
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        current = next;
    }
    edges
}

/// Knee of an ascending sequence: the point farthest below the chord
/// joining its endpoints, after scaling both axes to [0, 1]. Returns the
/// maximum when the sequence is flat or has no point below the chord.
pub fn knee(sorted: &[f64]) -> f64 {
    let Some(&last) = sorted.last() else {
        return 0.0;
    };
    let first = sorted[0];
    let range = last - first;
    if sorted.len() < 3 || range <= 1e-12 * last.abs().max(1.0) {
        return last;
    }
    let m = (sorted.len() - 1) as f64;
    let mut best = (0.0, last);
    for (i, &w) in sorted.iter().enumerate() {
        let gap = i as f64 / m - (w - first) / range;
        if gap > best.0 {
            best = (gap, w);
        }
    }
    best.1
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
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
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Density clustering; `-1` marks outliers. Cluster ids are numbered by
/// first appearance.
pub fn cluster(vectors: &[Vec<f64>], params: &ClusterParams) -> Result<Vec<i64>> {
    params.validate()?;
    Ok(DensityIndex::new(vectors, params.min_samples).cluster(params))
}

/// Outcome of one grid point during tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub params: ClusterParams,
    pub outliers: usize,
    pub clusters: usize,
}

/// Clusters with every grid point and reports outlier and cluster counts.
pub fn evaluate_grid(vectors: &[Vec<f64>], grid: &[ClusterParams]) -> Result<Vec<TuningResult>> {
    for p in grid {
        p.validate()?;
    }
    let k_max = grid.iter().map(|p| p.min_samples).max().unwrap_or(1);
    let index = DensityIndex::new(vectors, k_max);
    Ok(grid
        .iter()
        .map(|p| {
            let labels = index.cluster(p);
            TuningResult {
                params: *p,
                outliers: labels.iter().filter(|&&l| l == OUTLIER).count(),
                clusters: labels.iter().filter(|&&l| l >= 0).collect::<BTreeSet<_>>().len(),
            }
        })
        .collect())
}

/// Grid point with the fewest outliers; ties go to the smaller
/// `min_cluster_size`, then the smaller `min_samples`.
pub fn tune_params(vectors: &[Vec<f64>], grid: &[ClusterParams]) -> Result<ClusterParams> {
    if grid.is_empty() {
        return Err(Error::Config("empty parameter grid".into()));
    }
    let results = evaluate_grid(vectors, grid)?;
    Ok(results
        .into_iter()
        .min_by_key(|r| (r.outliers, r.params.min_cluster_size, r.params.min_samples))
        .unwrap()
        .params)
}

/// Names each topic `"{id}_{w1}_..._{wk}"` from its top-k words by
/// class-weighted frequency `tf(w, c) * ln(1 + n_clusters / cf(w))`, where
/// `cf(w)` counts clusters containing `w`. Ties break lexicographically.
/// The outlier topic is always named.
pub fn name_topics(texts: &[String], labels: &[i64], k: usize) -> Result<BTreeMap<i64, String>> {
    name_topics_with(texts, labels, k, &NormalizerConfig::default())
}

pub fn name_topics_with(
    texts: &[String],
    labels: &[i64],
    k: usize,
    config: &NormalizerConfig,
) -> Result<BTreeMap<i64, String>> {
    if texts.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} texts but {} labels",
            texts.len(),
            labels.len()
        )));
    }
    let mut tf: BTreeMap<i64, BTreeMap<String, f64>> = BTreeMap::new();
    for (text, &label) in texts.iter().zip(labels) {
        let counts = tf.entry(label).or_default();
        for w in content_words(text, config) {
            *counts.entry(w).or_default() += 1.0;
        }
    }
    tf.entry(OUTLIER).or_default();
    let mut cf: BTreeMap<&str, f64> = BTreeMap::new();
    for counts in tf.values() {
        for w in counts.keys() {
            *cf.entry(w.as_str()).or_default() += 1.0;
        }
    }
    let n_clusters = labels.iter().collect::<BTreeSet<_>>().len() as f64;
    let mut names = BTreeMap::new();
    for (&label, counts) in &tf {
        let mut scored: Vec<(f64, &str)> = counts
            .iter()
            .map(|(w, &t)| (t * (1.0 + n_clusters / cf[w.as_str()]).ln(), w.as_str()))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let mut name = format!("{label}_");
        let words: Vec<&str> = scored.iter().take(k).map(|(_, w)| *w).collect();
        if words.is_empty() {
            if label != OUTLIER {
                warn!("topic {label} has no content words");
            }
        } else {
            name.push_str(&words.join("_"));
        }
        names.insert(label, name);
    }
    Ok(names)
}

/// Topic words of a name, without the numeric id.
pub fn topic_words(name: &str) -> String {
    name.split_once('_')
        .map(|(_, words)| words.replace('_', " "))
        .unwrap_or_default()
}

/// A fitted topic model. Unseen texts are assigned to the nearest centroid
/// unless they lie farther from it than any of its training members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "E: Serialize", deserialize = "E: DeserializeOwned"))]
pub struct TopicModel<E = TfidfProjectionEmbedder> {
    pub labels: Vec<i64>,
    pub names: BTreeMap<i64, String>,
    pub params: ClusterParams,
    pub embedder: E,
    pub centroids: BTreeMap<i64, Vec<f64>>,
    pub radii: BTreeMap<i64, f64>,
}

impl<E: Embedder> TopicModel<E> {
    pub fn topic_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == OUTLIER).count()
    }

    pub fn assign(&self, text: &str) -> i64 {
        self.assign_many(&[text.to_string()])[0]
    }

    pub fn assign_many(&self, texts: &[String]) -> Vec<i64> {
        self.embedder
            .embed(texts)
            .iter()
            .map(|v| {
                self.centroids
                    .iter()
                    .map(|(&id, c)| (id, distance(v, c)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .filter(|(id, d)| *d <= self.radii[id] + 1e-9)
                    .map_or(OUTLIER, |(id, _)| id)
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Corrupt(m));
        if !self.names.contains_key(&OUTLIER) {
            return bad("missing outlier topic name".into());
        }
        if let Some(l) = self.labels.iter().find(|l| **l != OUTLIER && !self.names.contains_key(l)) {
            return bad(format!("label {l} has no name"));
        }
        for (id, c) in &self.centroids {
            if c.len() != self.embedder.dim() || !self.radii.contains_key(id) || !self.names.contains_key(id) {
                return bad(format!("inconsistent centroid for topic {id}"));
            }
        }
        self.params.validate().map_err(|e| Error::Corrupt(e.to_string()))
    }
}

impl<E: Embedder + Serialize> TopicModel<E> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl<E: Embedder + DeserializeOwned> TopicModel<E> {
    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json)?;
        model.check()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}

/// Fits a topic model: embed, tune on `grid`, cluster, name.
pub fn fit_topics<E: Embedder>(
    texts: &[String],
    mut embedder: E,
    grid: &[ClusterParams],
) -> Result<TopicModel<E>> {
    if texts.is_empty() {
        return Err(Error::InvalidInput("cannot fit topics on an empty corpus".into()));
    }
    embedder.fit(texts);
    let vectors = embedder.embed(texts);
    let params = tune_params(&vectors, grid)?;
    let labels = cluster(&vectors, &params)?;
    let names = name_topics(texts, &labels, 4)?;

    let mut centroids: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut members: BTreeMap<i64, usize> = BTreeMap::new();
    for (v, &l) in vectors.iter().zip(&labels).filter(|(_, &l)| l != OUTLIER) {
        let c = centroids.entry(l).or_insert_with(|| vec![0.0; v.len()]);
        c.iter_mut().zip(v).for_each(|(ci, vi)| *ci += vi);
        *members.entry(l).or_default() += 1;
    }
    for (l, c) in centroids.iter_mut() {
        let n = members[l] as f64;
        c.iter_mut().for_each(|x| *x /= n);
    }
    let mut radii: BTreeMap<i64, f64> = BTreeMap::new();
    for (v, l) in vectors.iter().zip(&labels).filter(|(_, &l)| l != OUTLIER) {
        let d = distance(v, &centroids[l]);
        let r = radii.entry(*l).or_insert(0.0);
        *r = r.max(d);
    }
    Ok(TopicModel {
        labels,
        names,
        params,
        embedder,
        centroids,
        radii,
    })
}

/// Appends ` <TOPIC> w1 w2 ...` for topic `label`; outliers are returned unchanged.
pub fn concat_topic<E>(text: &str, model: &TopicModel<E>, label: i64) -> Result<String> {
    let name = model
        .names
        .get(&label)
        .ok_or_else(|| Error::InvalidInput(format!("unknown topic {label}")))?;
    if label == OUTLIER {
        return Ok(text.to_string());
    }
    Ok(format!("{text} {TOPIC_MARKER} {}", topic_words(name))
        .trim()
        .to_string())
}

/// Anything that can rewrite an input text with its topic.
pub trait TopicConcat: Send + Sync {
    fn with_topic(&self, text: &str) -> Result<String>;
}

impl<E: Embedder> TopicConcat for TopicModel<E> {
    fn with_topic(&self, text: &str) -> Result<String> {
        concat_topic(text, self, self.assign(text))
    }
}
