//! Normalized-vector store with exact top-K inner-product search and an
//! optional partitioned accelerator.
//!
//! Vectors are unit-norm, so inner product is cosine similarity. Flat search
//! is a full scan behind a bounded heap of size K — exact by construction,
//! which keeps every retrieval metric oracle-checkable. The partitioned mode
//! runs plain k-means (fixed 25 iterations) and probes the `nprobe` nearest
//! partitions; probing all of them reproduces flat search byte for byte.
//!
//! Ties on score break by insertion order, then lexicographic case id, so
//! results are deterministic across platforms. The index is immutable after
//! build; concurrent reads are safe.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{dot_f32, CaseRecord, Embedding};

pub const KMEANS_ITERS: usize = 25;
const UNIT_NORM_TOL: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("record {0} has no embedding")]
    MissingEmbedding(String),
    #[error("record {id}: dimension {got}, index dimension {expected}")]
    DimensionMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("record {id}: norm {norm} outside unit tolerance")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate case_id {0}")]
    DuplicateCaseId(String),
    #[error("query dimension {got}, index dimension {expected}")]
    QueryDimension { got: usize, expected: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("nlist {nlist} must be in 1..={m}")]
    BadNlist { nlist: usize, m: usize },
    #[error("nprobe {nprobe} must be in 1..={nlist}")]
    BadNprobe { nprobe: usize, nlist: usize },
    #[error("index is not partitioned")]
    NotPartitioned,
}

/// One retrieval hit: stored case id, cosine score, and the case label.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborHit {
    pub case_id: String,
    pub score: f64,
    pub label: u8,
}

/// Ranked retrieval result for one query; scores are non-increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborList {
    pub query_id: String,
    pub hits: Vec<NeighborHit>,
}

impl NeighborList {
    pub fn with_query_id(mut self, id: &str) -> Self {
        self.query_id = id.into();
        self
    }

    /// Labels of the hits in rank order.
    pub fn labels(&self) -> Vec<u8> {
        self.hits.iter().map(|h| h.label).collect()
    }
}

#[derive(Debug, Clone)]
struct Partitions {
    nlist: usize,
    /// nlist × dim, same packing as the vector table.
    centroids: Vec<f32>,
    /// Entry indices per partition, in insertion order.
    members: Vec<Vec<u32>>,
}

/// Immutable store of M unit vectors with ids and labels.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    labels: Vec<u8>,
    /// M × dim row-major.
    vectors: Vec<f32>,
    partitions: Option<Partitions>,
}

/// `flat` or `partitioned`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Flat,
    Partitioned,
}

impl VectorIndex {
    /// Builds a flat index from records that already carry embeddings.
    /// Layout follows input order, so builds are deterministic.
    pub fn build(records: &[CaseRecord]) -> Result<Self, IndexError> {
        let mut dim = None;
        let mut ids = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        let mut vectors = Vec::new();
        let mut seen = BTreeSet::new();
        for rec in records {
            let emb = rec
                .embedding
                .as_ref()
                .ok_or_else(|| IndexError::MissingEmbedding(rec.case_id.clone()))?;
            let d = *dim.get_or_insert(emb.dim());
            if emb.dim() != d {
                return Err(IndexError::DimensionMismatch {
                    id: rec.case_id.clone(),
                    got: emb.dim(),
                    expected: d,
                });
            }
            let norm = emb.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(IndexError::NotUnitNorm {
                    id: rec.case_id.clone(),
                    norm,
                });
            }
            if !seen.insert(rec.case_id.clone()) {
                return Err(IndexError::DuplicateCaseId(rec.case_id.clone()));
            }
            ids.push(rec.case_id.clone());
            labels.push(rec.label);
            vectors.extend_from_slice(emb.as_slice());
        }
        Ok(VectorIndex {
            dim: dim.unwrap_or(0),
            ids,
            labels,
            vectors,
            partitions: None,
        })
    }

    /// Builds and then partitions with seeded k-means over the stored
    /// vectors. `nlist` must not exceed the number of entries.
    pub fn build_partitioned(
        records: &[CaseRecord],
        nlist: usize,
        seed: u64,
    ) -> Result<Self, IndexError> {
        let mut index = Self::build(records)?;
        index.partition(nlist, seed)?;
        Ok(index)
    }

    /// Reassembles an index from its persisted parts. Validation matches
    /// [`Self::build`].
    pub fn from_parts(
        dim: usize,
        ids: Vec<String>,
        labels: Vec<u8>,
        vectors: Vec<f32>,
        partitioned: Option<(Vec<f32>, Vec<u32>)>,
    ) -> Result<Self, IndexError> {
        let m = ids.len();
        if labels.len() != m || vectors.len() != m * dim {
            return Err(IndexError::QueryDimension {
                got: vectors.len(),
                expected: m * dim,
            });
        }
        let mut index = VectorIndex {
            dim,
            ids,
            labels,
            vectors,
            partitions: None,
        };
        if let Some((centroids, assignments)) = partitioned {
            let nlist = if dim == 0 { 0 } else { centroids.len() / dim };
            let mut members = vec![Vec::new(); nlist];
            for (entry, &p) in assignments.iter().enumerate() {
                members
                    .get_mut(p as usize)
                    .ok_or(IndexError::BadNlist { nlist, m })?
                    .push(entry as u32);
            }
            index.partitions = Some(Partitions {
                nlist,
                centroids,
                members,
            });
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> IndexMode {
        if self.partitions.is_some() {
            IndexMode::Partitioned
        } else {
            IndexMode::Flat
        }
    }

    pub fn nlist(&self) -> usize {
        self.partitions.as_ref().map(|p| p.nlist).unwrap_or(0)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn centroids(&self) -> Option<&[f32]> {
        self.partitions.as_ref().map(|p| p.centroids.as_slice())
    }

    /// Partition assignment per entry, when partitioned.
    pub fn assignments(&self) -> Option<Vec<u32>> {
        let parts = self.partitions.as_ref()?;
        let mut out = vec![0u32; self.len()];
        for (p, members) in parts.members.iter().enumerate() {
            for &e in members {
                out[e as usize] = p as u32;
            }
        }
        Some(out)
    }

    fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn check_query(&self, query: &Embedding, k: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if !self.is_empty() && query.dim() != self.dim {
            return Err(IndexError::QueryDimension {
                got: query.dim(),
                expected: self.dim,
            });
        }
        Ok(())
    }

    /// Exact top-K by inner product over all entries. Returns fewer than K
    /// hits only when the index holds fewer than K entries.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<NeighborList, IndexError> {
        self.check_query(query, k)?;
        Ok(self.scan(query, k, (0..self.len()).map(|i| i as u32)))
    }

    /// Exact top-K over the union of the `nprobe` partitions whose centroids
    /// are nearest to the query.
    pub fn search_partitioned(
        &self,
        query: &Embedding,
        k: usize,
        nprobe: usize,
    ) -> Result<NeighborList, IndexError> {
        self.check_query(query, k)?;
        let parts = self.partitions.as_ref().ok_or(IndexError::NotPartitioned)?;
        if nprobe == 0 || nprobe > parts.nlist {
            return Err(IndexError::BadNprobe {
                nprobe,
                nlist: parts.nlist,
            });
        }
        // Rank centroids by squared Euclidean distance, ties to the lower
        // partition id — the same rule k-means assignment uses.
        let mut ranked: Vec<(f64, usize)> = (0..parts.nlist)
            .map(|p| {
                (
                    squared_distance(query.as_slice(), &parts.centroids[p * self.dim..(p + 1) * self.dim]),
                    p,
                )
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let probe = ranked
            .iter()
            .take(nprobe)
            .flat_map(|&(_, p)| parts.members[p].iter().copied());
        Ok(self.scan(query, k, probe))
    }

    fn scan(&self, query: &Embedding, k: usize, entries: impl Iterator<Item = u32>) -> NeighborList {
        // Min-heap of the current best K: the weakest candidate sits on top
        // and is evicted when something better arrives.
        let mut heap: BinaryHeap<core::cmp::Reverse<Candidate<'_>>> = BinaryHeap::new();
        for e in entries {
            let e = e as usize;
            let cand = Candidate {
                score: dot_f32(query.as_slice(), self.vector(e)),
                order: e as u32,
                case_id: &self.ids[e],
            };
            if heap.len() < k {
                heap.push(core::cmp::Reverse(cand));
            } else if let Some(worst) = heap.peek() {
                if cand > worst.0 {
                    heap.pop();
                    heap.push(core::cmp::Reverse(cand));
                }
            }
        }
        let mut ranked: Vec<Candidate<'_>> = heap.into_iter().map(|r| r.0).collect();
        ranked.sort_by(|a, b| b.cmp(a));
        NeighborList {
            query_id: String::new(),
            hits: ranked
                .into_iter()
                .map(|c| NeighborHit {
                    case_id: c.case_id.into(),
                    score: c.score,
                    label: self.labels[c.order as usize],
                })
                .collect(),
        }
    }

    /// Runs seeded k-means (fixed iteration count, initial centroids drawn
    /// from distinct entries) and stores the partition tables.
    pub fn partition(&mut self, nlist: usize, seed: u64) -> Result<(), IndexError> {
        let m = self.len();
        if nlist == 0 || nlist > m {
            return Err(IndexError::BadNlist { nlist, m });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, m, nlist).into_iter().collect();
        picks.sort_unstable();
        let mut centroids: Vec<f64> = Vec::with_capacity(nlist * self.dim);
        for &p in &picks {
            centroids.extend(self.vector(p).iter().map(|&v| v as f64));
        }

        let mut assignment = vec![0usize; m];
        for _ in 0..KMEANS_ITERS {
            for e in 0..m {
                assignment[e] = nearest_centroid(self.vector(e), &centroids, self.dim);
            }
            let mut sums = vec![0.0f64; nlist * self.dim];
            let mut counts = vec![0usize; nlist];
            for e in 0..m {
                let c = assignment[e];
                counts[c] += 1;
                let dst = &mut sums[c * self.dim..(c + 1) * self.dim];
                for (s, &v) in dst.iter_mut().zip(self.vector(e)) {
                    *s += v as f64;
                }
            }
            for c in 0..nlist {
                if counts[c] == 0 {
                    continue; // empty cluster keeps its previous centroid
                }
                let inv = 1.0 / counts[c] as f64;
                let dst = &mut centroids[c * self.dim..(c + 1) * self.dim];
                let src = &sums[c * self.dim..(c + 1) * self.dim];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s * inv;
                }
            }
        }

        // Final assignment against the stored (f32) centroids so query-time
        // ranking sees exactly the geometry used to fill the partitions.
        let centroids_f32: Vec<f32> = centroids.iter().map(|&v| v as f32).collect();
        let mut members = vec![Vec::new(); nlist];
        for e in 0..m {
            let c = nearest_centroid_f32(self.vector(e), &centroids_f32, self.dim);
            members[c].push(e as u32);
        }
        self.partitions = Some(Partitions {
            nlist,
            centroids: centroids_f32,
            members,
        });
        Ok(())
    }
}

/// Score-descending candidate ordering with the deterministic tie rule:
/// higher score first, then earlier insertion, then lexicographic id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate<'a> {
    score: f64,
    order: u32,
    case_id: &'a str,
}

impl Eq for Candidate<'_> {}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.order.cmp(&self.order))
            .then_with(|| other.case_id.cmp(self.case_id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn nearest_centroid(v: &[f32], centroids: &[f64], dim: usize) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.len() / dim {
        let cent = &centroids[c * dim..(c + 1) * dim];
        let d: f64 = v
            .iter()
            .zip(cent)
            .map(|(&x, &y)| {
                let d = x as f64 - y;
                d * d
            })
            .sum();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn nearest_centroid_f32(v: &[f32], centroids: &[f32], dim: usize) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.len() / dim {
        let d = squared_distance(v, &centroids[c * dim..(c + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use rand::Rng;

    fn record(id: &str, label: u8, v: Vec<f64>) -> CaseRecord {
        CaseRecord {
            case_id: id.to_string(),
            segment_id: id.to_string(),
            embedding: Some(Embedding::normalized(&v).unwrap()),
            label,
            report: "r".to_string(),
        }
    }

    fn random_records(n: usize, dim: usize, seed: u64) -> Vec<CaseRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                record(&format!("c{i:05}"), (i % 2) as u8, v)
            })
            .collect()
    }

    /// Full-scan argsort oracle using the same tie rule.
    fn brute_force(records: &[CaseRecord], query: &Embedding, k: usize) -> Vec<(String, f64)> {
        let mut scored: Vec<(usize, f64)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, query.dot(r.embedding.as_ref().unwrap())))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(a.0.cmp(&b.0))
                .then_with(|| records[a.0].case_id.cmp(&records[b.0].case_id))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (records[i].case_id.clone(), s))
            .collect()
    }

    #[test]
    fn empty_index_returns_empty_hits() {
        let index = VectorIndex::build(&[]).unwrap();
        let q = Embedding::normalized(&[1.0, 0.0]).unwrap();
        assert!(index.search(&q, 5).unwrap().hits.is_empty());
    }

    #[test]
    fn self_match_scores_one() {
        let records = vec![record("only", 1, vec![0.3, -0.2, 0.9])];
        let index = VectorIndex::build(&records).unwrap();
        let hits = index
            .search(records[0].embedding.as_ref().unwrap(), 1)
            .unwrap()
            .hits;
        assert_eq!(hits[0].case_id, "only");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_m_returns_all_ranked() {
        let records = random_records(7, 4, 3);
        let index = VectorIndex::build(&records).unwrap();
        let q = Embedding::normalized(&[1.0, 0.5, -0.5, 0.25]).unwrap();
        let hits = index.search(&q, 50).unwrap().hits;
        assert_eq!(hits.len(), 7);
        for w in hits.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn build_rejects_bad_records() {
        let mut bad = record("a", 0, vec![1.0, 0.0]);
        bad.embedding = Some(Embedding::from_raw(vec![0.5, 0.0]).unwrap());
        assert!(matches!(
            VectorIndex::build(&[bad]),
            Err(IndexError::NotUnitNorm { .. })
        ));
        let a = record("a", 0, vec![1.0, 0.0]);
        assert!(matches!(
            VectorIndex::build(&[a.clone(), a.clone()]),
            Err(IndexError::DuplicateCaseId(_))
        ));
        let b = record("b", 0, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            VectorIndex::build(&[a, b]),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flat_search_matches_brute_force_oracle() {
        let records = random_records(1000, 16, 11);
        let index = VectorIndex::build(&records).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let v: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = Embedding::normalized(&v).unwrap();
            let got = index.search(&q, 25).unwrap().hits;
            let expect = brute_force(&records, &q, 25);
            assert_eq!(got.len(), expect.len());
            for (h, (id, score)) in got.iter().zip(&expect) {
                assert_eq!(&h.case_id, id);
                assert_eq!(h.score, *score);
            }
        }
    }

    #[test]
    fn tie_break_prefers_insertion_order() {
        // Two identical vectors: the earlier entry must rank first.
        let records = vec![
            record("zzz", 0, vec![1.0, 0.0]),
            record("aaa", 1, vec![1.0, 0.0]),
        ];
        let index = VectorIndex::build(&records).unwrap();
        let q = Embedding::normalized(&[1.0, 0.0]).unwrap();
        let hits = index.search(&q, 2).unwrap().hits;
        assert_eq!(hits[0].case_id, "zzz");
        assert_eq!(hits[1].case_id, "aaa");
    }

    fn clustered_records(per_cluster: usize, seed: u64) -> Vec<CaseRecord> {
        // Four well-separated directions in 8-d with small angular noise.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for c in 0..4usize {
            for i in 0..per_cluster {
                let mut v = vec![0.0f64; 8];
                v[c * 2] = 1.0;
                for item in v.iter_mut() {
                    *item += rng.random_range(-0.15..0.15);
                }
                out.push(record(&format!("k{c}-{i:04}"), (c % 2) as u8, v));
            }
        }
        out
    }

    #[test]
    fn partition_nlist_one_holds_everything() {
        let records = random_records(20, 4, 5);
        let index = VectorIndex::build_partitioned(&records, 1, 7).unwrap();
        assert_eq!(index.assignments().unwrap(), vec![0u32; 20]);
    }

    #[test]
    fn partition_is_deterministic_and_pure_on_separated_clusters() {
        let records = clustered_records(50, 2);
        let a = VectorIndex::build_partitioned(&records, 4, 9).unwrap();
        let b = VectorIndex::build_partitioned(&records, 4, 9).unwrap();
        assert_eq!(a.assignments().unwrap(), b.assignments().unwrap());
        // Purity: every true cluster lands in exactly one partition.
        let assignment = a.assignments().unwrap();
        for c in 0..4usize {
            let slice = &assignment[c * 50..(c + 1) * 50];
            assert!(slice.iter().all(|&p| p == slice[0]), "cluster {c} split");
        }
    }

    #[test]
    fn nprobe_equal_nlist_matches_flat_exactly() {
        let records = random_records(300, 8, 21);
        let index = VectorIndex::build_partitioned(&records, 8, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..20 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = Embedding::normalized(&v).unwrap();
            let flat = index.search(&q, 10).unwrap();
            let part = index.search_partitioned(&q, 10, 8).unwrap();
            assert_eq!(flat, part);
        }
    }

    #[test]
    fn nprobe_one_recall_on_clusters() {
        let records = clustered_records(250, 13);
        let index = VectorIndex::build_partitioned(&records, 4, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut hit = 0usize;
        let mut total = 0usize;
        for c in 0..4usize {
            for _ in 0..25 {
                let mut v = vec![0.0f64; 8];
                v[c * 2] = 1.0;
                for item in v.iter_mut() {
                    *item += rng.random_range(-0.15..0.15);
                }
                let q = Embedding::normalized(&v).unwrap();
                let flat = index.search(&q, 10).unwrap();
                let part = index.search_partitioned(&q, 10, 1).unwrap();
                for h in &flat.hits {
                    total += 1;
                    if part.hits.iter().any(|p| p.case_id == h.case_id) {
                        hit += 1;
                    }
                }
            }
        }
        let recall = hit as f64 / total as f64;
        assert!(recall >= 0.9, "recall@10 {recall}");
    }

    #[test]
    fn stored_vector_found_with_single_probe() {
        let records = clustered_records(30, 31);
        let index = VectorIndex::build_partitioned(&records, 4, 3).unwrap();
        let q = records[17].embedding.as_ref().unwrap();
        let got = index.search_partitioned(q, 1, 1).unwrap();
        assert_eq!(got.hits[0].case_id, records[17].case_id);
    }

    #[test]
    fn nprobe_out_of_range_rejected() {
        let records = random_records(10, 4, 1);
        let index = VectorIndex::build_partitioned(&records, 2, 1).unwrap();
        let q = Embedding::normalized(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            index.search_partitioned(&q, 1, 3),
            Err(IndexError::BadNprobe { .. })
        ));
        assert!(matches!(
            VectorIndex::build_partitioned(&records, 11, 1),
            Err(IndexError::BadNlist { .. })
        ));
    }
}
