//! Nearest-neighbor identification over a gallery: rankings, CMC rank-k,
//! and mean average precision.

use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};
use crate::parallel;

/// Gallery ranking for one query. `order` is a permutation of the gallery
/// indices by ascending distance (ties by index); `is_match[r]` flags
/// whether the r-th ranked item shares the query identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_index: usize,
    pub order: Vec<usize>,
    pub is_match: Vec<bool>,
}

impl RankedResult {
    pub fn num_matches(&self) -> usize {
        self.is_match.iter().filter(|&&m| m).count()
    }
}

/// Sorts gallery indices by ascending distance; equal distances keep
/// ascending index order.
pub fn rank_from_distances(distances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Ranks the gallery rows by Euclidean distance to the query embedding.
pub fn rank_gallery(query: &[f64], gallery: &Matrix) -> Result<Vec<usize>> {
    if gallery.rows() == 0 {
        return Err(Error::config("gallery is empty"));
    }
    if gallery.cols() != query.len() {
        return Err(Error::shape(format!(
            "query dim {} does not match gallery dim {}",
            query.len(),
            gallery.cols()
        )));
    }
    let distances: Vec<f64> = (0..gallery.rows())
        .map(|i| euclidean(query, gallery.row(i)))
        .collect();
    Ok(rank_from_distances(&distances))
}

/// Optional Market-style gallery filtering.
#[derive(Debug, Clone, Copy, Default)]
pub struct MatchFilter {
    /// Drop gallery items that share both the identity and the camera of
    /// the query before ranking.
    pub exclude_same_camera: bool,
}

/// Ranks one labeled query against a labeled gallery and flags matches.
pub fn rank_and_label(
    query_index: usize,
    query: &[f64],
    query_label: u32,
    query_camera: Option<u32>,
    gallery: &Matrix,
    gallery_labels: &[u32],
    gallery_cameras: &[Option<u32>],
    filter: MatchFilter,
) -> Result<RankedResult> {
    if gallery_labels.len() != gallery.rows() {
        return Err(Error::shape(format!(
            "{} gallery labels for {} rows",
            gallery_labels.len(),
            gallery.rows()
        )));
    }
    let keep: Vec<usize> = (0..gallery.rows())
        .filter(|&i| {
            if !filter.exclude_same_camera {
                return true;
            }
            let same_id = gallery_labels[i] == query_label;
            let same_cam = match (query_camera, gallery_cameras.get(i).copied().flatten()) {
                (Some(q), Some(g)) => q == g,
                _ => false,
            };
            !(same_id && same_cam)
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::config("gallery is empty after camera filtering"));
    }
    let distances: Vec<f64> = keep.iter().map(|&i| euclidean(query, gallery.row(i))).collect();
    let local_order = rank_from_distances(&distances);
    let order: Vec<usize> = local_order.iter().map(|&i| keep[i]).collect();
    let is_match = order
        .iter()
        .map(|&g| gallery_labels[g] == query_label)
        .collect();
    Ok(RankedResult {
        query_index,
        order,
        is_match,
    })
}

/// A metric value along with the number of queries that had no true match
/// in the gallery and were therefore left out of the average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub excluded_queries: usize,
}

/// Fraction of queries whose top-k ranks contain a correct match.
pub fn cmc_at_k(results: &[RankedResult], k: usize) -> Result<MetricValue> {
    let mut hits = 0usize;
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for r in results {
        if r.num_matches() == 0 {
            excluded += 1;
            continue;
        }
        counted += 1;
        if r.is_match.iter().take(k).any(|&m| m) {
            hits += 1;
        }
    }
    if counted == 0 {
        return Err(Error::config("no query has a gallery match"));
    }
    Ok(MetricValue {
        value: hits as f64 / counted as f64,
        excluded_queries: excluded,
    })
}

/// Mean over queries of average precision: at each true-match rank r
/// (1-based), precision is (matches seen so far) / r.
pub fn mean_average_precision(results: &[RankedResult]) -> Result<MetricValue> {
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for r in results {
        let matches = r.num_matches();
        if matches == 0 {
            excluded += 1;
            continue;
        }
        counted += 1;
        let mut seen = 0usize;
        let mut ap = 0.0;
        for (rank0, &m) in r.is_match.iter().enumerate() {
            if m {
                seen += 1;
                ap += seen as f64 / (rank0 + 1) as f64;
            }
        }
        total += ap / matches as f64;
    }
    if counted == 0 {
        return Err(Error::config("no query has a gallery match"));
    }
    Ok(MetricValue {
        value: total / counted as f64,
        excluded_queries: excluded,
    })
}

/// Ranks every query row against the gallery (parallel across queries)
/// and returns the labeled results in query order.
#[allow(clippy::too_many_arguments)]
pub fn rank_all(
    queries: &Matrix,
    query_labels: &[u32],
    query_cameras: &[Option<u32>],
    gallery: &Matrix,
    gallery_labels: &[u32],
    gallery_cameras: &[Option<u32>],
    filter: MatchFilter,
) -> Result<Vec<RankedResult>> {
    if queries.rows() != query_labels.len() {
        return Err(Error::shape(format!(
            "{} query labels for {} rows",
            query_labels.len(),
            queries.rows()
        )));
    }
    if gallery.rows() == 0 {
        return Err(Error::config("gallery is empty"));
    }
    let results = parallel::map_indexed(queries.rows(), |i| {
        rank_and_label(
            i,
            queries.row(i),
            query_labels[i],
            query_cameras.get(i).copied().flatten(),
            gallery,
            gallery_labels,
            gallery_cameras,
            filter,
        )
    });
    results.into_iter().collect()
}

/// CMC@1 and mAP of per-query rankings.
pub fn evaluate(results: &[RankedResult]) -> Result<(MetricValue, MetricValue)> {
    Ok((cmc_at_k(results, 1)?, mean_average_precision(results)?))
}
