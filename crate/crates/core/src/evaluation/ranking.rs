//! Distances, protocol junk filtering, ranking, CMC and mAP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity and capture metadata of one query or gallery record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecordMeta {
    pub identity: u64,
    pub time_label: Option<i64>,
    pub camera: Option<i64>,
    pub viewpoint: Option<i64>,
}

impl RecordMeta {
    pub fn with_time(identity: u64, time_label: i64) -> Self {
        RecordMeta {
            identity,
            time_label: Some(time_label),
            ..RecordMeta::default()
        }
    }
}

/// Which (query, gallery) pairs are junk: same identity and same value of
/// the chosen field. `None` junks nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolFilter {
    None,
    TimeLabel,
    Camera,
    Viewpoint,
}

impl ProtocolFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolFilter::None => "none",
            ProtocolFilter::TimeLabel => "time_label",
            ProtocolFilter::Camera => "camera",
            ProtocolFilter::Viewpoint => "viewpoint",
        }
    }

    fn field(self, m: &RecordMeta) -> Option<Option<i64>> {
        match self {
            ProtocolFilter::None => None,
            ProtocolFilter::TimeLabel => Some(m.time_label),
            ProtocolFilter::Camera => Some(m.camera),
            ProtocolFilter::Viewpoint => Some(m.viewpoint),
        }
    }
}

impl std::str::FromStr for ProtocolFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(ProtocolFilter::None),
            "time_label" | "time" => Ok(ProtocolFilter::TimeLabel),
            "camera" => Ok(ProtocolFilter::Camera),
            "viewpoint" => Ok(ProtocolFilter::Viewpoint),
            other => Err(Error::config(format!("unknown protocol '{other}'"))),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Plain Euclidean distances, `d[q][g]`. Computed from coordinate
/// differences, so `d(a, b) == d(b, a)` exactly.
pub fn distance_matrix<Q: AsRef<[f64]>, G: AsRef<[f64]>>(queries: &[Q], gallery: &[G]) -> Result<Vec<Vec<f64>>> {
    let dim = queries
        .first()
        .map(|q| q.as_ref().len())
        .or_else(|| gallery.first().map(|g| g.as_ref().len()))
        .unwrap_or(0);
    let bad = queries.iter().map(|q| q.as_ref().len()).chain(gallery.iter().map(|g| g.as_ref().len()));
    for len in bad {
        if len != dim {
            return Err(Error::shape(format!("feature dimension {len} differs from {dim}")));
        }
    }
    Ok(queries
        .iter()
        .map(|q| gallery.iter().map(|g| euclidean(q.as_ref(), g.as_ref())).collect())
        .collect())
}

/// Junk gallery indices per query, ascending.
pub fn apply_protocol_filter(
    queries: &[RecordMeta],
    gallery: &[RecordMeta],
    filter: ProtocolFilter,
) -> Result<Vec<Vec<usize>>> {
    if filter == ProtocolFilter::None {
        return Ok(vec![Vec::new(); queries.len()]);
    }
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let qf = filter.field(q).flatten().ok_or_else(|| {
            Error::config(format!("protocol '{}' needs that field on every query", filter.as_str()))
        })?;
        let mut junk = Vec::new();
        for (j, g) in gallery.iter().enumerate() {
            let gf = filter.field(g).flatten().ok_or_else(|| {
                Error::config(format!("protocol '{}' needs that field on every gallery record", filter.as_str()))
            })?;
            if g.identity == q.identity && gf == qf {
                junk.push(j);
            }
        }
        out.push(junk);
    }
    Ok(out)
}

/// One query's ranked gallery with junk removed.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRanking {
    pub query: RecordMeta,
    /// Gallery indices by nondecreasing distance, ties by index.
    pub order: Vec<usize>,
    /// `positive[r]` tells whether `order[r]` shares the query identity.
    pub positive: Vec<bool>,
    pub junk: Vec<usize>,
}

impl QueryRanking {
    pub fn positive_count(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }

    /// 1-based rank of the first positive.
    pub fn first_hit(&self) -> Option<usize> {
        self.positive.iter().position(|&p| p).map(|r| r + 1)
    }

    /// Correctly rounded whenever the reduced fraction fits in 53 bits;
    /// otherwise a floating-point sum over hits in rank order.
    pub fn average_precision(&self) -> Option<f64> {
        let total = self.positive_count();
        if total == 0 {
            return None;
        }
        let hit_ranks: Vec<u128> = self
            .positive
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(r, _)| r as u128 + 1)
            .collect();
        if let Some(ap) = exact_ap(&hit_ranks, total as u128) {
            return Some(ap);
        }
        let sum: f64 = hit_ranks.iter().enumerate().map(|(h, &r)| (h + 1) as f64 / r as f64).sum();
        Some(sum / total as f64)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `Σ_h (h+1)/rank_h / total` as a reduced fraction, rounded once.
fn exact_ap(hit_ranks: &[u128], total: u128) -> Option<f64> {
    const LIMIT: u128 = 1 << 53;
    let (mut num, mut den) = (0u128, 1u128);
    for (h, &r) in hit_ranks.iter().enumerate() {
        let hits = h as u128 + 1;
        num = num.checked_mul(r)?.checked_add(hits.checked_mul(den)?)?;
        den = den.checked_mul(r)?;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    den = den.checked_mul(total)?;
    let g = gcd(num, den);
    (num, den) = (num / g, den / g);
    (num <= LIMIT && den <= LIMIT).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub queries: Vec<QueryRanking>,
}

impl RankingResult {
    /// Queries with at least one positive; the others are excluded from metrics.
    pub fn counted(&self) -> impl Iterator<Item = &QueryRanking> {
        self.queries.iter().filter(|q| q.positive_count() > 0)
    }

    pub fn counted_len(&self) -> usize {
        self.counted().count()
    }
}

pub fn rank(
    distances: &[Vec<f64>],
    queries: &[RecordMeta],
    gallery: &[RecordMeta],
    junk: &[Vec<usize>],
) -> Result<RankingResult> {
    if distances.len() != queries.len() || junk.len() != queries.len() {
        return Err(Error::shape("distance rows, query metadata and junk sets must align"));
    }
    let mut out = Vec::with_capacity(queries.len());
    for ((row, q), jk) in distances.iter().zip(queries).zip(junk) {
        if row.len() != gallery.len() {
            return Err(Error::shape("distance row length differs from gallery size"));
        }
        if row.iter().any(|d| d.is_nan()) {
            return Err(Error::Metric("NaN distance".into()));
        }
        let mut is_junk = vec![false; gallery.len()];
        for &j in jk {
            *is_junk.get_mut(j).ok_or_else(|| Error::shape("junk index out of range"))? = true;
        }
        let mut order: Vec<usize> = (0..gallery.len()).filter(|&j| !is_junk[j]).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
        let positive = order.iter().map(|&j| gallery[j].identity == q.identity).collect();
        out.push(QueryRanking {
            query: *q,
            order,
            positive,
            junk: jk.clone(),
        });
    }
    Ok(RankingResult { queries: out })
}

/// Rank-k hit rates for k = 1..=max_k over the counted queries.
pub fn compute_cmc(rankings: &RankingResult, max_k: usize) -> Result<Vec<f64>> {
    let counted: Vec<&QueryRanking> = rankings.counted().collect();
    if counted.is_empty() {
        return Err(Error::Metric("no query has a positive gallery match".into()));
    }
    let mut hits = vec![0usize; max_k];
    for q in &counted {
        if let Some(r) = q.first_hit() {
            for h in hits.iter_mut().skip(r - 1) {
                *h += 1;
            }
        }
    }
    let n = counted.len() as f64;
    Ok(hits.into_iter().map(|h| h as f64 / n).collect())
}

pub fn compute_map(rankings: &RankingResult) -> Result<f64> {
    let aps: Vec<f64> = rankings.counted().filter_map(QueryRanking::average_precision).collect();
    if aps.is_empty() {
        return Err(Error::Metric("no query has a positive gallery match".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub counted_queries: usize,
}

/// Distance → junk filter → ranking → mAP and Rank-1/5/10.
pub fn evaluate<Q: AsRef<[f64]>, G: AsRef<[f64]>>(
    query_features: &[Q],
    query_meta: &[RecordMeta],
    gallery_features: &[G],
    gallery_meta: &[RecordMeta],
    filter: ProtocolFilter,
) -> Result<Metrics> {
    if query_features.len() != query_meta.len() || gallery_features.len() != gallery_meta.len() {
        return Err(Error::shape("features and metadata must align"));
    }
    let d = distance_matrix(query_features, gallery_features)?;
    let junk = apply_protocol_filter(query_meta, gallery_meta, filter)?;
    let r = rank(&d, query_meta, gallery_meta, &junk)?;
    let cmc = compute_cmc(&r, 10)?;
    Ok(Metrics {
        map: compute_map(&r)?,
        rank1: cmc[0],
        rank5: cmc[4],
        rank10: cmc[9],
        counted_queries: r.counted_len(),
    })
}
