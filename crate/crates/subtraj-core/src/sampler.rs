//! Distribution-balanced subset selection.
//!
//! Quality-sorted selection alone drifts toward thinking processes with few
//! subtrajectories (they have fewer chances to fail a criterion). The
//! sampler corrects that: it measures, per subtrajectory count, how
//! under-represented the count would be in a pure-quality top-`d` selection,
//! then sweeps a family of blended scores
//!
//! ```text
//! score_j = α_j · quality + (1 − α_j) · normΔ(count),   α_j = 3/5 + j/100,  0 ≤ j ≤ 40
//! ```
//!
//! takes the top `d` under each, and keeps the candidate whose
//! subtrajectory-count distribution has minimal KL divergence from the whole
//! dataset's. All ordering ties break on ascending record id, and KL ties
//! break toward larger `j` (more quality emphasis), so the outcome is a pure
//! function of the scored dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative frequencies of subtrajectory counts over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    freq: BTreeMap<usize, f64>,
}

impl CountDistribution {
    /// Build from raw counts. Errors on an empty iterator.
    pub fn from_counts<I: IntoIterator<Item = usize>>(counts: I) -> Result<Self, SampleError> {
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0usize;
        for c in counts {
            *tally.entry(c).or_insert(0) += 1;
            total += 1;
        }
        if total == 0 {
            return Err(SampleError::EmptyDataset);
        }
        let freq = tally
            .into_iter()
            .map(|(c, k)| (c, k as f64 / total as f64))
            .collect();
        Ok(CountDistribution { freq })
    }

    /// Relative frequency of count `i`; zero off support.
    pub fn freq(&self, i: usize) -> f64 {
        self.freq.get(&i).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.freq.keys().copied()
    }

    pub fn as_map(&self) -> &BTreeMap<usize, f64> {
        &self.freq
    }

    /// Mean subtrajectory count under this distribution.
    pub fn mean(&self) -> f64 {
        self.freq.iter().map(|(&i, &f)| i as f64 * f).sum()
    }
}

/// The sampler's view of one scored record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub quality: f64,
    /// Retained subtrajectory count of the revised thinking process.
    pub count: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("target size {d} outside 1..={n}")]
    InvalidTargetSize { d: usize, n: usize },
    #[error("smoothing epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("record {id:?} has a non-finite quality score")]
    NonFiniteScore { id: String },
    #[error("duplicate record id {id:?}")]
    DuplicateId { id: String },
}

/// Distribution of counts over scored items.
pub fn count_distribution(items: &[ScoredItem]) -> Result<CountDistribution, SampleError> {
    CountDistribution::from_counts(items.iter().map(|r| r.count))
}

/// Indices of the top `d` items by `score` descending, ties by ascending id.
fn top_d_indices(items: &[ScoredItem], scores: &[f64], d: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores validated finite")
            .then_with(|| items[a].id.cmp(&items[b].id))
    });
    order.truncate(d);
    order
}

/// Ids of the top `d` records by quality score descending, ties broken by
/// ascending record id.
pub fn pseudo_sample_init(items: &[ScoredItem], d: usize) -> Result<Vec<String>, SampleError> {
    validate(items, d, None)?;
    let scores: Vec<f64> = items.iter().map(|r| r.quality).collect();
    Ok(top_d_indices(items, &scores, d)
        .into_iter()
        .map(|i| items[i].id.clone())
        .collect())
}

/// Per-count relative frequency drop of the initial pseudo-sample against
/// the whole dataset: `Δ_i = (F_E(i) − F_PSinit(i)) / F_E(i)` over the
/// support of the whole dataset. A count absent from the pseudo-sample gets
/// `Δ_i = 1`; an over-represented count goes negative.
pub fn compute_deltas(
    entire: &CountDistribution,
    ps_init: &CountDistribution,
) -> BTreeMap<usize, f64> {
    entire
        .as_map()
        .iter()
        .map(|(&i, &fe)| (i, (fe - ps_init.freq(i)) / fe))
        .collect()
}

/// Min-max-normalized under-representation penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPenalty {
    pub deltas: BTreeMap<usize, f64>,
    norm: BTreeMap<usize, f64>,
}

impl DeltaPenalty {
    pub fn new(deltas: BTreeMap<usize, f64>) -> Self {
        let min = deltas.values().cloned().fold(f64::INFINITY, f64::min);
        let max = deltas.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = if deltas.is_empty() || max == min {
            // A constant penalty carries no ranking information.
            deltas.keys().map(|&i| (i, 0.0)).collect()
        } else {
            deltas
                .iter()
                .map(|(&i, &d)| (i, (d - min) / (max - min)))
                .collect()
        };
        DeltaPenalty { deltas, norm }
    }

    /// Normalized penalty for count `n`. `n` must come from the dataset that
    /// defined the deltas.
    pub fn norm(&self, n: usize) -> f64 {
        match self.norm.get(&n) {
            Some(v) => *v,
            None => panic!("subtrajectory count {n} outside the reference support"),
        }
    }
}

/// Sweep weight: `α_j = 3/5 + j/100`, from 0.6 at `j = 0` to 1.0 at `j = 40`.
pub fn alpha(j: u32) -> f64 {
    debug_assert!(j <= 40);
    0.6 + f64::from(j) / 100.0
}

/// Blended per-record sampling score for sweep position `j`.
pub fn sampling_score(quality: f64, count: usize, j: u32, penalty: &DeltaPenalty) -> f64 {
    let a = alpha(j);
    a * quality + (1.0 - a) * penalty.norm(count)
}

/// KL divergence `Σ p'(i) · ln(p'(i)/q'(i))` after additive smoothing.
///
/// Both distributions are smoothed with `epsilon` over their union support
/// and renormalized, so a count missing from one side stays finite. The
/// result is nonnegative and zero iff the smoothed distributions coincide.
pub fn kl_divergence(
    p: &CountDistribution,
    q: &CountDistribution,
    epsilon: f64,
) -> Result<f64, SampleError> {
    if epsilon.is_nan() || epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(SampleError::InvalidEpsilon(epsilon));
    }
    let mut union: Vec<usize> = p.support().chain(q.support()).collect();
    union.sort_unstable();
    union.dedup();
    let m = union.len() as f64;
    let mut kl = 0.0;
    for &i in &union {
        let pi = (p.freq(i) + epsilon) / (1.0 + epsilon * m);
        let qi = (q.freq(i) + epsilon) / (1.0 + epsilon * m);
        kl += pi * (pi / qi).ln();
    }
    debug_assert!(kl > -1e-9, "KL must be nonnegative up to rounding: {kl}");
    Ok(kl.max(0.0))
}

/// One sweep candidate: the top-`d` subset under `score_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub j: u32,
    pub alpha: f64,
    pub selected_ids: Vec<String>,
    pub kl: f64,
}

/// A complete selection run, including all 41 candidates for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRun {
    pub d: usize,
    pub epsilon: f64,
    pub deltas: BTreeMap<usize, f64>,
    pub candidates: Vec<CandidateSample>,
    pub chosen_j: u32,
    pub sampled_ids: Vec<String>,
}

fn validate(items: &[ScoredItem], d: usize, epsilon: Option<f64>) -> Result<(), SampleError> {
    if items.is_empty() {
        return Err(SampleError::EmptyDataset);
    }
    if d == 0 || d > items.len() {
        return Err(SampleError::InvalidTargetSize {
            d,
            n: items.len(),
        });
    }
    if let Some(e) = epsilon {
        if e.is_nan() || e <= 0.0 || !e.is_finite() {
            return Err(SampleError::InvalidEpsilon(e));
        }
    }
    let mut ids: Vec<&str> = items.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(SampleError::DuplicateId { id: w[0].into() });
    }
    if let Some(bad) = items.iter().find(|r| !r.quality.is_finite()) {
        return Err(SampleError::NonFiniteScore {
            id: bad.id.clone(),
        });
    }
    Ok(())
}

/// Run the full selection: count distribution of the whole dataset, initial
/// pure-quality pseudo-sample, per-count deltas, the 41-step sweep, and the
/// KL-argmin choice. KL ties resolve toward larger `j`.
pub fn select(items: &[ScoredItem], d: usize, epsilon: f64) -> Result<SamplingRun, SampleError> {
    validate(items, d, Some(epsilon))?;
    let entire = count_distribution(items)?;

    let quality: Vec<f64> = items.iter().map(|r| r.quality).collect();
    let init_indices = top_d_indices(items, &quality, d);
    let init_dist =
        CountDistribution::from_counts(init_indices.iter().map(|&i| items[i].count))?;
    let deltas = compute_deltas(&entire, &init_dist);
    let penalty = DeltaPenalty::new(deltas.clone());

    let mut candidates = Vec::with_capacity(41);
    for j in 0..=40u32 {
        let scores: Vec<f64> = items
            .iter()
            .map(|r| sampling_score(r.quality, r.count, j, &penalty))
            .collect();
        let indices = top_d_indices(items, &scores, d);
        let dist = CountDistribution::from_counts(indices.iter().map(|&i| items[i].count))?;
        let kl = kl_divergence(&entire, &dist, epsilon)?;
        candidates.push(CandidateSample {
            j,
            alpha: alpha(j),
            selected_ids: indices.into_iter().map(|i| items[i].id.clone()).collect(),
            kl,
        });
    }

    let mut chosen = 0usize;
    for (idx, c) in candidates.iter().enumerate() {
        if c.kl <= candidates[chosen].kl {
            chosen = idx;
        }
    }
    Ok(SamplingRun {
        d,
        epsilon,
        deltas,
        chosen_j: candidates[chosen].j,
        sampled_ids: candidates[chosen].selected_ids.clone(),
        candidates,
    })
}
