//! Rotation search by circular cross-correlation.
//!
//! Shift convention: scoring `a` against `b` at shift `s` compares column `j`
//! of `a` with column `(j + s) mod N_s` of `b`, i.e. `a` against
//! `b.shifted(s)`. A query taken at heading `ψ_anchor + s · 2π/N_s` therefore
//! peaks at shift `s` against a candidate stored at `ψ_anchor`.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::database::Database;
use crate::descriptor::{ChannelMask, HitType, RadialDescriptor, ALL_CHANNELS, CHANNELS, CH_HIT_TYPE};
use crate::error::{CompassError, Result};
use crate::floorplan::normalize_angle;

/// Scores within this distance of the maximum count as tied.
const TIE_EPS: f64 = 1e-12;

/// How per-channel correlations are combined into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Weighted mean of per-channel cosine similarities.
    #[default]
    PerChannel,
    /// One cosine over the concatenated active rows.
    Flattened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub channel_weights: [f64; CHANNELS],
    pub channel_mask: ChannelMask,
    /// Drop candidates whose transition count differs from the query's by
    /// more than this. `None` disables the pre-filter.
    pub prefilter_tolerance: Option<u32>,
    pub top_k: usize,
    pub aggregation: Aggregation,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            channel_weights: [0.2; CHANNELS],
            channel_mask: ALL_CHANNELS,
            prefilter_tolerance: None,
            top_k: 10,
            aggregation: Aggregation::PerChannel,
        }
    }
}

impl MatchConfig {
    pub fn hit_type_only() -> Self {
        Self {
            channel_mask: crate::descriptor::HIT_TYPE_ONLY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(CompassError::InvalidConfig("channel weights must be non-negative".into()));
        }
        let sum: f64 = self.channel_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CompassError::InvalidConfig(format!(
                "channel weights must sum to 1, got {sum}"
            )));
        }
        if !self.channel_mask.iter().any(|&m| m) {
            return Err(CompassError::InvalidConfig("no active channel".into()));
        }
        if self.top_k < 1 {
            return Err(CompassError::InvalidConfig("top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Channels used for a pair, with weights renormalized over them.
    fn plan(&self, a: &RadialDescriptor, b: &RadialDescriptor) -> Result<Vec<(usize, f64)>> {
        if a.n_bins() != b.n_bins() {
            return Err(CompassError::ShapeMismatch(format!(
                "{} vs {} bins",
                a.n_bins(),
                b.n_bins()
            )));
        }
        let (ma, mb) = (a.active(), b.active());
        let used: Vec<usize> = (0..CHANNELS)
            .filter(|&c| self.channel_mask[c] && ma[c] && mb[c])
            .collect();
        if used.is_empty() {
            return Err(CompassError::ShapeMismatch(
                "descriptors share no active channel under the match mask".into(),
            ));
        }
        let total: f64 = used.iter().map(|&c| self.channel_weights[c]).sum();
        if !(total > 0.0) {
            return Err(CompassError::InvalidConfig(
                "all shared channels have zero weight".into(),
            ));
        }
        Ok(used
            .into_iter()
            .map(|c| (c, self.channel_weights[c] / total))
            .collect())
    }
}

/// Cosine similarity with the zero-row convention: two zero rows → 1,
/// exactly one zero row → 0.
fn cosine_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => dot / (na * nb),
    }
}

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Direct evaluation of the similarity of `a` and `b.shifted(shift)`.
pub fn similarity_at_shift(
    a: &RadialDescriptor,
    b: &RadialDescriptor,
    shift: i64,
    cfg: &MatchConfig,
) -> Result<f64> {
    let plan = cfg.plan(a, b)?;
    let n = a.n_bins();
    let s = shift.rem_euclid(n as i64) as usize;
    let dot = |c: usize| {
        let (ra, rb) = (a.row(c), b.row(c));
        (0..n).map(|j| ra[j] * rb[(j + s) % n]).sum::<f64>()
    };
    Ok(match cfg.aggregation {
        Aggregation::PerChannel => plan
            .iter()
            .map(|&(c, w)| w * cosine_from_parts(dot(c), norm(a.row(c)), norm(b.row(c))))
            .sum(),
        Aggregation::Flattened => {
            let d: f64 = plan.iter().map(|&(c, _)| dot(c)).sum();
            let na = plan.iter().map(|&(c, _)| norm(a.row(c)).powi(2)).sum::<f64>().sqrt();
            let nb = plan.iter().map(|&(c, _)| norm(b.row(c)).powi(2)).sum::<f64>().sqrt();
            cosine_from_parts(d, na, nb)
        }
    })
}

/// Index of the maximum, preferring the smallest index among near-ties.
pub fn argmax_first(scores: &[f64]) -> (usize, f64) {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let idx = scores.iter().position(|&s| s >= best - TIE_EPS).unwrap_or(0);
    (idx, scores[idx])
}

/// Frequency-domain correlator for one descriptor length. Holds FFT plans and
/// scratch; create one per worker.
pub struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    acc: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Correlator {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            buf: vec![Complex64::default(); n],
            acc: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    fn spectrum(&mut self, row: &[f64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process_with_scratch(&mut out, &mut self.scratch);
        out
    }

    /// Scores of `a` against every shift of `b`, written into `out`.
    pub fn curve_into(
        &mut self,
        query: &PreparedQuery,
        b: &RadialDescriptor,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let n = self.n;
        if b.n_bins() != n || query.n_bins != n {
            return Err(CompassError::ShapeMismatch(format!(
                "correlator for {n} bins got {} / {}",
                query.n_bins,
                b.n_bins()
            )));
        }
        self.acc.iter_mut().for_each(|v| *v = Complex64::default());
        let mut constant = 0.0;
        let flat_nb = query
            .flattened
            .then(|| query.channels.iter().map(|ch| norm(b.row(ch.channel)).powi(2)).sum::<f64>().sqrt());
        for ch in &query.channels {
            let row = b.row(ch.channel);
            let coeff = match flat_nb {
                Some(nb) => {
                    if query.flat_norm == 0.0 || nb == 0.0 {
                        continue;
                    }
                    1.0 / (query.flat_norm * nb)
                }
                None => {
                    let nb = norm(row);
                    match (ch.norm == 0.0, nb == 0.0) {
                        (true, true) => {
                            constant += ch.weight;
                            continue;
                        }
                        (true, false) | (false, true) => continue,
                        _ => ch.weight / (ch.norm * nb),
                    }
                }
            };
            for (dst, &v) in self.buf.iter_mut().zip(row) {
                *dst = Complex64::new(v, 0.0);
            }
            self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
            for ((acc, q), bk) in self.acc.iter_mut().zip(&ch.conj_spectrum).zip(&self.buf) {
                *acc += q * bk * coeff;
            }
        }
        if let Some(nb) = flat_nb {
            if query.flat_norm == 0.0 && nb == 0.0 {
                constant = 1.0;
            }
        }
        self.inv.process_with_scratch(&mut self.acc, &mut self.scratch);
        let scale = 1.0 / n as f64;
        out.clear();
        out.extend(self.acc.iter().map(|v| v.re * scale + constant));
        Ok(())
    }
}

struct QueryChannel {
    channel: usize,
    weight: f64,
    norm: f64,
    conj_spectrum: Vec<Complex64>,
}

/// Query spectra computed once and reused against every candidate.
pub struct PreparedQuery {
    n_bins: usize,
    channels: Vec<QueryChannel>,
    flattened: bool,
    flat_norm: f64,
}

impl PreparedQuery {
    /// `reference` supplies the candidate-side active mask (every database
    /// record shares one).
    pub fn new(
        corr: &mut Correlator,
        query: &RadialDescriptor,
        reference: &RadialDescriptor,
        cfg: &MatchConfig,
    ) -> Result<Self> {
        let plan = cfg.plan(query, reference)?;
        let channels: Vec<QueryChannel> = plan
            .into_iter()
            .map(|(c, weight)| {
                let row = query.row(c);
                QueryChannel {
                    channel: c,
                    weight,
                    norm: norm(row),
                    conj_spectrum: corr.spectrum(row).into_iter().map(|v| v.conj()).collect(),
                }
            })
            .collect();
        let flat_norm = channels.iter().map(|c| c.norm * c.norm).sum::<f64>().sqrt();
        Ok(Self {
            n_bins: query.n_bins(),
            channels,
            flattened: cfg.aggregation == Aggregation::Flattened,
            flat_norm,
        })
    }
}

/// Similarity at every shift `0..N_s`, computed in the frequency domain.
pub fn correlation_curve(
    a: &RadialDescriptor,
    b: &RadialDescriptor,
    cfg: &MatchConfig,
) -> Result<Vec<f64>> {
    let mut corr = Correlator::new(a.n_bins());
    let q = PreparedQuery::new(&mut corr, a, b, cfg)?;
    let mut out = Vec::with_capacity(a.n_bins());
    corr.curve_into(&q, b, &mut out)?;
    Ok(out)
}

/// Best cyclic shift of `b` against `a`; ties go to the smallest shift.
pub fn best_shift_fft(
    a: &RadialDescriptor,
    b: &RadialDescriptor,
    cfg: &MatchConfig,
) -> Result<(usize, f64)> {
    Ok(argmax_first(&correlation_curve(a, b, cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub candidate_index: usize,
    pub position: [f64; 2],
    pub best_shift: usize,
    pub yaw_estimate: f64,
    pub score: f64,
}

/// Candidate indices surviving the transition-signature pre-filter.
pub fn prefilter(query: &RadialDescriptor, db: &Database, tolerance: Option<u32>) -> Vec<usize> {
    let tq = query.transition_count();
    (0..db.len())
        .filter(|&i| {
            tolerance.is_none_or(|t| db.entries[i].descriptor.transition_count().abs_diff(tq) <= t)
        })
        .collect()
}

/// Scores every surviving candidate over all shifts, best first.
pub fn match_query(
    query: &RadialDescriptor,
    db: &Database,
    cfg: &MatchConfig,
) -> Result<Vec<MatchResult>> {
    let mut all = score_all(query, db, cfg)?;
    all.truncate(cfg.top_k);
    Ok(all)
}

/// Like [`match_query`] but returns the complete ranking regardless of `top_k`.
pub fn score_all(
    query: &RadialDescriptor,
    db: &Database,
    cfg: &MatchConfig,
) -> Result<Vec<MatchResult>> {
    cfg.validate()?;
    if db.is_empty() {
        return Err(CompassError::EmptyDatabase);
    }
    let n = db.n_bins();
    if query.n_bins() != n {
        return Err(CompassError::ShapeMismatch(format!(
            "query has {} bins, database {}",
            query.n_bins(),
            n
        )));
    }
    let keep = prefilter(query, db, cfg.prefilter_tolerance);
    if keep.is_empty() {
        return Err(CompassError::EmptyAfterFilter {
            tolerance: cfg.prefilter_tolerance.unwrap_or(0),
        });
    }
    let mut corr = Correlator::new(n);
    let prepared = PreparedQuery::new(&mut corr, query, &db.entries[keep[0]].descriptor, cfg)?;
    let anchor = db.grid.yaw_anchor;
    let mut results: Vec<MatchResult> = keep
        .par_iter()
        .map_init(
            || (Correlator::new(n), Vec::with_capacity(n)),
            |(corr, curve), &i| {
                let entry = &db.entries[i];
                corr.curve_into(&prepared, &entry.descriptor, curve)?;
                let (shift, score) = argmax_first(curve);
                Ok(MatchResult {
                    candidate_index: i,
                    position: entry.position,
                    best_shift: shift,
                    yaw_estimate: normalize_angle(anchor + TAU * shift as f64 / n as f64),
                    score,
                })
            },
        )
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.candidate_index.cmp(&b.candidate_index))
    });
    Ok(results)
}

/// Number and fraction of bins whose hit-type labels agree between `a` and
/// `b.shifted(shift)`.
pub fn hit_type_agreement(
    a: &RadialDescriptor,
    b: &RadialDescriptor,
    shift: i64,
) -> Result<(usize, f64)> {
    let n = a.n_bins();
    if n != b.n_bins() {
        return Err(CompassError::ShapeMismatch(format!("{} vs {} bins", n, b.n_bins())));
    }
    let s = shift.rem_euclid(n as i64) as usize;
    let (ra, rb) = (a.row(CH_HIT_TYPE), b.row(CH_HIT_TYPE));
    let agree = (0..n)
        .filter(|&j| HitType::from_value(ra[j]) == HitType::from_value(rb[(j + s) % n]))
        .count();
    Ok((agree, agree as f64 / n as f64))
}
