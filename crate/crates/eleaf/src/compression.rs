//! Compression heads applied to pooled band energies: per-channel energy
//! normalization (`pcen`) and the log / median-subtract / temporal-batch-norm
//! stack (`lmtbn_forward`).
//!
//! Learnable parameters are always stored in `f64` regardless of the feature
//! precision; per-element dynamics are evaluated in `f64` and cast back, so
//! both precisions share one numeric path for the recurrences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::FeatureMap;
use crate::{cast, Sample};

/// Per-band learnables of the energy-normalization head.
///
/// `epsilon` is a fixed numerical guard, not a learnable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcenParams {
    /// Automatic-gain-control strength α per band.
    pub alpha: Vec<f64>,
    /// Stabilizing offset δ per band.
    pub delta: Vec<f64>,
    /// Compression exponent r per band.
    pub root: Vec<f64>,
    /// Smoother coefficient s per band.
    pub smooth: Vec<f64>,
    /// Fixed divisor guard ε.
    pub epsilon: f64,
}

impl PcenParams {
    /// Standard initialization: α = 0.96, δ = 2, r = 0.5, s = 0.04, ε = 1e-12.
    pub fn new(n_bands: usize) -> Self {
        PcenParams {
            alpha: vec![0.96; n_bands],
            delta: vec![2.0; n_bands],
            root: vec![0.5; n_bands],
            smooth: vec![0.04; n_bands],
            epsilon: 1e-12,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        if self.delta.len() != n || self.root.len() != n || self.smooth.len() != n {
            return Err(Error::Config(
                "alpha, delta, root, and smooth must have one entry per band".into(),
            ));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.alpha) || !finite(&self.delta) || !finite(&self.root) || !finite(&self.smooth)
        {
            return Err(Error::Config("non-finite energy-normalization parameter".into()));
        }
        if self.alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if self.root.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("root must be positive".into()));
        }
        if self.smooth.iter().any(|&s| !(0.0 < s && s <= 1.0)) {
            return Err(Error::Config("smooth must lie in (0, 1]".into()));
        }
        if self.delta.iter().any(|&d| d < 0.0) {
            return Err(Error::Config("delta must be non-negative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Per-channel energy normalization.
///
/// Along each band row, a first-order IIR smoother `m_0 = x_0`,
/// `m_t = (1−s)·m_{t−1} + s·x_t` tracks the energy envelope, and the output
/// is `y_t = (x_t / (ε + m_t)^α + δ)^r − δ^r`. Negative energies are a
/// domain error.
pub fn pcen<S: Sample>(features: &FeatureMap<S>, params: &PcenParams) -> Result<FeatureMap<S>> {
    params.validate()?;
    if features.channels != 1 {
        return Err(Error::Shape(format!(
            "energy normalization expects 1 channel, got {}",
            features.channels
        )));
    }
    if features.bands != params.n_bands() {
        return Err(Error::Shape(format!(
            "feature map has {} bands but parameters cover {}",
            features.bands,
            params.n_bands()
        )));
    }
    if features.frames == 0 {
        return Err(Error::Shape("feature map has no frames".into()));
    }
    let mut out = features.clone();
    let eps = params.epsilon;
    for b in 0..features.batch {
        for band in 0..features.bands {
            let (alpha, delta, root, s) = (
                params.alpha[band],
                params.delta[band],
                params.root[band],
                params.smooth[band],
            );
            let delta_root = delta.powf(root);
            let row_start = features.idx(b, 0, band, 0);
            let mut m = 0.0f64;
            for t in 0..features.frames {
                let x = features.data[row_start + t].to_f64().unwrap();
                if x < 0.0 {
                    return Err(Error::Domain(format!(
                        "negative energy {x} at band {band}, frame {t}"
                    )));
                }
                m = if t == 0 { x } else { (1.0 - s) * m + s * x };
                let u = x / (eps + m).powf(alpha) + delta;
                out.data[row_start + t] = cast::<S>(u.powf(root) - delta_root);
            }
        }
    }
    Ok(out)
}

/// Parameters and state of the log / median-subtract / temporal-batch-norm
/// head. Normalization statistics are kept per (channel, band) pair, indexed
/// `channel * n_bands + band`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmtbnParams {
    /// Log-compression exponent a per band: `y = ln(1 + 10^a · x)`.
    pub gain: Vec<f64>,
    /// Batch-norm scale per (channel, band).
    pub gamma: Vec<f64>,
    /// Batch-norm shift per (channel, band).
    pub beta: Vec<f64>,
    /// Running mean per (channel, band), updated in training mode.
    pub running_mean: Vec<f64>,
    /// Running variance per (channel, band); holds the unbiased estimate.
    pub running_var: Vec<f64>,
    /// Fixed variance guard.
    pub bn_epsilon: f64,
    /// Fraction of the fresh batch statistic blended into the running value.
    pub bn_momentum: f64,
    /// Number of training batches folded into the running statistics.
    pub batches_seen: u64,
}

impl LmtbnParams {
    /// Standard initialization for the two-channel stack: a = 5 per band,
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn new(n_bands: usize) -> Self {
        LmtbnParams {
            gain: vec![5.0; n_bands],
            gamma: vec![1.0; 2 * n_bands],
            beta: vec![0.0; 2 * n_bands],
            running_mean: vec![0.0; 2 * n_bands],
            running_var: vec![1.0; 2 * n_bands],
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            batches_seen: 0,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.gain.len()
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.gamma.len();
        if self.beta.len() != rows
            || self.running_mean.len() != rows
            || self.running_var.len() != rows
        {
            return Err(Error::Config(
                "gamma, beta, and running statistics must have equal lengths".into(),
            ));
        }
        if !(self.bn_epsilon > 0.0) {
            return Err(Error::Config("bn_epsilon must be positive".into()));
        }
        if !(0.0 < self.bn_momentum && self.bn_momentum <= 1.0) {
            return Err(Error::Config("bn_momentum must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Whether temporal batch norm uses fresh batch statistics (updating the
/// running ones) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Compressive log transform `y = ln(1 + 10^a · x)` with a per-band exponent.
pub fn log_compress<S: Sample>(features: &FeatureMap<S>, gain: &[f64]) -> Result<FeatureMap<S>> {
    if features.channels != 1 {
        return Err(Error::Shape(format!(
            "log compression expects 1 channel, got {}",
            features.channels
        )));
    }
    if features.bands != gain.len() {
        return Err(Error::Shape(format!(
            "feature map has {} bands but gain covers {}",
            features.bands,
            gain.len()
        )));
    }
    let mut out = features.clone();
    for b in 0..features.batch {
        for band in 0..features.bands {
            let scale = 10f64.powf(gain[band]);
            let start = features.idx(b, 0, band, 0);
            for t in 0..features.frames {
                let x = features.data[start + t].to_f64().unwrap();
                if x < 0.0 {
                    return Err(Error::Domain(format!(
                        "negative energy {x} at band {band}, frame {t}"
                    )));
                }
                out.data[start + t] = cast::<S>((scale * x).ln_1p());
            }
        }
    }
    Ok(out)
}

/// Indices of the frame(s) defining the median of `row`: the middle element
/// in sorted order, or the lower and upper middle pair for even lengths (the
/// median is then their average). Ties resolve by original frame order.
/// `row` must be non-empty and finite.
pub fn median_frame_indices<S: Sample>(row: &[S]) -> (usize, Option<usize>) {
    debug_assert!(!row.is_empty());
    let n = row.len();
    // Rank selection instead of a full sort: the comparison key is
    // (value, index) — a total order — so the selected ranks are exactly
    // what a stable value sort would yield, in O(n) per row.
    let by_value_then_index = |a: &usize, b: &usize| {
        row[*a]
            .partial_cmp(&row[*b])
            .expect("finite values")
            .then(a.cmp(b))
    };
    let mut order: Vec<usize> = (0..n).collect();
    if n % 2 == 1 {
        let (_, mid, _) = order.select_nth_unstable_by(n / 2, by_value_then_index);
        (*mid, None)
    } else {
        let (_, lower, upper_half) = order.select_nth_unstable_by(n / 2 - 1, by_value_then_index);
        let lower = *lower;
        let upper = *upper_half
            .iter()
            .min_by(|a, b| by_value_then_index(a, b))
            .expect("even length leaves an upper half");
        (lower, Some(upper))
    }
}

/// Subtracts each band row's median over frames.
pub fn median_subtract<S: Sample>(features: &FeatureMap<S>) -> Result<FeatureMap<S>> {
    if features.channels != 1 {
        return Err(Error::Shape(format!(
            "median subtraction expects 1 channel, got {}",
            features.channels
        )));
    }
    if features.frames == 0 {
        return Err(Error::Shape("feature map has no frames".into()));
    }
    let mut out = features.clone();
    for b in 0..features.batch {
        for band in 0..features.bands {
            let row = features.band(b, 0, band);
            let median = match median_frame_indices(row) {
                (i, None) => row[i],
                (i, Some(j)) => (row[i] + row[j]) / cast::<S>(2.0),
            };
            for v in out.band_mut(b, 0, band) {
                *v = *v - median;
            }
        }
    }
    Ok(out)
}

/// Stacks two single-channel maps of identical shape into a two-channel map:
/// channel 0 is `subtracted`, channel 1 is `original`.
pub fn stack_channels<S: Sample>(
    subtracted: &FeatureMap<S>,
    original: &FeatureMap<S>,
) -> Result<FeatureMap<S>> {
    if subtracted.channels != 1 || original.channels != 1 {
        return Err(Error::Shape("stacking expects single-channel inputs".into()));
    }
    if (subtracted.batch, subtracted.bands, subtracted.frames)
        != (original.batch, original.bands, original.frames)
    {
        return Err(Error::Shape("stacked maps must share a shape".into()));
    }
    let mut out = FeatureMap::zeros(
        subtracted.batch,
        2,
        subtracted.bands,
        subtracted.frames,
        subtracted.frame_hop,
        subtracted.sample_rate,
    );
    for b in 0..out.batch {
        for band in 0..out.bands {
            out.band_mut(b, 0, band).copy_from_slice(subtracted.band(b, 0, band));
            out.band_mut(b, 1, band).copy_from_slice(original.band(b, 0, band));
        }
    }
    Ok(out)
}

/// Batch normalization over the batch and frame axes, with independent
/// statistics per (channel, band) pair.
///
/// Training mode normalizes with the biased batch variance and blends the
/// unbiased variance into `running_var` (`new = (1−momentum)·old +
/// momentum·batch`). Evaluation mode uses the running statistics and fails
/// with a state error if no training batch has been seen.
pub fn temporal_batch_norm<S: Sample>(
    features: &FeatureMap<S>,
    params: &mut LmtbnParams,
    mode: BnMode,
) -> Result<FeatureMap<S>> {
    let mut out = features.clone();
    batch_norm_in_place(&mut out, params, mode)?;
    Ok(out)
}

/// The normalization itself, applied in place. For each (channel, band) row
/// both statistics passes complete before any element of that row is
/// rewritten, so reading and writing the same buffer is sound.
pub(crate) fn batch_norm_in_place<S: Sample>(
    out: &mut FeatureMap<S>,
    params: &mut LmtbnParams,
    mode: BnMode,
) -> Result<()> {
    params.validate()?;
    let rows = out.channels * out.bands;
    if params.gamma.len() != rows {
        return Err(Error::Shape(format!(
            "normalization tracks {} (channel, band) rows but the map has {rows}",
            params.gamma.len()
        )));
    }
    let n = out.batch * out.frames;
    if mode == BnMode::Train && n < 2 {
        return Err(Error::Shape(format!(
            "training statistics need at least 2 values per row, got {n}"
        )));
    }
    if mode == BnMode::Eval && params.batches_seen == 0 {
        return Err(Error::State(
            "evaluation-mode normalization requested before any training batch".into(),
        ));
    }
    for c in 0..out.channels {
        for band in 0..out.bands {
            let row = c * out.bands + band;
            let (mean, var) = match mode {
                BnMode::Train => {
                    let mut sum = 0.0f64;
                    for b in 0..out.batch {
                        for &v in out.band(b, c, band) {
                            sum += v.to_f64().unwrap();
                        }
                    }
                    let mean = sum / n as f64;
                    let mut sq = 0.0f64;
                    for b in 0..out.batch {
                        for &v in out.band(b, c, band) {
                            let d = v.to_f64().unwrap() - mean;
                            sq += d * d;
                        }
                    }
                    let biased = sq / n as f64;
                    let unbiased = sq / (n - 1) as f64;
                    let mom = params.bn_momentum;
                    params.running_mean[row] = (1.0 - mom) * params.running_mean[row] + mom * mean;
                    params.running_var[row] = (1.0 - mom) * params.running_var[row] + mom * unbiased;
                    (mean, biased)
                }
                BnMode::Eval => (params.running_mean[row], params.running_var[row]),
            };
            let scale = params.gamma[row] / (var + params.bn_epsilon).sqrt();
            let shift = params.beta[row];
            for b in 0..out.batch {
                for v in out.band_mut(b, c, band) {
                    let x = v.to_f64().unwrap();
                    *v = cast::<S>((x - mean) * scale + shift);
                }
            }
        }
    }
    if mode == BnMode::Train {
        params.batches_seen += 1;
    }
    Ok(())
}

/// Builds the pre-normalization two-channel stack in one pass: channel 1 is
/// the log-compressed energies, channel 0 the median-subtracted copy. The
/// result is identical to running [`log_compress`], [`median_subtract`], and
/// [`stack_channels`] individually.
pub(crate) fn lmtbn_stack<S: Sample>(
    features: &FeatureMap<S>,
    params: &LmtbnParams,
) -> Result<FeatureMap<S>> {
    if features.bands != params.n_bands() {
        return Err(Error::Shape(format!(
            "feature map has {} bands but parameters cover {}",
            features.bands,
            params.n_bands()
        )));
    }
    if features.channels != 1 {
        return Err(Error::Shape(format!(
            "log compression expects 1 channel, got {}",
            features.channels
        )));
    }
    if features.frames == 0 {
        return Err(Error::Shape("feature map has no frames".into()));
    }
    let mut out = FeatureMap::<S>::zeros(
        features.batch,
        2,
        features.bands,
        features.frames,
        features.frame_hop,
        features.sample_rate,
    );
    for b in 0..features.batch {
        for band in 0..features.bands {
            let scale = 10f64.powf(params.gain[band]);
            let src = features.idx(b, 0, band, 0);
            let start1 = out.idx(b, 1, band, 0);
            for t in 0..features.frames {
                let x = features.data[src + t].to_f64().unwrap();
                if x < 0.0 {
                    return Err(Error::Domain(format!(
                        "negative energy {x} at band {band}, frame {t}"
                    )));
                }
                out.data[start1 + t] = cast::<S>((scale * x).ln_1p());
            }
            let median = {
                let row = out.band(b, 1, band);
                let (i, j) = median_frame_indices(row);
                match j {
                    None => row[i],
                    Some(j) => (row[i] + row[j]) / cast::<S>(2.0),
                }
            };
            let start0 = out.idx(b, 0, band, 0);
            for t in 0..features.frames {
                out.data[start0 + t] = out.data[start1 + t] - median;
            }
        }
    }
    Ok(out)
}

/// Full log / median-subtract / temporal-batch-norm head: log-compresses the
/// energies, stacks the median-subtracted result (channel 0) with the plain
/// log energies (channel 1), and batch-normalizes each (channel, band) row.
///
/// Computes the stacked map in one pass instead of materializing the three
/// intermediate maps; the result is identical to running the stages
/// individually.
pub fn lmtbn_forward<S: Sample>(
    features: &FeatureMap<S>,
    params: &mut LmtbnParams,
    mode: BnMode,
) -> Result<FeatureMap<S>> {
    let mut out = lmtbn_stack(features, params)?;
    batch_norm_in_place(&mut out, params, mode)?;
    Ok(out)
}
