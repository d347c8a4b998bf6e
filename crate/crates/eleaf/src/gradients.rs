//! Reverse-mode parameter gradients for the full pipeline, plus a
//! finite-difference checker that verifies them scalar by scalar.
//!
//! Everything here runs in `f64`. The group plan is treated as frozen
//! structure: gradients flow through kernel values, pooling windows, and head
//! parameters, never through the integer rounding that produced sizes and
//! strides. Both frontends share one code path — the dense reference is the
//! single-group full-length plan, which produces bitwise-identical features.

use std::f64::consts::{LN_10, PI};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compression::{
    batch_norm_in_place, lmtbn_stack, log_compress, median_frame_indices, pcen, BnMode,
};
use crate::config::{Frontend, Head, ModelParams};
use crate::error::{Error, Result};
use crate::filterbank::{
    gabor_kernel, gauss_kernel, plan_groups, pool_sigma, FilterbankParams, GroupPlan, PlanConfig,
};
use crate::pipeline::{correlate_same_into, eleaf_forward, AudioBatch, FeatureMap};

/// Gradients of a scalar loss with respect to every learnable parameter.
/// Filterbank entries are per filter; head entries are per band (or per
/// (channel, band) for the normalization scale and shift). Entries of the
/// inactive head are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGradients {
    pub d_center_freqs: Vec<f64>,
    pub d_inv_bandwidths: Vec<f64>,
    pub d_pool_scales: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub d_delta: Vec<f64>,
    pub d_root: Vec<f64>,
    pub d_smooth: Vec<f64>,
    pub d_gain: Vec<f64>,
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
}

impl ParamGradients {
    fn zeros(params: &ModelParams) -> Self {
        let n = params.bank.n_filters();
        ParamGradients {
            d_center_freqs: vec![0.0; n],
            d_inv_bandwidths: vec![0.0; n],
            d_pool_scales: vec![0.0; n],
            d_alpha: vec![0.0; n],
            d_delta: vec![0.0; n],
            d_root: vec![0.0; n],
            d_smooth: vec![0.0; n],
            d_gain: vec![0.0; n],
            d_gamma: vec![0.0; 2 * n],
            d_beta: vec![0.0; 2 * n],
        }
    }

    /// Scales every entry, e.g. for gradient averaging.
    pub fn scale(&mut self, factor: f64) {
        for v in [
            &mut self.d_center_freqs,
            &mut self.d_inv_bandwidths,
            &mut self.d_pool_scales,
            &mut self.d_alpha,
            &mut self.d_delta,
            &mut self.d_root,
            &mut self.d_smooth,
            &mut self.d_gain,
            &mut self.d_gamma,
            &mut self.d_beta,
        ] {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }
}

/// Computes the vector-Jacobian product of the pipeline at `params` against
/// `cotangent`, i.e. gradients of `Σ cotangent ⊙ output`.
///
/// The normalization head runs in training mode (batch statistics). Only
/// parameter gradients are produced; the audio input is treated as constant.
pub fn backward(
    audio: &AudioBatch<f64>,
    params: &ModelParams,
    plan: &GroupPlan,
    head: Head,
    cotangent: &FeatureMap<f64>,
) -> Result<ParamGradients> {
    let energies = eleaf_forward(audio, &params.bank, plan)?;
    check_cotangent(&energies, head, cotangent)?;
    let mut grads = ParamGradients::zeros(params);
    let d_energy = match head {
        Head::None => cotangent.clone(),
        Head::Pcen => pcen_backward(&energies, params, cotangent, &mut grads)?,
        Head::Lmtbn => lmtbn_backward(&energies, params, cotangent, &mut grads)?,
    };
    frontend_backward(audio, &params.bank, plan, &d_energy, &mut grads)?;
    Ok(grads)
}

/// One training step of the full pipeline: runs the frontend forward once and
/// reuses its activations for both the head output and the gradients of
/// `Σ cotangent ⊙ output`. The normalization head runs in training mode and
/// updates its running statistics, as it would during real training.
pub fn forward_backward(
    audio: &AudioBatch<f64>,
    params: &mut ModelParams,
    plan: &GroupPlan,
    head: Head,
    cotangent: &FeatureMap<f64>,
) -> Result<(FeatureMap<f64>, ParamGradients)> {
    let energies = eleaf_forward(audio, &params.bank, plan)?;
    check_cotangent(&energies, head, cotangent)?;
    let mut grads = ParamGradients::zeros(params);
    let (output, d_energy) = match head {
        Head::None => {
            let d_energy = cotangent.clone();
            (energies, d_energy)
        }
        Head::Pcen => {
            let output = pcen(&energies, &params.pcen)?;
            let d_energy = pcen_backward(&energies, params, cotangent, &mut grads)?;
            (output, d_energy)
        }
        Head::Lmtbn => {
            let stacked = lmtbn_stack(&energies, &params.lmtbn)?;
            let mut output = stacked.clone();
            batch_norm_in_place(&mut output, &mut params.lmtbn, BnMode::Train)?;
            let d_energy =
                lmtbn_backward_cached(&energies, &stacked, params, cotangent, &mut grads)?;
            (output, d_energy)
        }
    };
    frontend_backward(audio, &params.bank, plan, &d_energy, &mut grads)?;
    Ok((output, grads))
}

fn check_cotangent(
    energies: &FeatureMap<f64>,
    head: Head,
    cotangent: &FeatureMap<f64>,
) -> Result<()> {
    let expected_channels = if head == Head::Lmtbn { 2 } else { 1 };
    if (cotangent.batch, cotangent.channels, cotangent.bands, cotangent.frames)
        != (energies.batch, expected_channels, energies.bands, energies.frames)
    {
        return Err(Error::Shape(format!(
            "cotangent shape {}x{}x{}x{} does not match the {head} output \
             {}x{expected_channels}x{}x{}",
            cotangent.batch,
            cotangent.channels,
            cotangent.bands,
            cotangent.frames,
            energies.batch,
            energies.bands,
            energies.frames,
        )));
    }
    Ok(())
}

/// Backward pass of the energy-normalization head; returns the gradient on
/// the pooled energies and accumulates head parameter gradients.
fn pcen_backward(
    energies: &FeatureMap<f64>,
    params: &ModelParams,
    cotangent: &FeatureMap<f64>,
    grads: &mut ParamGradients,
) -> Result<FeatureMap<f64>> {
    let p = &params.pcen;
    p.validate()?;
    if energies.bands != p.n_bands() {
        return Err(Error::Shape(format!(
            "energies have {} bands but parameters cover {}",
            energies.bands,
            p.n_bands()
        )));
    }
    let frames = energies.frames;
    let mut d_x = FeatureMap::<f64>::zeros(
        energies.batch,
        1,
        energies.bands,
        frames,
        energies.frame_hop,
        energies.sample_rate,
    );
    let eps = p.epsilon;
    let mut m = vec![0.0f64; frames];
    let mut d_m = vec![0.0f64; frames];
    for b in 0..energies.batch {
        for band in 0..energies.bands {
            let (alpha, delta, root, s) =
                (p.alpha[band], p.delta[band], p.root[band], p.smooth[band]);
            let row = energies.band(b, 0, band);
            let cot = cotangent.band(b, 0, band);
            if let Some(t) = row.iter().position(|&x| x < 0.0) {
                return Err(Error::Domain(format!(
                    "negative energy {} at band {band}, frame {t}",
                    row[t]
                )));
            }
            m[0] = row[0];
            for t in 1..frames {
                m[t] = (1.0 - s) * m[t - 1] + s * row[t];
            }
            let delta_ln_term = if delta > 0.0 {
                delta.powf(root) * delta.ln()
            } else {
                0.0
            };
            let delta_pow = if delta > 0.0 { delta.powf(root - 1.0) } else { 0.0 };
            let d_row = d_x.band_mut(b, 0, band);
            for t in 0..frames {
                let x = row[t];
                let base = eps + m[t];
                let g = base.powf(-alpha);
                let u = x * g + delta;
                let ybar = cot[t];
                let d_u = if u > 0.0 {
                    grads.d_root[band] += ybar * (u.powf(root) * u.ln() - delta_ln_term);
                    ybar * root * u.powf(root - 1.0)
                } else {
                    0.0
                };
                grads.d_delta[band] += d_u - ybar * root * delta_pow;
                d_row[t] += d_u * g;
                grads.d_alpha[band] -= d_u * x * g * base.ln();
                d_m[t] = -d_u * x * alpha * base.powf(-alpha - 1.0);
            }
            // Reverse scan through the smoother: gbar holds the total
            // sensitivity of the loss to m_t including all later frames.
            let mut gbar = 0.0f64;
            for t in (0..frames).rev() {
                gbar = d_m[t] + (1.0 - s) * gbar;
                if t >= 1 {
                    d_row[t] += s * gbar;
                    grads.d_smooth[band] += gbar * (row[t] - m[t - 1]);
                } else {
                    d_row[0] += gbar;
                }
            }
        }
    }
    Ok(d_x)
}

/// Backward pass of the log / median-subtract / temporal-batch-norm head in
/// training mode; returns the gradient on the pooled energies.
fn lmtbn_backward(
    energies: &FeatureMap<f64>,
    params: &ModelParams,
    cotangent: &FeatureMap<f64>,
    grads: &mut ParamGradients,
) -> Result<FeatureMap<f64>> {
    let p = &params.lmtbn;
    p.validate()?;
    if energies.bands != p.n_bands() {
        return Err(Error::Shape(format!(
            "energies have {} bands but parameters cover {}",
            energies.bands,
            p.n_bands()
        )));
    }
    let n = energies.batch * energies.frames;
    if n < 2 {
        return Err(Error::Shape(format!(
            "training statistics need at least 2 values per row, got {n}"
        )));
    }
    let stacked = lmtbn_stack(energies, p)?;
    lmtbn_backward_cached(energies, &stacked, params, cotangent, grads)
}

/// [`lmtbn_backward`] with the pre-normalization stack already available, as
/// it is after a cached forward pass. Recomputes only the batch statistics.
fn lmtbn_backward_cached(
    energies: &FeatureMap<f64>,
    stacked: &FeatureMap<f64>,
    params: &ModelParams,
    cotangent: &FeatureMap<f64>,
    grads: &mut ParamGradients,
) -> Result<FeatureMap<f64>> {
    let p = &params.lmtbn;
    let bands = energies.bands;
    let batch = energies.batch;
    let frames = energies.frames;
    let n = batch * frames;

    // Medians of every (item, band) log row: the indices route the median's
    // own gradient back to its defining frame(s).
    let mut med_index = vec![(0usize, None); batch * bands];
    for b in 0..batch {
        for band in 0..bands {
            let row = stacked.band(b, 1, band);
            med_index[b * bands + band] = median_frame_indices(row);
        }
    }

    // Batch-norm backward per (channel, band) row, recomputing the same
    // batch statistics the forward pass uses in training mode: channel 0
    // holds `logged − median`, channel 1 the log energies themselves.
    let mut d_logged = FeatureMap::<f64>::zeros(
        batch,
        1,
        bands,
        frames,
        energies.frame_hop,
        energies.sample_rate,
    );
    let mut d_median = vec![0.0f64; batch * bands];
    let nf = n as f64;
    for c in 0..2 {
        for band in 0..bands {
            let row = c * bands + band;
            let mut sum = 0.0f64;
            for b in 0..batch {
                for &x in stacked.band(b, c, band) {
                    sum += x;
                }
            }
            let mean = sum / nf;
            let mut sq = 0.0f64;
            for b in 0..batch {
                for &x in stacked.band(b, c, band) {
                    let d = x - mean;
                    sq += d * d;
                }
            }
            let inv_std = 1.0 / (sq / nf + p.bn_epsilon).sqrt();
            let gamma = p.gamma[row];
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for b in 0..batch {
                let xs = stacked.band(b, c, band);
                let dys = cotangent.band(b, c, band);
                for (x, dy) in xs.iter().zip(dys) {
                    let xhat = (x - mean) * inv_std;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
            }
            grads.d_beta[row] += sum_dy;
            grads.d_gamma[row] += sum_dy_xhat;
            let mean_dy = sum_dy / nf;
            let mean_dy_xhat = sum_dy_xhat / nf;
            for b in 0..batch {
                let src = stacked.idx(b, c, band, 0);
                let dst = d_logged.idx(b, 0, band, 0);
                let cot_start = cotangent.idx(b, c, band, 0);
                for t in 0..frames {
                    let x = stacked.data[src + t];
                    let xhat = (x - mean) * inv_std;
                    let dy = cotangent.data[cot_start + t];
                    let contrib = gamma * inv_std * (dy - mean_dy - xhat * mean_dy_xhat);
                    d_logged.data[dst + t] += contrib;
                    if c == 0 {
                        // The subtracted median collects the negated total
                        // of its channel's gradient.
                        d_median[b * bands + band] -= contrib;
                    }
                }
            }
        }
    }

    // Route each median's gradient to its defining frame(s), after both
    // channels have deposited their per-frame contributions.
    for b in 0..batch {
        for band in 0..bands {
            let d_med = d_median[b * bands + band];
            let start = d_logged.idx(b, 0, band, 0);
            match med_index[b * bands + band] {
                (i, None) => d_logged.data[start + i] += d_med,
                (i, Some(j)) => {
                    d_logged.data[start + i] += 0.5 * d_med;
                    d_logged.data[start + j] += 0.5 * d_med;
                }
            }
        }
    }

    // Log backward, in place: y = ln(1 + 10^a x).
    let mut d_x = d_logged;
    for b in 0..batch {
        for band in 0..bands {
            let scale = 10f64.powf(p.gain[band]);
            let xs = energies.band(b, 0, band);
            let start = d_x.idx(b, 0, band, 0);
            for (t, &x) in xs.iter().enumerate() {
                let dl = d_x.data[start + t];
                let denom = 1.0 + scale * x;
                d_x.data[start + t] = dl * scale / denom;
                grads.d_gain[band] += dl * x * scale * LN_10 / denom;
            }
        }
    }
    Ok(d_x)
}

/// Backward pass of the grouped frontend: routes pooled-energy gradients
/// through pooling, squared modulus, and convolution into the filter
/// parameters, recomputing forward intermediates per (item, filter).
fn frontend_backward(
    audio: &AudioBatch<f64>,
    bank: &FilterbankParams,
    plan: &GroupPlan,
    d_energy: &FeatureMap<f64>,
    grads: &mut ParamGradients,
) -> Result<()> {
    let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for g in &plan.groups {
        let k_len = g.kernel_size;
        let h_c = (k_len - 1) / 2;
        let h_p = (g.pool_size - 1) / 2;
        for i in g.lo..g.hi {
            let (nu, sigma, sp) = (
                bank.center_freqs[i],
                bank.inv_bandwidths[i],
                bank.pool_scales[i],
            );
            let kernel = gabor_kernel::<f64>(nu, sigma, k_len)?;
            let window = gauss_kernel::<f64>(sp, g.pool_size, plan.window_max, g.conv_stride)?;
            let mut d_window = vec![0.0f64; g.pool_size];
            let mut d_kre = vec![0.0f64; k_len];
            let mut d_kim = vec![0.0f64; k_len];
            for b in 0..audio.batch {
                let x = audio.item(b);
                correlate_same_into(x, &kernel.re, g.conv_stride, &mut re);
                correlate_same_into(x, &kernel.im, g.conv_stride, &mut im);
                let e_len = re.len();
                let energy: Vec<f64> =
                    re.iter().zip(&im).map(|(&r, &i)| r * r + i * i).collect();
                let d_p = d_energy.band(b, 0, i);
                // Pooling backward: scatter into the energy row and gather
                // the window gradient, with the same edge clamping as the
                // forward correlation.
                let mut d_e = vec![0.0f64; e_len];
                for (o, &ybar) in d_p.iter().enumerate() {
                    let center = o * g.pool_stride;
                    let k_lo = h_p.saturating_sub(center);
                    let k_hi = g.pool_size.min(e_len + h_p - center);
                    for k in k_lo..k_hi {
                        let j = center + k - h_p;
                        d_e[j] += ybar * window[k];
                        d_window[k] += ybar * energy[j];
                    }
                }
                // Squared-modulus backward, then convolution weight grads.
                for o in 0..e_len {
                    let d_re = 2.0 * re[o] * d_e[o];
                    let d_im = 2.0 * im[o] * d_e[o];
                    if d_re == 0.0 && d_im == 0.0 {
                        continue;
                    }
                    let center = o * g.conv_stride;
                    let k_lo = h_c.saturating_sub(center);
                    let k_hi = k_len.min(audio.time + h_c - center);
                    let x_lo = center + k_lo - h_c;
                    let xs = &x[x_lo..x_lo + (k_hi - k_lo)];
                    for (k, &xv) in (k_lo..k_hi).zip(xs) {
                        d_kre[k] += d_re * xv;
                        d_kim[k] += d_im * xv;
                    }
                }
            }
            // Kernel-value gradients into the filter parameters.
            for k in 0..k_len {
                let t = k as f64 - h_c as f64;
                let env = inv_sqrt_2pi / sigma * (-t * t / (2.0 * sigma * sigma)).exp();
                let (sinv, cosv) = (nu * t).sin_cos();
                grads.d_center_freqs[i] += t * env * (d_kim[k] * cosv - d_kre[k] * sinv);
                grads.d_inv_bandwidths[i] += (d_kre[k] * cosv + d_kim[k] * sinv)
                    * env
                    * (t * t / (sigma * sigma * sigma) - 1.0 / sigma);
            }
            // Window-value gradients into the pooling scale.
            let st = pool_sigma(sp, plan.window_max, g.conv_stride);
            let mut d_st = 0.0f64;
            for k in 0..g.pool_size {
                let t = k as f64 - h_p as f64;
                d_st += d_window[k] * window[k] * (t * t / (st * st * st) - 1.0 / st);
            }
            grads.d_pool_scales[i] +=
                d_st * (plan.window_max - 1) as f64 / 2.0 / g.conv_stride as f64;
        }
    }
    Ok(())
}

/// Clamps every learnable into its valid open region; returns how many
/// values were altered. Normalization scale, shift, and log gain are
/// unconstrained.
pub fn project_constraints(params: &mut ModelParams, window_max: usize) -> usize {
    let mut changed = 0;
    let mut clamp = |v: &mut f64, lo: f64, hi: f64| {
        let c = v.clamp(lo, hi);
        if c != *v {
            *v = c;
            changed += 1;
        }
    };
    for v in &mut params.bank.center_freqs {
        clamp(v, 1e-4, PI - 1e-4);
    }
    for v in &mut params.bank.inv_bandwidths {
        clamp(v, 0.5, window_max as f64);
    }
    for v in &mut params.bank.pool_scales {
        clamp(v, 1e-3, 1.0 - 1e-3);
    }
    for v in &mut params.pcen.alpha {
        clamp(v, 1e-6, 1.0);
    }
    for v in &mut params.pcen.root {
        clamp(v, 1e-6, 1.0);
    }
    for v in &mut params.pcen.smooth {
        clamp(v, 1e-4, 1.0 - 1e-4);
    }
    for v in &mut params.pcen.delta {
        clamp(v, 1e-6, f64::INFINITY);
    }
    changed
}

/// Which learnable vector a finite-difference scalar belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParamClass {
    CenterFreq,
    InvBandwidth,
    PoolScale,
    Alpha,
    Delta,
    Root,
    Smooth,
    Gain,
    Gamma,
    Beta,
}

impl ParamClass {
    fn name(self) -> &'static str {
        match self {
            ParamClass::CenterFreq => "center_freq",
            ParamClass::InvBandwidth => "inv_bandwidth",
            ParamClass::PoolScale => "pool_scale",
            ParamClass::Alpha => "alpha",
            ParamClass::Delta => "delta",
            ParamClass::Root => "root",
            ParamClass::Smooth => "smooth",
            ParamClass::Gain => "gain",
            ParamClass::Gamma => "gamma",
            ParamClass::Beta => "beta",
        }
    }

    /// Whether nudging this parameter can reorder the values a median is
    /// taken over (only relevant under the median-subtracting head).
    fn can_move_median(self) -> bool {
        matches!(
            self,
            ParamClass::CenterFreq
                | ParamClass::InvBandwidth
                | ParamClass::PoolScale
                | ParamClass::Gain
        )
    }
}

fn active_classes(head: Head) -> Vec<ParamClass> {
    let mut classes = vec![
        ParamClass::CenterFreq,
        ParamClass::InvBandwidth,
        ParamClass::PoolScale,
    ];
    match head {
        Head::Pcen => classes.extend([
            ParamClass::Alpha,
            ParamClass::Delta,
            ParamClass::Root,
            ParamClass::Smooth,
        ]),
        Head::Lmtbn => classes.extend([ParamClass::Gain, ParamClass::Gamma, ParamClass::Beta]),
        Head::None => {}
    }
    classes
}

fn class_len(params: &ModelParams, class: ParamClass) -> usize {
    match class {
        ParamClass::CenterFreq => params.bank.center_freqs.len(),
        ParamClass::InvBandwidth => params.bank.inv_bandwidths.len(),
        ParamClass::PoolScale => params.bank.pool_scales.len(),
        ParamClass::Alpha => params.pcen.alpha.len(),
        ParamClass::Delta => params.pcen.delta.len(),
        ParamClass::Root => params.pcen.root.len(),
        ParamClass::Smooth => params.pcen.smooth.len(),
        ParamClass::Gain => params.lmtbn.gain.len(),
        ParamClass::Gamma => params.lmtbn.gamma.len(),
        ParamClass::Beta => params.lmtbn.beta.len(),
    }
}

fn param_slot(params: &mut ModelParams, class: ParamClass, idx: usize) -> &mut f64 {
    match class {
        ParamClass::CenterFreq => &mut params.bank.center_freqs[idx],
        ParamClass::InvBandwidth => &mut params.bank.inv_bandwidths[idx],
        ParamClass::PoolScale => &mut params.bank.pool_scales[idx],
        ParamClass::Alpha => &mut params.pcen.alpha[idx],
        ParamClass::Delta => &mut params.pcen.delta[idx],
        ParamClass::Root => &mut params.pcen.root[idx],
        ParamClass::Smooth => &mut params.pcen.smooth[idx],
        ParamClass::Gain => &mut params.lmtbn.gain[idx],
        ParamClass::Gamma => &mut params.lmtbn.gamma[idx],
        ParamClass::Beta => &mut params.lmtbn.beta[idx],
    }
}

fn grad_value(grads: &ParamGradients, class: ParamClass, idx: usize) -> f64 {
    match class {
        ParamClass::CenterFreq => grads.d_center_freqs[idx],
        ParamClass::InvBandwidth => grads.d_inv_bandwidths[idx],
        ParamClass::PoolScale => grads.d_pool_scales[idx],
        ParamClass::Alpha => grads.d_alpha[idx],
        ParamClass::Delta => grads.d_delta[idx],
        ParamClass::Root => grads.d_root[idx],
        ParamClass::Smooth => grads.d_smooth[idx],
        ParamClass::Gain => grads.d_gain[idx],
        ParamClass::Gamma => grads.d_gamma[idx],
        ParamClass::Beta => grads.d_beta[idx],
    }
}

/// Settings for the finite-difference gradient check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    /// Input length in seconds.
    pub seconds: f64,
    pub sample_rate: u32,
    pub batch: usize,
    pub n_filters: usize,
    /// Random scalars verified per parameter class.
    pub scalars_per_class: usize,
    /// Relative-error threshold for a scalar to pass.
    pub tolerance: f64,
    /// Absolute central-difference step. The default balances truncation
    /// against roundoff for the stiffest parameters: a center-frequency nudge
    /// rotates kernel phase by `h·t` with `t` up to ±200 taps, so the
    /// third-order truncation term grows as `h²t²/6` — at 1e-4 that alone
    /// exceeds the tolerance, while at 1e-5 it sits near 7e-7 and the f64
    /// roundoff floor of the loss is still orders of magnitude lower.
    pub fd_step: f64,
    /// How many replacement scalars to try when a nudge moves a median.
    pub max_resamples: u32,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            seconds: 0.25,
            sample_rate: 16000,
            batch: 2,
            n_filters: 40,
            scalars_per_class: 5,
            tolerance: 1e-4,
            fd_step: 1e-5,
            max_resamples: 8,
        }
    }
}

/// Outcome of one finite-difference scalar comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// No perturbation-stable scalar was found for this slot; the numeric
    /// fields are zero and the comparison is excluded from the verdict.
    Skipped,
}

/// One verified scalar: analytic gradient vs central difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarCheck {
    pub analytic: f64,
    pub class: String,
    pub index: usize,
    pub numeric: f64,
    pub outcome: CheckOutcome,
    pub rel_error: f64,
    /// How many candidate indices were rejected for perturbation-unstable
    /// medians before this one.
    pub resampled: u32,
}

/// Full result of a gradient check run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checks: Vec<ScalarCheck>,
    pub compression: String,
    pub max_rel_error: f64,
    pub pass: bool,
    pub pipeline: String,
    pub seed: u64,
    pub tolerance: f64,
}

fn forward_output(
    audio: &AudioBatch<f64>,
    params: &ModelParams,
    plan: &GroupPlan,
    head: Head,
) -> Result<FeatureMap<f64>> {
    let energies = eleaf_forward(audio, &params.bank, plan)?;
    match head {
        Head::None => Ok(energies),
        Head::Pcen => pcen(&energies, &params.pcen),
        Head::Lmtbn => {
            // Clone the head state so repeated finite-difference evaluations
            // don't drift the running statistics.
            let mut p = params.lmtbn.clone();
            crate::compression::lmtbn_forward(&energies, &mut p, BnMode::Train)
        }
    }
}

/// Frame indices defining each (item, band) median of the log energies; used
/// to detect finite-difference steps that land on a median reordering.
fn median_signature(
    audio: &AudioBatch<f64>,
    params: &ModelParams,
    plan: &GroupPlan,
) -> Result<Vec<usize>> {
    let energies = eleaf_forward(audio, &params.bank, plan)?;
    let logged = log_compress(&energies, &params.lmtbn.gain)?;
    let mut sig = Vec::with_capacity(2 * logged.batch * logged.bands);
    for b in 0..logged.batch {
        for band in 0..logged.bands {
            let (i, j) = median_frame_indices(logged.band(b, 0, band));
            sig.push(i);
            sig.push(j.unwrap_or(usize::MAX));
        }
    }
    Ok(sig)
}

/// Runs the finite-difference check against the crate's own backward pass.
pub fn grad_check(frontend: Frontend, head: Head, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    grad_check_against(frontend, head, cfg, backward)
}

/// Runs the finite-difference check against an arbitrary gradient
/// implementation — the hook used to prove the checker catches wrong
/// gradients, not just bless correct ones.
pub fn grad_check_against<F>(
    frontend: Frontend,
    head: Head,
    cfg: &GradCheckConfig,
    backward_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&AudioBatch<f64>, &ModelParams, &GroupPlan, Head, &FeatureMap<f64>) -> Result<ParamGradients>,
{
    if cfg.scalars_per_class == 0 || cfg.seconds <= 0.0 || cfg.fd_step <= 0.0 {
        return Err(Error::Config(
            "gradient check needs positive scalars_per_class, seconds, and fd_step".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let time = ((cfg.seconds * cfg.sample_rate as f64).round() as usize).max(1);
    let samples: Vec<f64> = (0..cfg.batch * time)
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    let audio = AudioBatch::new(samples, cfg.batch, time, cfg.sample_rate)?;
    let fmax = (cfg.sample_rate as f64 / 2.0 - 200.0).max(100.0);
    let params = ModelParams::init(cfg.n_filters, 60.0, fmax, cfg.sample_rate)?;
    let plan = match frontend {
        Frontend::Leaf => GroupPlan::reference(cfg.n_filters, 401, 160),
        Frontend::Eleaf => plan_groups(
            &params.bank,
            &PlanConfig {
                n_groups: cfg.n_filters.min(4),
                ..PlanConfig::default()
            },
        )?,
    };

    let base_out = forward_output(&audio, &params, &plan, head)?;
    let mut cot = base_out.clone();
    for v in &mut cot.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    let loss = |p: &ModelParams| -> Result<f64> {
        let out = forward_output(&audio, p, &plan, head)?;
        Ok(out.data.iter().zip(&cot.data).map(|(a, b)| a * b).sum())
    };

    let analytic = backward_fn(&audio, &params, &plan, head, &cot)?;
    let base_sig = if head == Head::Lmtbn {
        Some(median_signature(&audio, &params, &plan)?)
    } else {
        None
    };

    let mut checks = Vec::new();
    for class in active_classes(head) {
        let len = class_len(&params, class);
        let mut pool: Vec<usize> = (0..len).collect();
        pool.shuffle(&mut rng);
        let quota = cfg.scalars_per_class.min(len);
        let mut pool_iter = pool.into_iter();
        for _ in 0..quota {
            let mut resampled = 0u32;
            let mut placed = false;
            while let Some(idx) = pool_iter.next() {
                let mut plus = params.clone();
                *param_slot(&mut plus, class, idx) += cfg.fd_step;
                let mut minus = params.clone();
                *param_slot(&mut minus, class, idx) -= cfg.fd_step;
                if let Some(base) = &base_sig {
                    if class.can_move_median() {
                        let stable = median_signature(&audio, &plus, &plan)? == *base
                            && median_signature(&audio, &minus, &plan)? == *base;
                        if !stable {
                            resampled += 1;
                            if resampled > cfg.max_resamples {
                                break;
                            }
                            continue;
                        }
                    }
                }
                let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * cfg.fd_step);
                let analytic_v = grad_value(&analytic, class, idx);
                let rel = (analytic_v - numeric).abs()
                    / analytic_v.abs().max(numeric.abs()).max(1e-8);
                checks.push(ScalarCheck {
                    class: class.name().to_string(),
                    index: idx,
                    analytic: analytic_v,
                    numeric,
                    rel_error: rel,
                    resampled,
                    outcome: if rel < cfg.tolerance {
                        CheckOutcome::Pass
                    } else {
                        CheckOutcome::Fail
                    },
                });
                placed = true;
                break;
            }
            if !placed {
                checks.push(ScalarCheck {
                    class: class.name().to_string(),
                    index: len,
                    analytic: 0.0,
                    numeric: 0.0,
                    rel_error: 0.0,
                    resampled,
                    outcome: CheckOutcome::Skipped,
                });
            }
        }
    }

    let max_rel_error = checks
        .iter()
        .filter(|c| c.outcome != CheckOutcome::Skipped)
        .map(|c| c.rel_error)
        .fold(0.0f64, f64::max);
    let pass = checks.iter().any(|c| c.outcome == CheckOutcome::Pass)
        && checks.iter().all(|c| c.outcome != CheckOutcome::Fail);
    Ok(GradCheckReport {
        pipeline: frontend.to_string(),
        compression: head.to_string(),
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        checks,
        max_rel_error,
        pass,
    })
}
