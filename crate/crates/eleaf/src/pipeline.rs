//! Forward DSP stages: complex filterbank convolution, squared modulus, and
//! Gaussian pooling with subsampling — composed into the dense reference
//! pipeline (`leaf_forward`) and the grouped strided pipeline
//! (`eleaf_forward`).
//!
//! Both convolution and pooling use "same" symmetric zero-padding, so every
//! stage maps a `len`-sample sequence to `⌈len / stride⌉` outputs and the
//! full pipeline yields `⌈time / hop⌉` frames regardless of the plan. All
//! stages are pure functions; strided outputs equal dense outputs subsampled,
//! bit for bit, because both share one inner kernel.

use crate::error::{Error, Result};
use crate::filterbank::{
    gabor_kernel, gauss_kernel, FilterbankParams, GaborKernel, GroupPlan,
};
use crate::Sample;

/// A batch of equal-length mono audio clips.
#[derive(Debug, Clone)]
pub struct AudioBatch<S> {
    /// Samples, row-major `[batch][time]`.
    pub samples: Vec<S>,
    pub batch: usize,
    pub time: usize,
    pub sample_rate: u32,
}

impl<S: Sample> AudioBatch<S> {
    /// Wraps a `[batch][time]` sample buffer, rejecting length mismatches and
    /// non-finite values.
    pub fn new(samples: Vec<S>, batch: usize, time: usize, sample_rate: u32) -> Result<Self> {
        if samples.len() != batch * time {
            return Err(Error::Shape(format!(
                "{} samples cannot form {batch} x {time} batch",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {pos}")));
        }
        Ok(AudioBatch {
            samples,
            batch,
            time,
            sample_rate,
        })
    }

    /// Wraps a single clip as a batch of one.
    pub fn from_mono(samples: Vec<S>, sample_rate: u32) -> Result<Self> {
        let time = samples.len();
        Self::new(samples, 1, time, sample_rate)
    }

    /// Samples of batch item `b`.
    pub fn item(&self, b: usize) -> &[S] {
        &self.samples[b * self.time..(b + 1) * self.time]
    }

    /// Converts the batch to another processing precision.
    pub fn to_precision<T: Sample>(&self) -> AudioBatch<T> {
        AudioBatch {
            samples: self
                .samples
                .iter()
                .map(|&v| crate::cast::<T>(v.to_f64().unwrap()))
                .collect(),
            batch: self.batch,
            time: self.time,
            sample_rate: self.sample_rate,
        }
    }
}

/// A real feature tensor, row-major `[batch][channel][band][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    pub data: Vec<S>,
    pub batch: usize,
    pub channels: usize,
    pub bands: usize,
    pub frames: usize,
    /// Frame spacing in input samples.
    pub frame_hop: usize,
    pub sample_rate: u32,
}

impl<S: Sample> FeatureMap<S> {
    pub fn zeros(
        batch: usize,
        channels: usize,
        bands: usize,
        frames: usize,
        frame_hop: usize,
        sample_rate: u32,
    ) -> Self {
        FeatureMap {
            data: vec![S::zero(); batch * channels * bands * frames],
            batch,
            channels,
            bands,
            frames,
            frame_hop,
            sample_rate,
        }
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, band: usize, frame: usize) -> usize {
        ((b * self.channels + c) * self.bands + band) * self.frames + frame
    }

    /// The frame row of (`b`, `c`, `band`); contiguous in memory.
    pub fn band(&self, b: usize, c: usize, band: usize) -> &[S] {
        let start = self.idx(b, c, band, 0);
        &self.data[start..start + self.frames]
    }

    pub fn band_mut(&mut self, b: usize, c: usize, band: usize) -> &mut [S] {
        let start = self.idx(b, c, band, 0);
        &mut self.data[start..start + self.frames]
    }
}

/// A complex sequence stored as separate real and imaginary parts.
#[derive(Debug, Clone)]
pub struct ComplexSeq<S> {
    pub re: Vec<S>,
    pub im: Vec<S>,
}

/// Dot product with four independent accumulators. The fixed association
/// order keeps results deterministic while letting the lanes run in parallel
/// (a single serial accumulator would bottleneck on add latency).
#[inline]
fn dot<S: Sample>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 4];
    let quads = a.len() / 4;
    for i in 0..quads {
        let a4 = &a[i * 4..i * 4 + 4];
        let b4 = &b[i * 4..i * 4 + 4];
        acc[0] = acc[0] + a4[0] * b4[0];
        acc[1] = acc[1] + a4[1] * b4[1];
        acc[2] = acc[2] + a4[2] * b4[2];
        acc[3] = acc[3] + a4[3] * b4[3];
    }
    let mut tail = S::zero();
    for i in quads * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// Same-padded strided cross-correlation of `x` with the odd-length window
/// `w`: `out[o] = Σ_k x[o·stride + k − (len(w)−1)/2] · w[k]`, out-of-range
/// taps reading zero. Output length is `⌈len(x) / stride⌉`.
pub(crate) fn correlate_same_into<S: Sample>(
    x: &[S],
    w: &[S],
    stride: usize,
    out: &mut Vec<S>,
) {
    debug_assert!(w.len() % 2 == 1 && stride >= 1);
    let n = x.len();
    let half = (w.len() - 1) / 2;
    let out_len = n.div_ceil(stride);
    out.clear();
    out.reserve(out_len);
    for o in 0..out_len {
        let center = o * stride;
        let k_lo = half.saturating_sub(center);
        let k_hi = w.len().min(n + half - center);
        let x_lo = center + k_lo - half;
        out.push(dot(&x[x_lo..x_lo + (k_hi - k_lo)], &w[k_lo..k_hi]));
    }
}

/// Convolves every batch item with a complex Gabor kernel at the given
/// stride (cross-correlation orientation, "same" zero-padding).
pub fn convolve_complex<S: Sample>(
    audio: &AudioBatch<S>,
    kernel: &GaborKernel<S>,
    stride: usize,
) -> Result<Vec<ComplexSeq<S>>> {
    if stride < 1 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    if kernel.len() % 2 == 0 {
        return Err(Error::Argument(format!(
            "kernel length {} must be odd",
            kernel.len()
        )));
    }
    let mut out = Vec::with_capacity(audio.batch);
    for b in 0..audio.batch {
        let x = audio.item(b);
        let mut re = Vec::new();
        let mut im = Vec::new();
        correlate_same_into(x, &kernel.re, stride, &mut re);
        correlate_same_into(x, &kernel.im, stride, &mut im);
        out.push(ComplexSeq { re, im });
    }
    Ok(out)
}

/// Elementwise squared modulus re² + im²; the band-energy nonlinearity.
pub fn squared_modulus<S: Sample>(z: &ComplexSeq<S>) -> Vec<S> {
    z.re.iter()
        .zip(&z.im)
        .map(|(&r, &i)| r * r + i * i)
        .collect()
}

#[inline]
fn squared_modulus_into<S: Sample>(re: &[S], im: &[S], out: &mut Vec<S>) {
    out.clear();
    out.extend(re.iter().zip(im).map(|(&r, &i)| r * r + i * i));
}

/// Same-padded strided correlation of an energy sequence with a pooling
/// window; keeps every `stride`-th output.
pub fn gauss_pool<S: Sample>(energy: &[S], window: &[S], stride: usize) -> Result<Vec<S>> {
    if stride < 1 {
        return Err(Error::Argument("pool stride must be at least 1".into()));
    }
    if window.len() % 2 == 0 {
        return Err(Error::Argument(format!(
            "pool window length {} must be odd",
            window.len()
        )));
    }
    let mut out = Vec::new();
    correlate_same_into(energy, window, stride, &mut out);
    Ok(out)
}

/// Dense reference pipeline: every filter at full `window_max` length and
/// stride 1, squared modulus, then `window_max`-tap Gaussian pooling
/// subsampled by `hop`. Written as a straightforward per-filter loop so it
/// can serve as an independent oracle for the grouped executor.
pub fn leaf_forward<S: Sample>(
    audio: &AudioBatch<S>,
    params: &FilterbankParams,
    window_max: usize,
    hop: usize,
) -> Result<FeatureMap<S>> {
    params.validate()?;
    if window_max % 2 == 0 || hop == 0 {
        return Err(Error::Config(format!(
            "reference geometry needs an odd window ({window_max}) and positive hop ({hop})"
        )));
    }
    let n = params.n_filters();
    let frames = audio.time.div_ceil(hop);
    let mut map = FeatureMap::zeros(audio.batch, 1, n, frames, hop, audio.sample_rate);
    let mut energy = Vec::new();
    for b in 0..audio.batch {
        let x = audio.item(b);
        for i in 0..n {
            let kernel: GaborKernel<S> =
                gabor_kernel(params.center_freqs[i], params.inv_bandwidths[i], window_max)?;
            let mut re = Vec::new();
            let mut im = Vec::new();
            correlate_same_into(x, &kernel.re, 1, &mut re);
            correlate_same_into(x, &kernel.im, 1, &mut im);
            squared_modulus_into(&re, &im, &mut energy);
            let window: Vec<S> = gauss_kernel(params.pool_scales[i], window_max, window_max, 1)?;
            let pooled = gauss_pool(&energy, &window, hop)?;
            map.band_mut(b, 0, i).copy_from_slice(&pooled);
        }
    }
    Ok(map)
}

/// Kernels and pooling windows materialized for one plan group.
#[derive(Debug, Clone)]
pub struct GroupKernels<S> {
    pub group: crate::filterbank::FilterGroup,
    /// One complex kernel per member filter, all at the group's kernel size.
    pub kernels: Vec<GaborKernel<S>>,
    /// One pooling window per member filter, at the group's pool size with
    /// the std compensated for the group's convolution stride.
    pub windows: Vec<Vec<S>>,
}

/// All kernels of a planned bank, generated once so repeated forward passes
/// (training steps, benchmark repetitions) don't pay regeneration costs.
#[derive(Debug, Clone)]
pub struct PlannedKernels<S> {
    pub groups: Vec<GroupKernels<S>>,
    pub hop: usize,
}

impl<S: Sample> PlannedKernels<S> {
    /// Generates every member kernel and pooling window for `plan`.
    pub fn build(params: &FilterbankParams, plan: &GroupPlan) -> Result<Self> {
        params.validate()?;
        plan.validate()?;
        if plan.n_filters() != params.n_filters() {
            return Err(Error::Config(format!(
                "plan covers {} filters but the bank has {}",
                plan.n_filters(),
                params.n_filters()
            )));
        }
        let mut groups = Vec::with_capacity(plan.groups.len());
        for g in &plan.groups {
            let mut kernels = Vec::with_capacity(g.hi - g.lo);
            let mut windows = Vec::with_capacity(g.hi - g.lo);
            for i in g.lo..g.hi {
                kernels.push(gabor_kernel(
                    params.center_freqs[i],
                    params.inv_bandwidths[i],
                    g.kernel_size,
                )?);
                windows.push(gauss_kernel(
                    params.pool_scales[i],
                    g.pool_size,
                    plan.window_max,
                    g.conv_stride,
                )?);
            }
            groups.push(GroupKernels {
                group: *g,
                kernels,
                windows,
            });
        }
        Ok(PlannedKernels {
            groups,
            hop: plan.hop,
        })
    }

    /// Runs the grouped pipeline with these prebuilt kernels.
    pub fn forward(&self, audio: &AudioBatch<S>) -> Result<FeatureMap<S>> {
        let n = self.groups.last().map_or(0, |g| g.group.hi);
        let frames = audio.time.div_ceil(self.hop);
        let mut map = FeatureMap::zeros(audio.batch, 1, n, frames, self.hop, audio.sample_rate);
        let mut re = Vec::new();
        let mut im = Vec::new();
        let mut energy = Vec::new();
        for b in 0..audio.batch {
            let x = audio.item(b);
            for gk in &self.groups {
                let g = &gk.group;
                for (m, kernel) in gk.kernels.iter().enumerate() {
                    correlate_same_into(x, &kernel.re, g.conv_stride, &mut re);
                    correlate_same_into(x, &kernel.im, g.conv_stride, &mut im);
                    squared_modulus_into(&re, &im, &mut energy);
                    let pooled = gauss_pool(&energy, &gk.windows[m], g.pool_stride)?;
                    debug_assert_eq!(pooled.len(), frames);
                    map.band_mut(b, 0, g.lo + m).copy_from_slice(&pooled);
                }
            }
        }
        Ok(map)
    }
}

/// Grouped strided pipeline: each group convolves its members at the group's
/// shared (truncated) kernel size and stride, then pools with the compensated
/// Gaussian window, producing the same frame grid as [`leaf_forward`].
pub fn eleaf_forward<S: Sample>(
    audio: &AudioBatch<S>,
    params: &FilterbankParams,
    plan: &GroupPlan,
) -> Result<FeatureMap<S>> {
    PlannedKernels::build(params, plan)?.forward(audio)
}
