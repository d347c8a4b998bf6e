//! Learnable filterbank parameters, mel-scale initialization, Gabor and
//! Gaussian kernel generation, and the size/stride/group planner that turns a
//! bank into an efficient grouped execution plan.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{cast, Sample};

/// Learnable parameters of a Gabor filterbank.
///
/// Parameters are stored in `f64` regardless of the pipeline's processing
/// precision; kernels are generated into the requested sample type on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterbankParams {
    /// Center frequencies ν in radians per sample, one per filter; π is the
    /// Nyquist frequency. Strictly inside (0, π).
    pub center_freqs: Vec<f64>,
    /// Envelope widths σ_c in samples (time-domain Gaussian std). Larger σ_c
    /// means a longer filter and a narrower frequency response.
    pub inv_bandwidths: Vec<f64>,
    /// Pooling scales σ_p, dimensionless fractions of half the reference
    /// pooling window. Strictly inside (0, 1).
    pub pool_scales: Vec<f64>,
    /// Sample rate the bank was initialized for, in Hz.
    pub sample_rate: u32,
}

impl FilterbankParams {
    /// Number of filters in the bank.
    pub fn n_filters(&self) -> usize {
        self.center_freqs.len()
    }

    /// Checks the structural invariants: equal vector lengths, ν ∈ (0, π),
    /// σ_c > 0, σ_p ∈ (0, 1).
    pub fn validate(&self) -> Result<()> {
        let n = self.center_freqs.len();
        if self.inv_bandwidths.len() != n || self.pool_scales.len() != n {
            return Err(Error::Shape(format!(
                "parameter vectors disagree: {} center freqs, {} bandwidths, {} pool scales",
                n,
                self.inv_bandwidths.len(),
                self.pool_scales.len()
            )));
        }
        for (i, &nu) in self.center_freqs.iter().enumerate() {
            if !(nu > 0.0 && nu < PI) {
                return Err(Error::Domain(format!(
                    "center frequency {i} = {nu} outside (0, pi)"
                )));
            }
        }
        for (i, &s) in self.inv_bandwidths.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::Domain(format!("envelope width {i} = {s} not positive")));
            }
        }
        for (i, &p) in self.pool_scales.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Domain(format!("pool scale {i} = {p} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Converts Hz to mel (HTK form, 2595·log10(1 + f/700)).
pub fn hz_to_mel(hz: f64) -> Result<f64> {
    if hz < 0.0 {
        return Err(Error::Domain(format!("negative frequency {hz} Hz")));
    }
    Ok(2595.0 * (1.0 + hz / 700.0).log10())
}

/// Converts mel back to Hz; inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> Result<f64> {
    if mel < 0.0 {
        return Err(Error::Domain(format!("negative mel value {mel}")));
    }
    Ok(700.0 * (10f64.powf(mel / 2595.0) - 1.0))
}

/// Initializes a bank of `n_filters` Gabor filters whose frequency responses
/// approximate a triangular mel filterbank spanning `fmin`..`fmax` Hz.
///
/// `n_filters + 2` points are placed uniformly on the mel scale; filter `i`
/// peaks at interior point `i + 1` and its envelope width is matched to the
/// triangle's base width: σ_c = (sample_rate/2) / (f_{i+2} − f_i). Pooling
/// scales start at 0.4 for every filter.
pub fn init_mel_gabor(
    n_filters: usize,
    fmin: f64,
    fmax: f64,
    sample_rate: u32,
) -> Result<FilterbankParams> {
    if n_filters == 0 {
        return Err(Error::Config("filterbank needs at least one filter".into()));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(fmin >= 0.0 && fmin < fmax) {
        return Err(Error::Config(format!(
            "need 0 <= fmin < fmax, got fmin {fmin} Hz, fmax {fmax} Hz"
        )));
    }
    if fmax > nyquist {
        return Err(Error::Config(format!(
            "fmax {fmax} Hz above Nyquist {nyquist} Hz"
        )));
    }

    let mel_lo = hz_to_mel(fmin)?;
    let mel_hi = hz_to_mel(fmax)?;
    let mut freqs = Vec::with_capacity(n_filters + 2);
    for i in 0..n_filters + 2 {
        let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64;
        freqs.push(mel_to_hz(mel)?);
    }

    let center_freqs: Vec<f64> = (0..n_filters)
        .map(|i| 2.0 * PI * freqs[i + 1] / sample_rate as f64)
        .collect();
    let inv_bandwidths: Vec<f64> = (0..n_filters)
        .map(|i| nyquist / (freqs[i + 2] - freqs[i]))
        .collect();

    let params = FilterbankParams {
        center_freqs,
        inv_bandwidths,
        pool_scales: vec![0.4; n_filters],
        sample_rate,
    };
    params.validate()?;
    Ok(params)
}

/// Complex Gabor filter coefficients, stored as separate real (cosine) and
/// imaginary (sine) parts so the convolution stage can run two real passes.
#[derive(Debug, Clone)]
pub struct GaborKernel<S> {
    pub re: Vec<S>,
    pub im: Vec<S>,
}

impl<S> GaborKernel<S> {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// Generates the `size` coefficients of a complex Gabor filter,
/// c_t = exp(iνt) · exp(−t²/(2σ_c²)) / (√(2π)·σ_c) for t centered on 0.
///
/// ν is in radians per sample (π = Nyquist). `size` must be odd so the
/// envelope is symmetric around a center tap.
pub fn gabor_kernel<S: Sample>(nu: f64, sigma_c: f64, size: usize) -> Result<GaborKernel<S>> {
    if size % 2 == 0 {
        return Err(Error::Argument(format!("kernel size {size} must be odd")));
    }
    if !(sigma_c > 0.0) {
        return Err(Error::Argument(format!("envelope width {sigma_c} must be positive")));
    }
    let half = (size as i64 - 1) / 2;
    let norm = 1.0 / ((2.0 * PI).sqrt() * sigma_c);
    let mut re = Vec::with_capacity(size);
    let mut im = Vec::with_capacity(size);
    for t in -half..=half {
        let t = t as f64;
        let w = norm * (-t * t / (2.0 * sigma_c * sigma_c)).exp();
        re.push(cast::<S>(w * (nu * t).cos()));
        im.push(cast::<S>(w * (nu * t).sin()));
    }
    Ok(GaborKernel { re, im })
}

/// Effective Gaussian pooling std in *output-rate* samples: the configured
/// fraction of half the reference window, divided by the convolution stride
/// that already subsampled the sequence being pooled.
pub fn pool_sigma(sigma_p: f64, ref_window: usize, conv_stride: usize) -> f64 {
    sigma_p * (ref_window as f64 - 1.0) / 2.0 / conv_stride as f64
}

/// Generates a `pool_size`-tap Gaussian lowpass window with std
/// [`pool_sigma`]`(sigma_p, ref_window, conv_stride)`, normalized by
/// 1/(√(2π)·σ̃). The window is exactly symmetric; its sum approaches 1 only
/// as the taps cover more of the Gaussian's mass (±2.5 σ̃ at the reference
/// geometry, which leaves ~1.2% of the mass outside).
pub fn gauss_kernel<S: Sample>(
    sigma_p: f64,
    pool_size: usize,
    ref_window: usize,
    conv_stride: usize,
) -> Result<Vec<S>> {
    if !(sigma_p > 0.0) {
        return Err(Error::Argument(format!("pool scale {sigma_p} must be positive")));
    }
    if pool_size % 2 == 0 {
        return Err(Error::Argument(format!("pool size {pool_size} must be odd")));
    }
    if conv_stride == 0 {
        return Err(Error::Argument("conv stride must be at least 1".into()));
    }
    let sigma = pool_sigma(sigma_p, ref_window, conv_stride);
    let norm = 1.0 / ((2.0 * PI).sqrt() * sigma);
    let half = (pool_size as i64 - 1) / 2;
    Ok((-half..=half)
        .map(|t| {
            let t = t as f64;
            cast::<S>(norm * (-t * t / (2.0 * sigma * sigma)).exp())
        })
        .collect())
}

/// Kernel length for an envelope of width `sigma_c` under size factor `b`:
/// b·σ_c truncated to an integer and forced odd (upward), clamped to
/// [3, window_max].
pub fn filter_size(sigma_c: f64, b: f64, window_max: usize) -> usize {
    let raw = (b * sigma_c) as i64 | 1;
    (raw.max(3) as usize).min(window_max)
}

/// Convolution stride for a filter at center frequency `nu` under stride
/// factor `d`: the largest divisor of `hop` not exceeding d·π/ν, and at
/// least 1.
pub fn filter_stride(nu: f64, d: f64, hop: usize) -> usize {
    let bound = d * PI / nu;
    let mut best = 1;
    for cand in 1..=hop {
        if hop % cand == 0 && (cand as f64) <= bound {
            best = cand;
        }
    }
    best
}

/// Static configuration of the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Reference kernel and pooling window length in samples; odd.
    pub window_max: usize,
    /// Output frame spacing in input samples.
    pub hop: usize,
    /// Size factor b: kernels are truncated to b·σ_c samples.
    pub size_factor: f64,
    /// Stride factor d: convolution strides may grow to d·π/ν.
    pub stride_factor: f64,
    /// Number of filter groups sharing a kernel size and stride.
    pub n_groups: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            window_max: 401,
            hop: 160,
            size_factor: 4.75,
            stride_factor: 1.0,
            n_groups: 4,
        }
    }
}

impl PlanConfig {
    /// Checks the value ranges (odd window ≥ 3, hop ≥ 1, b > 0, d > 0, g ≥ 1).
    pub fn validate(&self) -> Result<()> {
        if self.window_max < 3 || self.window_max % 2 == 0 {
            return Err(Error::Config(format!(
                "window_max {} must be odd and at least 3",
                self.window_max
            )));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be at least 1".into()));
        }
        if !(self.size_factor > 0.0) {
            return Err(Error::Config(format!(
                "size factor {} must be positive",
                self.size_factor
            )));
        }
        if !(self.stride_factor > 0.0) {
            return Err(Error::Config(format!(
                "stride factor {} must be positive",
                self.stride_factor
            )));
        }
        if self.n_groups == 0 {
            return Err(Error::Config("need at least one group".into()));
        }
        Ok(())
    }
}

/// One contiguous run of filters sharing a kernel size, convolution stride,
/// and pooling geometry. Fields are declared in lexicographic order so the
/// serialized JSON has a stable key order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterGroup {
    /// Convolution stride in input samples; divides the hop exactly.
    pub conv_stride: usize,
    /// One past the last member filter index.
    pub hi: usize,
    /// Shared kernel length for every member, in samples; odd.
    pub kernel_size: usize,
    /// First member filter index.
    pub lo: usize,
    /// Pooling window length in post-convolution samples; odd.
    pub pool_size: usize,
    /// Pooling stride in post-convolution samples; conv_stride · pool_stride
    /// equals the hop.
    pub pool_stride: usize,
}

/// A frozen execution plan: an ordered partition of the bank into
/// [`FilterGroup`]s plus the geometry they were derived from. Sizes, strides
/// and grouping are recomputed only on explicit request — never inside a
/// gradient step, since the rounding rules are piecewise constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub groups: Vec<FilterGroup>,
    pub hop: usize,
    pub window_max: usize,
}

impl GroupPlan {
    /// The dense reference geometry: one group covering the whole bank with
    /// full-length kernels at stride 1 and full-length pooling at the hop.
    pub fn reference(n_filters: usize, window_max: usize, hop: usize) -> GroupPlan {
        GroupPlan {
            groups: vec![FilterGroup {
                conv_stride: 1,
                hi: n_filters,
                kernel_size: window_max,
                lo: 0,
                pool_size: window_max,
                pool_stride: hop,
            }],
            hop,
            window_max,
        }
    }

    /// Total number of filters covered by the plan.
    pub fn n_filters(&self) -> usize {
        self.groups.last().map_or(0, |g| g.hi)
    }

    /// Number of output frames for a `time`-sample input: ⌈time / hop⌉,
    /// identical for every group by the stride-factorization invariant.
    pub fn frames(&self, time: usize) -> usize {
        time.div_ceil(self.hop)
    }

    /// Checks structural invariants: groups partition [0, n) in order, odd
    /// kernel and pool sizes, kernel_size ≤ window_max, and
    /// conv_stride · pool_stride = hop for every group.
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("plan has no groups".into()));
        }
        let mut expect_lo = 0;
        for (i, g) in self.groups.iter().enumerate() {
            if g.lo != expect_lo || g.hi <= g.lo {
                return Err(Error::Config(format!(
                    "group {i} spans [{}, {}), expected to start at {expect_lo}",
                    g.lo, g.hi
                )));
            }
            if g.kernel_size % 2 == 0 || g.pool_size % 2 == 0 {
                return Err(Error::Config(format!(
                    "group {i} has even kernel ({}) or pool ({}) size",
                    g.kernel_size, g.pool_size
                )));
            }
            if g.kernel_size > self.window_max {
                return Err(Error::Config(format!(
                    "group {i} kernel {} exceeds window_max {}",
                    g.kernel_size, self.window_max
                )));
            }
            if g.conv_stride == 0 || g.conv_stride * g.pool_stride != self.hop {
                return Err(Error::Config(format!(
                    "group {i}: conv stride {} x pool stride {} != hop {}",
                    g.conv_stride, g.pool_stride, self.hop
                )));
            }
            expect_lo = g.hi;
        }
        Ok(())
    }
}

fn ceil_odd(x: f64) -> usize {
    let k = x.ceil() as usize;
    if k % 2 == 1 {
        k
    } else {
        k + 1
    }
}

/// Splits the bank into `cfg.n_groups` contiguous groups (as even as
/// possible, larger groups first) and derives each group's shared kernel
/// size, convolution stride, and compensated pooling geometry.
///
/// For multi-group plans each group is anchored at its lowest-frequency
/// member: that member has the widest envelope (largest kernel) and the
/// largest admissible stride, and within a narrow group the remaining
/// members' envelopes still fit under the post-stride Nyquist. A single
/// group spanning the whole bank has no such anchor — the top bands'
/// envelopes would alias at the bottom band's stride — so `n_groups == 1`
/// falls back to the most conservative member (minimum stride, maximum
/// size), which at the default geometry reproduces the dense reference.
pub fn plan_groups(params: &FilterbankParams, cfg: &PlanConfig) -> Result<GroupPlan> {
    cfg.validate()?;
    params.validate()?;
    let n = params.n_filters();
    if cfg.n_groups > n {
        return Err(Error::Config(format!(
            "{} groups requested for {} filters",
            cfg.n_groups, n
        )));
    }
    if params.center_freqs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "filters must be sorted by ascending center frequency".into(),
        ));
    }

    let sizes: Vec<usize> = params
        .inv_bandwidths
        .iter()
        .map(|&s| filter_size(s, cfg.size_factor, cfg.window_max))
        .collect();
    let strides: Vec<usize> = params
        .center_freqs
        .iter()
        .map(|&nu| filter_stride(nu, cfg.stride_factor, cfg.hop))
        .collect();

    let base = n / cfg.n_groups;
    let remainder = n % cfg.n_groups;
    let mut groups = Vec::with_capacity(cfg.n_groups);
    let mut lo = 0;
    for gi in 0..cfg.n_groups {
        let len = base + usize::from(gi < remainder);
        let hi = lo + len;
        let (kernel_size, conv_stride) = if cfg.n_groups == 1 {
            (
                sizes[lo..hi].iter().copied().max().unwrap(),
                strides[lo..hi].iter().copied().min().unwrap(),
            )
        } else {
            (
                sizes[lo..hi].iter().copied().max().unwrap(),
                strides[lo],
            )
        };
        if cfg.hop % conv_stride != 0 {
            return Err(Error::Config(format!(
                "group stride {conv_stride} does not divide hop {}",
                cfg.hop
            )));
        }
        groups.push(FilterGroup {
            conv_stride,
            hi,
            kernel_size,
            lo,
            pool_size: ceil_odd(cfg.window_max as f64 / conv_stride as f64),
            pool_stride: cfg.hop / conv_stride,
        });
        lo = hi;
    }

    let plan = GroupPlan {
        groups,
        hop: cfg.hop,
        window_max: cfg.window_max,
    };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> FilterbankParams {
        init_mel_gabor(40, 60.0, 7800.0, 16000).unwrap()
    }

    #[test]
    fn mel_fixed_points() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        let m700 = hz_to_mel(700.0).unwrap();
        assert!((m700 - 2595.0 * 2f64.log10()).abs() < 1e-12, "700 Hz -> {m700} mel");
    }

    #[test]
    fn mel_inverse_pair() {
        for hz in [1.0, 60.0, 700.0, 4000.0, 7800.0] {
            let back = mel_to_hz(hz_to_mel(hz).unwrap()).unwrap();
            assert!((back - hz).abs() < 1e-9, "round trip of {hz} Hz gave {back}");
        }
    }

    #[test]
    fn mel_monotone() {
        let mut prev = -1.0;
        for i in 0..200 {
            let m = hz_to_mel(i as f64 * 40.0).unwrap();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn mel_rejects_negative() {
        assert!(hz_to_mel(-1.0).is_err());
        assert!(mel_to_hz(-0.5).is_err());
    }

    #[test]
    fn init_matches_closed_form() {
        let bank = default_bank();
        assert_eq!(bank.n_filters(), 40);
        // Lowest filter peaks at the first interior mel point (106.1008 Hz)
        // and carries the widest envelope of the bank.
        assert!((bank.center_freqs[0] - 0.04166567212042431).abs() < 1e-15);
        assert!((bank.inv_bandwidths[0] - 84.21234610469534).abs() < 1e-10);
        assert!((bank.center_freqs[39] - 2.8721565021292346).abs() < 1e-12);
        assert!((bank.inv_bandwidths[39] - 8.470750945831565).abs() < 1e-12);
        assert!(bank.pool_scales.iter().all(|&p| p == 0.4));
    }

    #[test]
    fn init_is_monotone() {
        let bank = default_bank();
        assert!(bank.center_freqs.windows(2).all(|w| w[0] < w[1]));
        assert!(bank.inv_bandwidths.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn init_single_filter_peaks_at_mel_midpoint() {
        let bank = init_mel_gabor(1, 1000.0, 3000.0, 16000).unwrap();
        let mid_mel = (hz_to_mel(1000.0).unwrap() + hz_to_mel(3000.0).unwrap()) / 2.0;
        let mid_hz = mel_to_hz(mid_mel).unwrap();
        let nu = 2.0 * PI * mid_hz / 16000.0;
        assert!((bank.center_freqs[0] - nu).abs() < 1e-12);
        // Triangle base spans the full 1000..3000 Hz range.
        assert!((bank.inv_bandwidths[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn init_rejects_bad_ranges() {
        assert!(init_mel_gabor(40, 60.0, 9000.0, 16000).is_err(), "fmax above Nyquist");
        assert!(init_mel_gabor(40, 500.0, 100.0, 16000).is_err(), "fmin above fmax");
        assert!(init_mel_gabor(0, 60.0, 7800.0, 16000).is_err(), "empty bank");
    }

    #[test]
    fn gabor_kernel_dc_is_real_gaussian() {
        let k: GaborKernel<f64> = gabor_kernel(0.0, 10.0, 21).unwrap();
        assert!(k.im.iter().all(|&v| v == 0.0));
        assert!(k.re.iter().all(|&v| v > 0.0));
        for t in 0..21 {
            assert_eq!(k.re[t], k.re[20 - t]);
        }
        let peak = k.re[10];
        assert!(k.re.iter().all(|&v| v <= peak));
    }

    #[test]
    fn gabor_kernel_magnitude_symmetric() {
        let k: GaborKernel<f64> = gabor_kernel(1.3, 7.5, 41).unwrap();
        for t in 0..41 {
            let m = k.re[t] * k.re[t] + k.im[t] * k.im[t];
            let m_rev = k.re[40 - t] * k.re[40 - t] + k.im[40 - t] * k.im[40 - t];
            assert!((m - m_rev).abs() < 1e-18);
        }
    }

    #[test]
    fn gabor_kernel_matches_term_by_term() {
        let (nu, sigma, size) = (PI / 2.0, 5.0, 41);
        let k: GaborKernel<f64> = gabor_kernel(nu, sigma, size).unwrap();
        let half = (size as i64 - 1) / 2;
        for (idx, t) in (-half..=half).enumerate() {
            let t = t as f64;
            let w = (-t * t / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
            assert!((k.re[idx] - w * (nu * t).cos()).abs() < 1e-16);
            assert!((k.im[idx] - w * (nu * t).sin()).abs() < 1e-16);
        }
        // Spot values against an independent high-precision evaluation.
        assert!((k.re[half as usize] - 0.07978845608028655).abs() < 1e-16);
        assert!((k.im[half as usize + 1] - 0.07820853879509118).abs() < 1e-16);
        assert!((k.re[half as usize + 2] - -0.07365402806066466).abs() < 1e-16);
    }

    #[test]
    fn gabor_kernel_rejects_even_size() {
        assert!(gabor_kernel::<f64>(1.0, 5.0, 40).is_err());
    }

    #[test]
    fn gauss_kernel_reference_sum() {
        // 401 taps cover +-2.5 sigma of an sigma=80 Gaussian: 98.78% of the mass.
        let w: Vec<f64> = gauss_kernel(0.4, 401, 401, 1).unwrap();
        let sum: f64 = w.iter().sum();
        assert!((sum - 0.9877986319488795).abs() < 1e-12, "sum {sum}");
        assert!((0.98..1.005).contains(&sum));
    }

    #[test]
    fn gauss_kernel_strided_variant() {
        let w: Vec<f64> = gauss_kernel(0.4, 11, 401, 40).unwrap();
        assert_eq!(w.len(), 11);
        assert!((pool_sigma(0.4, 401, 40) - 2.0).abs() < 1e-15);
        let sum: f64 = w.iter().sum();
        assert!((sum - 0.9945440541568076).abs() < 1e-12, "sum {sum}");
        for t in 0..11 {
            assert_eq!(w[t], w[10 - t]);
        }
        let peak = w[5];
        assert!(w.iter().all(|&v| v > 0.0 && v <= peak));
    }

    #[test]
    fn gauss_kernel_rejects_bad_args() {
        assert!(gauss_kernel::<f64>(0.0, 11, 401, 40).is_err());
        assert!(gauss_kernel::<f64>(-0.4, 11, 401, 40).is_err());
        assert!(gauss_kernel::<f64>(0.4, 10, 401, 40).is_err());
    }

    #[test]
    fn filter_size_rule() {
        let bank = default_bank();
        assert_eq!(filter_size(bank.inv_bandwidths[0], 4.75, 401), 401);
        assert_eq!(filter_size(bank.inv_bandwidths[20], 4.75, 401), 123);
        assert_eq!(filter_size(bank.inv_bandwidths[30], 4.75, 401), 69);
        assert_eq!(filter_size(10.0, 4.75, 401), 47);
        assert_eq!(filter_size(0.1, 2.0, 401), 3);
        assert_eq!(filter_size(1000.0, 4.75, 401), 401);
    }

    #[test]
    fn filter_size_monotone_in_sigma() {
        let mut prev = 0;
        for i in 1..200 {
            let k = filter_size(i as f64 * 0.7, 4.75, 401);
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn filter_stride_rule() {
        let bank = default_bank();
        assert_eq!(filter_stride(bank.center_freqs[0], 1.0, 160), 40);
        assert_eq!(filter_stride(bank.center_freqs[39], 1.0, 160), 1);
        assert_eq!(filter_stride(bank.center_freqs[0], 16.0, 160), 160);
        // Full per-filter table at d=1 for the default bank.
        let strides: Vec<usize> = bank
            .center_freqs
            .iter()
            .map(|&nu| filter_stride(nu, 1.0, 160))
            .collect();
        assert_eq!(
            strides,
            vec![
                40, 40, 32, 20, 20, 20, 16, 10, 10, 10, 10, 8, 8, 5, 5, 5, 5, 5, 4, 4, 4, 2, 2,
                2, 2, 2, 2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1
            ]
        );
    }

    #[test]
    fn filter_stride_monotone_in_nu() {
        let mut prev = usize::MAX;
        for i in 1..100 {
            let s = filter_stride(i as f64 * 0.03, 1.0, 160);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn plan_default_geometry() {
        let plan = plan_groups(&default_bank(), &PlanConfig::default()).unwrap();
        let expect = [
            (0, 10, 401, 40, 11, 4),
            (10, 20, 221, 10, 41, 16),
            (20, 30, 123, 4, 101, 40),
            (30, 40, 69, 1, 401, 160),
        ];
        assert_eq!(plan.groups.len(), 4);
        for (g, &(lo, hi, k, s, p, ps)) in plan.groups.iter().zip(&expect) {
            assert_eq!((g.lo, g.hi), (lo, hi));
            assert_eq!(g.kernel_size, k);
            assert_eq!(g.conv_stride, s);
            assert_eq!(g.pool_size, p);
            assert_eq!(g.pool_stride, ps);
        }
    }

    #[test]
    fn plan_single_group_is_reference() {
        let cfg = PlanConfig {
            n_groups: 1,
            ..PlanConfig::default()
        };
        let plan = plan_groups(&default_bank(), &cfg).unwrap();
        assert_eq!(plan, GroupPlan::reference(40, 401, 160));
    }

    #[test]
    fn plan_per_filter_groups_reproduce_filter_rules() {
        let bank = default_bank();
        let cfg = PlanConfig {
            n_groups: 40,
            ..PlanConfig::default()
        };
        let plan = plan_groups(&bank, &cfg).unwrap();
        for (i, g) in plan.groups.iter().enumerate() {
            assert_eq!((g.lo, g.hi), (i, i + 1));
            assert_eq!(g.kernel_size, filter_size(bank.inv_bandwidths[i], 4.75, 401));
            assert_eq!(g.conv_stride, filter_stride(bank.center_freqs[i], 1.0, 160));
        }
    }

    #[test]
    fn plan_uneven_groups_put_larger_first() {
        let cfg = PlanConfig {
            n_groups: 3,
            ..PlanConfig::default()
        };
        let plan = plan_groups(&default_bank(), &cfg).unwrap();
        let spans: Vec<(usize, usize)> = plan.groups.iter().map(|g| (g.lo, g.hi)).collect();
        assert_eq!(spans, vec![(0, 14), (14, 27), (27, 40)]);
        let rows: Vec<(usize, usize, usize, usize)> = plan
            .groups
            .iter()
            .map(|g| (g.kernel_size, g.conv_stride, g.pool_size, g.pool_stride))
            .collect();
        assert_eq!(rows, vec![(401, 40, 11, 4), (175, 5, 81, 32), (81, 2, 201, 80)]);
    }

    #[test]
    fn plan_stride_times_pool_stride_is_hop() {
        let bank = default_bank();
        for b in [2.0, 4.75, 6.0] {
            for d in [1.0, 2.0, 3.0, 8.0, 16.0] {
                for g in [1, 2, 4, 8, 10] {
                    let cfg = PlanConfig {
                        size_factor: b,
                        stride_factor: d,
                        n_groups: g,
                        ..PlanConfig::default()
                    };
                    let plan = plan_groups(&bank, &cfg).unwrap();
                    for grp in &plan.groups {
                        assert_eq!(grp.conv_stride * grp.pool_stride, 160);
                    }
                    assert_eq!(plan.n_filters(), 40);
                }
            }
        }
    }

    #[test]
    fn plan_rejects_too_many_groups() {
        let cfg = PlanConfig {
            n_groups: 41,
            ..PlanConfig::default()
        };
        assert!(plan_groups(&default_bank(), &cfg).is_err());
    }

    #[test]
    fn plan_rejects_unsorted_bank() {
        let mut bank = default_bank();
        bank.center_freqs.swap(3, 4);
        assert!(plan_groups(&bank, &PlanConfig::default()).is_err());
    }

    #[test]
    fn plan_serializes_with_stable_keys() {
        let plan = plan_groups(&default_bank(), &PlanConfig::default()).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.starts_with(
            "{\"groups\":[{\"conv_stride\":40,\"hi\":10,\"kernel_size\":401,\"lo\":0,\
             \"pool_size\":11,\"pool_stride\":4}"
        ));
        assert!(json.ends_with("\"hop\":160,\"window_max\":401}"));
        let back: GroupPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn optimized_preset_plan() {
        // Aggressive configuration: coarser strides, eight groups.
        let cfg = PlanConfig {
            size_factor: 6.0,
            stride_factor: 16.0,
            n_groups: 8,
            ..PlanConfig::default()
        };
        let plan = plan_groups(&default_bank(), &cfg).unwrap();
        let rows: Vec<(usize, usize, usize, usize)> = plan
            .groups
            .iter()
            .map(|g| (g.kernel_size, g.conv_stride, g.pool_size, g.pool_stride))
            .collect();
        assert_eq!(
            rows,
            vec![
                (401, 160, 3, 1),
                (377, 160, 3, 1),
                (281, 160, 3, 1),
                (209, 80, 7, 2),
                (155, 40, 11, 4),
                (115, 40, 11, 4),
                (87, 20, 21, 8),
                (65, 20, 21, 8),
            ]
        );
    }
}
