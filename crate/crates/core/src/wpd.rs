//! WPD convolutional beamforming: joint dereverberation and beamforming with
//! a single per-frequency filter over the current frame and K delayed frames.
//!
//! Two filter routes are provided. The steering-vector route solves
//! w = R^-1 v / (v^H R^-1 v) * conj(v_ref) and exists for reference and
//! testing. The production route replaces the steering vector with the padded
//! mask-weighted PSD: w = [R^-1 Phi / Trace(R^-1 Phi)] u, which extends
//! directly to multiple speakers by swapping in each speaker's mask.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{
    hermitian_solve, inner, outer, vector_norm, ComplexMatrix, ComplexVector, LinalgError,
    DEFAULT_LOADING,
};
use crate::masks::{
    floor_lambda_relative, lambda_from_mask, mask_channel_average, MaskError, PowerEstimate,
    TimeFrequencyMask, LAMBDA_FLOOR, LAMBDA_REL_FLOOR,
};
use crate::mvdr::ReferenceVector;
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Error)]
pub enum WpdError {
    #[error("too few frames: T={frames}, need more than D+K={min}")]
    TooFewFrames { frames: usize, min: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate source statistics: |trace| = {0:.3e} < 1e-12")]
    ZeroTrace(f64),
    #[error("degenerate steering vector: |v^H R^-1 v| = {0:.3e}")]
    DegenerateSteering(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WpdConfig {
    /// Prediction delay in frames; must be >= 1 when taps >= 1.
    pub delay: usize,
    /// Number of convolutional taps; 0 means a plain (non-convolutional)
    /// beamformer over the current frame.
    pub taps: usize,
    pub loading: f64,
    pub ref_channel: usize,
    /// Same mask for the lambda path and the PSD path.
    pub shared_mask: bool,
}

impl Default for WpdConfig {
    fn default() -> Self {
        WpdConfig {
            delay: 3,
            taps: 5,
            loading: DEFAULT_LOADING,
            ref_channel: 0,
            shared_mask: true,
        }
    }
}

impl WpdConfig {
    pub fn stacked_len(&self, channels: usize) -> usize {
        channels * (self.taps + 1)
    }

    fn validate(&self) -> Result<(), WpdError> {
        if self.taps >= 1 && self.delay == 0 {
            return Err(WpdError::ShapeMismatch(
                "delay must be >= 1 when taps >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Stacks the current frame and K delayed frames into T x F x C(K+1):
/// blocks [x_t, x_{t-D}, x_{t-D-1}, ..., x_{t-D-K+1}], zero-padded at the
/// signal start.
pub fn stack_current_and_past(
    x: &ComplexSpectrogram,
    delay: usize,
    taps: usize,
) -> Result<ComplexSpectrogram, WpdError> {
    if x.frames() <= delay + taps {
        return Err(WpdError::TooFewFrames {
            frames: x.frames(),
            min: delay + taps,
        });
    }
    let c = x.channels();
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.bins(), c * (taps + 1));
    for t in 0..x.frames() {
        for block in 0..=taps {
            let src = if block == 0 {
                t as isize
            } else {
                t as isize - delay as isize - (block as isize - 1)
            };
            if src < 0 {
                continue;
            }
            for f in 0..x.bins() {
                for ch in 0..c {
                    out.set(t, f, block * c + ch, x.get(src as usize, f, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Power-normalized covariance per bin:
/// R_f = sum_{t=D}^{T-1} xbar_{t-D,f} xbar_{t-D,f}^H / lambda_{t,f}.
pub fn wpd_covariance(
    x: &ComplexSpectrogram,
    lambda: &PowerEstimate,
    cfg: &WpdConfig,
) -> Result<Vec<ComplexMatrix>, WpdError> {
    cfg.validate()?;
    if lambda.frames() != x.frames() || lambda.bins() != x.bins() {
        return Err(WpdError::ShapeMismatch(format!(
            "lambda {}x{} vs spectrogram {}x{}",
            lambda.frames(),
            lambda.bins(),
            x.frames(),
            x.bins()
        )));
    }
    let stacked = stack_current_and_past(x, cfg.delay, cfg.taps)?;
    let n = cfg.stacked_len(x.channels());
    Ok((0..x.bins())
        .into_par_iter()
        .map(|f| {
            let mut r = ComplexMatrix::zeros(n, n);
            for t in cfg.delay..x.frames() {
                let w = 1.0 / lambda.get(t, f).max(LAMBDA_FLOOR);
                r.add_scaled_outer_self(stacked.cell(t - cfg.delay, f), w);
            }
            r.hermitian_part()
        })
        .collect())
}

/// Mask-weighted PSD of the zero-padded signal: only the top-left C x C block
/// is nonzero, the rest of the C(K+1) square stays exactly zero.
pub fn padded_psd(
    x: &ComplexSpectrogram,
    mask_avg: &[f64],
    cfg: &WpdConfig,
) -> Result<Vec<ComplexMatrix>, WpdError> {
    cfg.validate()?;
    let inner_psd = crate::mvdr::psd(x, mask_avg).map_err(|e| match e {
        crate::mvdr::MvdrError::ShapeMismatch(s) => WpdError::ShapeMismatch(s),
        crate::mvdr::MvdrError::Linalg(e) => WpdError::Linalg(e),
        crate::mvdr::MvdrError::ZeroTrace(t) => WpdError::ZeroTrace(t),
    })?;
    let c = x.channels();
    let n = cfg.stacked_len(c);
    Ok(inner_psd
        .into_iter()
        .map(|phi| {
            let mut padded = ComplexMatrix::zeros(n, n);
            for i in 0..c {
                for j in 0..c {
                    padded.set(i, j, phi.get(i, j));
                }
            }
            padded
        })
        .collect())
}

/// Steering-vector-free WPD filter:
/// w = [R^-1 Phi / Trace(R^-1 Phi)] u_padded.
pub fn wpd_filter_new(
    r: &ComplexMatrix,
    padded_phi: &ComplexMatrix,
    u: &ReferenceVector,
    cfg: &WpdConfig,
) -> Result<ComplexVector, WpdError> {
    let numerator = hermitian_solve(r, padded_phi, cfg.loading)?;
    let tr = numerator.trace()?;
    if tr.norm() < 1e-12 {
        return Err(WpdError::ZeroTrace(tr.norm()));
    }
    // u_padded is one-hot at the reference channel inside the first block.
    Ok(numerator
        .column(u.channel)
        .into_iter()
        .map(|v| v / tr)
        .collect())
}

/// Original steering-vector WPD filter, kept as the reference route:
/// w = R^-1 v / (v^H R^-1 v) * conj(v_ref).
pub fn wpd_filter_reference(
    r: &ComplexMatrix,
    padded_steering: &[Complex64],
    v_ref: Complex64,
    loading: f64,
) -> Result<ComplexVector, WpdError> {
    let rhs = ComplexMatrix::from_column(padded_steering);
    let solved = hermitian_solve(r, &rhs, loading)?;
    let y = solved.column(0);
    let denom = inner(padded_steering, &y);
    if denom.norm() < 1e-12 {
        return Err(WpdError::DegenerateSteering(denom.norm()));
    }
    let scale = v_ref.conj() / denom;
    Ok(y.into_iter().map(|v| v * scale).collect())
}

/// x_hat_{t,f} = w_f^H xbar_{t,f} on an already-stacked spectrogram.
pub fn wpd_apply(
    stacked: &ComplexSpectrogram,
    filters: &[ComplexVector],
) -> Result<ComplexSpectrogram, WpdError> {
    if filters.len() != stacked.bins() || filters.iter().any(|w| w.len() != stacked.channels()) {
        return Err(WpdError::ShapeMismatch(format!(
            "{} filters vs {} bins x {} stacked channels",
            filters.len(),
            stacked.bins(),
            stacked.channels()
        )));
    }
    let mut out = ComplexSpectrogram::zeros(stacked.frames(), stacked.bins(), 1);
    for t in 0..stacked.frames() {
        for f in 0..stacked.bins() {
            out.set(t, f, 0, inner(&filters[f], stacked.cell(t, f)));
        }
    }
    Ok(out)
}

/// Per-frequency WPD filters for one source. `lambda_mask` weights the
/// covariance path; `phi_mask` weights the PSD path (identical when the
/// shared-mask mode is in use).
pub fn wpd_source_filters(
    x: &ComplexSpectrogram,
    lambda_mask: &TimeFrequencyMask,
    phi_mask: &TimeFrequencyMask,
    cfg: &WpdConfig,
) -> Result<Vec<ComplexVector>, WpdError> {
    cfg.validate()?;
    if !lambda_mask.matches(x) || !phi_mask.matches(x) {
        return Err(WpdError::ShapeMismatch(
            "mask shape does not match spectrogram".into(),
        ));
    }
    let mut lambda = lambda_from_mask(x, lambda_mask, LAMBDA_FLOOR)?;
    // Bound the 1/lambda weight range so near-silent cells cannot dominate
    // the covariance.
    floor_lambda_relative(&mut lambda, x, LAMBDA_REL_FLOOR)?;
    let covariances = wpd_covariance(x, &lambda, cfg)?;
    let phis = padded_psd(x, &mask_channel_average(phi_mask), cfg)?;
    let u = ReferenceVector::new(cfg.ref_channel, x.channels());
    let per_bin: Vec<Result<ComplexVector, WpdError>> = (0..x.bins())
        .into_par_iter()
        .map(|f| wpd_filter_new(&covariances[f], &phis[f], &u, cfg))
        .collect();
    // A bin where the source carries no energy degrades to a zero filter
    // (silence in that bin); only a source degenerate in every bin errors.
    if per_bin.iter().all(|r| matches!(r, Err(WpdError::ZeroTrace(_)))) {
        return Err(per_bin.into_iter().next().unwrap().unwrap_err());
    }
    let n = cfg.stacked_len(x.channels());
    per_bin
        .into_iter()
        .map(|r| match r {
            Err(WpdError::ZeroTrace(_)) => Ok(vec![Complex64::new(0.0, 0.0); n]),
            other => other,
        })
        .collect()
}

/// Multi-speaker separation: for each speaker j, mask m^j drives both the
/// dereverberation statistics (via lambda) and the beamforming statistics
/// (via the padded PSD). `phi_masks`, when given, supplies independent
/// PSD-path masks (the two-estimator mode); it must parallel `masks`.
pub fn wpd_separate(
    x: &ComplexSpectrogram,
    masks: &[&TimeFrequencyMask],
    phi_masks: Option<&[&TimeFrequencyMask]>,
    cfg: &WpdConfig,
) -> Result<Vec<ComplexSpectrogram>, WpdError> {
    if masks.is_empty() {
        return Err(WpdError::ShapeMismatch("no speaker masks".into()));
    }
    if let Some(pm) = phi_masks {
        if pm.len() != masks.len() {
            return Err(WpdError::ShapeMismatch(
                "phi_masks length differs from masks".into(),
            ));
        }
    }
    wpd_separate_lenient(x, masks, phi_masks, cfg)?
        .into_iter()
        .collect()
}

/// Like [`wpd_separate`], but a degenerate source (all-silent mask) is
/// reported in that source's slot instead of aborting the whole call. Shape
/// and configuration errors still abort.
pub fn wpd_separate_lenient(
    x: &ComplexSpectrogram,
    masks: &[&TimeFrequencyMask],
    phi_masks: Option<&[&TimeFrequencyMask]>,
    cfg: &WpdConfig,
) -> Result<Vec<Result<ComplexSpectrogram, WpdError>>, WpdError> {
    if masks.is_empty() {
        return Err(WpdError::ShapeMismatch("no speaker masks".into()));
    }
    if let Some(pm) = phi_masks {
        if pm.len() != masks.len() {
            return Err(WpdError::ShapeMismatch(
                "phi_masks length differs from masks".into(),
            ));
        }
    }
    let stacked = stack_current_and_past(x, cfg.delay, cfg.taps)?;
    let mut outputs = Vec::with_capacity(masks.len());
    for (j, mask) in masks.iter().enumerate() {
        let phi_mask = phi_masks.map(|pm| pm[j]).unwrap_or(mask);
        let result = wpd_source_filters(x, mask, phi_mask, cfg)
            .and_then(|filters| wpd_apply(&stacked, &filters));
        match result {
            Err(e @ WpdError::ZeroTrace(_)) => outputs.push(Err(e)),
            Err(e) => return Err(e),
            ok => outputs.push(ok),
        }
    }
    Ok(outputs)
}

/// Numerical check of the reformulation identity: draws random PD R and
/// random padded steering vectors, builds the rank-1 padded PSD, and returns
/// the max relative error between the two filter routes.
pub fn equivalence_check(channels: usize, taps: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = channels * (taps + 1);
    let mut max_err = 0.0f64;
    for _ in 0..trials {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.set(
                    i,
                    j,
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                );
            }
        }
        let r = m
            .conj_transpose()
            .matmul(&m)
            .unwrap()
            .add(&ComplexMatrix::identity(n))
            .unwrap();
        let mut v_padded = vec![Complex64::new(0.0, 0.0); n];
        for item in v_padded.iter_mut().take(channels) {
            *item = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let phi_power = 10f64.powf(rng.gen_range(-3.0..3.0));
        let padded_phi = outer(&v_padded, &v_padded).scale(Complex64::new(phi_power, 0.0));
        let ref_channel = rng.gen_range(0..channels);
        let u = ReferenceVector::new(ref_channel, channels);
        // v_ref = v^T u_padded (real one-hot u).
        let v_ref = v_padded[ref_channel];
        let cfg = WpdConfig {
            delay: 1,
            taps,
            loading: 0.0,
            ref_channel,
            shared_mask: true,
        };
        let w_new = wpd_filter_new(&r, &padded_phi, &u, &cfg).unwrap();
        let w_ref = wpd_filter_reference(&r, &v_padded, v_ref, 0.0).unwrap();
        let diff: Vec<Complex64> = w_new.iter().zip(&w_ref).map(|(a, b)| a - b).collect();
        let err = vector_norm(&diff) / vector_norm(&w_ref).max(1e-300);
        max_err = max_err.max(err);
    }
    max_err
}
