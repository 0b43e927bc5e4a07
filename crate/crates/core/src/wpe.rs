//! Mask-based weighted prediction error (WPE) dereverberation.
//!
//! The filter predicts late reverberation in every channel from C*K delayed
//! frames per frequency bin, weighted by the inverse time-variant power
//! lambda, and subtracts the prediction. MIMO normal-equation form; frames
//! before the signal start are zero-padded so T stays constant.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{hermitian_solve, ComplexMatrix, LinalgError, DEFAULT_LOADING};
use crate::masks::{
    floor_lambda_relative, lambda_from_mask, MaskError, PowerEstimate, TimeFrequencyMask,
    LAMBDA_FLOOR, LAMBDA_REL_FLOOR,
};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Error)]
pub enum WpeError {
    #[error("too few frames: T={frames}, need more than D+K={min}")]
    TooFewFrames { frames: usize, min: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WpeConfig {
    /// Prediction delay in frames.
    pub delay: usize,
    /// Number of filter taps.
    pub taps: usize,
    pub iterations: usize,
    pub loading: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        WpeConfig {
            delay: 3,
            taps: 5,
            iterations: 1,
            loading: DEFAULT_LOADING,
        }
    }
}

/// Per-frequency prediction filters G_f of shape (C*K) x C.
#[derive(Debug, Clone)]
pub struct PredictionFilter {
    pub filters: Vec<ComplexMatrix>,
    pub delay: usize,
    pub taps: usize,
    pub channels: usize,
}

impl PredictionFilter {
    pub fn frobenius_norm(&self) -> f64 {
        self.filters
            .iter()
            .map(|g| g.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Stacks delayed frames t-D .. t-D-K+1 into a T x F x (C*K) tensor;
/// channel-major within each tap, taps ordered by increasing delay.
pub fn stack_delayed(
    x: &ComplexSpectrogram,
    delay: usize,
    taps: usize,
) -> Result<ComplexSpectrogram, WpeError> {
    if x.frames() <= delay + taps {
        return Err(WpeError::TooFewFrames {
            frames: x.frames(),
            min: delay + taps,
        });
    }
    let c = x.channels();
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.bins(), c * taps);
    for t in 0..x.frames() {
        for tap in 0..taps {
            let src = t as isize - delay as isize - tap as isize;
            if src < 0 {
                continue;
            }
            for f in 0..x.bins() {
                for ch in 0..c {
                    out.set(t, f, tap * c + ch, x.get(src as usize, f, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Normal-equation WPE filter: per bin, G_f = solve(Psi_f, psi_f) with
/// Psi = sum_t xbar xbar^H / lambda and psi = sum_t xbar x^H / lambda.
pub fn wpe_filter(
    x: &ComplexSpectrogram,
    lambda: &PowerEstimate,
    cfg: &WpeConfig,
) -> Result<PredictionFilter, WpeError> {
    if lambda.frames() != x.frames() || lambda.bins() != x.bins() {
        return Err(WpeError::ShapeMismatch(format!(
            "lambda {}x{} vs spectrogram {}x{}",
            lambda.frames(),
            lambda.bins(),
            x.frames(),
            x.bins()
        )));
    }
    let stacked = stack_delayed(x, cfg.delay, cfg.taps)?;
    let c = x.channels();
    let ck = c * cfg.taps;
    let filters = (0..x.bins())
        .into_par_iter()
        .map(|f| {
            let mut psi_mat = ComplexMatrix::zeros(ck, ck);
            let mut psi_vec = ComplexMatrix::zeros(ck, c);
            for t in 0..x.frames() {
                let w = 1.0 / lambda.get(t, f).max(LAMBDA_FLOOR);
                let xbar = stacked.cell(t, f);
                psi_mat.add_scaled_outer_self(xbar, w);
                for i in 0..ck {
                    let xi = xbar[i] * w;
                    for ch in 0..c {
                        psi_vec.add_assign_at(i, ch, xi * x.get(t, f, ch).conj());
                    }
                }
            }
            let psi_mat = psi_mat.hermitian_part();
            hermitian_solve(&psi_mat, &psi_vec, cfg.loading)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionFilter {
        filters,
        delay: cfg.delay,
        taps: cfg.taps,
        channels: c,
    })
}

/// x_hat_{t,f} = x_{t,f} - G_f^H xbar_{t,f}
pub fn wpe_apply(
    x: &ComplexSpectrogram,
    filter: &PredictionFilter,
) -> Result<ComplexSpectrogram, WpeError> {
    if filter.filters.len() != x.bins() || filter.channels != x.channels() {
        return Err(WpeError::ShapeMismatch(format!(
            "filter for {} bins x {} channels vs spectrogram {} bins x {} channels",
            filter.filters.len(),
            filter.channels,
            x.bins(),
            x.channels()
        )));
    }
    let stacked = stack_delayed(x, filter.delay, filter.taps)?;
    let c = x.channels();
    let ck = c * filter.taps;
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.bins(), c);
    for t in 0..x.frames() {
        for f in 0..x.bins() {
            let g = &filter.filters[f];
            let xbar = stacked.cell(t, f);
            for ch in 0..c {
                let mut pred = Complex64::new(0.0, 0.0);
                for i in 0..ck {
                    pred += g.get(i, ch).conj() * xbar[i];
                }
                out.set(t, f, ch, x.get(t, f, ch) - pred);
            }
        }
    }
    Ok(out)
}

/// Iterative mask-based WPE. With a mask, the first iteration takes lambda
/// from the original input spectrum with that mask; later iterations (and the
/// maskless case) take lambda from the current dereverberated estimate with a
/// uniform mask. The filter statistics always come from the original input.
pub fn wpe_run(
    x: &ComplexSpectrogram,
    mask: Option<&TimeFrequencyMask>,
    cfg: &WpeConfig,
) -> Result<ComplexSpectrogram, WpeError> {
    if let Some(m) = mask {
        if !m.matches(x) {
            return Err(WpeError::ShapeMismatch("mask does not match spectrogram".into()));
        }
    }
    let uniform = TimeFrequencyMask::ones(x.frames(), x.bins(), x.channels());
    let mut estimate = x.clone();
    for iter in 0..cfg.iterations.max(1) {
        let mut lambda = match (iter, mask) {
            (0, Some(m)) => lambda_from_mask(x, m, LAMBDA_FLOOR)?,
            _ => lambda_from_mask(&estimate, &uniform, LAMBDA_FLOOR)?,
        };
        // Bound the 1/lambda weight range so near-silent cells cannot
        // dominate the prediction statistics.
        floor_lambda_relative(&mut lambda, x, LAMBDA_REL_FLOOR)?;
        let filter = wpe_filter(x, &lambda, cfg)?;
        estimate = wpe_apply(x, &filter)?;
    }
    Ok(estimate)
}
