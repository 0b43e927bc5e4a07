//! Mask-based multi-source MVDR beamforming, Souden formulation: the filter
//! comes from PSD matrices alone, no steering vector.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{hermitian_solve, ComplexMatrix, ComplexVector, LinalgError};
use crate::masks::{mask_channel_average, TimeFrequencyMask};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Error)]
pub enum MvdrError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate target PSD: |trace| = {0:.3e} < 1e-12")]
    ZeroTrace(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One-hot reference microphone selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceVector {
    pub channel: usize,
    pub channels: usize,
}

impl ReferenceVector {
    pub fn new(channel: usize, channels: usize) -> Self {
        assert!(channel < channels, "reference channel out of range");
        ReferenceVector { channel, channels }
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.channels];
        v[self.channel] = 1.0;
        v
    }
}

/// Mask-weighted cross-channel PSD matrices, one C x C Hermitian matrix per
/// frequency bin: Phi_f = sum_t m_{t,f} x x^H / sum_t m_{t,f}.
pub fn psd(
    x: &ComplexSpectrogram,
    mask_avg: &[f64],
) -> Result<Vec<ComplexMatrix>, MvdrError> {
    if mask_avg.len() != x.frames() * x.bins() {
        return Err(MvdrError::ShapeMismatch(format!(
            "mask length {} vs T*F = {}",
            mask_avg.len(),
            x.frames() * x.bins()
        )));
    }
    let c = x.channels();
    Ok((0..x.bins())
        .into_par_iter()
        .map(|f| {
            let mut phi = ComplexMatrix::zeros(c, c);
            let mut weight = 0.0;
            for t in 0..x.frames() {
                let m = mask_avg[t * x.bins() + f];
                weight += m;
                phi.add_scaled_outer_self(x.cell(t, f), m);
            }
            phi.scale(Complex64::new(1.0 / weight.max(1e-10), 0.0))
                .hermitian_part()
        })
        .collect())
}

/// Souden MVDR filter:
/// g = [ (Phi_intf)^-1 Phi_target / Trace((Phi_intf)^-1 Phi_target) ] u.
pub fn mvdr_filter(
    psd_target: &ComplexMatrix,
    psd_interference: &ComplexMatrix,
    u: &ReferenceVector,
    loading: f64,
) -> Result<ComplexVector, MvdrError> {
    let numerator = hermitian_solve(psd_interference, psd_target, loading)?;
    let tr = numerator.trace()?;
    if tr.norm() < 1e-12 {
        return Err(MvdrError::ZeroTrace(tr.norm()));
    }
    Ok(numerator
        .column(u.channel)
        .into_iter()
        .map(|v| v / tr)
        .collect())
}

/// x_hat_{t,f} = g_f^H x_{t,f}, one filter per bin.
pub fn beamform_apply(
    x: &ComplexSpectrogram,
    filters: &[ComplexVector],
) -> Result<ComplexSpectrogram, MvdrError> {
    if filters.len() != x.bins() || filters.iter().any(|g| g.len() != x.channels()) {
        return Err(MvdrError::ShapeMismatch(format!(
            "{} filters vs {} bins x {} channels",
            filters.len(),
            x.bins(),
            x.channels()
        )));
    }
    let mut out = ComplexSpectrogram::zeros(x.frames(), x.bins(), 1);
    for t in 0..x.frames() {
        for f in 0..x.bins() {
            let g = &filters[f];
            let v: Complex64 = g
                .iter()
                .zip(x.cell(t, f))
                .map(|(gi, xi)| gi.conj() * xi)
                .sum();
            out.set(t, f, 0, v);
        }
    }
    Ok(out)
}

/// Separates a mixture into J single-channel streams. `masks` is ordered
/// noise first (j = 0), then one mask per speaker; the interference PSD for
/// speaker j is the sum of every other source's PSD, noise included.
pub fn mvdr_separate(
    x: &ComplexSpectrogram,
    masks: &[&TimeFrequencyMask],
    u: &ReferenceVector,
    loading: f64,
) -> Result<Vec<ComplexSpectrogram>, MvdrError> {
    mvdr_separate_lenient(x, masks, u, loading)?
        .into_iter()
        .collect()
}

/// Like [`mvdr_separate`], but a degenerate speaker (all-silent mask) is
/// reported in that speaker's slot instead of aborting the whole call; the
/// remaining speakers still see its PSD in their interference terms. Shape
/// errors still abort.
pub fn mvdr_separate_lenient(
    x: &ComplexSpectrogram,
    masks: &[&TimeFrequencyMask],
    u: &ReferenceVector,
    loading: f64,
) -> Result<Vec<Result<ComplexSpectrogram, MvdrError>>, MvdrError> {
    if masks.len() < 2 {
        return Err(MvdrError::ShapeMismatch(
            "need a noise mask plus at least one speaker mask".into(),
        ));
    }
    if masks.iter().any(|m| !m.matches(x)) {
        return Err(MvdrError::ShapeMismatch(
            "mask shape does not match spectrogram".into(),
        ));
    }
    let psds: Vec<Vec<ComplexMatrix>> = masks
        .iter()
        .map(|m| psd(x, &mask_channel_average(m)))
        .collect::<Result<_, _>>()?;
    let mut outputs = Vec::with_capacity(masks.len() - 1);
    for j in 1..masks.len() {
        let per_bin: Vec<Result<ComplexVector, MvdrError>> = (0..x.bins())
            .into_par_iter()
            .map(|f| {
                let mut interference = ComplexMatrix::zeros(x.channels(), x.channels());
                for (i, p) in psds.iter().enumerate() {
                    if i != j {
                        interference = interference.add(&p[f]).expect("same shape");
                    }
                }
                mvdr_filter(&psds[j][f], &interference, u, loading)
            })
            .collect();
        // A bin where the source carries no energy degrades to a zero filter
        // (silence in that bin); only a source degenerate in every bin errors.
        if per_bin.iter().all(|r| matches!(r, Err(MvdrError::ZeroTrace(_)))) {
            outputs.push(Err(per_bin.into_iter().next().unwrap().unwrap_err()));
            continue;
        }
        let filters: Vec<ComplexVector> = per_bin
            .into_iter()
            .map(|r| match r {
                Err(MvdrError::ZeroTrace(_)) => {
                    Ok(vec![Complex64::new(0.0, 0.0); x.channels()])
                }
                other => other,
            })
            .collect::<Result<_, _>>()?;
        outputs.push(Ok(beamform_apply(x, &filters)?));
    }
    Ok(outputs)
}
