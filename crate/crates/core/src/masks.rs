//! Time-frequency masks and the mask-driven power estimate lambda.
//!
//! Masks are real-valued in [0, 1]. Oracle masks are magnitude-ratio masks
//! computed from simulator ground truth (early source images vs. everything
//! else), standing in for a learned estimator.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::simulator::MixtureScene;
use crate::stft::{stft, ComplexSpectrogram, StftConfig};

/// Default floor for the lambda power estimate.
pub const LAMBDA_FLOOR: f64 = 1e-10;

/// Default relative floor for [`floor_lambda_relative`]: per bin, lambda is
/// kept above this fraction of the bin's mean power.
pub const LAMBDA_REL_FLOOR: f64 = 1e-1;

const MASK_FILE_MAGIC: &[u8; 4] = b"TFM1";

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask value {value} at ({t},{f},{c}) outside [0,1]")]
    OutOfRange { t: usize, f: usize, c: usize, value: f64 },
    #[error("scene is missing ground truth: {0}")]
    MissingGroundTruth(String),
    #[error("bad mask file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stft(#[from] crate::stft::StftError),
}

/// T x F x C real mask in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrequencyMask {
    frames: usize,
    bins: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TimeFrequencyMask {
    pub fn zeros(frames: usize, bins: usize, channels: usize) -> Self {
        TimeFrequencyMask {
            frames,
            bins,
            channels,
            data: vec![0.0; frames * bins * channels],
        }
    }

    pub fn ones(frames: usize, bins: usize, channels: usize) -> Self {
        TimeFrequencyMask {
            frames,
            bins,
            channels,
            data: vec![1.0; frames * bins * channels],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn idx(&self, t: usize, f: usize, c: usize) -> usize {
        (t * self.bins + f) * self.channels + c
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize, c: usize) -> f64 {
        self.data[self.idx(t, f, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, f: usize, c: usize, v: f64) -> Result<(), MaskError> {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(MaskError::OutOfRange { t, f, c, value: v });
        }
        let i = self.idx(t, f, c);
        self.data[i] = v;
        Ok(())
    }

    pub fn matches(&self, spec: &ComplexSpectrogram) -> bool {
        self.frames == spec.frames() && self.bins == spec.bins() && self.channels == spec.channels()
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// T x F nonnegative power estimate, floored.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl PowerEstimate {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Builds an estimate from row-major (frame-major) values, flooring
    /// negatives to zero.
    pub fn from_values(frames: usize, bins: usize, values: Vec<f64>) -> Result<Self, MaskError> {
        if values.len() != frames * bins {
            return Err(MaskError::ShapeMismatch(format!(
                "{} values for {frames}x{bins}",
                values.len()
            )));
        }
        Ok(PowerEstimate {
            frames,
            bins,
            data: values.into_iter().map(|v| v.max(0.0)).collect(),
        })
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.bins + f]
    }
}

/// Mask-weighted time-variant power of the input signal:
/// lambda_{t,f} = (1/C) sum_c m_{t,f,c} / mean_tau(m_{tau,f,c}) * |x_{t,f,c}|^2,
/// floored elementwise at `floor`.
pub fn lambda_from_mask(
    x: &ComplexSpectrogram,
    m: &TimeFrequencyMask,
    floor: f64,
) -> Result<PowerEstimate, MaskError> {
    if !m.matches(x) {
        return Err(MaskError::ShapeMismatch(format!(
            "mask {}x{}x{} vs spectrogram {}x{}x{}",
            m.frames,
            m.bins,
            m.channels,
            x.frames(),
            x.bins(),
            x.channels()
        )));
    }
    let (frames, bins, channels) = (x.frames(), x.bins(), x.channels());
    // Per (f, c) time average of the mask, floored to protect the division.
    let mut mean = vec![0.0f64; bins * channels];
    for t in 0..frames {
        for f in 0..bins {
            for c in 0..channels {
                mean[f * channels + c] += m.get(t, f, c);
            }
        }
    }
    for v in &mut mean {
        *v = (*v / frames as f64).max(1e-10);
    }

    let mut data = vec![0.0f64; frames * bins];
    for t in 0..frames {
        for f in 0..bins {
            let mut acc = 0.0;
            for c in 0..channels {
                acc += m.get(t, f, c) / mean[f * channels + c] * x.get(t, f, c).norm_sqr();
            }
            data[t * bins + f] = (acc / channels as f64).max(floor);
        }
    }
    Ok(PowerEstimate { frames, bins, data })
}

/// Raises the floor of `lambda` per bin to `delta` times the bin's mean
/// channel-averaged power. Bounds the dynamic range of the 1/lambda weights
/// so that near-silent cells cannot dominate the weighted statistics.
pub fn floor_lambda_relative(
    lambda: &mut PowerEstimate,
    x: &ComplexSpectrogram,
    delta: f64,
) -> Result<(), MaskError> {
    if lambda.frames != x.frames() || lambda.bins != x.bins() {
        return Err(MaskError::ShapeMismatch(format!(
            "lambda {}x{} vs spectrogram {}x{}",
            lambda.frames,
            lambda.bins,
            x.frames(),
            x.bins()
        )));
    }
    let (frames, bins, channels) = (x.frames(), x.bins(), x.channels());
    for f in 0..bins {
        let mut mean = 0.0;
        for t in 0..frames {
            for c in 0..channels {
                mean += x.get(t, f, c).norm_sqr();
            }
        }
        mean /= (frames * channels) as f64;
        let floor = delta * mean;
        for t in 0..frames {
            let i = t * bins + f;
            if lambda.data[i] < floor {
                lambda.data[i] = floor;
            }
        }
    }
    Ok(())
}

/// Arithmetic mean over channels, returned as T*F row-major values.
pub fn mask_channel_average(m: &TimeFrequencyMask) -> Vec<f64> {
    let mut out = vec![0.0f64; m.frames * m.bins];
    for t in 0..m.frames {
        for f in 0..m.bins {
            let mut acc = 0.0;
            for c in 0..m.channels {
                acc += m.get(t, f, c);
            }
            out[t * m.bins + f] = acc / m.channels as f64;
        }
    }
    out
}

/// Oracle masks for one scene: index 0 is the noise+late-reverberation mask,
/// indices 1..=J are per-source magnitude-ratio masks over early images.
pub struct OracleMasks {
    pub noise: TimeFrequencyMask,
    pub speakers: Vec<TimeFrequencyMask>,
}

impl OracleMasks {
    /// Masks ordered noise first, as the MVDR path expects.
    pub fn noise_first(&self) -> Vec<&TimeFrequencyMask> {
        std::iter::once(&self.noise).chain(self.speakers.iter()).collect()
    }
}

/// Magnitude-ratio oracle masks: m^j = |S^j| / (sum_i |S^i| + |N| + eps) with
/// S^i the early image of source i and N the residual (noise plus all late
/// reverberation).
pub fn oracle_irm(scene: &MixtureScene, cfg: &StftConfig) -> Result<OracleMasks, MaskError> {
    if scene.early_images.is_empty() {
        return Err(MaskError::MissingGroundTruth("no early images".into()));
    }
    let eps = 1e-10;
    let mut early_specs = Vec::with_capacity(scene.num_sources());
    for j in 0..scene.num_sources() {
        early_specs.push(stft(&scene.early_images[j], cfg)?);
    }
    let residual = scene.residual_waveform();
    let noise_spec = stft(&residual, cfg)?;

    let (frames, bins, channels) = (
        noise_spec.frames(),
        noise_spec.bins(),
        noise_spec.channels(),
    );
    let mut speakers = Vec::with_capacity(scene.num_sources());
    let mut noise = TimeFrequencyMask::zeros(frames, bins, channels);
    for _ in 0..scene.num_sources() {
        speakers.push(TimeFrequencyMask::zeros(frames, bins, channels));
    }
    for t in 0..frames {
        for f in 0..bins {
            for c in 0..channels {
                let n_mag = noise_spec.get(t, f, c).norm();
                let mut denom = n_mag + eps;
                for spec in &early_specs {
                    denom += spec.get(t, f, c).norm();
                }
                for (j, spec) in early_specs.iter().enumerate() {
                    let v = (spec.get(t, f, c).norm() / denom).clamp(0.0, 1.0);
                    speakers[j].set(t, f, c, v)?;
                }
                noise.set(t, f, c, (n_mag / denom).clamp(0.0, 1.0))?;
            }
        }
    }
    Ok(OracleMasks { noise, speakers })
}

/// Mask targeting the sum of all early source images; the default WPE-stage
/// mask (everything except noise and late reverberation).
pub fn early_sum_mask(masks: &OracleMasks) -> TimeFrequencyMask {
    let (frames, bins, channels) = (
        masks.noise.frames(),
        masks.noise.bins(),
        masks.noise.channels(),
    );
    let mut out = TimeFrequencyMask::zeros(frames, bins, channels);
    for t in 0..frames {
        for f in 0..bins {
            for c in 0..channels {
                let s: f64 = masks.speakers.iter().map(|m| m.get(t, f, c)).sum();
                out.set(t, f, c, s.clamp(0.0, 1.0)).unwrap();
            }
        }
    }
    out
}

/// Writes a mask as `TFM1` magic, u32 LE dims T, F, C, then T*F*C f64 LE
/// values in (t, f, c) order.
pub fn write_mask_file(path: &Path, m: &TimeFrequencyMask) -> Result<(), MaskError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MASK_FILE_MAGIC)?;
    for dim in [m.frames, m.bins, m.channels] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mask_file(path: &Path) -> Result<TimeFrequencyMask, MaskError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MASK_FILE_MAGIC {
        return Err(MaskError::BadFile("bad magic".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [frames, bins, channels] = dims;
    let count = frames
        .checked_mul(bins)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| MaskError::BadFile("dims overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut b)?;
        let v = f64::from_le_bytes(b);
        if !(0.0..=1.0).contains(&v) {
            return Err(MaskError::BadFile(format!("value {v} outside [0,1]")));
        }
        data.push(v);
    }
    Ok(TimeFrequencyMask {
        frames,
        bins,
        channels,
        data,
    })
}
