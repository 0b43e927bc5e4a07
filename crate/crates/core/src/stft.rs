//! STFT analysis/synthesis between multi-channel waveforms and complex
//! spectrograms.
//!
//! Analysis uses a periodic Hann window with frames zero-padded to the FFT
//! size; synthesis is overlap-add normalized by the summed squared window.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StftError {
    #[error("signal too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 16 kHz, 25 ms Hann window, 10 ms hop, 512-point FFT (257 bins).
    fn default() -> Self {
        StftConfig {
            sample_rate: 16000,
            win_len: 400,
            hop: 160,
            fft_size: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), StftError> {
        if self.hop == 0 || self.hop > self.win_len || self.win_len > self.fft_size {
            return Err(StftError::InvalidConfig(format!(
                "need 0 < hop <= win_len <= fft_size, got hop={} win_len={} fft_size={}",
                self.hop, self.win_len, self.fft_size
            )));
        }
        Ok(())
    }

    /// Periodic Hann window of length `win_len`.
    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.win_len as f64;
        (0..self.win_len)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect()
    }

    pub fn num_frames(&self, len: usize) -> Option<usize> {
        if len < self.win_len {
            None
        } else {
            Some((len - self.win_len) / self.hop + 1)
        }
    }
}

/// T x F x C complex STFT tensor; the universal signal carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, bins: usize, channels: usize) -> Self {
        ComplexSpectrogram {
            frames,
            bins,
            channels,
            data: vec![Complex64::new(0.0, 0.0); frames * bins * channels],
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
    pub fn get(&self, t: usize, f: usize, c: usize) -> Complex64 {
        self.data[self.idx(t, f, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, f: usize, c: usize, v: Complex64) {
        let i = self.idx(t, f, c);
        self.data[i] = v;
    }

    /// All channels of one time-frequency cell.
    pub fn cell(&self, t: usize, f: usize) -> &[Complex64] {
        let i = self.idx(t, f, 0);
        &self.data[i..i + self.channels]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexSpectrogram {
            frames: self.frames,
            bins: self.bins,
            channels: self.channels,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.frames == other.frames && self.bins == other.bins && self.channels == other.channels
    }

    /// Extracts a single channel as a C=1 spectrogram.
    pub fn channel(&self, c: usize) -> Self {
        assert!(c < self.channels);
        let mut out = Self::zeros(self.frames, self.bins, 1);
        for t in 0..self.frames {
            for f in 0..self.bins {
                out.set(t, f, 0, self.get(t, f, c));
            }
        }
        out
    }
}

/// Multi-channel analysis. `wave` is channels x samples, all equal length.
pub fn stft(wave: &[Vec<f64>], cfg: &StftConfig) -> Result<ComplexSpectrogram, StftError> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(StftError::DimensionMismatch("no channels".into()));
    }
    let len = wave[0].len();
    if wave.iter().any(|ch| ch.len() != len) {
        return Err(StftError::DimensionMismatch(
            "channels have unequal lengths".into(),
        ));
    }
    let frames = cfg
        .num_frames(len)
        .ok_or(StftError::TooShort {
            len,
            min: cfg.win_len,
        })?;

    let window = cfg.window_samples();
    let bins = cfg.num_bins();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut out = ComplexSpectrogram::zeros(frames, bins, wave.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];

    for (c, ch) in wave.iter().enumerate() {
        for t in 0..frames {
            let start = t * cfg.hop;
            for i in 0..cfg.fft_size {
                let v = if i < cfg.win_len {
                    ch[start + i] * window[i]
                } else {
                    0.0
                };
                buf[i] = Complex64::new(v, 0.0);
            }
            fft.process(&mut buf);
            for f in 0..bins {
                out.set(t, f, c, buf[f]);
            }
        }
    }
    Ok(out)
}

/// Overlap-add synthesis to `out_len` samples per channel.
pub fn istft(
    spec: &ComplexSpectrogram,
    cfg: &StftConfig,
    out_len: usize,
) -> Result<Vec<Vec<f64>>, StftError> {
    cfg.validate()?;
    if spec.bins() != cfg.num_bins() {
        return Err(StftError::DimensionMismatch(format!(
            "spectrogram has {} bins, config expects {}",
            spec.bins(),
            cfg.num_bins()
        )));
    }
    let window = cfg.window_samples();
    let n = cfg.fft_size;
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let acc_len = (spec.frames().saturating_sub(1)) * cfg.hop + n;
    let mut weight = vec![0.0f64; acc_len.max(out_len)];
    for t in 0..spec.frames() {
        let start = t * cfg.hop;
        for i in 0..cfg.win_len {
            weight[start + i] += window[i] * window[i];
        }
    }

    let mut out = Vec::with_capacity(spec.channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..spec.channels() {
        let mut acc = vec![0.0f64; acc_len.max(out_len)];
        for t in 0..spec.frames() {
            // Rebuild the full spectrum from the one-sided half.
            for f in 0..spec.bins() {
                buf[f] = spec.get(t, f, c);
            }
            for f in spec.bins()..n {
                buf[f] = spec.get(t, n - f, c).conj();
            }
            ifft.process(&mut buf);
            let start = t * cfg.hop;
            for i in 0..cfg.win_len {
                acc[start + i] += buf[i].re / n as f64 * window[i];
            }
        }
        let mut ch = vec![0.0f64; out_len];
        for i in 0..out_len.min(acc.len()) {
            ch[i] = acc[i] / weight[i].max(1e-10);
        }
        out.push(ch);
    }
    Ok(out)
}
