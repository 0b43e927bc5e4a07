//! Synthetic multi-channel reverberant scene generation with ground-truth
//! early/late decomposition.
//!
//! Rooms are modelled by parametric RIRs: a unit direct-path tap followed by
//! randomly placed reflections whose energy follows the exponential decay
//! implied by the requested RT60. The early/late split (default 50 ms after
//! the direct path) gives the enhancement target and the interference part.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio_io::{read_wav, write_wav, SampleFormat, Waveform};

pub const DEFAULT_EARLY_BOUNDARY_MS: f64 = 50.0;

/// Scales reflection taps so the late tail carries substantial energy
/// relative to the direct path, as for a source well outside the critical
/// distance.
const REFLECTION_GAIN: f64 = 1.0;

/// Reflections start this long after the direct path: the first-order
/// reflections of a distant source arrive with a gap, and the dense tail
/// then decays exponentially. Keeps the enhancement target (direct path)
/// compact while the tail supplies the reverberation to remove.
const REFLECTION_ONSET_S: f64 = 0.03;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bad scene manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] crate::audio_io::AudioIoError),
}

/// Sampled room impulse response between one source and one microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    /// Index of the direct-path tap.
    pub direct_delay: usize,
}

/// A rendered scene with every component kept for oracle masks and metrics.
///
/// Invariant: mixture == sum of early and late images plus noise, per sample.
#[derive(Debug, Clone)]
pub struct MixtureScene {
    pub sample_rate: u32,
    /// J dry source waveforms.
    pub dry_sources: Vec<Vec<f64>>,
    /// J x C impulse responses.
    pub rirs: Vec<Vec<RoomImpulseResponse>>,
    /// C noise waveforms (already scaled to the target SNR).
    pub noise: Vec<Vec<f64>>,
    /// C mixture channels.
    pub mixture: Vec<Vec<f64>>,
    /// J x C early (direct + early reflections) images.
    pub early_images: Vec<Vec<Vec<f64>>>,
    /// J x C late-reverberation images.
    pub late_images: Vec<Vec<Vec<f64>>>,
    pub rt60: f64,
    pub snr_db: f64,
    pub early_boundary_ms: f64,
    pub seed: u64,
}

impl MixtureScene {
    pub fn num_sources(&self) -> usize {
        self.dry_sources.len()
    }

    pub fn num_channels(&self) -> usize {
        self.mixture.len()
    }

    pub fn num_samples(&self) -> usize {
        self.mixture[0].len()
    }

    /// Noise plus all late reverberation, per channel; the oracle "everything
    /// that is not an early image" component.
    pub fn residual_waveform(&self) -> Vec<Vec<f64>> {
        let mut out = self.noise.clone();
        for late in &self.late_images {
            for (c, img) in late.iter().enumerate() {
                for (o, v) in out[c].iter_mut().zip(img) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// Linear convolution via FFT.
pub fn convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + kernel.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = signal
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut b: Vec<Complex64> = kernel
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ifft.process(&mut a);
    a[..out_len].iter().map(|v| v.re / n as f64).collect()
}

/// Parametric RIR: unit direct tap at `delay_base`, then `n_reflections`
/// random-sign taps with amplitude envelope 10^(-3 t / rt60) (60 dB energy
/// decay at rt60). rt60 = 0 yields the direct tap only.
pub fn synth_rir(
    rt60: f64,
    delay_base: usize,
    n_reflections: usize,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<RoomImpulseResponse, SimError> {
    if rt60 < 0.0 || !rt60.is_finite() {
        return Err(SimError::InvalidParam(format!("rt60 = {rt60}")));
    }
    let fs = sample_rate as f64;
    if rt60 == 0.0 || n_reflections == 0 {
        let mut taps = vec![0.0; delay_base + 1];
        taps[delay_base] = 1.0;
        return Ok(RoomImpulseResponse {
            taps,
            sample_rate,
            direct_delay: delay_base,
        });
    }
    // Tail covers the full decay range.
    let tail = (rt60 * fs).ceil() as usize;
    let onset = ((REFLECTION_ONSET_S * fs) as usize)
        .min(tail.saturating_sub(1))
        .max(1);
    let mut taps = vec![0.0; delay_base + tail + 1];
    taps[delay_base] = 1.0;
    for _ in 0..n_reflections {
        let offset = rng.gen_range(onset..=tail);
        let t = offset as f64 / fs;
        let env = 10f64.powf(-3.0 * t / rt60);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let amp = rng.gen_range(0.3..1.0) * env * sign;
        // Density normalization keeps tail energy comparable across
        // reflection counts; the gain sets the overall reflected energy near
        // the direct-path energy, as in real rooms at these RT60s.
        taps[delay_base + offset] += REFLECTION_GAIN * amp / (n_reflections as f64).sqrt();
    }
    Ok(RoomImpulseResponse {
        taps,
        sample_rate,
        direct_delay: delay_base,
    })
}

/// Seeded convenience wrapper around [`synth_rir`].
pub fn synth_rir_seeded(
    rt60: f64,
    delay_base: usize,
    n_reflections: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<RoomImpulseResponse, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_rir(rt60, delay_base, n_reflections, sample_rate, &mut rng)
}

/// Renders dry sources through a J x C RIR set, splits each image at
/// `early_boundary_ms` past the direct path, and adds white Gaussian noise at
/// the requested mixture SNR (use `f64::INFINITY` for noiseless).
pub fn render_scene(
    dry_sources: &[Vec<f64>],
    rirs: &[Vec<RoomImpulseResponse>],
    snr_db: f64,
    early_boundary_ms: f64,
    rt60: f64,
    seed: u64,
) -> Result<MixtureScene, SimError> {
    if dry_sources.is_empty() || rirs.len() != dry_sources.len() {
        return Err(SimError::LengthMismatch(format!(
            "{} sources vs {} RIR rows",
            dry_sources.len(),
            rirs.len()
        )));
    }
    let channels = rirs[0].len();
    if channels == 0 || rirs.iter().any(|row| row.len() != channels) {
        return Err(SimError::LengthMismatch("ragged RIR set".into()));
    }
    let sample_rate = rirs[0][0].sample_rate;
    if rirs
        .iter()
        .flatten()
        .any(|r| r.sample_rate != sample_rate)
    {
        return Err(SimError::LengthMismatch("RIR sample rates differ".into()));
    }
    let n = dry_sources[0].len();
    if dry_sources.iter().any(|s| s.len() != n) {
        return Err(SimError::LengthMismatch("dry sources differ in length".into()));
    }

    let boundary = (early_boundary_ms / 1000.0 * sample_rate as f64).round() as usize;
    let mut early_images = Vec::with_capacity(dry_sources.len());
    let mut late_images = Vec::with_capacity(dry_sources.len());
    for (j, dry) in dry_sources.iter().enumerate() {
        let mut early_row = Vec::with_capacity(channels);
        let mut late_row = Vec::with_capacity(channels);
        for rir in &rirs[j] {
            let split = (rir.direct_delay + boundary + 1).min(rir.taps.len());
            let mut early_taps = rir.taps.clone();
            let mut late_taps = vec![0.0; rir.taps.len()];
            late_taps[split..].copy_from_slice(&rir.taps[split..]);
            for t in early_taps[split..].iter_mut() {
                *t = 0.0;
            }
            let mut early = convolve(dry, &early_taps);
            let mut late = convolve(dry, &late_taps);
            early.truncate(n);
            late.truncate(n);
            early.resize(n, 0.0);
            late.resize(n, 0.0);
            early_row.push(early);
            late_row.push(late);
        }
        early_images.push(early_row);
        late_images.push(late_row);
    }

    // Sum of all images per channel, before noise.
    let mut image_sum = vec![vec![0.0f64; n]; channels];
    for j in 0..dry_sources.len() {
        for c in 0..channels {
            for i in 0..n {
                image_sum[c][i] += early_images[j][c][i] + late_images[j][c][i];
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973);
    let mut noise = vec![vec![0.0f64; n]; channels];
    if snr_db.is_finite() {
        let image_energy: f64 = image_sum
            .iter()
            .map(|ch| ch.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let mut raw_energy = 0.0;
        for ch in noise.iter_mut() {
            for v in ch.iter_mut() {
                let s: f64 = StandardNormal.sample(&mut rng);
                *v = s;
                raw_energy += s * s;
            }
        }
        let scale = (image_energy / (10f64.powf(snr_db / 10.0) * raw_energy)).sqrt();
        for ch in noise.iter_mut() {
            for v in ch.iter_mut() {
                *v *= scale;
            }
        }
    }

    let mixture: Vec<Vec<f64>> = (0..channels)
        .map(|c| {
            (0..n)
                .map(|i| image_sum[c][i] + noise[c][i])
                .collect()
        })
        .collect();

    Ok(MixtureScene {
        sample_rate,
        dry_sources: dry_sources.to_vec(),
        rirs: rirs.to_vec(),
        noise,
        mixture,
        early_images,
        late_images,
        rt60,
        snr_db,
        early_boundary_ms,
        seed,
    })
}

/// Speech-like dry source: noise driven through a resonator whose center
/// frequency wanders per segment (a crude formant), with a slow random
/// amplitude envelope including pauses. The moving resonance plus pauses
/// give the time-frequency sparsity that makes two sources separable by
/// masking, as with real speech.
pub fn synth_dry_source(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0f64; len];
    let env_period = (sample_rate as usize / 8).max(1); // 125 ms segments
    let mut env = 0.0;
    let mut omega = 0.0f64;
    let mut lp = 0.0;
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    let r = 0.96; // resonator pole radius
    for i in 0..len {
        if i % env_period == 0 {
            // ~1 in 5 segments is a near-pause; otherwise log-uniform level.
            env = if rng.gen_bool(0.2) {
                0.03
            } else {
                10f64.powf(rng.gen_range(-1.2..0.0))
            };
            // Log-uniform formant-ish center frequency, 200..3500 Hz.
            let f0 = 200.0 * (3500.0f64 / 200.0).powf(rng.gen_range(0.0..1.0));
            omega = 2.0 * std::f64::consts::PI * f0 / fs;
        }
        let s: f64 = StandardNormal.sample(rng);
        // One-pole lowpass tilt, then a two-pole resonance at the segment's
        // center frequency.
        lp = 0.7 * lp + 0.3 * s;
        let y = lp + 2.0 * r * omega.cos() * y1 - r * r * y2;
        y2 = y1;
        y1 = y;
        out[i] = y * env;
    }
    let peak = out.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-12);
    for v in &mut out {
        *v *= 0.5 / peak;
    }
    out
}

/// Convenience scene generator used by the CLI and the benchmark suite.
pub struct SceneParams {
    pub num_sources: usize,
    pub num_channels: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub rt60: f64,
    pub snr_db: f64,
    pub early_boundary_ms: f64,
    pub n_reflections: usize,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            num_sources: 2,
            num_channels: 2,
            duration_s: 2.0,
            sample_rate: 16000,
            rt60: 0.3,
            snr_db: 20.0,
            early_boundary_ms: DEFAULT_EARLY_BOUNDARY_MS,
            n_reflections: 600,
            seed: 0,
        }
    }
}

/// Generates dry sources and RIRs from `params` and renders the scene.
/// Inter-channel delays differ per source so the scene has spatial structure.
pub fn generate_scene(params: &SceneParams) -> Result<MixtureScene, SimError> {
    if params.num_sources == 0 || params.num_channels == 0 {
        return Err(SimError::InvalidParam("need >= 1 source and channel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let len = (params.duration_s * params.sample_rate as f64).round() as usize;
    let dry: Vec<Vec<f64>> = (0..params.num_sources)
        .map(|_| synth_dry_source(len, params.sample_rate, &mut rng))
        .collect();
    let mut rirs = Vec::with_capacity(params.num_sources);
    for j in 0..params.num_sources {
        let mut row = Vec::with_capacity(params.num_channels);
        for c in 0..params.num_channels {
            // Distinct direct-path delays per (source, mic) give each source
            // a distinct spatial signature.
            let delay = 8 + 5 * j + ((j + 1) * (c + 1) * 3) % 17;
            row.push(synth_rir(
                params.rt60,
                delay,
                params.n_reflections,
                params.sample_rate,
                &mut rng,
            )?);
        }
        rirs.push(row);
    }
    render_scene(
        &dry,
        &rirs,
        params.snr_db,
        params.early_boundary_ms,
        params.rt60,
        params.seed,
    )
}

// --- scene directory serialization -----------------------------------------

/// Writes a scene as a directory: `manifest.txt` (key=value) plus float32 WAV
/// files for every component.
pub fn write_scene(dir: &Path, scene: &MixtureScene) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let fs = scene.sample_rate;
    write_wav(
        &dir.join("mixture.wav"),
        &Waveform::new(fs, scene.mixture.clone()),
        SampleFormat::Float32,
    )?;
    write_wav(
        &dir.join("noise.wav"),
        &Waveform::new(fs, scene.noise.clone()),
        SampleFormat::Float32,
    )?;
    for j in 0..scene.num_sources() {
        write_wav(
            &dir.join(format!("dry_{j}.wav")),
            &Waveform::new(fs, vec![scene.dry_sources[j].clone()]),
            SampleFormat::Float32,
        )?;
        write_wav(
            &dir.join(format!("early_{j}.wav")),
            &Waveform::new(fs, scene.early_images[j].clone()),
            SampleFormat::Float32,
        )?;
        write_wav(
            &dir.join(format!("late_{j}.wav")),
            &Waveform::new(fs, scene.late_images[j].clone()),
            SampleFormat::Float32,
        )?;
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "sample_rate={fs}");
    let _ = writeln!(manifest, "num_sources={}", scene.num_sources());
    let _ = writeln!(manifest, "num_channels={}", scene.num_channels());
    let _ = writeln!(manifest, "rt60={}", scene.rt60);
    let _ = writeln!(manifest, "snr_db={}", scene.snr_db);
    let _ = writeln!(manifest, "early_boundary_ms={}", scene.early_boundary_ms);
    let _ = writeln!(manifest, "seed={}", scene.seed);
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Reads a scene directory written by [`write_scene`]. RIRs and dry sources
/// are not needed downstream of rendering, so `rirs` comes back empty.
pub fn read_scene(dir: &Path) -> Result<MixtureScene, SimError> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt"))?;
    let mut kv = BTreeMap::new();
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SimError::BadManifest(format!("bad line: {line}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String, SimError> {
        kv.get(k)
            .ok_or_else(|| SimError::BadManifest(format!("missing key {k}")))
    };
    let parse_f = |k: &str| -> Result<f64, SimError> {
        let v = get(k)?;
        if v == "inf" {
            return Ok(f64::INFINITY);
        }
        v.parse()
            .map_err(|_| SimError::BadManifest(format!("bad value for {k}: {v}")))
    };
    let sample_rate: u32 = get("sample_rate")?
        .parse()
        .map_err(|_| SimError::BadManifest("bad sample_rate".into()))?;
    let num_sources: usize = get("num_sources")?
        .parse()
        .map_err(|_| SimError::BadManifest("bad num_sources".into()))?;

    let check_rate = |w: &Waveform| -> Result<(), SimError> {
        if w.sample_rate != sample_rate {
            return Err(SimError::BadManifest(format!(
                "WAV sample rate {} disagrees with manifest {}",
                w.sample_rate, sample_rate
            )));
        }
        Ok(())
    };
    let mixture_wav = read_wav(&dir.join("mixture.wav"))?;
    check_rate(&mixture_wav)?;
    let noise_wav = read_wav(&dir.join("noise.wav"))?;
    check_rate(&noise_wav)?;
    let mut dry_sources = Vec::new();
    let mut early_images = Vec::new();
    let mut late_images = Vec::new();
    for j in 0..num_sources {
        let dry = read_wav(&dir.join(format!("dry_{j}.wav")))?;
        check_rate(&dry)?;
        dry_sources.push(dry.channels.into_iter().next().unwrap());
        let early = read_wav(&dir.join(format!("early_{j}.wav")))?;
        check_rate(&early)?;
        early_images.push(early.channels);
        let late = read_wav(&dir.join(format!("late_{j}.wav")))?;
        check_rate(&late)?;
        late_images.push(late.channels);
    }
    Ok(MixtureScene {
        sample_rate,
        dry_sources,
        rirs: Vec::new(),
        noise: noise_wav.channels,
        mixture: mixture_wav.channels,
        early_images,
        late_images,
        rt60: parse_f("rt60")?,
        snr_db: parse_f("snr_db")?,
        early_boundary_ms: parse_f("early_boundary_ms")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| SimError::BadManifest("bad seed".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(N*L) direct convolution oracle.
    fn convolve_direct(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; signal.len() + kernel.len() - 1];
        for (i, &s) in signal.iter().enumerate() {
            for (k, &h) in kernel.iter().enumerate() {
                out[i + k] += s * h;
            }
        }
        out
    }

    /// Schroeder backward integration RT60 estimate from the -5..-25 dB slope.
    fn schroeder_rt60(taps: &[f64], sample_rate: u32) -> f64 {
        let total: f64 = taps.iter().map(|v| v * v).sum();
        let mut edc = Vec::with_capacity(taps.len());
        let mut rem = total;
        for &v in taps {
            edc.push(10.0 * (rem / total).max(1e-300).log10());
            rem -= v * v;
        }
        let idx_at = |db: f64| edc.iter().position(|&e| e <= db).unwrap();
        let (i5, i25) = (idx_at(-5.0), idx_at(-25.0));
        let slope = (edc[i25] - edc[i5]) / ((i25 - i5) as f64 / sample_rate as f64);
        -60.0 / slope
    }

    #[test]
    fn anechoic_rir_single_tap() {
        let rir = synth_rir_seeded(0.0, 10, 100, 16000, 1).unwrap();
        assert_eq!(rir.taps.len(), 11);
        assert_eq!(rir.taps[10], 1.0);
        assert!(rir.taps[..10].iter().all(|&t| t == 0.0));
    }

    #[test]
    fn rir_decay_matches_requested_rt60() {
        let rir = synth_rir_seeded(0.3, 8, 4000, 16000, 42).unwrap();
        // Drop the dominant direct tap so the estimate reflects the tail.
        let tail = &rir.taps[rir.direct_delay + 1..];
        let rt = schroeder_rt60(tail, 16000);
        assert!((rt - 0.3).abs() / 0.3 <= 0.2, "estimated rt60 {rt}");
    }

    #[test]
    fn rir_deterministic_under_seed() {
        let a = synth_rir_seeded(0.4, 5, 200, 16000, 7).unwrap();
        let b = synth_rir_seeded(0.4, 5, 200, 16000, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fft_convolution_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..37).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = convolve(&x, &h);
        let slow = convolve_direct(&x, &h);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn single_tap_rir_noiseless_mixture_is_delayed_source() {
        let dry = vec![(0..500).map(|i| (i as f64 * 0.01).sin()).collect::<Vec<_>>()];
        let rir = RoomImpulseResponse {
            taps: {
                let mut t = vec![0.0; 8];
                t[7] = 1.0;
                t
            },
            sample_rate: 16000,
            direct_delay: 7,
        };
        let scene =
            render_scene(&dry, &[vec![rir]], f64::INFINITY, 50.0, 0.0, 1).unwrap();
        for i in 7..500 {
            assert!((scene.mixture[0][i] - dry[0][i - 7]).abs() < 1e-12);
        }
        assert!(scene.noise[0].iter().all(|&v| v == 0.0));
        assert!(scene.late_images[0][0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixture_decomposition_is_exact() {
        let scene = generate_scene(&SceneParams {
            duration_s: 0.5,
            ..Default::default()
        })
        .unwrap();
        for c in 0..scene.num_channels() {
            for i in 0..scene.num_samples() {
                let mut sum = scene.noise[c][i];
                for j in 0..scene.num_sources() {
                    sum += scene.early_images[j][c][i] + scene.late_images[j][c][i];
                }
                assert!((scene.mixture[c][i] - sum).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn render_additivity_over_sources() {
        let params = SceneParams {
            duration_s: 0.3,
            snr_db: f64::INFINITY,
            ..Default::default()
        };
        let scene = generate_scene(&params).unwrap();
        // Render each source alone through its RIR row and sum.
        let s0 = render_scene(
            &scene.dry_sources[0..1],
            &scene.rirs[0..1],
            f64::INFINITY,
            params.early_boundary_ms,
            params.rt60,
            params.seed,
        )
        .unwrap();
        let s1 = render_scene(
            &scene.dry_sources[1..2],
            &scene.rirs[1..2],
            f64::INFINITY,
            params.early_boundary_ms,
            params.rt60,
            params.seed,
        )
        .unwrap();
        for c in 0..scene.num_channels() {
            for i in 0..scene.num_samples() {
                let sum = s0.mixture[c][i] + s1.mixture[c][i];
                assert!((scene.mixture[c][i] - sum).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn noise_scaled_to_requested_snr() {
        let scene = generate_scene(&SceneParams {
            duration_s: 1.0,
            snr_db: 10.0,
            ..Default::default()
        })
        .unwrap();
        let img_energy: f64 = (0..scene.num_channels())
            .map(|c| {
                (0..scene.num_samples())
                    .map(|i| {
                        let mut s = 0.0;
                        for j in 0..scene.num_sources() {
                            s += scene.early_images[j][c][i] + scene.late_images[j][c][i];
                        }
                        s * s
                    })
                    .sum::<f64>()
            })
            .sum();
        let noise_energy: f64 = scene
            .noise
            .iter()
            .map(|ch| ch.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let snr = 10.0 * (img_energy / noise_energy).log10();
        assert!((snr - 10.0).abs() <= 0.1, "snr {snr}");
    }

    #[test]
    fn scene_determinism_under_seed() {
        let p = SceneParams {
            duration_s: 0.25,
            seed: 99,
            ..Default::default()
        };
        let a = generate_scene(&p).unwrap();
        let b = generate_scene(&p).unwrap();
        assert_eq!(a.mixture, b.mixture);
        assert_eq!(a.noise, b.noise);
    }

    #[test]
    fn scene_directory_roundtrip() {
        let scene = generate_scene(&SceneParams {
            duration_s: 0.2,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &scene).unwrap();
        let back = read_scene(dir.path()).unwrap();
        assert_eq!(back.sample_rate, scene.sample_rate);
        assert_eq!(back.num_sources(), scene.num_sources());
        assert_eq!(back.num_channels(), scene.num_channels());
        // float32 on disk: compare to single precision.
        for c in 0..scene.num_channels() {
            for i in 0..scene.num_samples() {
                assert!((back.mixture[c][i] - scene.mixture[c][i]).abs() < 1e-6);
            }
        }
    }
}
