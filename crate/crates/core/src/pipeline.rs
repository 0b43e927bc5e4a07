//! Frontend architectures wiring the filter modules into end-to-end
//! waveform-in, waveform-out separation.
//!
//! Three frontends: plain mask-based MVDR, cascaded WPE then MVDR, and the
//! unified WPD convolutional beamformer. All share the STFT configuration and
//! the mask set; outputs are J mono waveforms at the input length.

use thiserror::Error;

use crate::masks::{oracle_irm, MaskError, OracleMasks, TimeFrequencyMask};
use crate::metrics::{best_permutation_si_sdr, si_sdr, MetricError, MetricReport};
use crate::mvdr::{mvdr_separate_lenient, MvdrError, ReferenceVector};
use crate::simulator::MixtureScene;
use crate::stft::{istft, stft, StftConfig, StftError};
use crate::wpd::{wpd_separate_lenient, WpdConfig, WpdError};
use crate::wpe::{wpe_run, WpeConfig, WpeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Wpe(#[from] WpeError),
    #[error(transparent)]
    Mvdr(#[from] MvdrError),
    #[error(transparent)]
    Wpd(#[from] WpdError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Mask-based MVDR beamforming only.
    Mvdr,
    /// Cascade: shared-mask WPE dereverberation, then MVDR.
    WpeMvdr,
    /// Unified WPD convolutional beamformer.
    Wpd,
}

impl Architecture {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mvdr" => Some(Architecture::Mvdr),
            "wpe_mvdr" | "wpe-mvdr" => Some(Architecture::WpeMvdr),
            "wpd" => Some(Architecture::Wpd),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Mvdr => "mvdr",
            Architecture::WpeMvdr => "wpe_mvdr",
            Architecture::Wpd => "wpd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub arch: Architecture,
    pub stft: StftConfig,
    pub wpe: WpeConfig,
    pub wpd: WpdConfig,
    pub ref_channel: usize,
    pub loading: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            arch: Architecture::Wpd,
            stft: StftConfig::default(),
            wpe: WpeConfig::default(),
            wpd: WpdConfig::default(),
            ref_channel: 0,
            loading: crate::linalg::DEFAULT_LOADING,
        }
    }
}

/// Mask inputs for one run: noise mask plus one mask per speaker, shapes
/// matching the mixture spectrogram.
pub struct MaskSet {
    pub noise: TimeFrequencyMask,
    pub speakers: Vec<TimeFrequencyMask>,
    /// Optional independent PSD-path masks for the WPD frontend (the
    /// two-estimator mode); `None` means the speaker masks drive both the
    /// dereverberation and the beamforming statistics.
    pub phi_speakers: Option<Vec<TimeFrequencyMask>>,
}

impl From<OracleMasks> for MaskSet {
    fn from(m: OracleMasks) -> Self {
        MaskSet {
            noise: m.noise,
            speakers: m.speakers,
            phi_speakers: None,
        }
    }
}

/// Runs the configured frontend on a multi-channel waveform and returns J
/// mono waveforms of the input length.
pub fn run_separation(
    mixture: &[Vec<f64>],
    masks: &MaskSet,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    run_separation_lenient(mixture, masks, cfg)?
        .into_iter()
        .collect()
}

/// Like [`run_separation`], but degenerate per-source failures (an all-silent
/// speaker mask) are returned per source instead of aborting the whole run,
/// so callers can substitute silence and keep the remaining sources. Global
/// failures (bad shapes, STFT or dereverberation errors) still abort.
pub fn run_separation_lenient(
    mixture: &[Vec<f64>],
    masks: &MaskSet,
    cfg: &PipelineConfig,
) -> Result<Vec<Result<Vec<f64>, PipelineError>>, PipelineError> {
    if masks.speakers.is_empty() {
        return Err(PipelineError::Config("no speaker masks".into()));
    }
    let out_len = mixture[0].len();
    let x = stft(mixture, &cfg.stft)?;
    let u = ReferenceVector::new(cfg.ref_channel, x.channels());
    let noise_first: Vec<&TimeFrequencyMask> = std::iter::once(&masks.noise)
        .chain(masks.speakers.iter())
        .collect();
    let speaker_masks: Vec<&TimeFrequencyMask> = masks.speakers.iter().collect();

    let separated: Vec<Result<crate::stft::ComplexSpectrogram, PipelineError>> = match cfg.arch {
        Architecture::Mvdr => mvdr_separate_lenient(&x, &noise_first, &u, cfg.loading)?
            .into_iter()
            .map(|r| r.map_err(PipelineError::from))
            .collect(),
        Architecture::WpeMvdr => {
            let wpe_mask = early_sum_from_set(masks);
            let dereverbed = wpe_run(&x, Some(&wpe_mask), &cfg.wpe)?;
            mvdr_separate_lenient(&dereverbed, &noise_first, &u, cfg.loading)?
                .into_iter()
                .map(|r| r.map_err(PipelineError::from))
                .collect()
        }
        Architecture::Wpd => {
            let wpd_cfg = WpdConfig {
                ref_channel: cfg.ref_channel,
                loading: cfg.loading,
                ..cfg.wpd
            };
            if let Some(pm) = &masks.phi_speakers {
                if pm.len() != masks.speakers.len() {
                    return Err(PipelineError::Config(
                        "phi mask count differs from speaker mask count".into(),
                    ));
                }
            }
            let phi_refs: Option<Vec<&TimeFrequencyMask>> =
                masks.phi_speakers.as_ref().map(|pm| pm.iter().collect());
            wpd_separate_lenient(&x, &speaker_masks, phi_refs.as_deref(), &wpd_cfg)?
                .into_iter()
                .map(|r| r.map_err(PipelineError::from))
                .collect()
        }
    };

    separated
        .into_iter()
        .map(|r| match r {
            Ok(spec) => {
                let mut chans = istft(&spec, &cfg.stft, out_len)?;
                Ok(Ok(chans.remove(0)))
            }
            Err(e) => Ok(Err(e)),
        })
        .collect()
}

/// Union-of-speakers mask used by the WPE stage of the cascade.
fn early_sum_from_set(masks: &MaskSet) -> TimeFrequencyMask {
    let (t, f, c) = (
        masks.noise.frames(),
        masks.noise.bins(),
        masks.noise.channels(),
    );
    let mut out = TimeFrequencyMask::zeros(t, f, c);
    for ti in 0..t {
        for fi in 0..f {
            for ci in 0..c {
                let s: f64 = masks.speakers.iter().map(|m| m.get(ti, fi, ci)).sum();
                out.set(ti, fi, ci, s.clamp(0.0, 1.0)).unwrap();
            }
        }
    }
    out
}

/// Oracle-mask separation of a simulated scene.
pub fn separate_scene(
    scene: &MixtureScene,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let masks: MaskSet = oracle_irm(scene, &cfg.stft)?.into();
    run_separation(&scene.mixture, &masks, cfg)
}

/// Scores separated outputs against the scene's early images at the
/// reference channel, with the unprocessed mixture as the baseline.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub report: MetricReport,
    /// Per paired source: SI-SDR of the raw mixture against the same
    /// reference.
    pub unprocessed: Vec<f64>,
}

impl EvalReport {
    pub fn improvements(&self) -> Vec<f64> {
        self.report
            .si_sdr
            .iter()
            .zip(&self.unprocessed)
            .map(|(e, u)| e - u)
            .collect()
    }

    pub fn mean_improvement(&self) -> f64 {
        let imp = self.improvements();
        imp.iter().sum::<f64>() / imp.len() as f64
    }
}

/// Scores on interior samples only: synthesis edge frames are excluded
/// because the overlap-add weights vanish at the signal boundaries.
pub fn evaluate_against_scene(
    estimates: &[Vec<f64>],
    scene: &MixtureScene,
    ref_channel: usize,
    stft_cfg: &StftConfig,
) -> Result<EvalReport, PipelineError> {
    let n = scene.num_samples();
    let margin = stft_cfg.win_len;
    if n <= 2 * margin {
        return Err(PipelineError::Config(
            "scene too short to evaluate interior samples".into(),
        ));
    }
    let interior = |w: &[f64]| w[margin..n - margin].to_vec();
    let references: Vec<Vec<f64>> = (0..scene.num_sources())
        .map(|j| interior(&scene.early_images[j][ref_channel]))
        .collect();
    let estimates: Vec<Vec<f64>> = estimates.iter().map(|e| interior(e)).collect();
    let report = best_permutation_si_sdr(&estimates, &references)?;
    let mixture = interior(&scene.mixture[ref_channel]);
    let unprocessed = report
        .permutation
        .iter()
        .map(|&r| si_sdr(&mixture, &references[r]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        report,
        unprocessed,
    })
}
