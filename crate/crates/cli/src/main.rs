//! `convbeam`: batch frontend for the dereverberation/separation toolkit.
//!
//! Subcommands: `simulate` renders a synthetic reverberant scene to a
//! directory, `dereverb` runs multi-channel WPE on a WAV file, `separate`
//! runs one of the beamforming frontends and writes one mono WAV per source,
//! and `eval` scores estimates against a scene's ground truth.

mod settings;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use convbeam_core::audio_io::{read_wav, write_wav, SampleFormat, Waveform};
use convbeam_core::masks::{oracle_irm, read_mask_file};
use convbeam_core::pipeline::{
    evaluate_against_scene, run_separation_lenient, Architecture, MaskSet, PipelineConfig,
};
use convbeam_core::simulator::{generate_scene, read_scene, write_scene, MixtureScene, SceneParams};
use convbeam_core::stft::{istft, stft, StftConfig};
use convbeam_core::wpe::{wpe_run, WpeConfig};
use convbeam_core::TimeFrequencyMask;

use settings::Settings;

#[derive(Parser)]
#[command(
    name = "convbeam",
    version,
    about = "Multi-channel speech dereverberation and separation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic reverberant scene to a directory.
    Simulate(SimulateArgs),
    /// Dereverberate a multi-channel WAV with WPE.
    Dereverb(DereverbArgs),
    /// Separate a mixture into per-source WAVs with a beamforming frontend.
    Separate(SeparateArgs),
    /// Score source estimates against a scene's ground truth.
    Eval(EvalArgs),
}

/// Flags shared by every subcommand. Values resolve as: command line, then
/// the key of the same name in `--param-file`, then the built-in default
/// (`CONVBEAM_THREADS` serves as the fallback for `--threads`).
#[derive(Args)]
struct CommonArgs {
    /// Optional key=value parameter file; command-line flags win.
    #[arg(long, value_name = "FILE")]
    param_file: Option<PathBuf>,
    /// Worker threads for per-frequency parallelism (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        Settings::load(self.param_file.as_deref())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output scene directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of speech sources.
    #[arg(long)]
    sources: Option<usize>,
    /// Number of microphone channels.
    #[arg(long)]
    channels: Option<usize>,
    /// Scene duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Reverberation time in seconds (0 = anechoic).
    #[arg(long)]
    rt60: Option<f64>,
    /// Sensor noise level in dB SNR.
    #[arg(long)]
    snr: Option<f64>,
    /// Early/late split point after the direct path, in milliseconds.
    #[arg(long)]
    early_boundary_ms: Option<f64>,
    /// Number of simulated reflections per impulse response.
    #[arg(long)]
    reflections: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DereverbArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input multi-channel WAV.
    #[arg(long, value_name = "WAV")]
    input: PathBuf,
    /// Output WAV (same channel count, float32).
    #[arg(long, value_name = "WAV")]
    output: PathBuf,
    /// Prediction filter taps.
    #[arg(long)]
    taps: Option<usize>,
    /// Prediction delay in frames.
    #[arg(long)]
    delay: Option<usize>,
    /// Power-estimate refinement iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Diagonal loading for the normal-equation solves.
    #[arg(long)]
    loading: Option<f64>,
}

#[derive(Args)]
struct SeparateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scene directory (enables oracle masks and ground-truth scoring).
    #[arg(long, value_name = "DIR", conflicts_with = "input")]
    scene: Option<PathBuf>,
    /// Input multi-channel WAV (requires mask files or uniform masks).
    #[arg(long, value_name = "WAV")]
    input: Option<PathBuf>,
    /// Output directory for per-source WAVs and the report.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Frontend: mvdr, wpe_mvdr, or wpd.
    #[arg(long)]
    arch: Option<String>,
    /// Mask source: oracle, uniform, or file.
    #[arg(long)]
    mask_source: Option<String>,
    /// One mask file per speaker (repeatable), for --mask-source file.
    #[arg(long, value_name = "FILE")]
    mask_file: Vec<PathBuf>,
    /// Noise mask file, for --mask-source file.
    #[arg(long, value_name = "FILE")]
    noise_mask_file: Option<PathBuf>,
    /// Per-speaker PSD-path mask files for --split-masks (repeatable).
    #[arg(long, value_name = "FILE")]
    phi_mask_file: Vec<PathBuf>,
    /// Number of sources, for --mask-source uniform.
    #[arg(long)]
    sources: Option<usize>,
    /// Convolutional taps (WPD) / prediction taps (WPE stage).
    #[arg(long)]
    taps: Option<usize>,
    /// Prediction delay in frames.
    #[arg(long)]
    delay: Option<usize>,
    /// WPE power-estimate refinement iterations (cascade only).
    #[arg(long)]
    iterations: Option<usize>,
    /// Diagonal loading for the matrix solves.
    #[arg(long)]
    loading: Option<f64>,
    /// Reference microphone channel.
    #[arg(long)]
    ref_channel: Option<usize>,
    /// One mask drives both the dereverberation and beamforming statistics
    /// (default).
    #[arg(long, conflicts_with = "split_masks")]
    shared_mask: bool,
    /// Separate PSD-path masks (provide --phi-mask-file per speaker).
    #[arg(long)]
    split_masks: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scene directory with ground truth.
    #[arg(long, value_name = "DIR")]
    scene: PathBuf,
    /// One mono estimate WAV per source (repeatable).
    #[arg(long, value_name = "WAV", required = true)]
    estimate: Vec<PathBuf>,
    /// Reference microphone channel for the ground-truth images.
    #[arg(long)]
    ref_channel: Option<usize>,
    /// Also write the report to this file.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Dereverb(a) => cmd_dereverb(a),
        Command::Separate(a) => cmd_separate(a),
        Command::Eval(a) => cmd_eval(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Builds the rayon pool the filter stages run inside. Per-frequency results
/// are collected in bin order, so any thread count yields identical output.
fn run_in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    Ok(pool.install(f))
}

/// Thread count resolves as: --threads, then the parameter file, then the
/// CONVBEAM_THREADS environment variable, then 0 (all cores).
fn resolve_threads(common: &CommonArgs, s: &Settings) -> Result<usize> {
    if let Some(t) = common.threads {
        return Ok(t);
    }
    if let Some(t) = s.get("threads")? {
        return Ok(t);
    }
    match std::env::var("CONVBEAM_THREADS") {
        Ok(v) => v
            .parse()
            .with_context(|| format!("bad CONVBEAM_THREADS value: {v}")),
        Err(_) => Ok(0),
    }
}

fn write_run_manifest(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let s = args.common.settings()?;
    let d = SceneParams::default();
    let params = SceneParams {
        num_sources: s.value(args.sources, "sources", d.num_sources)?,
        num_channels: s.value(args.channels, "channels", d.num_channels)?,
        duration_s: s.value(args.duration, "duration", d.duration_s)?,
        sample_rate: s.value(args.sample_rate, "sample_rate", d.sample_rate)?,
        rt60: s.value(args.rt60, "rt60", d.rt60)?,
        snr_db: s.value(args.snr, "snr", d.snr_db)?,
        early_boundary_ms: s.value(args.early_boundary_ms, "early_boundary_ms", d.early_boundary_ms)?,
        n_reflections: s.value(args.reflections, "reflections", d.n_reflections)?,
        seed: s.value(args.seed, "seed", d.seed)?,
    };
    let scene = generate_scene(&params)?;
    write_scene(&args.out, &scene)?;
    write_run_manifest(
        &args.out.join("run_manifest.txt"),
        &[
            ("command", "simulate".into()),
            ("sources", params.num_sources.to_string()),
            ("channels", params.num_channels.to_string()),
            ("duration", params.duration_s.to_string()),
            ("sample_rate", params.sample_rate.to_string()),
            ("rt60", params.rt60.to_string()),
            ("snr", params.snr_db.to_string()),
            ("early_boundary_ms", params.early_boundary_ms.to_string()),
            ("reflections", params.n_reflections.to_string()),
            ("seed", params.seed.to_string()),
        ],
    )?;
    println!(
        "wrote scene: {} sources, {} channels, {:.2} s, rt60 {:.3} s -> {}",
        params.num_sources,
        params.num_channels,
        params.duration_s,
        params.rt60,
        args.out.display()
    );
    Ok(())
}

fn cmd_dereverb(args: DereverbArgs) -> Result<()> {
    let s = args.common.settings()?;
    let threads = resolve_threads(&args.common, &s)?;
    let wave = read_wav(&args.input)?;
    let d = WpeConfig::default();
    let cfg = WpeConfig {
        taps: s.value(args.taps, "taps", d.taps)?,
        delay: s.value(args.delay, "delay", d.delay)?,
        iterations: s.value(args.iterations, "iterations", d.iterations)?,
        loading: s.value(args.loading, "loading", d.loading)?,
    };
    let stft_cfg = StftConfig {
        sample_rate: wave.sample_rate,
        ..StftConfig::default()
    };
    let out_len = wave.len();
    let channels = run_in_pool(threads, || -> Result<Vec<Vec<f64>>> {
        let x = stft(&wave.channels, &stft_cfg)?;
        let y = wpe_run(&x, None, &cfg)?;
        Ok(istft(&y, &stft_cfg, out_len)?)
    })??;
    write_wav(
        &args.output,
        &Waveform::new(wave.sample_rate, channels),
        SampleFormat::Float32,
    )?;
    let manifest = args.output.with_extension("manifest.txt");
    write_run_manifest(
        &manifest,
        &[
            ("command", "dereverb".into()),
            ("input", args.input.display().to_string()),
            ("output", args.output.display().to_string()),
            ("taps", cfg.taps.to_string()),
            ("delay", cfg.delay.to_string()),
            ("iterations", cfg.iterations.to_string()),
            ("loading", cfg.loading.to_string()),
            ("threads", threads.to_string()),
        ],
    )?;
    println!("wrote {}", args.output.display());
    Ok(())
}

/// Where the separation masks come from.
enum MaskSource {
    Oracle,
    Uniform,
    File,
}

impl MaskSource {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(MaskSource::Oracle),
            "uniform" => Ok(MaskSource::Uniform),
            "file" => Ok(MaskSource::File),
            _ => bail!("unknown mask source: {s} (expected oracle, uniform, or file)"),
        }
    }
}

fn cmd_separate(args: SeparateArgs) -> Result<()> {
    let s = args.common.settings()?;
    let threads = resolve_threads(&args.common, &s)?;

    let scene: Option<MixtureScene> = match &args.scene {
        Some(dir) => Some(read_scene(dir)?),
        None => None,
    };
    let (mixture, sample_rate) = match (&scene, &args.input) {
        (Some(sc), None) => (sc.mixture.clone(), sc.sample_rate),
        (None, Some(path)) => {
            let w = read_wav(path)?;
            (w.channels, w.sample_rate)
        }
        (None, None) => bail!("provide --scene or --input"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    let arch_name = s.value_str(args.arch.as_deref(), "arch", "wpd")?;
    let arch = Architecture::parse(&arch_name)
        .with_context(|| format!("unknown architecture: {arch_name}"))?;
    let default_source = if scene.is_some() {
        "oracle"
    } else if !args.mask_file.is_empty() {
        "file"
    } else {
        "uniform"
    };
    let mask_source_name = s.value_str(args.mask_source.as_deref(), "mask_source", default_source)?;
    let mask_source = MaskSource::parse(&mask_source_name)?;

    let stft_cfg = StftConfig {
        sample_rate,
        ..StftConfig::default()
    };
    let wpe_d = WpeConfig::default();
    let wpd_d = convbeam_core::WpdConfig::default();
    let shared = if args.split_masks {
        false
    } else if args.shared_mask {
        true
    } else {
        s.value(None::<bool>, "shared_mask", true)?
    };
    let taps = s.value(args.taps, "taps", wpd_d.taps)?;
    let delay = s.value(args.delay, "delay", wpd_d.delay)?;
    let loading = s.value(args.loading, "loading", wpd_d.loading)?;
    let cfg = PipelineConfig {
        arch,
        stft: stft_cfg,
        wpe: WpeConfig {
            taps,
            delay,
            iterations: s.value(args.iterations, "iterations", wpe_d.iterations)?,
            loading,
        },
        wpd: convbeam_core::WpdConfig {
            taps,
            delay,
            loading,
            ref_channel: 0, // overridden from cfg.ref_channel inside the pipeline
            shared_mask: shared,
        },
        ref_channel: s.value(args.ref_channel, "ref_channel", 0usize)?,
        loading,
    };

    let masks = build_masks(&args, &mask_source, scene.as_ref(), &mixture, &cfg, shared)?;
    if masks.phi_speakers.is_some() && arch != Architecture::Wpd {
        bail!("--split-masks applies only to the wpd architecture");
    }

    let outputs = run_in_pool(threads, || run_separation_lenient(&mixture, &masks, &cfg))??;
    std::fs::create_dir_all(&args.out)?;
    let num_samples = mixture[0].len();
    let mut waveforms: Vec<Vec<f64>> = Vec::with_capacity(outputs.len());
    for (j, out) in outputs.into_iter().enumerate() {
        match out {
            Ok(w) => waveforms.push(w),
            Err(e) => {
                eprintln!("warning: source {j} is degenerate ({e}); writing silence");
                waveforms.push(vec![0.0; num_samples]);
            }
        }
    }
    for (j, w) in waveforms.iter().enumerate() {
        write_wav(
            &args.out.join(format!("src_{j}.wav")),
            &Waveform::new(sample_rate, vec![w.clone()]),
            SampleFormat::Float32,
        )?;
    }

    if let Some(sc) = &scene {
        match evaluate_against_scene(&waveforms, sc, cfg.ref_channel, &cfg.stft) {
            Ok(eval) => {
                let report = format_report(&eval);
                print!("{report}");
                std::fs::write(args.out.join("report.txt"), report)?;
            }
            Err(e) => eprintln!("warning: scoring skipped: {e}"),
        }
    }

    write_run_manifest(
        &args.out.join("run_manifest.txt"),
        &[
            ("command", "separate".into()),
            (
                "input",
                args.scene
                    .as_ref()
                    .or(args.input.as_ref())
                    .unwrap()
                    .display()
                    .to_string(),
            ),
            ("arch", arch.name().into()),
            ("mask_source", mask_source_name.clone()),
            ("sources", waveforms.len().to_string()),
            ("taps", taps.to_string()),
            ("delay", delay.to_string()),
            ("iterations", cfg.wpe.iterations.to_string()),
            ("loading", loading.to_string()),
            ("ref_channel", cfg.ref_channel.to_string()),
            ("shared_mask", shared.to_string()),
            ("threads", threads.to_string()),
        ],
    )?;
    println!(
        "wrote {} source estimates to {}",
        waveforms.len(),
        args.out.display()
    );
    Ok(())
}

fn build_masks(
    args: &SeparateArgs,
    source: &MaskSource,
    scene: Option<&MixtureScene>,
    mixture: &[Vec<f64>],
    cfg: &PipelineConfig,
    shared: bool,
) -> Result<MaskSet> {
    let phi_speakers = if !shared {
        if args.phi_mask_file.is_empty() {
            bail!("--split-masks requires one --phi-mask-file per speaker");
        }
        Some(
            args.phi_mask_file
                .iter()
                .map(|p| read_mask_file(p))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    let mut set: MaskSet = match source {
        MaskSource::Oracle => {
            let sc = scene.context("oracle masks require --scene")?;
            oracle_irm(sc, &cfg.stft)?.into()
        }
        MaskSource::Uniform => {
            let j = args.sources.context("uniform masks require --sources")?;
            let x = stft(mixture, &cfg.stft)?;
            let ones = TimeFrequencyMask::ones(x.frames(), x.bins(), x.channels());
            MaskSet {
                noise: ones.clone(),
                speakers: vec![ones; j],
                phi_speakers: None,
            }
        }
        MaskSource::File => {
            if args.mask_file.is_empty() {
                bail!("--mask-source file requires at least one --mask-file");
            }
            let noise_path = args
                .noise_mask_file
                .as_ref()
                .context("--mask-source file requires --noise-mask-file")?;
            MaskSet {
                noise: read_mask_file(noise_path)?,
                speakers: args
                    .mask_file
                    .iter()
                    .map(|p| read_mask_file(p))
                    .collect::<Result<Vec<_>, _>>()?,
                phi_speakers: None,
            }
        }
    };
    set.phi_speakers = phi_speakers;
    Ok(set)
}

fn format_report(eval: &convbeam_core::pipeline::EvalReport) -> String {
    let mut out = String::new();
    for (j, (si, un)) in eval
        .report
        .si_sdr
        .iter()
        .zip(&eval.unprocessed)
        .enumerate()
    {
        out.push_str(&format!(
            "src={j} si_sdr={si:.4} delta={:.4}\n",
            si - un
        ));
    }
    out
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let s = args.common.settings()?;
    let scene = read_scene(&args.scene)?;
    let ref_channel = s.value(args.ref_channel, "ref_channel", 0usize)?;
    let estimates: Vec<Vec<f64>> = args
        .estimate
        .iter()
        .map(|p| -> Result<Vec<f64>> {
            let w = read_wav(p)?;
            if w.num_channels() != 1 {
                bail!("estimate {} must be mono", p.display());
            }
            if w.sample_rate != scene.sample_rate {
                bail!("estimate {} sample rate disagrees with scene", p.display());
            }
            Ok(w.channels.into_iter().next().unwrap())
        })
        .collect::<Result<_>>()?;
    let eval = evaluate_against_scene(&estimates, &scene, ref_channel, &StftConfig::default())?;
    let mut report = format!(
        "# scene={} estimates={} ref_channel={ref_channel}\n",
        args.scene.display(),
        args.estimate.len()
    );
    report.push_str(&format_report(&eval));
    print!("{report}");
    if let Some(path) = &args.report {
        std::fs::write(path, &report)?;
    }
    Ok(())
}
