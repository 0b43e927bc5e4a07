//! Benchmarks for the hot paths: the WPD filter solve (C=4, K=5), the WPE
//! prediction filter, and STFT analysis/synthesis.

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convbeam_core::masks::{PowerEstimate, TimeFrequencyMask};
use convbeam_core::stft::{istft, stft, ComplexSpectrogram, StftConfig};
use convbeam_core::wpd::{wpd_source_filters, WpdConfig};
use convbeam_core::wpe::{wpe_filter, WpeConfig};

fn random_spec(rng: &mut impl Rng, frames: usize, bins: usize, channels: usize) -> ComplexSpectrogram {
    let mut x = ComplexSpectrogram::zeros(frames, bins, channels);
    for t in 0..frames {
        for f in 0..bins {
            for c in 0..channels {
                x.set(
                    t,
                    f,
                    c,
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                );
            }
        }
    }
    x
}

fn random_mask(rng: &mut impl Rng, frames: usize, bins: usize, channels: usize) -> TimeFrequencyMask {
    let mut m = TimeFrequencyMask::zeros(frames, bins, channels);
    for t in 0..frames {
        for f in 0..bins {
            for c in 0..channels {
                m.set(t, f, c, rng.gen_range(0.0..1.0)).unwrap();
            }
        }
    }
    m
}

fn bench_wpd_filter(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (frames, bins, channels) = (200, 64, 4);
    let x = random_spec(&mut rng, frames, bins, channels);
    let mask = random_mask(&mut rng, frames, bins, channels);
    let cfg = WpdConfig {
        taps: 5,
        delay: 3,
        ..Default::default()
    };
    c.bench_function("wpd_source_filters C=4 K=5 (200x64 frames)", |b| {
        b.iter(|| wpd_source_filters(&x, &mask, &mask, &cfg).unwrap())
    });
}

fn bench_wpe_filter(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (frames, bins, channels) = (200, 64, 4);
    let x = random_spec(&mut rng, frames, bins, channels);
    let values: Vec<f64> = (0..frames * bins).map(|_| rng.gen_range(0.1..1.0)).collect();
    let lambda = PowerEstimate::from_values(frames, bins, values).unwrap();
    let cfg = WpeConfig::default();
    c.bench_function("wpe_filter C=4 K=5 (200x64 frames)", |b| {
        b.iter(|| wpe_filter(&x, &lambda, &cfg).unwrap())
    });
}

fn bench_stft(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = StftConfig::default();
    let n = 4 * cfg.sample_rate as usize; // 4 s stereo
    let signal: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("stft 4s stereo", |b| b.iter(|| stft(&signal, &cfg).unwrap()));
    let spec = stft(&signal, &cfg).unwrap();
    c.bench_function("istft 4s stereo", |b| {
        b.iter(|| istft(&spec, &cfg, n).unwrap())
    });
}

criterion_group!(benches, bench_wpd_filter, bench_wpe_filter, bench_stft);
criterion_main!(benches);
