//! Scale-invariant SDR and permutation-resolved improvement reporting.

use itertools::Itertools;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("waveform lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal is zero")]
    ZeroReference,
    #[error("too many sources for exhaustive permutation search: {0} > 4")]
    TooManySources(usize),
}

/// Per-source scores plus the source pairing that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// si_sdr[j] scores estimate j against its paired reference.
    pub si_sdr: Vec<f64>,
    /// permutation[j] = index of the reference paired with estimate j.
    pub permutation: Vec<usize>,
}

/// Scale-invariant SDR in dB, clamped to [-100, 100].
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    if estimate.len() != reference.len() {
        return Err(MetricError::LengthMismatch(estimate.len(), reference.len()));
    }
    if estimate.is_empty() {
        return Err(MetricError::LengthMismatch(0, 0));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if noise_energy == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (target_energy / noise_energy).log10()).clamp(-100.0, 100.0))
}

/// Maximizes mean SI-SDR over all pairings of estimates to references.
pub fn best_permutation_si_sdr(
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
) -> Result<MetricReport, MetricError> {
    let j = estimates.len();
    if j != references.len() {
        return Err(MetricError::LengthMismatch(j, references.len()));
    }
    if j > 4 {
        return Err(MetricError::TooManySources(j));
    }
    // Pairwise score table; a zero reference in some pairing is scored at the
    // clamp floor rather than aborting the search.
    let mut table = vec![vec![-100.0f64; j]; j];
    for (e, row) in table.iter_mut().enumerate() {
        for (r, slot) in row.iter_mut().enumerate() {
            match si_sdr(&estimates[e], &references[r]) {
                Ok(v) => *slot = v,
                Err(MetricError::ZeroReference) => {}
                Err(err) => return Err(err),
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..j).permutations(j) {
        let mean: f64 = perm.iter().enumerate().map(|(e, &r)| table[e][r]).sum::<f64>() / j as f64;
        if best.as_ref().map_or(true, |(b, _)| mean > *b) {
            best = Some((mean, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");
    let si_sdr = permutation
        .iter()
        .enumerate()
        .map(|(e, &r)| table[e][r])
        .collect();
    Ok(MetricReport { si_sdr, permutation })
}
