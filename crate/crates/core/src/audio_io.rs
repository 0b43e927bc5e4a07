//! Multi-channel RIFF/WAVE read/write: PCM16 and IEEE float32, little-endian,
//! mono through 8 channels. Unknown chunks are skipped on read.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("sample rate mismatch: {expected} Hz vs {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Multi-channel audio buffer; channels of equal length, nominal range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Self {
        assert!(!channels.is_empty());
        let len = channels[0].len();
        assert!(channels.iter().all(|c| c.len() == len), "unequal channel lengths");
        Waveform {
            sample_rate,
            channels,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, AudioIoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_wav(path: &Path) -> Result<Waveform, AudioIoError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut tag = [0u8; 4];
    r.read_exact(&mut tag)?;
    if &tag != b"RIFF" {
        return Err(AudioIoError::Malformed("missing RIFF header".into()));
    }
    let _riff_size = read_u32(&mut r)?;
    r.read_exact(&mut tag)?;
    if &tag != b"WAVE" {
        return Err(AudioIoError::Malformed("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    loop {
        if r.read_exact(&mut tag).is_err() {
            return Err(AudioIoError::Malformed("no data chunk".into()));
        }
        let size = read_u32(&mut r)? as usize;
        match &tag {
            b"fmt " => {
                let mut body = vec![0u8; size];
                r.read_exact(&mut body)?;
                if size < 16 {
                    return Err(AudioIoError::Malformed("fmt chunk too small".into()));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                let (format, channels, rate, bits) = fmt
                    .ok_or_else(|| AudioIoError::Malformed("data before fmt".into()))?;
                if channels == 0 || channels > 8 {
                    return Err(AudioIoError::UnsupportedFormat(format!(
                        "{channels} channels"
                    )));
                }
                let mut body = vec![0u8; size];
                r.read_exact(&mut body)?;
                let samples: Vec<f64> = match (format, bits) {
                    (1, 16) => body
                        .chunks_exact(2)
                        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                        .collect(),
                    (3, 32) => body
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                        .collect(),
                    _ => {
                        return Err(AudioIoError::UnsupportedFormat(format!(
                            "format tag {format}, {bits} bits"
                        )))
                    }
                };
                let channels = channels as usize;
                let frames = samples.len() / channels;
                let mut chans = vec![Vec::with_capacity(frames); channels];
                for (i, s) in samples.iter().take(frames * channels).enumerate() {
                    chans[i % channels].push(*s);
                }
                return Ok(Waveform::new(rate, chans));
            }
            _ => {
                // Skip unknown chunk (chunks are word-aligned).
                let skip = size + (size & 1);
                std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
    }
}

pub fn write_wav(path: &Path, wave: &Waveform, format: SampleFormat) -> Result<(), AudioIoError> {
    let channels = wave.num_channels();
    if channels == 0 || channels > 8 {
        return Err(AudioIoError::UnsupportedFormat(format!(
            "{channels} channels"
        )));
    }
    let frames = wave.len();
    let (format_tag, bits): (u16, u16) = match format {
        SampleFormat::Pcm16 => (1, 16),
        SampleFormat::Float32 => (3, 32),
    };
    let block_align = channels as u16 * bits / 8;
    let data_size = frames * block_align as usize;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_all(&((36 + data_size) as u32).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&format_tag.to_le_bytes())?;
    w.write_all(&(channels as u16).to_le_bytes())?;
    w.write_all(&wave.sample_rate.to_le_bytes())?;
    w.write_all(&(wave.sample_rate * block_align as u32).to_le_bytes())?;
    w.write_all(&block_align.to_le_bytes())?;
    w.write_all(&bits.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&(data_size as u32).to_le_bytes())?;
    for i in 0..frames {
        for ch in &wave.channels {
            match format {
                SampleFormat::Pcm16 => {
                    w.write_all(&quantize_pcm16(ch[i]).to_le_bytes())?;
                }
                SampleFormat::Float32 => {
                    w.write_all(&(ch[i] as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Round half away from zero, clipped to the i16 range.
fn quantize_pcm16(v: f64) -> i16 {
    let scaled = v * 32768.0;
    let rounded = if scaled >= 0.0 {
        (scaled + 0.5).floor()
    } else {
        (scaled - 0.5).ceil()
    };
    rounded.clamp(-32768.0, 32767.0) as i16
}
