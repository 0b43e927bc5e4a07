//! Deterministic multi-channel speech dereverberation and separation.
//!
//! STFT-domain building blocks: mask-based WPE dereverberation, Souden-form
//! MVDR beamforming, and the unified WPD convolutional beamformer in its
//! steering-vector-free multi-source form, plus a reverberant-scene simulator
//! and SI-SDR metrics so filter behavior is testable end to end.

pub mod audio_io;
pub mod linalg;
pub mod masks;
pub mod metrics;
pub mod mvdr;
pub mod pipeline;
pub mod simulator;
pub mod stft;
pub mod wpd;
pub mod wpe;

pub use audio_io::{read_wav, write_wav, SampleFormat, Waveform};
pub use linalg::{ComplexMatrix, ComplexVector};
pub use masks::{PowerEstimate, TimeFrequencyMask};
pub use mvdr::ReferenceVector;
pub use pipeline::{Architecture, MaskSet, PipelineConfig};
pub use simulator::{MixtureScene, RoomImpulseResponse};
pub use stft::{ComplexSpectrogram, StftConfig};
pub use wpd::WpdConfig;
pub use wpe::WpeConfig;
