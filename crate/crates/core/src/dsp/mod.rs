//! Audio front end: PCM16 WAV input, Hann-windowed STFT, log-Mel filterbank energies and
//! regression deltas, plus the on-disk feature cache.

mod cache;
mod delta;
mod features;
mod mel;
mod stft;
mod wav;

use thiserror::Error;

pub use cache::{
    decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache,
    CACHE_MAGIC, CACHE_VERSION,
};
pub use delta::compute_deltas;
pub use features::{assemble_features, featurize, FeatureConfig, FeatureMatrix, NormStats};
pub use mel::{
    apply_log_mel, hz_to_mel, mel_centers_hz, mel_edges_hz, mel_filterbank, mel_to_hz, LOG_EPSILON,
};
pub use stft::{frame_count, stft_magnitude, window, StftConfig, WindowKind};
pub use wav::{load_wav, write_wav, AudioSignal, SUPPORTED_RATES};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("{path}: cannot read: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("{path}: expected 16-bit integer PCM, found {format}")]
    NotPcm16 { path: String, format: String },
    #[error("{path}: expected mono audio, found {channels} channels")]
    Multichannel { path: String, channels: u16 },
    #[error("{path}: unsupported sample rate {rate} Hz (8000 or 16000 required)")]
    UnsupportedRate { path: String, rate: u32 },
    #[error("{path}: no samples")]
    EmptyAudio { path: String },
    #[error("{path}: sample {index} is not a finite amplitude in [-1, 1]")]
    AmplitudeOutOfRange { path: String, index: usize },
    #[error("{path}: {samples} samples is shorter than one {window}-sample window")]
    TooShort {
        path: String,
        samples: usize,
        window: usize,
    },
    #[error("{path}: bad feature cache: {reason}")]
    BadCache { path: String, reason: String },
    #[error("invalid front-end configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
