//! Source synthesis, binaural impulse responses, streaming rendering and
//! spectral features.

pub mod features;
pub mod render;
pub mod rir;
pub mod source;
pub mod wav;

pub use features::{stft_features, AudioFeatures, Stft};
pub use render::{mix_sources, BinauralFrame, FftConvolver, RenderState};
pub use rir::{binaural_rir, rir_length, BinauralRir, DEFAULT_MAX_ORDER};
pub use source::{synth_source, SoundBank, SourceSound};
pub use wav::write_wav;

pub const SAMPLE_RATE: f64 = 16_000.0;
pub const STEP_SECONDS: f64 = 0.25;
pub const SAMPLES_PER_STEP: usize = 4_000;
pub const SPEED_OF_SOUND: f64 = 343.0;
