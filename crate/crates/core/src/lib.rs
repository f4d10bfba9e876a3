//! Determined multichannel blind source separation in the STFT domain.
//!
//! The main algorithm couples a low-rank NMF variance model of each source
//! with a band-weighted unbalanced optimal-transport step that lets
//! neighbouring frequency bins share spectral mass. ILRMA and AuxIVA are
//! included as baselines, together with an image-source room simulator and
//! BSS-eval style metrics for benchmarking.

pub mod error;
pub mod eval;
pub mod io;
pub mod nmf;
pub mod ot;
pub mod separator;
pub mod spectral;
pub mod stft;

pub use error::{Error, Result};
pub use separator::{separate, Backend, SeparationOutput, SeparatorConfig};
pub use stft::{analyze, synthesize, Spectrogram, StftConfig, TimeSignal, Window};
