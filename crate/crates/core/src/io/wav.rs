use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::TimeSignal;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

impl std::str::FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" | "16" => Ok(WavEncoding::Pcm16),
            "float32" | "f32" => Ok(WavEncoding::Float32),
            other => Err(Error::UnsupportedEncoding(other.to_string())),
        }
    }
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav { path: path.to_path_buf(), source }
}

/// Reads 16-bit integer or 32-bit float PCM into `[-1, 1]` samples.
pub fn load_wav(path: impl AsRef<Path>) -> Result<TimeSignal> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} with {bits} bits")));
        }
    };
    if n_ch == 0 {
        return Err(Error::UnsupportedEncoding("zero channels".into()));
    }
    let frames = interleaved.len() / n_ch;
    let channels: Vec<Vec<f64>> = (0..n_ch)
        .map(|c| (0..frames).map(|i| interleaved[i * n_ch + c]).collect())
        .collect();
    TimeSignal::from_channels(&channels, spec.sample_rate)
}

/// Writes `signal` with the given encoding; PCM16 clips to `[-1, 1)`.
pub fn save_wav(signal: &TimeSignal, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: signal.n_channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    let x = signal.samples();
    for i in 0..signal.len() {
        for c in 0..signal.n_channels() {
            let v = x[[c, i]];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q).map_err(wav_err(path))?;
                }
                WavEncoding::Float32 => writer.write_sample(v as f32).map_err(wav_err(path))?,
            }
        }
    }
    writer.finalize().map_err(wav_err(path))?;
    Ok(())
}
