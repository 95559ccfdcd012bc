//! WAV input/output and sample-rate conversion.
//!
//! Mono sources may be 16-bit PCM or 32-bit IEEE float at any integer sample
//! rate; they are converted to the scenario rate with [`resample`].
//! Multichannel output is always written as 32-bit float.
//!
//! # Resampling filter
//!
//! [`resample`] is a rational L/M polyphase converter with a linear-phase
//! windowed-sinc prototype:
//!
//! * cutoff at 0.95 × the Nyquist frequency of the lower of the two rates,
//! * 16 zero crossings on each side of the sinc (at the lower rate),
//! * Kaiser window with β = 8.0 (about 80 dB stopband attenuation),
//! * one coefficient table per output phase, i.e. L tables.
//!
//! The filter is symmetric, so the conversion adds no phase distortion and no
//! delay (the output is aligned with the input time axis).

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{DoaError, Result};
use crate::synth::MultichannelSignal;

const ZERO_CROSSINGS: f64 = 16.0;
const KAISER_BETA: f64 = 8.0;
const CUTOFF: f64 = 0.95;

/// Reads a mono 16-bit PCM or 32-bit float WAV file, returning the samples
/// scaled to [-1, 1) and the file's sample rate.
pub fn read_mono_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let signal = read_wav(path)?;
    if signal.num_channels() != 1 {
        return Err(DoaError::Wav {
            path: path.to_path_buf(),
            message: format!("expected a mono file, found {} channels", signal.num_channels()),
        });
    }
    let rate = signal.sample_rate() as u32;
    Ok((signal.into_channels().pop().expect("one channel"), rate))
}

/// Reads a WAV file of any channel count (16-bit PCM or 32-bit float).
pub fn read_wav(path: &Path) -> Result<MultichannelSignal> {
    let wav_err = |message: String| DoaError::Wav { path: path.to_path_buf(), message };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => DoaError::Io { path: path.to_path_buf(), source },
        other => wav_err(other.to_string()),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(wav_err("file declares zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(e.to_string()))?,
        (format, bits) => {
            return Err(wav_err(format!(
                "unsupported sample format {format:?} with {bits} bits (need 16-bit PCM or 32-bit float)"
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let mut data = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (ch, &v) in frame.iter().enumerate() {
            data[ch].push(v);
        }
    }
    MultichannelSignal::new(data, spec.sample_rate as f64).map_err(|e| wav_err(e.to_string()))
}

/// Writes all channels as interleaved 32-bit float samples.
pub fn write_wav(path: &Path, signal: &MultichannelSignal) -> Result<()> {
    let rate = signal.sample_rate();
    if rate.fract() != 0.0 || rate <= 0.0 || rate > u32::MAX as f64 {
        return Err(DoaError::domain(format!("WAV needs an integer sample rate, got {rate}")));
    }
    let channels = u16::try_from(signal.num_channels())
        .map_err(|_| DoaError::domain("too many channels for a WAV file"))?;
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => DoaError::Io { path: path.to_path_buf(), source },
        other => DoaError::Wav { path: path.to_path_buf(), message: other.to_string() },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for n in 0..signal.len() {
        for ch in signal.channels() {
            writer.write_sample(ch[n] as f32).map_err(to_err)?;
        }
    }
    writer.finalize().map_err(to_err)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / bessel_i0(KAISER_BETA)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Converts `input` from `from_rate` to `to_rate` (both integer hertz).
/// See the module docs for the filter design.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Result<Vec<f64>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(DoaError::domain("sample rates must be positive"));
    }
    if from_rate == to_rate || input.is_empty() {
        return Ok(input.to_vec());
    }
    let g = gcd(from_rate as u64, to_rate as u64);
    let up = (to_rate as u64 / g) as usize;
    let down = (from_rate as u64 / g) as usize;

    // Cutoff in cycles per input sample (input Nyquist is 0.5).
    let ratio = (to_rate as f64 / from_rate as f64).min(1.0);
    let cutoff = 0.5 * CUTOFF * ratio;
    let half_width = ZERO_CROSSINGS / (2.0 * cutoff);
    let taps_per_side = half_width.ceil() as isize;

    // Output sample n sits at input time n·down/up = base + phase/up.
    let tables: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            (-taps_per_side + 1..=taps_per_side)
                .map(|k| {
                    let tau = frac - k as f64;
                    2.0 * cutoff * sinc(2.0 * cutoff * tau) * kaiser(tau / half_width)
                })
                .collect()
        })
        .collect();

    let out_len = (input.len() * up).div_ceil(down);
    let n_in = input.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n * down;
        let base = (pos / up) as isize;
        let table = &tables[pos % up];
        let mut acc = 0.0;
        for (i, &h) in table.iter().enumerate() {
            let k = base + (-taps_per_side + 1 + i as isize);
            if (0..n_in).contains(&k) {
                acc += h * input[k as usize];
            }
        }
        out.push(acc);
    }
    Ok(out)
}
