//! PCM16 mono WAV input and output.

use std::path::Path;

use super::DspError;

/// Sample rates accepted by the front end.
pub const SUPPORTED_RATES: [u32; 2] = [8000, 16000];

/// Mono audio with amplitudes normalized into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_path: String,
}

impl AudioSignal {
    pub fn new(
        samples: Vec<f32>,
        sample_rate_hz: u32,
        source_path: impl Into<String>,
    ) -> Result<Self, DspError> {
        let source_path = source_path.into();
        if !SUPPORTED_RATES.contains(&sample_rate_hz) {
            return Err(DspError::UnsupportedRate {
                path: source_path,
                rate: sample_rate_hz,
            });
        }
        if samples.is_empty() {
            return Err(DspError::EmptyAudio { path: source_path });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(DspError::AmplitudeOutOfRange {
                path: source_path,
                index: i,
            });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_path,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// Reads a RIFF/WAVE PCM16 mono file at 8 or 16 kHz. Samples are scaled by `1/32768`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal, DspError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|e| DspError::Unreadable {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DspError::NotPcm16 {
            path: shown,
            format: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(DspError::Multichannel {
            path: shown,
            channels: spec.channels,
        });
    }
    if !SUPPORTED_RATES.contains(&spec.sample_rate) {
        return Err(DspError::UnsupportedRate {
            path: shown,
            rate: spec.sample_rate,
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DspError::Unreadable {
            path: shown.clone(),
            reason: e.to_string(),
        })?;
    AudioSignal::new(samples, spec.sample_rate, shown)
}

/// Writes `signal` as PCM16 mono. Amplitudes are scaled by 32768 and saturated.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<(), DspError> {
    let path = path.as_ref();
    let io = |e: hound::Error| DspError::Unreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in &signal.samples {
        writer.write_sample(quantize(s)).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

fn quantize(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, rate: u32, channels: u16, bits: u16, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &d in data {
            if bits == 16 {
                w.write_sample(d).unwrap();
            } else {
                w.write_sample(d as i8).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn one_second_at_16k_has_16000_samples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 16000, 1, 16, &vec![0; 16000]);
        let sig = load_wav(&p).unwrap();
        assert_eq!(sig.samples.len(), 16000);
        assert!(sig.samples.iter().all(|&s| s == 0.0));
        assert_eq!(sig.duration_s(), 1.0);
    }

    #[test]
    fn scaling_maps_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 8000, 1, 16, &[-32768, 32767, 16384, -1]);
        let sig = load_wav(&p).unwrap();
        assert_eq!(sig.samples[0], -1.0);
        assert_eq!(sig.samples[1], 32767.0 / 32768.0);
        assert_eq!(sig.samples[2], 0.5);
        assert_eq!(sig.samples[3], -1.0 / 32768.0);
    }

    #[test]
    fn rejects_bad_inputs_with_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("stereo.wav");
        write_raw(&stereo, 16000, 2, 16, &[0; 8]);
        assert!(matches!(
            load_wav(&stereo),
            Err(DspError::Multichannel { channels: 2, .. })
        ));

        let rate = dir.path().join("rate.wav");
        write_raw(&rate, 44100, 1, 16, &[0; 8]);
        assert!(matches!(
            load_wav(&rate),
            Err(DspError::UnsupportedRate { rate: 44100, .. })
        ));

        let eight = dir.path().join("eight.wav");
        write_raw(&eight, 8000, 1, 8, &[0; 8]);
        assert!(matches!(load_wav(&eight), Err(DspError::NotPcm16 { .. })));

        let missing = dir.path().join("missing.wav");
        match load_wav(&missing) {
            Err(DspError::Unreadable { path, .. }) => assert!(path.ends_with("missing.wav")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_read_is_exact_for_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let samples: Vec<f32> = (-50..50).map(|i| i as f32 * 300.0 / 32768.0).collect();
        let sig = AudioSignal::new(samples.clone(), 8000, "mem").unwrap();
        write_wav(&p, &sig).unwrap();
        assert_eq!(load_wav(&p).unwrap().samples, samples);
    }
}
