//! Small audio signal helpers shared by the stubs and the tests.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn rms(samples: &[f32]) -> f32 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|s| (*s as f64) * (*s as f64)).sum();
    (sum / samples.len() as f64).sqrt() as f32
}

pub fn energy(samples: &[f32]) -> f64 {
    samples.iter().map(|s| (*s as f64) * (*s as f64)).sum()
}

/// Energy ratio in decibels; `-inf` for a silent numerator.
pub fn ratio_db(numerator: f64, denominator: f64) -> f64 {
    10.0 * (numerator / denominator).log10()
}

pub fn sine(freq: f32, amplitude: f32, sample_rate: u32, len: usize) -> Vec<f32> {
    let w = 2.0 * std::f64::consts::PI * freq as f64 / sample_rate as f64;
    (0..len).map(|i| (amplitude as f64 * (w * i as f64).sin()) as f32).collect()
}

/// Sine burst with short linear fades so concatenated bursts do not click.
pub fn tone_burst(freq: f32, amplitude: f32, sample_rate: u32, len: usize) -> Vec<f32> {
    let mut out = sine(freq, amplitude, sample_rate, len);
    let fade = (sample_rate as usize / 200).min(len / 2);
    for i in 0..fade {
        let g = i as f32 / fade as f32;
        out[i] *= g;
        out[len - 1 - i] *= g;
    }
    out
}

fn spectrum(samples: &[f32]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|s| Complex::new(*s as f64, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Splits a signal at `cutoff_hz` with a brick-wall FFT mask. The two
/// bands sum back to the input up to floating-point rounding.
pub fn band_split(samples: &[f32], sample_rate: u32, cutoff_hz: f32) -> (Vec<f32>, Vec<f32>) {
    let n = samples.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut spec = spectrum(samples);
    let cutoff_bin = (cutoff_hz as f64 * n as f64 / sample_rate as f64).floor() as usize;
    for (k, bin) in spec.iter_mut().enumerate() {
        let freq_bin = k.min(n - k);
        if freq_bin > cutoff_bin {
            *bin = Complex::new(0.0, 0.0);
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spec);
    let low: Vec<f32> = spec.iter().map(|c| (c.re / n as f64) as f32).collect();
    let high = samples.iter().zip(&low).map(|(x, l)| x - l).collect();
    (low, high)
}

/// Hann-windowed magnitude (dB, arbitrary reference) of the strongest bin
/// within `tolerance_hz` of `freq_hz`.
pub fn band_peak_db(samples: &[f32], sample_rate: u32, freq_hz: f32, tolerance_hz: f32) -> f64 {
    let n = samples.len();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let windowed: Vec<f32> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            (*s as f64 * w) as f32
        })
        .collect();
    let spec = spectrum(&windowed);
    let hz_per_bin = sample_rate as f64 / n as f64;
    let lo = ((freq_hz - tolerance_hz) as f64 / hz_per_bin).floor().max(0.0) as usize;
    let hi = (((freq_hz + tolerance_hz) as f64 / hz_per_bin).ceil() as usize).min(n / 2);
    let peak = spec[lo..=hi].iter().map(|c| c.norm()).fold(0.0, f64::max);
    20.0 * peak.log10()
}

/// Frequency of the strongest bin below Nyquist.
pub fn dominant_frequency(samples: &[f32], sample_rate: u32) -> f32 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let spec = spectrum(samples);
    let (k, _) = spec[1..n / 2]
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, c)| if c.norm() > best.1 { (i + 1, c.norm()) } else { best });
    (k as f64 * sample_rate as f64 / n as f64) as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_split_reconstructs() {
        let mut x = sine(440.0, 0.4, 16000, 16000);
        for (a, b) in x.iter_mut().zip(sine(2000.0, 0.3, 16000, 16000)) {
            *a += b;
        }
        let (low, high) = band_split(&x, 16000, 700.0);
        let residual: f64 = x.iter().zip(low.iter().zip(&high)).map(|(x, (l, h))| ((x - l - h) as f64).powi(2)).sum();
        assert!(ratio_db(residual, energy(&x)) < -100.0);
        assert!((dominant_frequency(&low, 16000) - 440.0).abs() < 2.0);
        assert!((dominant_frequency(&high, 16000) - 2000.0).abs() < 2.0);
    }

    #[test]
    fn rms_of_sine() {
        let x = sine(100.0, 1.0, 8000, 8000);
        assert!((rms(&x) - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        assert_eq!(rms(&[]), 0.0);
    }
}
