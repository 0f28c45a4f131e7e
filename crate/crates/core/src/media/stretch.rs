//! Pitch-preserving time stretch (WSOLA).

const FRAME: usize = 512;
const HOP: usize = FRAME / 4;
const TOLERANCE: usize = HOP / 2;

fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = std::f32::consts::PI * 2.0 * i as f32 / n as f32;
            0.5 - 0.5 * x.cos()
        })
        .collect()
}

/// Stretches `input` to exactly `out_len` samples without changing pitch.
pub fn time_stretch(input: &[f32], out_len: usize) -> Vec<f32> {
    if out_len == input.len() {
        return input.to_vec();
    }
    if input.is_empty() {
        return vec![0.0; out_len];
    }
    // Too short for overlap-add: fall back to nearest-sample mapping.
    if input.len() < FRAME * 2 || out_len < FRAME * 2 {
        let ratio = input.len() as f64 / out_len.max(1) as f64;
        return (0..out_len)
            .map(|i| input[((i as f64 * ratio) as usize).min(input.len() - 1)])
            .collect();
    }
    let speed = input.len() as f64 / out_len as f64;
    let window = hann(FRAME);
    let mut out = vec![0.0f32; out_len + FRAME];
    let mut weight = vec![0.0f32; out_len + FRAME];
    let max_start = input.len() - FRAME;
    let mut prev_start: Option<usize> = None;
    let mut k = 0usize;
    loop {
        let out_pos = k * HOP;
        if out_pos >= out_len {
            break;
        }
        let nominal = ((out_pos as f64) * speed).round() as usize;
        let nominal = nominal.min(max_start);
        let start = match prev_start {
            None => nominal,
            Some(prev) => {
                // Pick the candidate that best continues the previous frame.
                let natural = (prev + HOP).min(max_start);
                let lo = nominal.saturating_sub(TOLERANCE);
                let hi = (nominal + TOLERANCE).min(max_start);
                let overlap = FRAME - HOP;
                let mut best = nominal;
                let mut best_score = f32::NEG_INFINITY;
                for cand in lo..=hi {
                    let score: f32 = (0..overlap)
                        .step_by(2)
                        .map(|i| input[cand + i] * input[natural + i])
                        .sum();
                    if score > best_score {
                        best_score = score;
                        best = cand;
                    }
                }
                best
            }
        };
        for i in 0..FRAME {
            out[out_pos + i] += input[start + i] * window[i];
            weight[out_pos + i] += window[i];
        }
        prev_start = Some(start);
        k += 1;
    }
    out.truncate(out_len);
    for (i, (o, w)) in out.iter_mut().zip(weight.iter()).enumerate() {
        if *w > 1e-3 {
            *o /= *w;
        } else {
            let src = ((i as f64) * speed) as usize;
            *o = input[src.min(input.len() - 1)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f32, sr: f32, n: usize) -> Vec<f32> {
        (0..n).map(|i| (2.0 * std::f32::consts::PI * freq * i as f32 / sr).sin()).collect()
    }

    fn zero_crossings(x: &[f32]) -> usize {
        x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
    }

    #[test]
    fn exact_length_and_pitch() {
        let x = sine(440.0, 16000.0, 64000);
        let y = time_stretch(&x, 32000);
        assert_eq!(y.len(), 32000);
        // Pitch preserved: crossings per second stay near 880.
        let rate = zero_crossings(&y[2000..30000]) as f32 / (28000.0 / 16000.0);
        assert!((rate - 880.0).abs() < 30.0, "crossing rate {rate}");
    }

    #[test]
    fn identity_when_length_matches() {
        let x = sine(300.0, 16000.0, 5000);
        assert_eq!(time_stretch(&x, 5000), x);
    }

    #[test]
    fn short_inputs() {
        assert_eq!(time_stretch(&[], 10), vec![0.0; 10]);
        assert_eq!(time_stretch(&[1.0, 2.0], 4), vec![1.0, 1.0, 2.0, 2.0]);
    }
}
