//! Small signal-processing helpers shared by the periphery and analysis stages.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Linear convolution of `signal` with an odd-length, linear-phase `taps`,
/// trimmed so output sample `n` is aligned with input sample `n`.
pub fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    assert!(taps.len() % 2 == 1, "centered convolution needs odd taps");
    if signal.is_empty() {
        return Vec::new();
    }
    let delay = taps.len() / 2;
    let full_len = signal.len() + taps.len() - 1;
    let n_fft = full_len.next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut a: Vec<Complex64> = (0..n_fft)
        .map(|i| Complex64::new(signal.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut b: Vec<Complex64> = (0..n_fft)
        .map(|i| Complex64::new(taps.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / n_fft as f64;
    a[delay..delay + signal.len()]
        .iter()
        .map(|c| c.re * scale)
        .collect()
}

/// Second-order Butterworth low-pass (bilinear, prewarped), transposed direct form II.
#[derive(Clone, Copy, Debug)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    z1: f64,
    z2: f64,
}

impl Biquad {
    pub fn butterworth_lowpass(sample_rate: f64, cutoff: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff / sample_rate).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            z1: 0.0,
            z2: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z1;
        self.z1 = self.b[1] * x - self.a[0] * y + self.z2;
        self.z2 = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Block-average decimation from `from_rate` to `to_rate`.
///
/// Frame `i` averages input samples `[round(i*h), round((i+1)*h))` with
/// `h = from_rate / to_rate`; a trailing partial block becomes its own frame.
pub fn block_average(samples: &[f64], from_rate: f64, to_rate: f64) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let hop = from_rate / to_rate;
    let n_frames = ((samples.len() as f64) / hop).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let start = ((i as f64) * hop).round() as usize;
        let end = (((i + 1) as f64) * hop).round() as usize;
        let start = start.min(samples.len() - 1);
        let end = end.clamp(start + 1, samples.len());
        let block = &samples[start..end];
        out.push(block.iter().sum::<f64>() / block.len() as f64);
    }
    out
}

/// Number of frames `block_average` produces.
pub fn block_count(len: usize, from_rate: f64, to_rate: f64) -> usize {
    if len == 0 {
        return 0;
    }
    ((len as f64) / (from_rate / to_rate)).ceil().max(1.0) as usize
}

/// Root-mean-square level.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_same_matches_direct() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let h = [0.25, -0.5, 1.0, 0.5, 0.125];
        let fast = convolve_same(&x, &h);
        for n in 0..x.len() {
            let mut acc = 0.0;
            for (k, hk) in h.iter().enumerate() {
                let idx = n as isize + 2 - k as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += hk * x[idx as usize];
                }
            }
            assert!((fast[n] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn block_average_partial_tail() {
        let x = [1.0, 1.0, 3.0, 3.0, 5.0];
        assert_eq!(block_average(&x, 4.0, 2.0), vec![1.0, 3.0, 5.0]);
        assert_eq!(block_count(5, 4.0, 2.0), 3);
    }

    #[test]
    fn butterworth_dc_gain_is_unity() {
        let mut f = Biquad::butterworth_lowpass(16000.0, 1000.0);
        let mut y = 0.0;
        for _ in 0..2000 {
            y = f.process(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }
}
