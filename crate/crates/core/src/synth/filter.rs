//! Zero-phase band-pass filtering built from second-order Butterworth sections.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Direct-form I biquad with normalized coefficients (`a0 == 1`).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Second-order Butterworth low-pass at `cutoff` Hz.
    pub fn lowpass(cutoff: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        Self::from_raw(
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    /// Second-order Butterworth high-pass at `cutoff` Hz.
    pub fn highpass(cutoff: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        Self::from_raw(
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    pub fn apply(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let x0 = *v;
            let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *v = y0;
        }
    }
}

/// Band-pass made of one high-pass and one low-pass section, run forward and
/// backward so the overall response is zero-phase with squared magnitude.
#[derive(Debug, Clone)]
pub struct BandPass {
    sections: [Biquad; 2],
}

impl BandPass {
    pub fn new(low: f64, high: f64, fs: f64) -> Self {
        Self {
            sections: [Biquad::highpass(low, fs), Biquad::lowpass(high, fs)],
        }
    }

    pub fn filtfilt(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.apply(x);
        }
        x.reverse();
        for s in &self.sections {
            s.apply(x);
        }
        x.reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_at(filter: &BandPass, freq: f64, fs: f64) -> f64 {
        let n = 8192;
        let mut x: Vec<f64> = (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect();
        filter.filtfilt(&mut x);
        // steady-state amplitude from the RMS of the middle of the record
        let mid = &x[n / 4..3 * n / 4];
        (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn passband_is_flat_and_edges_are_attenuated() {
        let fs = 12_000.0;
        let bp = BandPass::new(300.0, 5700.0, fs);
        assert!((gain_at(&bp, 2000.0, fs) - 1.0).abs() < 0.02);
        // -3 dB per pass at the corner, squared by the second pass
        assert!((gain_at(&bp, 300.0, fs) - 0.5).abs() < 0.03);
        assert!(gain_at(&bp, 30.0, fs) < 0.02);
    }
}
