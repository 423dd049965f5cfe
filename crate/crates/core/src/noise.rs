//! Discretized space-time white noise on reproducible, splittable streams.
//!
//! A stream is a ChaCha8 keystream keyed by the master seed and addressed by
//! a 64-bit stream id, so the samples of replica `r` are a pure function of
//! `(seed, r, position in stream)`. No state is shared between streams.
//! Gaussians are drawn with the ziggurat sampler from `rand_distr`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    /// Independent seed for a named sub-experiment.
    pub fn child(self, tag: u64) -> MasterSeed {
        MasterSeed(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner random stream. Cloning copies the stream position.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

pub fn derive_stream(master: MasterSeed, replica_id: u64) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master.0);
    rng.set_stream(replica_id);
    NoiseStream { rng }
}

impl NoiseStream {
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` (Lemire's multiply-shift, unbiased).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.rng.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for v in out {
            *v = scale * self.standard_normal();
        }
    }
}

/// White-noise increments `W(cell × [t, t+dt])` for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSlice {
    pub values: Vec<f64>,
    pub dt: f64,
    pub dx: f64,
}

impl NoiseSlice {
    pub fn zeros(nx: usize, dt: f64, dx: f64) -> Self {
        Self {
            values: vec![0.0; nx],
            dt,
            dx,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Redraws every entry from `stream`, N(0, dt·dx) each.
    pub fn resample(&mut self, stream: &mut NoiseStream) {
        let sd = (self.dt * self.dx).sqrt();
        stream.fill_normal(&mut self.values, sd);
    }
}

pub fn sample_slice(stream: &mut NoiseStream, nx: usize, dt: f64, dx: f64) -> Result<NoiseSlice> {
    if nx == 0 {
        return Err(Error::domain("noise slice needs at least one cell"));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::domain(format!(
            "noise cell must have positive extent, got dt = {dt}, dx = {dx}"
        )));
    }
    let mut slice = NoiseSlice::zeros(nx, dt, dx);
    slice.resample(stream);
    Ok(slice)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn same_replica_same_samples() {
        let s = MasterSeed(1234);
        let mut a = derive_stream(s, 7);
        let mut b = derive_stream(s, 7);
        for _ in 0..1000 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn seed_changes_sequence() {
        let mut a = derive_stream(MasterSeed(0), 0);
        let mut b = derive_stream(MasterSeed(1), 0);
        let xa: Vec<f64> = (0..16).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..16).map(|_| b.standard_normal()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn distinct_replicas_uncorrelated() {
        let s = MasterSeed(99);
        let mut a = derive_stream(s, 1);
        let mut b = derive_stream(s, 2);
        let n = 1_000_000;
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.standard_normal();
            let y = b.standard_normal();
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let rho = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(rho.abs() < 4.0 / nf.sqrt(), "rho = {rho}");
    }

    #[test]
    fn slice_moments() {
        let mut st = derive_stream(MasterSeed(5), 0);
        let (dt, dx) = (1e-4, 1e-2);
        let mut all = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let s = sample_slice(&mut st, 1, dt, dx).unwrap();
            all.push(s.values[0]);
        }
        let (m, v) = mean_var(&all);
        let target = dt * dx;
        let n = all.len() as f64;
        assert!(m.abs() < 3.0 * (target / n).sqrt(), "mean {m}");
        // Var of the sample variance of a Gaussian is 2σ⁴/(n−1).
        assert!((v - target).abs() < 3.0 * target * (2.0 / (n - 1.0)).sqrt(), "var {v}");
    }

    #[test]
    fn copied_stream_reproduces_slice() {
        let mut st = derive_stream(MasterSeed(5), 3);
        let _ = sample_slice(&mut st, 10, 1e-3, 0.1).unwrap();
        let mut copy = st.clone();
        let a = sample_slice(&mut st, 64, 1e-3, 0.1).unwrap();
        let b = sample_slice(&mut copy, 64, 1e-3, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_scales_linearly() {
        // log-log slope of the sample variance against dt, then dx.
        let mut st = derive_stream(MasterSeed(11), 0);
        let mut slope = |vary_dt: bool| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for j in 0..5 {
                let h = 1e-3 * 2f64.powi(j);
                let (dt, dx) = if vary_dt { (h, 0.01) } else { (1e-4, h) };
                let s = sample_slice(&mut st, 100_000, dt, dx).unwrap();
                let (_, v) = mean_var(&s.values);
                xs.push(h.ln());
                ys.push(v.ln());
            }
            let mx = xs.iter().sum::<f64>() / 5.0;
            let my = ys.iter().sum::<f64>() / 5.0;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            sxy / sxx
        };
        assert!((slope(true) - 1.0).abs() < 0.02);
        assert!((slope(false) - 1.0).abs() < 0.02);
    }

    #[test]
    fn bad_cells_rejected() {
        let mut st = derive_stream(MasterSeed(0), 0);
        assert!(sample_slice(&mut st, 4, 0.0, 0.1).is_err());
        assert!(sample_slice(&mut st, 4, 0.1, -1.0).is_err());
        assert!(sample_slice(&mut st, 0, 0.1, 0.1).is_err());
    }

    #[test]
    fn index_in_range_and_child_seeds_differ() {
        let mut st = derive_stream(MasterSeed(3), 0);
        for n in [1usize, 2, 7, 1000] {
            for _ in 0..100 {
                assert!(st.index(n) < n);
            }
        }
        assert_ne!(MasterSeed(3).child(1), MasterSeed(3).child(2));
        assert_eq!(MasterSeed(3).child(1), MasterSeed(3).child(1));
    }
}
