//! Periodic cubic grid and the Fourier transform used throughout the crate.
//!
//! Transforms follow the unitary convention
//! `f̂(k) = (2π)^{-3/2} ∫ e^{ik·x} f(x) dx`, so a derivative `∂_j` acts as
//! multiplication by `-i k_j` and a translation `f(x - a)` as multiplication
//! by `e^{ik·a}`. Grid points sit at `x = (i - n/2) h`, which puts the origin
//! at index `n/2` on every axis. Wavenumbers are `k = 2π m / L` with
//! `m ∈ [-n/2, n/2)`. Modes touching the Nyquist index carry no data and are
//! kept at zero so that every spectrum stays the transform of a real field.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Spectral coefficients on a [`Grid3`], stored row-major in `(j0, j1, j2)`.
pub type Spectrum = Vec<Complex64>;

struct Inner {
    n: usize,
    l: f64,
    k1d: Vec<f64>,
    k2: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    bwd: Arc<dyn Fft<f64>>,
}

/// Cubic periodic box `[-L/2, L/2)^3` with `n` points per axis.
///
/// Cloning is cheap; the wavenumber tables and FFT plans are shared.
#[derive(Clone)]
pub struct Grid3 {
    inner: Arc<Inner>,
}

impl fmt::Debug for Grid3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid3")
            .field("n", &self.inner.n)
            .field("l", &self.inner.l)
            .finish()
    }
}

impl PartialEq for Grid3 {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n && self.inner.l == other.inner.l
    }
}

impl Grid3 {
    /// Builds a grid with `n` points per axis on a box of side `l`.
    ///
    /// `n` must be even and at least 16.
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::Argument(format!("grid size must be even and >= 16, got {n}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Argument(format!("box length must be positive, got {l}")));
        }
        let dk = 2.0 * PI / l;
        let k1d: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                dk * m as f64
            })
            .collect();
        let mut k2 = vec![0.0; n * n * n];
        for j0 in 0..n {
            for j1 in 0..n {
                let base = (j0 * n + j1) * n;
                let s = k1d[j0] * k1d[j0] + k1d[j1] * k1d[j1];
                for j2 in 0..n {
                    k2[base + j2] = s + k1d[j2] * k1d[j2];
                }
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let bwd = planner.plan_fft_inverse(n);
        Ok(Grid3 {
            inner: Arc::new(Inner { n, l, k1d, k2, fwd, bwd }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// Number of grid points, `n^3`.
    pub fn len(&self) -> usize {
        self.inner.n.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn l(&self) -> f64 {
        self.inner.l
    }

    pub fn h(&self) -> f64 {
        self.inner.l / self.inner.n as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.inner.l
    }

    /// Volume of one real-space cell, `h^3`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    /// Volume of one Fourier cell, `(2π/L)^3`.
    pub fn mode_volume(&self) -> f64 {
        self.dk().powi(3)
    }

    /// Largest wavenumber represented on an axis.
    pub fn k_nyquist(&self) -> f64 {
        PI / self.h()
    }

    /// One-dimensional wavenumber table indexed by FFT index.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.k1d
    }

    /// `|k|^2` for every mode, row-major.
    pub fn k2(&self) -> &[f64] {
        &self.inner.k2
    }

    pub fn index(&self, j0: usize, j1: usize, j2: usize) -> usize {
        (j0 * self.inner.n + j1) * self.inner.n + j2
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.inner.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Wavevector of the mode at flat index `idx`.
    pub fn k_vec(&self, idx: usize) -> Vector3<f64> {
        let (a, b, c) = self.unindex(idx);
        let k = &self.inner.k1d;
        Vector3::new(k[a], k[b], k[c])
    }

    /// Coordinate of grid index `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.inner.n / 2) as f64) * self.h()
    }

    /// Position of the grid point at flat index `idx`.
    pub fn position(&self, idx: usize) -> Vector3<f64> {
        let (a, b, c) = self.unindex(idx);
        Vector3::new(self.coord(a), self.coord(b), self.coord(c))
    }

    pub fn is_nyquist(&self, j0: usize, j1: usize, j2: usize) -> bool {
        let h = self.inner.n / 2;
        j0 == h || j1 == h || j2 == h
    }

    /// Evaluates `f(x)` at every grid point.
    pub fn sample<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> Vec<f64> {
        let n = self.inner.n;
        let mut out = Vec::with_capacity(self.len());
        for a in 0..n {
            let x = self.coord(a);
            for b in 0..n {
                let y = self.coord(b);
                for c in 0..n {
                    out.push(f(&Vector3::new(x, y, self.coord(c))));
                }
            }
        }
        out
    }

    /// Evaluates `f(k)` at every mode, with Nyquist modes set to zero.
    pub fn sample_spectrum<F: Fn(&Vector3<f64>) -> Complex64>(&self, f: F) -> Spectrum {
        let n = self.inner.n;
        let k = &self.inner.k1d;
        let mut out = Vec::with_capacity(self.len());
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.is_nyquist(a, b, c) {
                        out.push(Complex64::new(0.0, 0.0));
                    } else {
                        out.push(f(&Vector3::new(k[a], k[b], k[c])));
                    }
                }
            }
        }
        out
    }

    pub fn zeros(&self) -> Spectrum {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    /// Zeroes every mode touching the Nyquist index.
    pub fn clear_nyquist(&self, s: &mut [Complex64]) {
        let n = self.inner.n;
        let h = n / 2;
        for a in 0..n {
            for b in 0..n {
                let base = (a * n + b) * n;
                if a == h || b == h {
                    s[base..base + n].fill(Complex64::new(0.0, 0.0));
                } else {
                    s[base + h] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    fn alternate(&self, s: &mut [Complex64], scale: f64) {
        let n = self.inner.n;
        for (idx, v) in s.iter_mut().enumerate() {
            let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
            let sign = if (a + b + c) % 2 == 0 { scale } else { -scale };
            *v *= sign;
        }
    }

    fn fft3(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for line in data.chunks_exact_mut(n) {
            plan.process_with_scratch(line, &mut scratch);
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for a in 0..n {
            for c in 0..n {
                for b in 0..n {
                    buf[b] = data[(a * n + b) * n + c];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for b in 0..n {
                    data[(a * n + b) * n + c] = buf[b];
                }
            }
        }
        let nn = n * n;
        for bc in 0..nn {
            for a in 0..n {
                buf[a] = data[a * nn + bc];
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for a in 0..n {
                data[a * nn + bc] = buf[a];
            }
        }
    }

    /// Forward transform of a real field.
    pub fn forward(&self, f: &[f64]) -> Spectrum {
        assert_eq!(f.len(), self.len(), "field size does not match grid");
        let mut s: Spectrum = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft3(&mut s, &self.inner.bwd);
        self.alternate(&mut s, self.cell_volume() / (2.0 * PI).powf(1.5));
        self.clear_nyquist(&mut s);
        s
    }

    /// Inverse transform, keeping the complex values.
    pub fn inverse_complex(&self, s: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(s.len(), self.len(), "spectrum size does not match grid");
        let mut d = s.to_vec();
        self.alternate(&mut d, self.mode_volume() / (2.0 * PI).powf(1.5));
        self.fft3(&mut d, &self.inner.fwd);
        d
    }

    /// Inverse transform of the spectrum of a real field.
    pub fn inverse(&self, s: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(s).into_iter().map(|z| z.re).collect()
    }

    /// Spectrum of `∂_axis f`.
    pub fn derivative(&self, s: &[Complex64], axis: usize) -> Spectrum {
        let mut out = s.to_vec();
        self.apply_derivative(&mut out, axis);
        out
    }

    pub fn apply_derivative(&self, s: &mut [Complex64], axis: usize) {
        let n = self.inner.n;
        let k = &self.inner.k1d;
        for (idx, v) in s.iter_mut().enumerate() {
            let j = match axis {
                0 => idx / (n * n),
                1 => (idx / n) % n,
                _ => idx % n,
            };
            *v *= Complex64::new(0.0, -k[j]);
        }
    }

    /// Spectrum of `f(x - a)`.
    pub fn shifted(&self, s: &[Complex64], a: &Vector3<f64>) -> Spectrum {
        let mut out = s.to_vec();
        self.apply_shift(&mut out, a);
        out
    }

    pub fn apply_shift(&self, s: &mut [Complex64], a: &Vector3<f64>) {
        let [p0, p1, p2] = self.phase_tables(a);
        let n = self.inner.n;
        for j0 in 0..n {
            for j1 in 0..n {
                let ph = p0[j0] * p1[j1];
                let base = (j0 * n + j1) * n;
                for j2 in 0..n {
                    s[base + j2] *= ph * p2[j2];
                }
            }
        }
    }

    /// Per-axis tables of `e^{i k_j a_j}`.
    pub fn phase_tables(&self, a: &Vector3<f64>) -> [Vec<Complex64>; 3] {
        let k = &self.inner.k1d;
        let table = |x: f64| k.iter().map(|&kj| Complex64::from_polar(1.0, kj * x)).collect();
        [table(a[0]), table(a[1]), table(a[2])]
    }

    /// Real `L^2` pairing `∫ f g dx` of two real fields given by their spectra.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x.re * y.re + x.im * y.im;
        }
        acc * self.mode_volume()
    }

    /// Complex pairing `Σ a conj(b)` times the Fourier cell volume.
    pub fn pairing(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            acc += x * y.conj();
        }
        acc * self.mode_volume()
    }

    pub fn l2_norm(&self, a: &[Complex64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// `L^2` norm of the gradient, `‖∇f‖`.
    pub fn gradient_norm(&self, a: &[Complex64]) -> f64 {
        let k2 = &self.inner.k2;
        let s: f64 = a.iter().zip(k2).map(|(v, kk)| v.norm_sqr() * kk).sum();
        (s * self.mode_volume()).sqrt()
    }
}
