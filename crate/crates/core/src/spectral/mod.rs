//! Wave packets on a periodic grid and their two-channel energy representations.
//!
//! Momentum samples use the continuous normalization
//! `φ̂(p) = (2π)^{-1/2} ∫ e^{-ipx} φ(x) dx`, so that `Σ|φ|²dx = Σ|φ̂|²dp`
//! holds exactly on the grid.

mod packet;
mod repr;

pub use packet::{make_admissible_packet, AdmissiblePacket, PacketSpec, DEFAULT_THETA};
pub use repr::{
    apply_s, from_out_representation, to_in_representation, to_out_representation, Representation,
    TwoChannelSpectral,
};

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform periodic grid `x_m = x_min + m dx`, `m = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl SpatialGrid {
    /// Grid of `n` points symmetric about the origin (`x_{n/2} = 0`).
    pub fn centered(n: usize, dx: f64) -> Self {
        SpatialGrid {
            x_min: -((n / 2) as f64) * dx,
            dx,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size {} must be a power of two >= 4",
                self.n
            )));
        }
        if !(self.dx > 0.0 && self.dx.is_finite() && self.x_min.is_finite()) {
            return Err(Error::Config(format!("bad grid spacing {}", self.dx)));
        }
        Ok(())
    }

    pub fn x(&self, m: usize) -> f64 {
        self.x_min + m as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.x(m)).collect()
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dx
    }

    /// Momentum of FFT bin `j` (standard, unshifted order).
    pub fn momentum(&self, j: usize) -> f64 {
        let j = if j < self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        };
        j * self.dp()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.momentum(j)).collect()
    }
}

/// Forward and inverse FFT plans for one grid size.
#[derive(Clone)]
pub struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized forward DFT in place.
    pub fn forward_raw(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse DFT in place (no `1/n`).
    pub fn inverse_raw(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Continuous-normalized momentum samples of `values`.
    pub fn to_momentum(&self, grid: &SpatialGrid, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.forward.process(&mut buf);
        let scale = grid.dx / (2.0 * PI).sqrt();
        for (j, b) in buf.iter_mut().enumerate() {
            let p = grid.momentum(j);
            *b *= Complex64::from_polar(scale, -p * grid.x_min);
        }
        buf
    }

    pub fn to_position(&self, grid: &SpatialGrid, momentum: &[Complex64]) -> Vec<Complex64> {
        let scale = (2.0 * PI).sqrt() / (grid.dx * grid.n as f64);
        let mut buf: Vec<Complex64> = momentum
            .iter()
            .enumerate()
            .map(|(j, v)| v * Complex64::from_polar(scale, grid.momentum(j) * grid.x_min))
            .collect();
        self.inverse.process(&mut buf);
        buf
    }
}

/// A wavefunction sampled on a [`SpatialGrid`] together with its momentum
/// samples on the FFT momentum grid.
#[derive(Debug, Clone)]
pub struct SpatialState {
    grid: SpatialGrid,
    values: Vec<Complex64>,
    momentum: Vec<Complex64>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FftPair")
    }
}

impl SpatialState {
    pub fn from_values(grid: SpatialGrid, values: Vec<Complex64>) -> Result<Self> {
        Self::from_values_with(&FftPair::new(grid.n), grid, values)
    }

    pub fn from_values_with(
        fft: &FftPair,
        grid: SpatialGrid,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return Err(Error::Config(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        let momentum = fft.to_momentum(&grid, &values);
        Ok(SpatialState {
            grid,
            values,
            momentum,
        })
    }

    /// State from momentum samples in FFT order.
    pub fn from_momentum(grid: SpatialGrid, momentum: Vec<Complex64>) -> Result<Self> {
        Self::from_momentum_with(&FftPair::new(grid.n), grid, momentum)
    }

    pub fn from_momentum_with(
        fft: &FftPair,
        grid: SpatialGrid,
        momentum: Vec<Complex64>,
    ) -> Result<Self> {
        grid.validate()?;
        if momentum.len() != grid.n {
            return Err(Error::Config(format!(
                "{} momentum samples for a grid of {} points",
                momentum.len(),
                grid.n
            )));
        }
        let values = fft.to_position(&grid, &momentum);
        Ok(SpatialState {
            grid,
            values,
            momentum,
        })
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        SpatialState {
            grid,
            values: vec![Complex64::default(); grid.n],
            momentum: vec![Complex64::default(); grid.n],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn momentum_values(&self) -> &[Complex64] {
        &self.momentum
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    pub fn momentum_norm_sq(&self) -> f64 {
        self.momentum.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dp()
    }

    /// Relative mismatch between spatial and momentum norms.
    pub fn plancherel_defect(&self) -> f64 {
        let a = self.norm_sq();
        let b = self.momentum_norm_sq();
        (a - b).abs() / a.max(b).max(f64::MIN_POSITIVE)
    }

    /// Norm squared of the positive (`sign > 0`) or negative momentum part.
    pub fn half_norm_sq(&self, sign: f64) -> f64 {
        let dp = self.grid.dp();
        self.momentum
            .iter()
            .enumerate()
            .filter(|(j, _)| self.grid.momentum(*j) * sign > 0.0)
            .map(|(_, v)| v.norm_sqr())
            .sum::<f64>()
            * dp
    }

    /// `∫|φ̂(p)|²/|p| dp` over nonzero momenta.
    pub fn inverse_momentum_moment(&self) -> f64 {
        let dp = self.grid.dp();
        self.momentum
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 0)
            .map(|(j, v)| v.norm_sqr() / self.grid.momentum(j).abs())
            .sum::<f64>()
            * dp
    }

    /// `φ̂(p)` at an arbitrary momentum by direct summation over the grid.
    pub fn hat_at(&self, p: f64) -> Complex64 {
        const BLOCK: usize = 256;
        let g = &self.grid;
        let step = Complex64::from_polar(1.0, -p * g.dx);
        let mut acc = Complex64::default();
        for (b, chunk) in self.values.chunks(BLOCK).enumerate() {
            // restart the phase every block to bound recurrence drift
            let mut phase = Complex64::from_polar(1.0, -p * g.x(b * BLOCK));
            let mut part = Complex64::default();
            for v in chunk {
                part += v * phase;
                phase *= step;
            }
            acc += part;
        }
        acc * (g.dx / (2.0 * PI).sqrt())
    }

    pub fn hat_at_many(&self, ps: &[f64]) -> Vec<Complex64> {
        ps.par_iter().map(|&p| self.hat_at(p)).collect()
    }

    /// `∫(1+|x|)^{2θ}|φ|² dx` on the grid.
    pub fn weighted_norm_sq(&self, theta: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(m, v)| (1.0 + self.grid.x(m).abs()).powf(2.0 * theta) * v.norm_sqr())
            .sum::<f64>()
            * self.grid.dx
    }

    /// Momentum reversal `φ̂(p) ↦ φ̂(-p)`.
    pub fn parity(&self) -> SpatialState {
        let n = self.grid.n;
        let momentum: Vec<Complex64> = (0..n).map(|j| self.momentum[(n - j) % n]).collect();
        SpatialState::from_momentum(self.grid, momentum).expect("grid already validated")
    }

    /// Complex conjugation in position space.
    pub fn time_reverse(&self) -> SpatialState {
        let values = self.values.iter().map(|v| v.conj()).collect();
        SpatialState::from_values(self.grid, values).expect("grid already validated")
    }

    pub fn scaled(&self, c: Complex64) -> SpatialState {
        SpatialState {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            momentum: self.momentum.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &SpatialState) -> Result<SpatialState> {
        if self.grid != other.grid {
            return Err(Error::Config("states live on different grids".into()));
        }
        Ok(SpatialState {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
            momentum: self
                .momentum
                .iter()
                .zip(&other.momentum)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `‖self - other‖` in position space.
    pub fn distance(&self, other: &SpatialState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            * self.grid.dx.sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,re,im\n");
        for (m, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.grid.x(m), v.re, v.im);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: SpatialGrid, x0: f64, p0: f64, s: f64) -> SpatialState {
        let values = grid
            .xs()
            .iter()
            .map(|&x| {
                let y = x - x0;
                Complex64::from_polar((-y * y / (4.0 * s * s)).exp(), p0 * y)
            })
            .collect();
        SpatialState::from_values(grid, values).unwrap()
    }

    #[test]
    fn plancherel_holds_on_the_grid() {
        let st = gaussian(SpatialGrid::centered(1024, 0.1), 3.0, 1.5, 2.0);
        assert!(st.plancherel_defect() < 1e-12);
        // ∫ e^{-y²/2s²} dy = s √(2π)
        assert!((st.norm_sq() - 2.0 * (2.0 * PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn momentum_samples_match_the_analytic_transform() {
        let (x0, p0, s) = (-2.0, 1.0, 1.5);
        let st = gaussian(SpatialGrid::centered(1024, 0.1), x0, p0, s);
        for j in [0, 5, 40, 1000] {
            let p = st.grid().momentum(j);
            let exact =
                Complex64::from_polar(2f64.sqrt() * s * (-(p - p0).powi(2) * s * s).exp(), -p * x0);
            assert!((st.momentum_values()[j] - exact).norm() < 1e-12);
            assert!((st.hat_at(p) - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_through_momentum() {
        let st = gaussian(SpatialGrid::centered(256, 0.2), 1.0, -0.5, 1.0);
        let back = SpatialState::from_momentum(*st.grid(), st.momentum_values().to_vec()).unwrap();
        assert!(st.distance(&back) < 1e-13);
    }

    #[test]
    fn parity_and_time_reversal_are_involutions() {
        let st = gaussian(SpatialGrid::centered(512, 0.1), 2.0, 1.2, 2.0);
        assert!(st.parity().parity().distance(&st) < 1e-12);
        assert!(st.time_reverse().time_reverse().distance(&st) < 1e-12);
        assert!(st.half_norm_sq(1.0) > 0.99 * st.norm_sq());
        assert!(st.parity().half_norm_sq(-1.0) > 0.99 * st.norm_sq());
        assert!(st.time_reverse().half_norm_sq(-1.0) > 0.99 * st.norm_sq());
    }

    #[test]
    fn even_real_gaussian_is_parity_invariant() {
        let st = gaussian(SpatialGrid::centered(512, 0.1), 0.0, 0.0, 1.0);
        assert!(st.parity().distance(&st) < 1e-12);
        assert!(st.time_reverse().distance(&st) < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialState::from_values(
            SpatialGrid::centered(100, 0.1),
            vec![Complex64::default(); 100]
        )
        .is_err());
        assert!(SpatialState::from_values(
            SpatialGrid::centered(64, 0.1),
            vec![Complex64::default(); 10]
        )
        .is_err());
    }
}
