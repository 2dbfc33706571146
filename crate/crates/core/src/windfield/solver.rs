//! Pseudo-spectral solver for 2-D incompressible flow on a periodic square.
//!
//! The solver advances the vorticity-streamfunction form of the
//! incompressible Navier-Stokes equations,
//!
//! ```text
//! dw/dt + (u . grad) w = nu lap(w) + f,     lap(psi) = -w,
//! u = d(psi)/dy,  v = -d(psi)/dx
//! ```
//!
//! so the velocity field is divergence-free by construction. The nonlinear
//! term is evaluated pseudo-spectrally with 2/3-rule dealiasing, viscosity
//! is folded into an exact integrating factor, and time stepping is the
//! classical fourth-order Runge-Kutta scheme applied to the transformed
//! variable. Stochastic band-limited forcing injects energy at a configured
//! annulus of wavenumber indices, with variance proportional to the step
//! size so the injected power is independent of substepping.

use super::fft::{signed_index, Fft2d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WindError {
    #[error("invalid grid spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("time step {dt} exceeds the CFL bound {bound} (max speed {vmax})")]
    CflViolation { dt: f64, bound: f64, vmax: f64 },
    #[error("flow state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("sample time {t} outside the series range [0, {t_max}]")]
    SampleOutOfRange { t: f64, t_max: f64 },
    #[error("series frames cover {have} s but {need} s were requested")]
    SeriesTooShort { have: f64, need: f64 },
    #[error("speed bound must be non-negative, got {0}")]
    NegativeSpeedBound(f64),
}

/// Discretisation and physics parameters of the flow solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Side length of the periodic square, metres.
    pub domain_size: f64,
    /// Kinematic viscosity, m^2/s.
    pub viscosity: f64,
    /// Physical amplitude of the stochastic vorticity forcing per mode,
    /// in (rad/s)/sqrt(s). Zero disables forcing.
    pub forcing_amplitude: f64,
    /// Inclusive annulus of wavenumber indices receiving forcing.
    pub forcing_band: (usize, usize),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nx: 128,
            ny: 128,
            domain_size: 10.0,
            viscosity: 0.01,
            forcing_amplitude: 0.2,
            forcing_band: (3, 5),
        }
    }
}

impl GridSpec {
    /// Test-sized variant of the defaults.
    pub fn small() -> GridSpec {
        GridSpec {
            nx: 64,
            ny: 64,
            ..GridSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), WindError> {
        let fail = |reason: String| Err(WindError::InvalidSpec { reason });
        for (axis, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 32 || !n.is_power_of_two() {
                return fail(format!("{axis} = {n}, need a power of two >= 32"));
            }
        }
        if !(self.domain_size > 0.0) || !self.domain_size.is_finite() {
            return fail(format!("domain_size = {}", self.domain_size));
        }
        if !(self.viscosity > 0.0) || !self.viscosity.is_finite() {
            return fail(format!("viscosity = {}", self.viscosity));
        }
        if self.forcing_amplitude < 0.0 || !self.forcing_amplitude.is_finite() {
            return fail(format!("forcing_amplitude = {}", self.forcing_amplitude));
        }
        let (lo, hi) = self.forcing_band;
        if lo < 1 || lo > hi {
            return fail(format!("forcing_band = ({lo}, {hi})"));
        }
        if hi >= self.nx.min(self.ny) / 3 {
            return fail(format!(
                "forcing_band upper index {hi} reaches into the dealiased range (limit {})",
                self.nx.min(self.ny) / 3
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Smallest grid spacing, metres.
    pub fn dx(&self) -> f64 {
        self.domain_size / self.nx.max(self.ny) as f64
    }
}

/// Spectral flow state: the vorticity transform plus the forcing RNG.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub(crate) omega: Vec<Complex64>,
    pub t: f64,
    rng: ChaCha8Rng,
}

/// Fraction of the CFL limit used when choosing substeps.
pub const CFL_SAFETY: f64 = 0.4;
/// Hard CFL ceiling enforced by [`FlowSolver::step`].
pub const CFL_LIMIT: f64 = 0.5;

pub struct FlowSolver {
    pub spec: GridSpec,
    fft: Fft2d,
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Squared wavenumber magnitude per cell; the zero mode holds 0.
    k2: Vec<f64>,
    dealias: Vec<bool>,
    /// Canonical half-spectrum modes inside the forcing annulus, paired with
    /// their conjugate mirror cell.
    forcing_modes: Vec<(usize, usize)>,
    exp_cache: ExpCache,
}

struct ExpCache {
    dt: f64,
    half: Vec<f64>,
    full: Vec<f64>,
}

impl FlowSolver {
    pub fn new(spec: GridSpec) -> Result<FlowSolver, WindError> {
        spec.validate()?;
        let (nx, ny) = (spec.nx, spec.ny);
        let two_pi_l = 2.0 * std::f64::consts::PI / spec.domain_size;
        let mut kx = vec![0.0; nx * ny];
        let mut ky = vec![0.0; nx * ny];
        let mut k2 = vec![0.0; nx * ny];
        let mut dealias = vec![false; nx * ny];
        let mut forcing_modes = Vec::new();
        let (band_lo, band_hi) = (spec.forcing_band.0 as f64, spec.forcing_band.1 as f64);
        for iy in 0..ny {
            let my = signed_index(iy, ny);
            for ix in 0..nx {
                let mx = signed_index(ix, nx);
                let i = iy * nx + ix;
                kx[i] = two_pi_l * mx as f64;
                ky[i] = two_pi_l * my as f64;
                k2[i] = kx[i] * kx[i] + ky[i] * ky[i];
                dealias[i] = mx.unsigned_abs() as usize <= nx / 3
                    && my.unsigned_abs() as usize <= ny / 3;
                // one representative per conjugate pair: upper half plane,
                // plus the positive x axis
                let canonical = my > 0 || (my == 0 && mx > 0);
                if canonical {
                    let mag = ((mx * mx + my * my) as f64).sqrt();
                    if mag >= band_lo && mag <= band_hi {
                        let mirror_ix = (nx - ix) % nx;
                        let mirror_iy = (ny - iy) % ny;
                        forcing_modes.push((i, mirror_iy * nx + mirror_ix));
                    }
                }
            }
        }
        Ok(FlowSolver {
            fft: Fft2d::new(nx, ny),
            spec,
            kx,
            ky,
            k2,
            dealias,
            forcing_modes,
            exp_cache: ExpCache {
                dt: f64::NAN,
                half: Vec::new(),
                full: Vec::new(),
            },
        })
    }

    /// Divergence-free initial condition: conjugate-symmetric Gaussian
    /// vorticity on wavenumber indices `1 ..= forcing_band.1`, rescaled so
    /// the physical speed maximum starts at one eighth of `speed_bound`.
    /// Starting well under the cap leaves room for the stochastic forcing
    /// to spin the flow up, so the Reynolds diagnostic grows over a run
    /// instead of monotonically decaying.
    pub fn initial_condition(&mut self, seed: u64, speed_bound: f64) -> Result<SpectralState, WindError> {
        if speed_bound < 0.0 {
            return Err(WindError::NegativeSpeedBound(speed_bound));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let hi = self.spec.forcing_band.1 as f64;
        let mut omega = vec![Complex64::default(); nx * ny];
        for iy in 0..ny {
            let my = signed_index(iy, ny);
            for ix in 0..nx {
                let mx = signed_index(ix, nx);
                let mag = ((mx * mx + my * my) as f64).sqrt();
                if mag >= 1.0 && mag <= hi {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    omega[iy * nx + ix] = Complex64::new(re, im);
                }
            }
        }
        // Hermitian symmetrisation makes the physical field real.
        for iy in 0..ny {
            for ix in 0..nx {
                let i = iy * nx + ix;
                let j = ((ny - iy) % ny) * nx + (nx - ix) % nx;
                if i < j {
                    let avg = 0.5 * (omega[i] + omega[j].conj());
                    omega[i] = avg;
                    omega[j] = avg.conj();
                } else if i == j {
                    omega[i] = Complex64::new(omega[i].re, 0.0);
                }
            }
        }
        // Spectral coefficients carry the FFT normalisation factor.
        let n = (nx * ny) as f64;
        for w in omega.iter_mut() {
            *w *= n;
        }
        let mut state = SpectralState {
            omega,
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        };
        let vmax = self.max_speed(&state);
        if vmax > 0.0 {
            let c = 0.125 * speed_bound / vmax;
            for w in state.omega.iter_mut() {
                *w *= c;
            }
        }
        Ok(state)
    }

    /// Build a state from a physical vorticity grid (row-major, y-major).
    pub fn state_from_vorticity(&self, vorticity: &[f64], seed: u64) -> SpectralState {
        assert_eq!(vorticity.len(), self.spec.cells());
        let mut omega: Vec<Complex64> = vorticity
            .iter()
            .map(|&w| Complex64::new(w, 0.0))
            .collect();
        self.fft.forward(&mut omega);
        SpectralState {
            omega,
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Physical velocity components recovered from the vorticity transform.
    pub fn velocity(&self, state: &SpectralState) -> (Vec<f64>, Vec<f64>) {
        let (u_hat, v_hat) = self.velocity_hat(&state.omega);
        (self.to_physical(u_hat), self.to_physical(v_hat))
    }

    fn velocity_hat(&self, omega: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut u_hat = vec![Complex64::default(); omega.len()];
        let mut v_hat = vec![Complex64::default(); omega.len()];
        for idx in 0..omega.len() {
            if self.k2[idx] > 0.0 {
                let psi = omega[idx] / self.k2[idx];
                u_hat[idx] = i * self.ky[idx] * psi;
                v_hat[idx] = -i * self.kx[idx] * psi;
            }
        }
        (u_hat, v_hat)
    }

    fn to_physical(&self, mut hat: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut hat);
        hat.iter().map(|c| c.re).collect()
    }

    pub fn max_speed(&self, state: &SpectralState) -> f64 {
        let (u, v) = self.velocity(state);
        u.iter()
            .zip(v.iter())
            .map(|(&u, &v)| (u * u + v * v).sqrt())
            .fold(0.0, f64::max)
    }

    /// Mean kinetic energy per unit mass, `0.5 <|w|^2>`.
    pub fn kinetic_energy(&self, state: &SpectralState) -> f64 {
        let (u, v) = self.velocity(state);
        0.5 * u
            .iter()
            .zip(v.iter())
            .map(|(&u, &v)| u * u + v * v)
            .sum::<f64>()
            / u.len() as f64
    }

    /// Dealiased transform of the advection term `-(u . grad) w`, plus the
    /// maximum physical speed encountered (for CFL checks).
    fn nonlinear(&self, omega: &[Complex64]) -> (Vec<Complex64>, f64) {
        let i = Complex64::new(0.0, 1.0);
        let (u_hat, v_hat) = self.velocity_hat(omega);
        let mut wx_hat = vec![Complex64::default(); omega.len()];
        let mut wy_hat = vec![Complex64::default(); omega.len()];
        for idx in 0..omega.len() {
            wx_hat[idx] = i * self.kx[idx] * omega[idx];
            wy_hat[idx] = i * self.ky[idx] * omega[idx];
        }
        let u = self.to_physical(u_hat);
        let v = self.to_physical(v_hat);
        let wx = self.to_physical(wx_hat);
        let wy = self.to_physical(wy_hat);
        let mut vmax = 0.0_f64;
        let mut adv: Vec<Complex64> = (0..u.len())
            .map(|idx| {
                let speed = (u[idx] * u[idx] + v[idx] * v[idx]).sqrt();
                if speed > vmax {
                    vmax = speed;
                }
                Complex64::new(-(u[idx] * wx[idx] + v[idx] * wy[idx]), 0.0)
            })
            .collect();
        self.fft.forward(&mut adv);
        for (idx, a) in adv.iter_mut().enumerate() {
            if !self.dealias[idx] {
                *a = Complex64::default();
            }
        }
        (adv, vmax)
    }

    fn refresh_exp_cache(&mut self, dt: f64) {
        if self.exp_cache.dt.to_bits() == dt.to_bits() {
            return;
        }
        let nu = self.spec.viscosity;
        self.exp_cache.half = self.k2.iter().map(|&k2| (-nu * k2 * dt / 2.0).exp()).collect();
        self.exp_cache.full = self.k2.iter().map(|&k2| (-nu * k2 * dt).exp()).collect();
        self.exp_cache.dt = dt;
    }

    /// Advance one step of size `dt` with integrating-factor RK4 and apply
    /// stochastic forcing. Errors if `dt` violates the CFL bound
    /// `dt <= 0.5 dx / max_speed`.
    pub fn step(&mut self, state: &mut SpectralState, dt: f64) -> Result<(), WindError> {
        assert!(dt > 0.0, "step size must be positive");
        self.refresh_exp_cache(dt);
        let n_cells = state.omega.len();

        let (n1, vmax) = self.nonlinear(&state.omega);
        if vmax > 0.0 {
            let bound = CFL_LIMIT * self.spec.dx() / vmax;
            if dt > bound {
                return Err(WindError::CflViolation { dt, bound, vmax });
            }
        }

        let e = &self.exp_cache.half;
        let e2 = &self.exp_cache.full;
        let h = dt;

        let mut stage: Vec<Complex64> = (0..n_cells)
            .map(|i| e[i] * (state.omega[i] + 0.5 * h * n1[i]))
            .collect();
        let (n2, _) = self.nonlinear(&stage);

        for i in 0..n_cells {
            stage[i] = e[i] * state.omega[i] + 0.5 * h * n2[i];
        }
        let (n3, _) = self.nonlinear(&stage);

        for i in 0..n_cells {
            stage[i] = e2[i] * state.omega[i] + h * e[i] * n3[i];
        }
        let (n4, _) = self.nonlinear(&stage);

        for i in 0..n_cells {
            state.omega[i] = e2[i] * state.omega[i]
                + (h / 6.0)
                    * (e2[i] * n1[i] + 2.0 * e[i] * (n2[i] + n3[i]) + n4[i]);
        }

        if self.spec.forcing_amplitude > 0.0 {
            let scale = self.spec.forcing_amplitude
                * dt.sqrt()
                * (self.spec.nx * self.spec.ny) as f64;
            for &(cell, mirror) in &self.forcing_modes {
                let re: f64 = state.rng.sample(StandardNormal);
                let im: f64 = state.rng.sample(StandardNormal);
                let eta = Complex64::new(re, im) * scale;
                state.omega[cell] += eta;
                state.omega[mirror] += eta.conj();
            }
        }

        state.t += dt;
        if state
            .omega
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(WindError::NonFinite { t: state.t });
        }
        Ok(())
    }

    /// Pressure field from the instantaneous velocity, solving
    /// `lap(p) = -div((w . grad) w)` spectrally with a zero-mean gauge.
    pub fn pressure(&self, state: &SpectralState) -> Vec<f64> {
        let i = Complex64::new(0.0, 1.0);
        let (u_hat, v_hat) = self.velocity_hat(&state.omega);
        let n_cells = u_hat.len();
        let mut ux = vec![Complex64::default(); n_cells];
        let mut uy = vec![Complex64::default(); n_cells];
        let mut vx = vec![Complex64::default(); n_cells];
        let mut vy = vec![Complex64::default(); n_cells];
        for idx in 0..n_cells {
            ux[idx] = i * self.kx[idx] * u_hat[idx];
            uy[idx] = i * self.ky[idx] * u_hat[idx];
            vx[idx] = i * self.kx[idx] * v_hat[idx];
            vy[idx] = i * self.ky[idx] * v_hat[idx];
        }
        let u = self.to_physical(u_hat);
        let v = self.to_physical(v_hat);
        let ux = self.to_physical(ux);
        let uy = self.to_physical(uy);
        let vx = self.to_physical(vx);
        let vy = self.to_physical(vy);

        let mut b1: Vec<Complex64> = (0..n_cells)
            .map(|idx| Complex64::new(u[idx] * ux[idx] + v[idx] * uy[idx], 0.0))
            .collect();
        let mut b2: Vec<Complex64> = (0..n_cells)
            .map(|idx| Complex64::new(u[idx] * vx[idx] + v[idx] * vy[idx], 0.0))
            .collect();
        self.fft.forward(&mut b1);
        self.fft.forward(&mut b2);

        let mut p_hat = vec![Complex64::default(); n_cells];
        for idx in 0..n_cells {
            if self.k2[idx] > 0.0 && self.dealias[idx] {
                let div = i * (self.kx[idx] * b1[idx] + self.ky[idx] * b2[idx]);
                p_hat[idx] = div / self.k2[idx];
            }
        }
        self.to_physical(p_hat)
    }

    /// Largest absolute spectral divergence of a physical velocity field,
    /// per cell. Diagnostic used by tests and series validation.
    pub fn divergence_max(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.spec.cells());
        assert_eq!(v.len(), self.spec.cells());
        let i = Complex64::new(0.0, 1.0);
        let mut u_hat: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut v_hat: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut u_hat);
        self.fft.forward(&mut v_hat);
        let mut div: Vec<Complex64> = (0..u_hat.len())
            .map(|idx| i * (self.kx[idx] * u_hat[idx] + self.ky[idx] * v_hat[idx]))
            .collect();
        self.fft.inverse(&mut div);
        div.iter().map(|c| c.re.abs()).fold(0.0, f64::max)
    }
}
