//! Frame series generation and continuous space/time sampling.

use super::solver::{FlowSolver, GridSpec, WindError, CFL_SAFETY};
use crate::math::Vec2;

/// One stored snapshot of the flow. Grids are row-major with y-major rows
/// (`iy * nx + ix`).
#[derive(Debug, Clone, PartialEq)]
pub struct WindFrame {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Pressure in solver units, zero-mean gauge.
    pub p: Vec<f64>,
    pub re_diag: f64,
}

/// A generated wind field: uniformly spaced frames plus the parameters
/// needed to reproduce or interpolate them.
#[derive(Debug, Clone, PartialEq)]
pub struct WindFieldSeries {
    pub spec: GridSpec,
    pub frames: Vec<WindFrame>,
    pub dt_frame: f64,
    pub seed: u64,
    pub speed_bound: f64,
}

/// Interpolated flow quantities at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub w: Vec2,
    pub p: f64,
}

/// `U_rms * L / nu` with the RMS speed taken over the whole grid.
pub fn reynolds_diagnostic(frame: &WindFrame, spec: &GridSpec) -> f64 {
    let ms = frame
        .u
        .iter()
        .zip(frame.v.iter())
        .map(|(&u, &v)| u * u + v * v)
        .sum::<f64>()
        / frame.u.len() as f64;
    ms.sqrt() * spec.domain_size / spec.viscosity
}

/// Default stored frame spacing, seconds.
pub const DT_FRAME_DEFAULT: f64 = 0.1;
/// Default cap on the physical wind speed, m/s.
pub const SPEED_BOUND_DEFAULT: f64 = 15.0;

impl WindFieldSeries {
    /// Run the solver from a seeded initial condition and store frames every
    /// `dt_frame` seconds up to and including `duration`. Substeps adapt to
    /// the CFL bound; if forcing pushes any frame past `speed_bound` the
    /// whole series is rescaled at the end (velocity by `c`, pressure by
    /// `c^2`, the Reynolds diagnostic by `c`).
    pub fn generate(
        spec: GridSpec,
        seed: u64,
        duration: f64,
        dt_frame: f64,
        speed_bound: f64,
    ) -> Result<WindFieldSeries, WindError> {
        assert!(duration > 0.0 && dt_frame > 0.0);
        let mut solver = FlowSolver::new(spec.clone())?;
        let mut state = solver.initial_condition(seed, speed_bound)?;
        let n_frames = (duration / dt_frame).round() as usize + 1;

        let mut frames = Vec::with_capacity(n_frames);
        frames.push(Self::make_frame(&solver, &state, 0.0));

        for k in 1..n_frames {
            let t_start = state.t;
            let target = k as f64 * dt_frame;
            let span = target - t_start;
            let vmax = solver.max_speed(&state);
            let dt_cfl = if vmax > 0.0 {
                CFL_SAFETY * solver.spec.dx() / vmax
            } else {
                span
            };
            let mut dt_plan = span / (span / dt_cfl).ceil().max(1.0);
            // Each attempt covers the remaining span in equal substeps so
            // the solver's integrating-factor cache stays warm. The CFL
            // check runs before the state mutates, so a failed attempt only
            // needs a finer plan for what is left.
            'interval: loop {
                let remaining = target - state.t;
                if remaining <= 1e-12 {
                    break;
                }
                let n = (remaining / dt_plan - 1e-9).ceil().max(1.0) as usize;
                let dt = remaining / n as f64;
                for _ in 0..n {
                    match solver.step(&mut state, dt) {
                        Ok(()) => {}
                        Err(WindError::CflViolation { .. }) => {
                            dt_plan = dt / 2.0;
                            continue 'interval;
                        }
                        Err(e) => return Err(e),
                    }
                }
                break;
            }
            state.t = target;
            frames.push(Self::make_frame(&solver, &state, target));
        }

        let mut series = WindFieldSeries {
            spec,
            frames,
            dt_frame,
            seed,
            speed_bound,
        };
        let vmax = series.max_speed();
        if vmax > speed_bound && vmax > 0.0 {
            let c = speed_bound / vmax;
            for f in series.frames.iter_mut() {
                for u in f.u.iter_mut() {
                    *u *= c;
                }
                for v in f.v.iter_mut() {
                    *v *= c;
                }
                for p in f.p.iter_mut() {
                    *p *= c * c;
                }
                f.re_diag *= c;
            }
        }
        Ok(series)
    }

    fn make_frame(solver: &FlowSolver, state: &super::solver::SpectralState, t: f64) -> WindFrame {
        let (u, v) = solver.velocity(state);
        let p = solver.pressure(state);
        let mut frame = WindFrame {
            t,
            u,
            v,
            p,
            re_diag: 0.0,
        };
        frame.re_diag = reynolds_diagnostic(&frame, &solver.spec);
        frame
    }

    /// Constant-in-space-and-time wind, mostly for tests and controller
    /// baselines. Uses a small grid since the field carries no structure.
    pub fn uniform(wind: Vec2, pressure: f64, duration: f64, dt_frame: f64) -> WindFieldSeries {
        let spec = GridSpec {
            nx: 32,
            ny: 32,
            ..GridSpec::default()
        };
        let cells = spec.cells();
        let n_frames = (duration / dt_frame).round() as usize + 1;
        let proto = WindFrame {
            t: 0.0,
            u: vec![wind.x; cells],
            v: vec![wind.y; cells],
            p: vec![pressure; cells],
            re_diag: 0.0,
        };
        let re = reynolds_diagnostic(&proto, &spec);
        let frames = (0..n_frames)
            .map(|k| WindFrame {
                t: k as f64 * dt_frame,
                re_diag: re,
                ..proto.clone()
            })
            .collect();
        WindFieldSeries {
            spec,
            frames,
            dt_frame,
            seed: 0,
            speed_bound: SPEED_BOUND_DEFAULT.max(wind.norm()),
        }
    }

    pub fn duration(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.t)
    }

    pub fn max_speed(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.u.iter().zip(f.v.iter()))
            .map(|(&u, &v)| (u * u + v * v).sqrt())
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation in space (periodic wrap) and linear
    /// interpolation in time. `t` may overshoot the frame range by 1e-9 to
    /// absorb accumulated float error in control loops.
    pub fn sample(&self, t: f64, position: Vec2) -> Result<FlowSample, WindError> {
        let t_max = self.duration();
        if t < -1e-9 || t > t_max + 1e-9 {
            return Err(WindError::SampleOutOfRange { t, t_max });
        }
        let t = t.clamp(0.0, t_max);
        let ft = t / self.dt_frame;
        let (i0, alpha) = split_index(ft, self.frames.len() - 1);
        let i1 = (i0 + 1).min(self.frames.len() - 1);

        let f0 = &self.frames[i0];
        let (u0, v0, p0) = self.bilinear(f0, position);
        if alpha == 0.0 {
            return Ok(FlowSample {
                w: Vec2::new(u0, v0),
                p: p0,
            });
        }
        let f1 = &self.frames[i1];
        let (u1, v1, p1) = self.bilinear(f1, position);
        Ok(FlowSample {
            w: Vec2::new(u0 + alpha * (u1 - u0), v0 + alpha * (v1 - v0)),
            p: p0 + alpha * (p1 - p0),
        })
    }

    fn bilinear(&self, frame: &WindFrame, position: Vec2) -> (f64, f64, f64) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let l = self.spec.domain_size;
        let gx = position.x.rem_euclid(l) / (l / nx as f64);
        let gy = position.y.rem_euclid(l) / (l / ny as f64);
        let (ix0, fx) = split_index(gx, nx);
        let (iy0, fy) = split_index(gy, ny);
        let (ix0, iy0) = (ix0 % nx, iy0 % ny);
        let ix1 = (ix0 + 1) % nx;
        let iy1 = (iy0 + 1) % ny;

        let idx = [iy0 * nx + ix0, iy0 * nx + ix1, iy1 * nx + ix0, iy1 * nx + ix1];
        let wgt = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        let combine = |g: &[f64]| idx.iter().zip(wgt.iter()).map(|(&i, &w)| w * g[i]).sum();
        (combine(&frame.u), combine(&frame.v), combine(&frame.p))
    }
}

/// Split a fractional index into (floor, fraction), snapping fractions
/// within 1e-9 of a whole index so node queries return stored values
/// exactly. `floor` is capped at `max_index`.
fn split_index(g: f64, max_index: usize) -> (usize, f64) {
    let mut i = g.floor() as i64;
    let mut frac = g - i as f64;
    if frac < 1e-9 {
        frac = 0.0;
    } else if frac > 1.0 - 1e-9 {
        i += 1;
        frac = 0.0;
    }
    let i = i.clamp(0, max_index as i64) as usize;
    (i, frac)
}
