//! The first-order guidance law `Ẋ = J/|Ψ|²` and trajectory integration.
//!
//! Velocities come from any [`WaveField`]: eigenmode expansions evaluate
//! exactly at every `(X, t)`, while grid evolutions are wrapped in a
//! [`GridHistory`] of snapshots and sampled by cubic interpolation in time
//! and space. Trajectories are solved with an adaptive embedded
//! Dormand–Prince 5(4) pair, keeping the local error below `tol` per unit
//! time. The dynamics is undefined on nodes of Ψ: steps that land too close
//! are rejected and shrunk rather than smoothed over, and a trajectory that
//! cannot continue is returned as a partial result with stall diagnostics.

use crate::grid::{Boundary, Domain, GridWavefunction};
use crate::modes::ModeWavefunction;
use crate::{Error, Result};
use num_complex::Complex64;

/// Relative node threshold: a configuration with
/// `|Ψ|² < NODE_FACTOR × (mean density)` counts as a node.
pub const NODE_FACTOR: f64 = 1e-12;

/// A pilot wave that can be evaluated (with gradient) anywhere in its domain.
pub trait WaveField: Sync {
    fn dim(&self) -> usize;
    fn masses(&self) -> [f64; 2];
    fn domain(&self) -> Domain;
    /// Ψ and ∇Ψ at configuration `x`, time `t`.
    fn psi_and_grad(&self, x: [f64; 2], t: f64) -> Result<(Complex64, [Complex64; 2])>;

    fn density(&self, x: [f64; 2], t: f64) -> Result<f64> {
        Ok(self.psi_and_grad(x, t)?.0.norm_sqr())
    }
}

impl WaveField for ModeWavefunction {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn masses(&self) -> [f64; 2] {
        self.masses()
    }

    fn domain(&self) -> Domain {
        self.domain()
    }

    fn psi_and_grad(&self, x: [f64; 2], t: f64) -> Result<(Complex64, [Complex64; 2])> {
        Ok(self.value_and_gradient(x, t))
    }
}

/// Guidance velocity `v_i = Im(∂_iΨ/Ψ)/m_i` at `(x, t)`.
///
/// Errors with [`Error::Node`] when `|Ψ(x)|²` is below the node threshold.
pub fn velocity(field: &dyn WaveField, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
    let (value, grad) = field.psi_and_grad(x, t)?;
    let density = value.norm_sqr();
    let mean = 1.0 / field.domain().volume();
    if density < NODE_FACTOR * mean {
        return Err(Error::Node { t, density });
    }
    let masses = field.masses();
    let mut v = [0.0; 2];
    for a in 0..field.dim() {
        v[a] = (value.conj() * grad[a]).im / (density * masses[a]);
    }
    Ok(v)
}

/// Uniformly spaced snapshots of a grid evolution, presented as a smooth
/// field via 4-point (cubic) Lagrange interpolation in time and per axis.
#[derive(Debug, Clone)]
pub struct GridHistory {
    snapshots: Vec<GridWavefunction>,
    t0: f64,
    snap_dt: f64,
}

impl GridHistory {
    /// Evolves `initial` for `snapshots × steps_per_snapshot` steps of `dt`,
    /// storing one snapshot per `steps_per_snapshot` steps.
    pub fn evolve(
        initial: &GridWavefunction,
        dt: f64,
        steps_per_snapshot: usize,
        snapshots: usize,
    ) -> Result<Self> {
        if steps_per_snapshot == 0 || snapshots < 3 {
            return Err(Error::InvalidInput(
                "history needs ≥ 1 step per snapshot and ≥ 3 snapshots".into(),
            ));
        }
        let mut stored = Vec::with_capacity(snapshots + 1);
        stored.push(initial.clone());
        let mut current = initial.clone();
        for _ in 0..snapshots {
            current.evolve_in_place(dt, steps_per_snapshot)?;
            stored.push(current.clone());
        }
        Ok(Self {
            snapshots: stored,
            t0: initial.time(),
            snap_dt: dt * steps_per_snapshot as f64,
        })
    }

    pub fn time_span(&self) -> (f64, f64) {
        (
            self.t0,
            self.t0 + self.snap_dt * (self.snapshots.len() - 1) as f64,
        )
    }

    pub fn initial(&self) -> &GridWavefunction {
        &self.snapshots[0]
    }

    pub fn snapshot(&self, k: usize) -> &GridWavefunction {
        &self.snapshots[k]
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    /// Catmull–Rom interpolation of the complex field: cubic across the
    /// snapshot times, then cubic per spatial axis. The spline is C¹ in
    /// every coordinate, which the adaptive trajectory integrator needs —
    /// a merely piecewise-polynomial fit with value jumps at stencil
    /// switches starves its step controller near grid lines.
    fn interpolate(&self, x: [f64; 2], t: f64) -> Result<(Complex64, [Complex64; 2])> {
        let (lo_t, hi_t) = self.time_span();
        let eps = 1e-9 * self.snap_dt;
        if t < lo_t - eps || t > hi_t + eps {
            return Err(Error::InvalidInput(format!(
                "time {t} outside stored history [{lo_t}, {hi_t}]"
            )));
        }
        let nk = self.snapshots.len() as isize;
        let s_raw = ((t - self.t0) / self.snap_dt).clamp(0.0, (nk - 1) as f64);
        let kt = (s_raw.floor() as isize).min(nk - 2);
        let (tw, _) = catmull_rom(s_raw - kt as f64);
        // End snapshots repeat, giving one-sided tangents at the ends.
        let snap = |k: isize| &self.snapshots[k.clamp(0, nk - 1) as usize];

        let wf0 = &self.snapshots[0];
        let dim = wf0.dim();
        let h = [wf0.spacing(0), if dim == 2 { wf0.spacing(1) } else { 1.0 }];
        let dom = wf0.domain();

        // Per-axis stencil base node and local coordinate ∈ [0,1).
        let mut base = [0isize; 2];
        let mut xi = [0.0f64; 2];
        for a in 0..dim {
            let u = match wf0.boundary() {
                Boundary::HardWall => (x[a] - dom.axes[a].lo) / h[a] - 1.0,
                Boundary::Periodic => (x[a] - dom.axes[a].lo) / h[a],
            };
            let i = u.floor();
            base[a] = i as isize - 1;
            xi[a] = u - i;
        }

        // Gather the spatial patch, blended across time first.
        let mut patch = [[Complex64::default(); 4]; 4];
        let ny = if dim == 2 { 4 } else { 1 };
        for ix in 0..4 {
            for iy in 0..ny {
                let gi = [base[0] + ix as isize, base[1] + iy as isize];
                let mut v = Complex64::default();
                for (kk, w) in tw.iter().enumerate() {
                    if *w != 0.0 {
                        v += *w * snap(kt - 1 + kk as isize).padded(gi);
                    }
                }
                patch[ix][iy] = v;
            }
        }

        let (wx, dwx) = catmull_rom(xi[0]);
        if dim == 1 {
            let mut value = Complex64::default();
            let mut grad = Complex64::default();
            for i in 0..4 {
                value += wx[i] * patch[i][0];
                grad += dwx[i] * patch[i][0];
            }
            return Ok((value, [grad / h[0], Complex64::default()]));
        }

        let (wy, dwy) = catmull_rom(xi[1]);
        let mut value = Complex64::default();
        let mut gx = Complex64::default();
        let mut gy = Complex64::default();
        for i in 0..4 {
            let mut row = Complex64::default();
            let mut drow = Complex64::default();
            for j in 0..4 {
                row += wy[j] * patch[i][j];
                drow += dwy[j] * patch[i][j];
            }
            value += wx[i] * row;
            gx += dwx[i] * row;
            gy += wx[i] * drow;
        }
        Ok((value, [gx / h[0], gy / h[1]]))
    }
}

impl WaveField for GridHistory {
    fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    fn masses(&self) -> [f64; 2] {
        self.snapshots[0].masses()
    }

    fn domain(&self) -> Domain {
        self.snapshots[0].domain()
    }

    fn psi_and_grad(&self, x: [f64; 2], t: f64) -> Result<(Complex64, [Complex64; 2])> {
        self.interpolate(x, t)
    }
}

/// Catmull–Rom weights (and their derivatives) on the 4-node stencil
/// `{−1, 0, 1, 2}` at local coordinate `s ∈ [0, 1]` of the middle interval.
fn catmull_rom(s: f64) -> ([f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let w = [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ];
    let dw = [
        0.5 * (-3.0 * s2 + 4.0 * s - 1.0),
        0.5 * (9.0 * s2 - 10.0 * s),
        0.5 * (-9.0 * s2 + 8.0 * s + 1.0),
        0.5 * (3.0 * s2 - 2.0 * s),
    ];
    (w, dw)
}

/// Where and why a trajectory stopped early.
#[derive(Debug, Clone, Copy)]
pub struct StallInfo {
    pub t: f64,
    pub step: f64,
    pub density: f64,
}

/// Integrator counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectoryStats {
    pub steps: usize,
    pub rejections: usize,
    pub min_density: f64,
}

/// An integrated path: ordered `(t, X)` samples plus diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, [f64; 2])>,
    pub stats: TrajectoryStats,
    /// Present when integration stalled at a node before reaching the end.
    pub stall: Option<StallInfo>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.stall.is_none()
    }

    pub fn require_complete(&self) -> Result<()> {
        match &self.stall {
            None => Ok(()),
            Some(info) => Err(Error::NodeStall {
                t: info.t,
                step: info.step,
            }),
        }
    }

    pub fn final_position(&self) -> [f64; 2] {
        self.samples.last().unwrap().1
    }
}

// Dormand–Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    field: &'a dyn WaveField,
    tol: f64,
    min_step: f64,
    max_step: f64,
    stats: TrajectoryStats,
}

enum StepOutcome {
    Accepted { x: [f64; 2], dt_next: f64 },
    Rejected { dt_next: f64 },
    Node { density: f64 },
}

impl<'a> Stepper<'a> {
    fn try_step(&mut self, t: f64, x: [f64; 2], dt: f64) -> Result<StepOutcome> {
        let mut k = [[0.0f64; 2]; 7];
        let dim = self.field.dim();
        for stage in 0..7 {
            let mut xs = x;
            if stage > 0 {
                for a in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(stage) {
                        acc += A[stage - 1][j] * kj[a];
                    }
                    xs[a] += dt * acc;
                }
            }
            match velocity(self.field, xs, t + C[stage] * dt) {
                Ok(v) => k[stage] = v,
                Err(Error::Node { density, .. }) => {
                    return Ok(StepOutcome::Node { density });
                }
                Err(e) => return Err(e),
            }
        }
        let mut x5 = x;
        let mut err = 0.0f64;
        for a in 0..dim {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for j in 0..7 {
                s5 += B5[j] * k[j][a];
                s4 += B4[j] * k[j][a];
            }
            x5[a] += dt * s5;
            err = err.max((dt * (s5 - s4)).abs());
        }
        // Local error per unit time.
        let budget = self.tol * dt.abs();
        if err <= budget {
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * (budget / err).powf(0.2)).clamp(0.2, 5.0)
            };
            Ok(StepOutcome::Accepted {
                x: x5,
                dt_next: (dt.abs() * grow).min(self.max_step),
            })
        } else {
            self.stats.rejections += 1;
            let shrink = (0.9 * (budget / err).powf(0.2)).clamp(0.1, 0.9);
            Ok(StepOutcome::Rejected {
                dt_next: dt.abs() * shrink,
            })
        }
    }

    /// Integrates from `(t0, x0)` to `t1`, recording at accepted steps when
    /// `record` is set. Returns the endpoint or stall information.
    fn run(
        &mut self,
        t0: f64,
        x0: [f64; 2],
        t1: f64,
        dt_hint: f64,
        samples: Option<&mut Vec<(f64, [f64; 2])>>,
    ) -> Result<(f64, [f64; 2], Option<StallInfo>, f64)> {
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();
        let mut t = t0;
        let mut x = x0;
        let mut dt = dt_hint.clamp(self.min_step, self.max_step).min(span.max(self.min_step));
        let mut recorder = samples;
        const MAX_STEPS: usize = 50_000_000;
        while (t1 - t) * dir > 1e-14 * span.max(1.0) {
            let step = dt.min((t1 - t).abs());
            match self.try_step(t, x, dir * step)? {
                StepOutcome::Accepted { x: x_new, dt_next } => {
                    t += dir * step;
                    x = x_new;
                    dt = dt_next.max(self.min_step);
                    self.stats.steps += 1;
                    if let Some(rec) = recorder.as_mut() {
                        rec.push((t, x));
                    }
                }
                StepOutcome::Rejected { dt_next } => {
                    if dt_next < self.min_step {
                        return Ok((
                            t,
                            x,
                            Some(StallInfo {
                                t,
                                step: dt_next,
                                density: f64::NAN,
                            }),
                            dt,
                        ));
                    }
                    dt = dt_next;
                }
                StepOutcome::Node { density } => {
                    self.stats.min_density = if self.stats.min_density == 0.0 {
                        density
                    } else {
                        self.stats.min_density.min(density)
                    };
                    let dt_next = 0.5 * step;
                    if dt_next < self.min_step {
                        return Ok((
                            t,
                            x,
                            Some(StallInfo {
                                t,
                                step: dt_next,
                                density,
                            }),
                            dt,
                        ));
                    }
                    self.stats.rejections += 1;
                    dt = dt_next;
                }
            }
            if self.stats.steps + self.stats.rejections > MAX_STEPS {
                return Err(Error::InvalidInput(
                    "trajectory exceeded the step budget; tolerance too tight?".into(),
                ));
            }
        }
        Ok((t, x, None, dt))
    }
}

fn make_stepper<'a>(field: &'a dyn WaveField, t0: f64, t1: f64, tol: f64) -> Result<Stepper<'a>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if t0 == t1 {
        return Err(Error::InvalidInput("integration needs t1 ≠ t0".into()));
    }
    let span = (t1 - t0).abs();
    Ok(Stepper {
        field,
        tol,
        min_step: span * 1e-12,
        max_step: span,
        stats: TrajectoryStats::default(),
    })
}

/// Integrates the guidance equation from `x0` over `[t0, t1]`, recording
/// every accepted step. A stall near a node yields a partial trajectory
/// carrying [`StallInfo`] rather than an error.
pub fn integrate_trajectory(
    field: &dyn WaveField,
    x0: [f64; 2],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory> {
    if !field.domain().contains(x0) {
        return Err(Error::InvalidInput(format!("start {x0:?} outside the domain")));
    }
    let mut stepper = make_stepper(field, t0, t1, tol)?;
    let mut samples = vec![(t0, x0)];
    let span = (t1 - t0).abs();
    let (_, _, stall, _) = stepper.run(t0, x0, t1, span * 1e-3, Some(&mut samples))?;
    Ok(Trajectory {
        samples,
        stats: stepper.stats,
        stall,
    })
}

/// Advances a single point from `t0` to `t1` without recording the path.
pub fn advance(
    field: &dyn WaveField,
    x0: [f64; 2],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<([f64; 2], TrajectoryStats, Option<StallInfo>)> {
    let mut stepper = make_stepper(field, t0, t1, tol)?;
    let span = (t1 - t0).abs();
    let (_, x, stall, _) = stepper.run(t0, x0, t1, span * 1e-3, None)?;
    Ok((x, stepper.stats, stall))
}

/// Integrates from `x0` at `times[0]` through every time in `times`,
/// returning the position at each. Stalled points freeze at their last
/// reached position.
pub fn integrate_through(
    field: &dyn WaveField,
    x0: [f64; 2],
    times: &[f64],
    tol: f64,
) -> Result<(Vec<[f64; 2]>, TrajectoryStats, Option<StallInfo>)> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("need at least start and end times".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("record times must be strictly increasing".into()));
    }
    let mut stepper = make_stepper(field, times[0], *times.last().unwrap(), tol)?;
    let mut positions = Vec::with_capacity(times.len());
    positions.push(x0);
    let mut x = x0;
    let span = times.last().unwrap() - times[0];
    let mut dt = span * 1e-3;
    for w in times.windows(2) {
        let (_, x_end, stall, dt_out) = stepper.run(w[0], x, w[1], dt, None)?;
        x = x_end;
        dt = dt_out;
        if stall.is_some() {
            // Freeze the stalled point for the remaining times.
            while positions.len() < times.len() {
                positions.push(x);
            }
            return Ok((positions, stepper.stats, stall));
        }
        positions.push(x);
    }
    Ok((positions, stepper.stats, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_mode() -> ModeWavefunction {
        ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[
                ([1, 1], Complex64::new(1.0, 0.0)),
                ([2, 1], Complex64::new(0.0, 1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ground_state_velocity_is_zero() {
        let wf = ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[([1, 1], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        let v = velocity(&wf, [1.2, 0.7], 0.3).unwrap();
        assert!(v[0].abs() < 1e-13 && v[1].abs() < 1e-13);
    }

    #[test]
    fn stationary_state_trajectory_stays_put() {
        let wf = ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[([1, 1], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        let traj = integrate_trajectory(&wf, [1.0, 2.0], 0.0, 3.0, 1e-9).unwrap();
        assert!(traj.is_complete());
        let end = traj.final_position();
        assert!((end[0] - 1.0).abs() < 1e-9 && (end[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn velocity_errors_on_node() {
        let wf = ModeWavefunction::new(
            Domain::line(0.0, PI),
            [1.0, 1.0],
            &[([2, 1], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        assert!(matches!(
            velocity(&wf, [PI / 2.0, 0.0], 0.0),
            Err(Error::Node { .. })
        ));
    }

    #[test]
    fn plane_wave_advects_at_k_over_m() {
        // Periodic free mode k: constant drift velocity k/m.
        let nodes = 256;
        let k = 2.0;
        let mass = 1.5;
        let wf = GridWavefunction::from_fn(
            Domain::line(0.0, 2.0 * PI),
            [nodes, 1],
            Boundary::Periodic,
            [mass, 1.0],
            |p| Complex64::from_polar(1.0, k * p[0]),
            |_| 0.0,
        )
        .unwrap();
        let hist = GridHistory::evolve(&wf, 5e-4, 20, 60).unwrap();

        let v = velocity(&hist, [2.0, 0.0], 0.21).unwrap();
        assert!(
            (v[0] - k / mass).abs() < 1e-3,
            "velocity {} vs {}",
            v[0],
            k / mass
        );

        let (span0, span1) = hist.time_span();
        let traj = integrate_trajectory(&hist, [1.0, 0.0], span0, span1 * 0.9, 1e-8).unwrap();
        traj.require_complete().unwrap();
        let expect = 1.0 + k / mass * (span1 * 0.9 - span0);
        assert!(
            (traj.final_position()[0] - expect).abs() < 1e-3,
            "end {} vs {expect}",
            traj.final_position()[0]
        );
    }

    #[test]
    fn real_gaussian_grid_velocity_is_zero() {
        let wf = GridWavefunction::from_fn(
            Domain::line(-8.0, 8.0),
            [128, 1],
            Boundary::HardWall,
            [1.0, 1.0],
            |p| Complex64::new((-0.5 * p[0] * p[0]).exp(), 0.0),
            |p| 0.5 * p[0] * p[0],
        )
        .unwrap();
        let hist = GridHistory::evolve(&wf, 1e-3, 10, 10).unwrap();
        // At t = 0 the state is real: J ≡ 0.
        let v = velocity(&hist, [0.83, 0.0], 0.0).unwrap();
        assert!(v[0].abs() < 1e-12);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let wf = two_mode();
        let x0 = [1.1, 1.9];
        let tol = 1e-8;
        let fwd = integrate_trajectory(&wf, x0, 0.0, 2.0, tol).unwrap();
        fwd.require_complete().unwrap();
        let back = integrate_trajectory(&wf, fwd.final_position(), 2.0, 0.0, tol).unwrap();
        back.require_complete().unwrap();
        let end = back.final_position();
        let err = ((end[0] - x0[0]).powi(2) + (end[1] - x0[1]).powi(2)).sqrt();
        assert!(err < 10.0 * tol * 4.0_f64.max(1.0), "round trip error {err}");
    }

    #[test]
    fn tolerance_controls_self_convergence() {
        let wf = two_mode();
        let x0 = [0.9, 2.1];
        let reference = integrate_trajectory(&wf, x0, 0.0, 3.0, 1e-11)
            .unwrap()
            .final_position();
        let err_at = |tol: f64| {
            let p = integrate_trajectory(&wf, x0, 0.0, 3.0, tol)
                .unwrap()
                .final_position();
            ((p[0] - reference[0]).powi(2) + (p[1] - reference[1]).powi(2)).sqrt()
        };
        let (e4, e6, e8) = (err_at(1e-4), err_at(1e-6), err_at(1e-8));
        assert!(e6 < e4 / 10.0, "e4 {e4}, e6 {e6}");
        assert!(e8 < e6 / 10.0, "e6 {e6}, e8 {e8}");
    }

    #[test]
    fn trajectories_never_cross() {
        let wf = two_mode();
        let tol = 1e-9;
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let starts: Vec<[f64; 2]> = (0..12)
            .map(|i| [0.4 + 0.2 * i as f64 % 2.4, 0.5 + 0.19 * i as f64 % 2.2])
            .collect();
        let paths: Vec<Vec<[f64; 2]>> = starts
            .iter()
            .map(|&x0| integrate_through(&wf, x0, &times, tol).unwrap().0)
            .collect();
        let mut min_sep = f64::INFINITY;
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                for k in 0..times.len() {
                    let d = ((paths[i][k][0] - paths[j][k][0]).powi(2)
                        + (paths[i][k][1] - paths[j][k][1]).powi(2))
                    .sqrt();
                    min_sep = min_sep.min(d);
                }
            }
        }
        assert!(min_sep > 1e-4, "trajectories nearly crossed: {min_sep}");
    }

    #[test]
    fn integrate_through_matches_single_span() {
        let wf = two_mode();
        let x0 = [1.3, 1.0];
        let (positions, _, stall) =
            integrate_through(&wf, x0, &[0.0, 0.7, 1.4, 2.0], 1e-9).unwrap();
        assert!(stall.is_none());
        let direct = integrate_trajectory(&wf, x0, 0.0, 2.0, 1e-9).unwrap();
        let end = direct.final_position();
        let last = positions.last().unwrap();
        let err = ((end[0] - last[0]).powi(2) + (end[1] - last[1]).powi(2)).sqrt();
        assert!(err < 1e-7, "segmented vs direct differ by {err}");
    }

    #[test]
    fn grid_density_tracks_modes_at_second_order() {
        // The same two-mode state evolved on the grid and spectrally:
        // node densities agree to O(h²), quartering per refinement.
        let wf = two_mode();
        let t = 0.5;
        let max_err = |nodes: usize| {
            let grid = wf.to_grid([nodes, nodes]).unwrap();
            let evolved = grid.evolve(1e-3, 500).unwrap();
            let mut worst = 0.0f64;
            for ix in 0..nodes {
                for iy in 0..nodes {
                    let p = evolved.node_position([ix, iy]);
                    worst = worst.max((evolved.density_at([ix, iy]) - wf.density(p, t)).abs());
                }
            }
            worst
        };
        let (e48, e96, e192) = (max_err(48), max_err(96), max_err(192));
        assert!(e48 / e96 > 3.0 && e48 / e96 < 5.0, "ratio {}", e48 / e96);
        assert!(e96 / e192 > 3.0 && e96 / e192 < 5.0, "ratio {}", e96 / e192);
    }

    #[test]
    fn grid_history_guides_like_modes_at_short_horizon() {
        // Velocity fields agree to O(h²)-ish, so short trajectories stay
        // close; over long horizons near-node passages amplify any gap.
        let wf = two_mode();
        let grid = wf.to_grid([96, 96]).unwrap();
        let hist = GridHistory::evolve(&grid, 2e-3, 10, 20).unwrap();
        let t1 = 0.25;
        for &x0 in &[[1.2, 1.7], [2.1, 0.9], [0.8, 2.3]] {
            let exact = integrate_trajectory(&wf, x0, 0.0, t1, 1e-10)
                .unwrap()
                .final_position();
            let numeric = integrate_trajectory(&hist, x0, 0.0, t1, 1e-8)
                .unwrap()
                .final_position();
            let err = ((exact[0] - numeric[0]).powi(2) + (exact[1] - numeric[1]).powi(2)).sqrt();
            assert!(err < 2e-3, "endpoint from {x0:?} off by {err}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let wf = two_mode();
        assert!(integrate_trajectory(&wf, [9.0, 0.5], 0.0, 1.0, 1e-8).is_err());
        assert!(integrate_trajectory(&wf, [1.0, 1.0], 0.0, 1.0, -1.0).is_err());
        assert!(integrate_trajectory(&wf, [1.0, 1.0], 1.0, 1.0, 1e-8).is_err());
    }
}
