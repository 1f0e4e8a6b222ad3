//! Ensembles of configurations, their transport along trajectories, and the
//! coarse-grained H-function quantifying relaxation toward `|Ψ|²`.
//!
//! An ensemble is a cloud of sample points standing in for `P(X,t)`.
//! Transport moves every point along its guidance trajectory, realizing the
//! continuity equation. Comparisons against `|Ψ|²` run on a coarse-graining
//! into equal cells: the histogram L1 distance with a multinomial noise
//! envelope, and `H̄ = Σ P̄ ln(P̄/q̄)`, which is non-negative and vanishes
//! exactly when the coarse-grained densities coincide.

use crate::grid::Domain;
use crate::guidance::{self, WaveField};
use crate::mc::{ordered_map, run_partitioned};
use crate::{Error, Result};
use rand::Rng;

/// Minimum points for statistically meaningful histogram work.
pub const MIN_STAT_POINTS: usize = 1000;

/// A cloud of configuration points representing `P(X, t)`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    domain: Domain,
    points: Vec<[f64; 2]>,
    /// Seed the cloud was generated from (provenance only).
    pub seed: u64,
}

impl Ensemble {
    pub fn new(domain: Domain, points: Vec<[f64; 2]>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("ensemble needs at least one point".into()));
        }
        if let Some(p) = points.iter().find(|p| !domain.contains(**p)) {
            return Err(Error::InvalidInput(format!("point {p:?} outside the domain")));
        }
        Ok(Self {
            domain,
            points,
            seed,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points from an arbitrary bounded density by rejection against
/// the uniform envelope `bound` on `domain`.
pub fn sample_density<F>(
    density: F,
    domain: Domain,
    bound: f64,
    n: usize,
    seed: u64,
) -> Result<Ensemble>
where
    F: Fn([f64; 2]) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::InvalidInput("cannot sample zero points".into()));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidInput("density bound must be positive".into()));
    }
    let dim = domain.dim;
    let parts = run_partitioned(seed, n, |rng, count| -> Result<Vec<[f64; 2]>> {
        let mut pts = Vec::with_capacity(count);
        let mut proposals: u64 = 0;
        while pts.len() < count {
            proposals += 1;
            if proposals > 20_000 && (pts.len() as u64) * 10_000 < proposals {
                return Err(Error::LowAcceptance {
                    rate: pts.len() as f64 / proposals as f64,
                });
            }
            let mut x = [0.0; 2];
            for a in 0..dim {
                x[a] = domain.axes[a].lo + rng.gen::<f64>() * domain.axes[a].len();
            }
            let d = density(x);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "density must be finite and non-negative, got {d} at {x:?}"
                )));
            }
            if d > bound * (1.0 + 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "density {d} exceeds the envelope bound {bound} at {x:?}"
                )));
            }
            if rng.gen::<f64>() * bound < d {
                pts.push(x);
            }
        }
        Ok(pts)
    });
    let mut points = Vec::with_capacity(n);
    for part in parts {
        points.extend(part?);
    }
    Ensemble::new(domain, points, seed)
}

/// Draws `n` points from `|Ψ(·, t)|²`. The envelope is found by a grid scan
/// with headroom; an undershoot is caught during sampling.
pub fn sample_born(field: &dyn WaveField, t: f64, n: usize, seed: u64) -> Result<Ensemble> {
    let domain = field.domain();
    let scan = if domain.dim == 1 { [4096, 1] } else { [512, 512] };
    let mut peak = 0.0f64;
    for i in 0..scan[0] {
        for j in 0..scan[1] {
            let x = [
                domain.axes[0].lo + (i as f64 + 0.5) / scan[0] as f64 * domain.axes[0].len(),
                domain.axes[1].lo + (j as f64 + 0.5) / scan[1] as f64 * domain.axes[1].len(),
            ];
            peak = peak.max(field.density(x, t)?);
        }
    }
    sample_density(
        |x| field.density(x, t).unwrap_or(0.0),
        domain,
        peak * 1.05,
        n,
        seed,
    )
}

/// Uniform tiling of a domain into equal cells.
#[derive(Debug, Clone, Copy)]
pub struct CoarseGraining {
    domain: Domain,
    cells: [usize; 2],
}

impl CoarseGraining {
    pub fn new(domain: Domain, cells_per_axis: [usize; 2]) -> Result<Self> {
        let mut cells = cells_per_axis;
        if domain.dim == 1 {
            cells[1] = 1;
        }
        for a in 0..domain.dim {
            if cells[a] == 0 {
                return Err(Error::InvalidInput("need at least one cell per axis".into()));
            }
        }
        Ok(Self { domain, cells })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Cell edge length along `axis`.
    pub fn edge(&self, axis: usize) -> f64 {
        self.domain.axes[axis].len() / self.cells[axis] as f64
    }

    /// Flat index of the cell containing `x` (boundary points clamp inward).
    pub fn cell_index(&self, x: [f64; 2]) -> usize {
        let mut idx = [0usize; 2];
        for a in 0..self.domain.dim {
            let f = (x[a] - self.domain.axes[a].lo) / self.edge(a);
            idx[a] = (f.floor() as isize).clamp(0, self.cells[a] as isize - 1) as usize;
        }
        idx[0] * self.cells[1] + idx[1]
    }

    /// Lower and upper corners of a cell by flat index.
    pub fn cell_bounds(&self, flat: usize) -> ([f64; 2], [f64; 2]) {
        let ix = flat / self.cells[1];
        let iy = flat % self.cells[1];
        let lo = [
            self.domain.axes[0].lo + ix as f64 * self.edge(0),
            self.domain.axes[1].lo
                + if self.domain.dim == 2 {
                    iy as f64 * self.edge(1)
                } else {
                    0.0
                },
        ];
        let hi = [
            lo[0] + self.edge(0),
            if self.domain.dim == 2 {
                lo[1] + self.edge(1)
            } else {
                self.domain.axes[1].hi
            },
        ];
        (lo, hi)
    }
}

/// Per-cell probability masses on a coarse graining.
#[derive(Debug, Clone)]
pub struct DensityHistogram {
    masses: Vec<f64>,
}

impl DensityHistogram {
    /// Bins an ensemble. Requires enough points to be statistically usable.
    pub fn from_ensemble(e: &Ensemble, cg: &CoarseGraining) -> Result<Self> {
        if e.len() < MIN_STAT_POINTS {
            return Err(Error::InvalidInput(format!(
                "histogram statistics need ≥ {MIN_STAT_POINTS} points, got {}",
                e.len()
            )));
        }
        let mut counts = vec![0u64; cg.cell_count()];
        for p in e.points() {
            counts[cg.cell_index(*p)] += 1;
        }
        let n = e.len() as f64;
        Ok(Self {
            masses: counts.iter().map(|c| *c as f64 / n).collect(),
        })
    }

    /// Wraps precomputed cell masses (e.g. exact `|Ψ|²` integrals).
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|m| *m < -1e-12) {
            return Err(Error::InvalidInput("cell masses must be non-negative".into()));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "cell masses sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            masses: masses.iter().map(|m| m.max(0.0) / total).collect(),
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// `Σ_cells |p − q|`.
pub fn l1_distance(p: &DensityHistogram, q: &DensityHistogram) -> f64 {
    p.masses
        .iter()
        .zip(q.masses.iter())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Expected multinomial L1 fluctuation plus `z` standard deviations:
/// per cell `|p̂−q|` has mean `√(2q(1−q)/πn)` and variance
/// `q(1−q)(1−2/π)/n` in the normal approximation (cells treated as
/// independent, a slight overestimate).
pub fn multinomial_l1_envelope(q: &[f64], n: usize, z: f64) -> f64 {
    let nf = n as f64;
    let mut mean = 0.0;
    let mut var = 0.0;
    for &qc in q {
        let s2 = qc * (1.0 - qc) / nf;
        mean += (2.0 * s2 / std::f64::consts::PI).sqrt();
        var += s2 * (1.0 - 2.0 / std::f64::consts::PI);
    }
    mean + z * var.sqrt()
}

/// Coarse-grained relative entropy `H̄ = Σ P̄ ln(P̄/q̄)` of the ensemble
/// histogram `p` against the `|Ψ|²` histogram `q`.
///
/// Cells with `P̄ = 0` contribute nothing; a cell with ensemble mass but no
/// `|Ψ|²` mass is an error naming the cell. Non-negative by the Gibbs
/// inequality; tiny negative rounding is clamped to zero.
pub fn h_function(p: &DensityHistogram, q: &DensityHistogram) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "histogram sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut h = 0.0;
    for (cell, (&pc, &qc)) in p.masses.iter().zip(q.masses.iter()).enumerate() {
        if pc <= 0.0 {
            continue;
        }
        if qc <= 0.0 {
            return Err(Error::EmptySupport { cell });
        }
        h += pc * (pc / qc).ln();
    }
    if h < 0.0 {
        if h < -1e-9 {
            return Err(Error::InvariantFailed(format!(
                "H-function evaluated to {h}, below the Gibbs bound"
            )));
        }
        h = 0.0;
    }
    Ok(h)
}

/// Transport diagnostics for an ensemble evolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveReport {
    pub stalled: usize,
    pub total: usize,
    pub steps: u64,
    pub rejections: u64,
}

/// Maximum tolerated fraction of node-stalled points.
pub const MAX_STALL_FRACTION: f64 = 1e-3;

/// Advances every point along its guidance trajectory from `t0` to `t1`.
/// Stalled points keep their last reached position and are counted; more
/// than 0.1% of them is an error.
pub fn evolve_ensemble(
    e: &Ensemble,
    field: &dyn WaveField,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<(Ensemble, EvolveReport)> {
    let (series, report) = evolve_ensemble_through(e, field, &[t0, t1], tol)?;
    Ok((series.into_iter().next_back().unwrap(), report))
}

/// Advances every point through each time in `times` (strictly increasing),
/// returning one ensemble per time (the first is the input itself).
pub fn evolve_ensemble_through(
    e: &Ensemble,
    field: &dyn WaveField,
    times: &[f64],
    tol: f64,
) -> Result<(Vec<Ensemble>, EvolveReport)> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("need at least start and end times".into()));
    }
    let n = e.len();
    let results = ordered_map(e.points().to_vec(), |x0| {
        guidance::integrate_through(field, x0, times, tol)
    });
    let mut report = EvolveReport {
        total: n,
        ..Default::default()
    };
    let mut per_time: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(n); times.len()];
    for r in results {
        let (positions, stats, stall) = r?;
        report.steps += stats.steps as u64;
        report.rejections += stats.rejections as u64;
        if stall.is_some() {
            report.stalled += 1;
        }
        for (k, p) in positions.into_iter().enumerate() {
            per_time[k].push(p);
        }
    }
    if report.stalled as f64 > MAX_STALL_FRACTION * n as f64 {
        return Err(Error::TooManyStalls {
            stalled: report.stalled,
            total: n,
            limit_percent: MAX_STALL_FRACTION * 100.0,
        });
    }
    let domain = e.domain();
    let ensembles = per_time
        .into_iter()
        .map(|pts| {
            let clamped = pts.into_iter().map(|p| domain.clamp(p)).collect();
            Ensemble::new(domain, clamped, e.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ensembles, report))
}

/// Pearson chi-square statistic of binned counts against expected masses,
/// with the 1% critical value (Wilson–Hilferty approximation). Cells are
/// pooled left-to-right until each pool expects ≥ 5 counts.
pub fn chi_square_gof(counts: &[u64], expected_masses: &[f64], n: usize) -> (f64, f64, bool) {
    let nf = n as f64;
    let mut stat = 0.0;
    let mut dof = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    for (c, m) in counts.iter().zip(expected_masses.iter()) {
        pooled_obs += *c as f64;
        pooled_exp += m * nf;
        if pooled_exp >= 5.0 {
            let d = pooled_obs - pooled_exp;
            stat += d * d / pooled_exp;
            dof += 1;
            pooled_obs = 0.0;
            pooled_exp = 0.0;
        }
    }
    if pooled_exp > 0.0 && dof > 0 {
        let d = pooled_obs - pooled_exp;
        stat += d * d / pooled_exp;
    }
    let k = dof.saturating_sub(1).max(1) as f64;
    let z01 = 2.3263478740408408; // Φ⁻¹(0.99)
    let crit = k * (1.0 - 2.0 / (9.0 * k) + z01 * (2.0 / (9.0 * k)).sqrt()).powi(3);
    (stat, crit, stat < crit)
}
