//! Deterministic hidden-variable model for a pair of 2-state systems.
//!
//! Outcomes are a pure function of the two measurement settings and a hidden
//! point `λ = (u, w)` on the unit square. The concrete mapping:
//!
//! * `σ_A = +1` if `u < 1/2`, else `−1`;
//! * `θ = (1 + m_A·m_B)/2`, `σ_B = −σ_A` if `w < θ`, else `+σ_A`.
//!
//! Under the uniform (equilibrium) measure this reproduces the singlet
//! correlation `⟨σ_A σ_B⟩ = −m_A·m_B` with 1:1 outcome ratios at each wing.
//! The nonlocal dependence sits on wing B: its outcome thresholds against a
//! θ that involves the remote setting `m_A`. Non-uniform measures over
//! `(u, w)` unbalance the transition sets and open a statistical signal
//! channel from A to B.

use crate::mc::{partition_rng, run_partitioned, Accumulator, PARTITION};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// A measurement axis: a unit vector on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSetting {
    m: [f64; 3],
}

impl BlochSetting {
    /// Normalizes the given direction. Rejects the zero vector.
    pub fn new(direction: [f64; 3]) -> Result<Self> {
        let n = norm(direction);
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "Bloch setting must be a nonzero finite vector, got {direction:?}"
            )));
        }
        Ok(Self {
            m: [direction[0] / n, direction[1] / n, direction[2] / n],
        })
    }

    /// Unit setting in the x-z plane at angle `phi` from the z axis.
    pub fn from_angle(phi: f64) -> Self {
        Self {
            m: [phi.sin(), 0.0, phi.cos()],
        }
    }

    pub fn vector(&self) -> [f64; 3] {
        self.m
    }

    pub fn dot(&self, other: &BlochSetting) -> f64 {
        dot(self.m, other.m)
    }
}

/// Mean polarisation vector, `0 ≤ ‖P‖ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarization {
    p: [f64; 3],
}

impl Polarization {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        let n = norm(p);
        if !n.is_finite() || n > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "polarization must satisfy ‖P‖ ≤ 1, got ‖P‖ = {n}"
            )));
        }
        Ok(Self { p })
    }

    pub fn vector(&self) -> [f64; 3] {
        self.p
    }
}

/// A hidden-variable point `λ = (u, w)` on `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HVSample {
    pub u: f64,
    pub w: f64,
}

impl HVSample {
    pub fn new(u: f64, w: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&w) {
            return Err(Error::InvalidInput(format!(
                "hidden-variable coordinates must lie in [0,1), got ({u}, {w})"
            )));
        }
        Ok(Self { u, w })
    }
}

/// Which wing of the pair an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wing {
    A,
    B,
}

/// Piecewise-constant probability density on `[0,1)` over equal-width cells.
///
/// Normalized on construction; sampling inverts the exact CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    /// Density value on each cell (integrates to 1).
    values: Vec<f64>,
}

impl PiecewiseDensity {
    /// Builds the density from non-negative relative weights per cell.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("piecewise density needs ≥ 1 cell".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "piecewise density weights must be non-negative and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("piecewise density must have positive mass".into()));
        }
        let k = weights.len() as f64;
        Ok(Self {
            values: weights.iter().map(|w| w * k / total).collect(),
        })
    }

    pub fn uniform() -> Self {
        Self { values: vec![1.0] }
    }

    pub fn density(&self, x: f64) -> f64 {
        let k = self.values.len();
        let cell = ((x * k as f64) as usize).min(k - 1);
        self.values[cell]
    }

    /// Exact probability mass of the interval `[a, b)` (clamped to `[0,1)`).
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        let k = self.values.len();
        let h = 1.0 / k as f64;
        let mut mass = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let lo = (i as f64 * h).max(a);
            let hi = ((i + 1) as f64 * h).min(b);
            if hi > lo {
                mass += v * (hi - lo);
            }
        }
        mass
    }

    /// Inverse-CDF sample from a uniform variate in `[0,1)`.
    fn sample_from_uniform(&self, g: f64) -> f64 {
        let k = self.values.len();
        let h = 1.0 / k as f64;
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let cell_mass = v * h;
            if g < acc + cell_mass || i + 1 == k {
                if cell_mass <= 0.0 {
                    continue;
                }
                let frac = ((g - acc) / cell_mass).clamp(0.0, 1.0 - 1e-16);
                return (i as f64 + frac) * h;
            }
            acc += cell_mass;
        }
        // Unreachable for a normalized density; keep a safe fallback.
        1.0 - 1e-16
    }
}

/// Ensemble distribution `ρ(u, w)` over hidden-variable space.
#[derive(Clone)]
pub enum HVDistribution {
    /// The equilibrium measure: uniform on `[0,1)²`.
    Uniform,
    /// Separable `ρ(u,w) = f(u)·g(w)`, both piecewise-constant.
    Separable {
        u: PiecewiseDensity,
        w: PiecewiseDensity,
    },
    /// Arbitrary density with a known upper bound, sampled by rejection.
    General {
        density: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        bound: f64,
    },
}

impl std::fmt::Debug for HVDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HVDistribution::Uniform => write!(f, "Uniform"),
            HVDistribution::Separable { u, w } => {
                write!(f, "Separable(u: {} cells, w: {} cells)", u.values.len(), w.values.len())
            }
            HVDistribution::General { bound, .. } => write!(f, "General(bound: {bound})"),
        }
    }
}

impl HVDistribution {
    pub fn uniform() -> Self {
        HVDistribution::Uniform
    }

    pub fn separable(u_weights: &[f64], w_weights: &[f64]) -> Result<Self> {
        Ok(HVDistribution::Separable {
            u: PiecewiseDensity::new(u_weights)?,
            w: PiecewiseDensity::new(w_weights)?,
        })
    }

    /// Wraps an arbitrary non-negative density. `bound` must dominate it on
    /// the unit square; normalization is checked by midpoint quadrature.
    pub fn general<F>(density: F, bound: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidInput("density bound must be positive and finite".into()));
        }
        const K: usize = 512;
        let h = 1.0 / K as f64;
        let mut integral = 0.0;
        for i in 0..K {
            for j in 0..K {
                let v = density((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "density must be non-negative and finite, got {v} on the quadrature grid"
                    )));
                }
                integral += v;
            }
        }
        integral *= h * h;
        if (integral - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "density integrates to {integral}, expected 1 within 1e-6"
            )));
        }
        Ok(HVDistribution::General {
            density: Arc::new(density),
            bound,
        })
    }

    pub fn density(&self, u: f64, w: f64) -> f64 {
        match self {
            HVDistribution::Uniform => 1.0,
            HVDistribution::Separable { u: fu, w: gw } => fu.density(u) * gw.density(w),
            HVDistribution::General { density, .. } => density(u, w),
        }
    }

    /// Draws one hidden-variable point.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<HVSample> {
        match self {
            HVDistribution::Uniform => Ok(HVSample {
                u: rng.gen::<f64>(),
                w: rng.gen::<f64>(),
            }),
            HVDistribution::Separable { u, w } => Ok(HVSample {
                u: u.sample_from_uniform(rng.gen::<f64>()),
                w: w.sample_from_uniform(rng.gen::<f64>()),
            }),
            HVDistribution::General { density, bound } => {
                // Rejection against the uniform envelope scaled by `bound`.
                for _ in 0..100_000 {
                    let u = rng.gen::<f64>();
                    let w = rng.gen::<f64>();
                    let d = density(u, w);
                    if d < 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "density is negative at ({u}, {w})"
                        )));
                    }
                    if rng.gen::<f64>() * bound < d {
                        return Ok(HVSample { u, w });
                    }
                }
                Err(Error::LowAcceptance { rate: 1e-5 })
            }
        }
    }

    /// Mass of the product set `{u ∈ [a_u, b_u)} × {w ∈ [a_w, b_w)}`.
    /// Available in closed form only for uniform/separable densities.
    fn box_mass(&self, a_u: f64, b_u: f64, a_w: f64, b_w: f64) -> Option<f64> {
        match self {
            HVDistribution::Uniform => {
                let du = (b_u.clamp(0.0, 1.0) - a_u.clamp(0.0, 1.0)).max(0.0);
                let dw = (b_w.clamp(0.0, 1.0) - a_w.clamp(0.0, 1.0)).max(0.0);
                Some(du * dw)
            }
            HVDistribution::Separable { u, w } => {
                Some(u.interval_mass(a_u, b_u) * w.interval_mass(a_w, b_w))
            }
            HVDistribution::General { .. } => None,
        }
    }
}

/// Quantum outcome probabilities `p± = (1 ± m·P)/2` for a 2-state system.
pub fn born_probabilities(m: &BlochSetting, p: &Polarization) -> (f64, f64) {
    let mp = dot(m.vector(), p.vector());
    (0.5 * (1.0 + mp), 0.5 * (1.0 - mp))
}

/// The deterministic outcome mapping. Wing B's outcome depends on the remote
/// setting `m_a` through the threshold `θ = (1 + m_A·m_B)/2`.
pub fn singlet_outcomes(m_a: &BlochSetting, m_b: &BlochSetting, lambda: &HVSample) -> (i8, i8) {
    let sigma_a: i8 = if lambda.u < 0.5 { 1 } else { -1 };
    let theta = 0.5 * (1.0 + m_a.dot(m_b));
    let sigma_b = if lambda.w < theta { -sigma_a } else { sigma_a };
    (sigma_a, sigma_b)
}

/// Monte Carlo estimate of `⟨σ_A σ_B⟩` under `rho`, with its standard error.
pub fn correlation(
    m_a: &BlochSetting,
    m_b: &BlochSetting,
    rho: &HVDistribution,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("correlation needs n ≥ 1".into()));
    }
    let parts = run_partitioned(seed, n, |rng, count| -> Result<Accumulator> {
        let mut acc = Accumulator::default();
        for _ in 0..count {
            let lambda = rho.sample(rng)?;
            let (sa, sb) = singlet_outcomes(m_a, m_b, &lambda);
            acc.push((sa * sb) as f64);
        }
        Ok(acc)
    });
    let mut total = Accumulator::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok((total.mean(), total.stderr()))
}

/// Frequency of outcome `+1` at the chosen wing, with its standard error.
pub fn marginal_frequency(
    wing: Wing,
    m_a: &BlochSetting,
    m_b: &BlochSetting,
    rho: &HVDistribution,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("marginal_frequency needs n ≥ 1".into()));
    }
    let parts = run_partitioned(seed, n, |rng, count| -> Result<u64> {
        let mut plus = 0u64;
        for _ in 0..count {
            let lambda = rho.sample(rng)?;
            let (sa, sb) = singlet_outcomes(m_a, m_b, &lambda);
            let s = match wing {
                Wing::A => sa,
                Wing::B => sb,
            };
            if s > 0 {
                plus += 1;
            }
        }
        Ok(plus)
    });
    let mut plus = 0u64;
    for part in parts {
        plus += part?;
    }
    let freq = plus as f64 / n as f64;
    let stderr = (freq * (1.0 - freq) / n as f64).sqrt();
    Ok((freq, stderr))
}

/// How transition-set measures are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureMethod {
    /// Exact interval algebra on the outcome mapping.
    Analytic,
    /// Paired Monte Carlo over `n` hidden-variable draws.
    MonteCarlo { n: usize, seed: u64 },
}

/// The ρ-independent geometry of the transition sets: a `w` interval crossed
/// with one of the half-squares `u < 1/2` / `u ≥ 1/2` on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionGeometry {
    pub w_lo: f64,
    pub w_hi: f64,
    /// True when the `−→+` set sits on the `u < 1/2` half.
    pub minus_plus_low_u: bool,
}

/// Measures of the two transition sets for a remote setting change.
#[derive(Debug, Clone)]
pub struct TransitionSetReport {
    pub wing: Wing,
    pub own_setting: BlochSetting,
    pub remote_old: BlochSetting,
    pub remote_new: BlochSetting,
    /// `μ[T(−,+)]`: mass flipping from −1 to +1 under the setting change.
    pub mu_minus_plus: f64,
    /// `μ[T(+,−)]`: mass flipping from +1 to −1.
    pub mu_plus_minus: f64,
    pub method: MeasureMethod,
    /// Set when the requested wing has no remote dependence (wing A here):
    /// both sets are empty by construction.
    pub local_wing: bool,
    /// Populated for the nonlocal wing; identical for every distribution.
    pub geometry: Option<TransitionGeometry>,
    /// Raw flip counts for the Monte Carlo method.
    pub mc_counts: Option<(u64, u64)>,
}

fn transition_geometry(
    own: &BlochSetting,
    remote_old: &BlochSetting,
    remote_new: &BlochSetting,
) -> TransitionGeometry {
    let theta_old = 0.5 * (1.0 + remote_old.dot(own));
    let theta_new = 0.5 * (1.0 + remote_new.dot(own));
    TransitionGeometry {
        w_lo: theta_old.min(theta_new),
        w_hi: theta_old.max(theta_new),
        minus_plus_low_u: theta_old > theta_new,
    }
}

/// Transition-set measures under `rho` for a remote setting change at `wing`.
///
/// Wing B carries the nonlocal dependence; requesting wing A yields two empty
/// sets with the `local_wing` diagnostic set.
pub fn transition_sets(
    wing: Wing,
    m_fixed: &BlochSetting,
    m_old: &BlochSetting,
    m_new: &BlochSetting,
    rho: &HVDistribution,
    method: MeasureMethod,
) -> Result<TransitionSetReport> {
    if wing == Wing::A {
        // σ_A depends only on u, never on the remote setting.
        return Ok(TransitionSetReport {
            wing,
            own_setting: *m_fixed,
            remote_old: *m_old,
            remote_new: *m_new,
            mu_minus_plus: 0.0,
            mu_plus_minus: 0.0,
            method,
            local_wing: true,
            geometry: None,
            mc_counts: None,
        });
    }

    let geom = transition_geometry(m_fixed, m_old, m_new);
    let (mu_mp, mu_pm, counts) = match method {
        MeasureMethod::Analytic => {
            let (lo, hi) = (geom.w_lo, geom.w_hi);
            let (low_u, high_u) = (0.0, 0.5);
            let (lo_mass, hi_mass) = match (
                rho.box_mass(low_u, high_u, lo, hi),
                rho.box_mass(high_u, 1.0, lo, hi),
            ) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidInput(
                        "analytic transition measures need a uniform or separable density; \
                         use the Monte Carlo method for general densities"
                            .into(),
                    ))
                }
            };
            if geom.minus_plus_low_u {
                (lo_mass, hi_mass, None)
            } else {
                (hi_mass, lo_mass, None)
            }
        }
        MeasureMethod::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidInput("Monte Carlo measure needs n ≥ 1".into()));
            }
            let (mp, pm) = paired_flip_counts(m_fixed, m_old, m_new, rho, n, seed)?;
            (mp as f64 / n as f64, pm as f64 / n as f64, Some((mp, pm)))
        }
    };

    Ok(TransitionSetReport {
        wing,
        own_setting: *m_fixed,
        remote_old: *m_old,
        remote_new: *m_new,
        mu_minus_plus: mu_mp,
        mu_plus_minus: mu_pm,
        method,
        local_wing: false,
        geometry: Some(geom),
        mc_counts: counts,
    })
}

/// Counts wing-B outcome flips over paired evaluations (same λ, old then new
/// remote setting). Returns `(#(−→+), #(+→−))`.
fn paired_flip_counts(
    m_fixed: &BlochSetting,
    m_old: &BlochSetting,
    m_new: &BlochSetting,
    rho: &HVDistribution,
    n: usize,
    seed: u64,
) -> Result<(u64, u64)> {
    let parts = run_partitioned(seed, n, |rng, count| -> Result<(u64, u64)> {
        let mut mp = 0u64;
        let mut pm = 0u64;
        for _ in 0..count {
            let lambda = rho.sample(rng)?;
            let (_, sb_old) = singlet_outcomes(m_old, m_fixed, &lambda);
            let (_, sb_new) = singlet_outcomes(m_new, m_fixed, &lambda);
            if sb_old < 0 && sb_new > 0 {
                mp += 1;
            } else if sb_old > 0 && sb_new < 0 {
                pm += 1;
            }
        }
        Ok((mp, pm))
    });
    let mut mp = 0u64;
    let mut pm = 0u64;
    for part in parts {
        let (a, b) = part?;
        mp += a;
        pm += b;
    }
    Ok((mp, pm))
}

/// The remote-setting signal statistic at the nonlocal wing: the paired
/// shift of the `+1` frequency under `m_old → m_new`, with standard error.
///
/// Computed from the same paired sweep as the Monte Carlo transition-set
/// measures, so with matching `(n, seed)` the estimate equals
/// `μ[T(−,+)] − μ[T(+,−)]` exactly.
pub fn signal_statistic(
    wing: Wing,
    m_fixed: &BlochSetting,
    m_old: &BlochSetting,
    m_new: &BlochSetting,
    rho: &HVDistribution,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("signal_statistic needs n ≥ 1".into()));
    }
    if wing == Wing::A {
        return Ok((0.0, 0.0));
    }
    let (mp, pm) = paired_flip_counts(m_fixed, m_old, m_new, rho, n, seed)?;
    let nf = n as f64;
    let delta = (mp as f64 - pm as f64) / nf;
    // Per-sample flip indicator δ ∈ {−1, 0, +1}.
    let mean_sq = (mp + pm) as f64 / nf;
    let var = ((mean_sq - delta * delta) * nf / (nf - 1.0).max(1.0)).max(0.0);
    Ok((delta, (var / nf).sqrt()))
}

/// CHSH estimate from four correlation runs.
#[derive(Debug, Clone, Copy)]
pub struct ChshEstimate {
    pub s: f64,
    pub stderr: f64,
    pub correlations: [f64; 4],
}

/// `S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|` from Monte Carlo estimates.
pub fn chsh_value(
    a: &BlochSetting,
    a_prime: &BlochSetting,
    b: &BlochSetting,
    b_prime: &BlochSetting,
    rho: &HVDistribution,
    n: usize,
    seed: u64,
) -> Result<ChshEstimate> {
    let pairs = [(a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)];
    let mut es = [0.0; 4];
    let mut var = 0.0;
    for (i, (ma, mb)) in pairs.iter().enumerate() {
        let sub_seed = seed ^ (0x9E37_79B9_7F4A_7C15u64).wrapping_mul(i as u64 + 1);
        let (e, se) = correlation(ma, mb, rho, n, sub_seed)?;
        es[i] = e;
        var += se * se;
    }
    Ok(ChshEstimate {
        s: (es[0] - es[1] + es[2] + es[3]).abs(),
        stderr: var.sqrt(),
        correlations: es,
    })
}

/// Settings `(a, a′, b, b′)` saturating the equilibrium CHSH bound `2√2`.
pub fn chsh_optimal_settings() -> [BlochSetting; 4] {
    use std::f64::consts::PI;
    [
        BlochSetting::from_angle(0.0),
        BlochSetting::from_angle(PI / 2.0),
        BlochSetting::from_angle(PI / 4.0),
        BlochSetting::from_angle(3.0 * PI / 4.0),
    ]
}

/// Reference partition size for callers that want to match the internal
/// Monte Carlo chunking.
pub const MC_PARTITION: usize = PARTITION;

/// Convenience: an RNG positioned on the stream used by partition `p`.
pub fn mc_partition_rng(seed: u64, p: u64) -> ChaCha8Rng {
    partition_rng(seed, p)
}
