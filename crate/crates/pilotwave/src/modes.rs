//! Box eigenmode expansions: exact wavefunction evolution by spectral phases.
//!
//! A state is a finite sum `Ψ(X,t) = Σ c_n φ_n(X) e^{−iE_n t}` over hard-wall
//! box modes `φ_j(x) = √(2/L) sin(jπ(x−lo)/L)` per axis. Evolution multiplies
//! coefficients by exact phases, so norms hold to machine precision and
//! values, gradients and per-cell probability masses are all available in
//! closed form at any time.

use crate::grid::{Boundary, Domain, GridWavefunction};
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// One term of the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// 1-based mode index per active axis.
    pub index: [usize; 2],
    /// Box eigenenergy for this index (ħ = 1).
    pub energy: f64,
    pub coeff: Complex64,
}

/// Wavefunction as a normalized superposition of box modes.
#[derive(Debug, Clone)]
pub struct ModeWavefunction {
    domain: Domain,
    masses: [f64; 2],
    modes: Vec<Mode>,
}

impl ModeWavefunction {
    pub fn new(
        domain: Domain,
        masses: [f64; 2],
        components: &[([usize; 2], Complex64)],
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mode expansion needs at least one term".into()));
        }
        for a in 0..domain.dim {
            if domain.axes[a].len() <= 0.0 {
                return Err(Error::InvalidInput(format!("axis {a} has non-positive extent")));
            }
            if !(masses[a].is_finite() && masses[a] > 0.0) {
                return Err(Error::InvalidInput("masses must be positive".into()));
            }
        }
        let mut modes = Vec::with_capacity(components.len());
        for &(index, coeff) in components {
            let mut energy = 0.0;
            for a in 0..domain.dim {
                if index[a] == 0 {
                    return Err(Error::InvalidInput(
                        "box mode indices are 1-based; got 0".into(),
                    ));
                }
                let k = index[a] as f64 * PI / domain.axes[a].len();
                energy += k * k / (2.0 * masses[a]);
            }
            if modes.iter().any(|m: &Mode| {
                m.index[..domain.dim] == index[..domain.dim]
            }) {
                return Err(Error::InvalidInput(format!("duplicate mode index {index:?}")));
            }
            modes.push(Mode {
                index,
                energy,
                coeff,
            });
        }
        let norm_sq: f64 = modes.iter().map(|m| m.coeff.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(Error::InvalidInput("mode coefficients are all zero".into()));
        }
        let scale = 1.0 / norm_sq.sqrt();
        for m in &mut modes {
            m.coeff *= scale;
        }
        Ok(Self {
            domain,
            masses,
            modes,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn masses(&self) -> [f64; 2] {
        self.masses
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `Σ |c_n|²` — exactly conserved by evolution.
    pub fn norm_sq(&self) -> f64 {
        self.modes.iter().map(|m| m.coeff.norm_sqr()).sum()
    }

    /// `⟨H⟩ = Σ |c_n|² E_n`.
    pub fn energy(&self) -> f64 {
        self.modes.iter().map(|m| m.coeff.norm_sqr() * m.energy).sum()
    }

    /// Exact spectral propagation: `c_n → c_n e^{−iE_n t}`.
    pub fn evolve(&self, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::InvalidInput("evolution time must be finite".into()));
        }
        let mut out = self.clone();
        for m in &mut out.modes {
            m.coeff *= Complex64::from_polar(1.0, -m.energy * t);
        }
        Ok(out)
    }

    /// Ψ and its spatial gradient at configuration `x` and time `t`.
    pub fn value_and_gradient(&self, x: [f64; 2], t: f64) -> (Complex64, [Complex64; 2]) {
        let dim = self.dim();
        let mut value = Complex64::default();
        let mut grad = [Complex64::default(); 2];
        for m in &self.modes {
            let phase = m.coeff * Complex64::from_polar(1.0, -m.energy * t);
            // Per-axis sin/cos factors.
            let mut s = [1.0f64; 2];
            let mut dsdx = [0.0f64; 2];
            for a in 0..dim {
                let l = self.domain.axes[a].len();
                let k = m.index[a] as f64 * PI / l;
                let u = x[a] - self.domain.axes[a].lo;
                let amp = (2.0 / l).sqrt();
                s[a] = amp * (k * u).sin();
                dsdx[a] = amp * k * (k * u).cos();
            }
            let spatial = s[0] * if dim == 2 { s[1] } else { 1.0 };
            value += phase * spatial;
            grad[0] += phase * dsdx[0] * if dim == 2 { s[1] } else { 1.0 };
            if dim == 2 {
                grad[1] += phase * s[0] * dsdx[1];
            }
        }
        (value, grad)
    }

    pub fn value(&self, x: [f64; 2], t: f64) -> Complex64 {
        self.value_and_gradient(x, t).0
    }

    pub fn density(&self, x: [f64; 2], t: f64) -> f64 {
        self.value(x, t).norm_sqr()
    }

    /// Probability current `J_i = Im(Ψ* ∂_i Ψ)/m_i`, exact.
    pub fn current(&self, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let (value, grad) = self.value_and_gradient(x, t);
        let density = value.norm_sqr();
        if density < 1e-12 / self.domain.volume() {
            return Err(Error::Node { t, density });
        }
        let mut j = [0.0; 2];
        for a in 0..self.dim() {
            j[a] = (value.conj() * grad[a]).im / self.masses[a];
        }
        Ok(j)
    }

    /// Exact probability mass of the axis-aligned cell
    /// `[x0,x1] × [y0,y1]` at time `t`.
    ///
    /// `|Ψ|²` integrates cellwise to products of elementary sine integrals
    /// over mode pairs, so no quadrature is involved.
    pub fn cell_mass(&self, lo: [f64; 2], hi: [f64; 2], t: f64) -> f64 {
        let dim = self.dim();
        let mut total = 0.0;
        for m in &self.modes {
            let cm = m.coeff * Complex64::from_polar(1.0, -m.energy * t);
            for m2 in &self.modes {
                let cm2 = m2.coeff * Complex64::from_polar(1.0, -m2.energy * t);
                let mut overlap = 1.0;
                for a in 0..dim {
                    overlap *= self.pair_integral(
                        a,
                        m.index[a],
                        m2.index[a],
                        lo[a] - self.domain.axes[a].lo,
                        hi[a] - self.domain.axes[a].lo,
                    );
                }
                total += (cm * cm2.conj()).re * overlap;
            }
        }
        total
    }

    /// `(2/L) ∫_a^b sin(jπu/L) sin(kπu/L) du` on axis `axis`.
    fn pair_integral(&self, axis: usize, j: usize, k: usize, a: f64, b: f64) -> f64 {
        let l = self.domain.axes[axis].len();
        let (a, b) = (a.clamp(0.0, l), b.clamp(0.0, l));
        if b <= a {
            return 0.0;
        }
        let alpha = j as f64 * PI / l;
        let beta = k as f64 * PI / l;
        if j == k {
            let prim = |u: f64| u / l - (2.0 * alpha * u).sin() / (2.0 * alpha * l);
            prim(b) - prim(a)
        } else {
            let dm = alpha - beta;
            let dp = alpha + beta;
            let prim = |u: f64| ((dm * u).sin() / dm - (dp * u).sin() / dp) / l;
            prim(b) - prim(a)
        }
    }

    /// Exact per-cell masses on a uniform tiling of the box, row-major
    /// along the second axis.
    pub fn cell_masses(&self, cells: [usize; 2], t: f64) -> Vec<f64> {
        let dim = self.dim();
        let (nx, ny) = (cells[0], if dim == 2 { cells[1] } else { 1 });
        // Precompute 1-D pair integrals per axis and cell.
        let k = self.modes.len();
        let axis_integrals = |axis: usize, n_cells: usize| -> Vec<f64> {
            let l = self.domain.axes[axis].len();
            let w = l / n_cells as f64;
            let mut out = vec![0.0; k * k * n_cells];
            for (i, m) in self.modes.iter().enumerate() {
                for (i2, m2) in self.modes.iter().enumerate() {
                    for c in 0..n_cells {
                        out[(i * k + i2) * n_cells + c] = self.pair_integral(
                            axis,
                            m.index[axis],
                            m2.index[axis],
                            c as f64 * w,
                            (c + 1) as f64 * w,
                        );
                    }
                }
            }
            out
        };
        let sx = axis_integrals(0, nx);
        let sy = if dim == 2 {
            axis_integrals(1, ny)
        } else {
            vec![1.0; k * k]
        };
        let phases: Vec<Complex64> = self
            .modes
            .iter()
            .map(|m| m.coeff * Complex64::from_polar(1.0, -m.energy * t))
            .collect();

        let mut masses = vec![0.0; nx * ny];
        for i in 0..k {
            for i2 in 0..k {
                let weight = (phases[i] * phases[i2].conj()).re;
                if weight == 0.0 {
                    continue;
                }
                for cx in 0..nx {
                    let wx = weight * sx[(i * k + i2) * nx + cx];
                    for cy in 0..ny {
                        let wy = if dim == 2 {
                            sy[(i * k + i2) * ny + cy]
                        } else {
                            1.0
                        };
                        masses[cx * ny + cy] += wx * wy;
                    }
                }
            }
        }
        masses
    }

    /// Samples the state onto a hard-wall grid at `t = 0` (zero potential).
    pub fn to_grid(&self, nodes: [usize; 2]) -> Result<GridWavefunction> {
        GridWavefunction::from_fn(
            self.domain,
            nodes,
            Boundary::HardWall,
            self.masses,
            |p| self.value(p, 0.0),
            |_| 0.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mode_2d() -> ModeWavefunction {
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
    fn constructor_normalizes_and_validates() {
        let wf = two_mode_2d();
        assert!((wf.norm_sq() - 1.0).abs() < 1e-12);
        assert!(ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[([0, 1], Complex64::new(1.0, 0.0))]
        )
        .is_err());
        assert!(ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[
                ([1, 1], Complex64::new(1.0, 0.0)),
                ([1, 1], Complex64::new(0.5, 0.0))
            ]
        )
        .is_err());
    }

    #[test]
    fn energies_follow_box_spectrum() {
        let wf = two_mode_2d();
        // π-sided box, m = 1: E_{jk} = (j² + k²)/2.
        assert!((wf.modes()[0].energy - 1.0).abs() < 1e-12);
        assert!((wf.modes()[1].energy - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_time_evolution_is_identity() {
        let wf = two_mode_2d();
        let e = wf.evolve(0.0).unwrap();
        for (a, b) in wf.modes().iter().zip(e.modes().iter()) {
            assert_eq!(a.coeff, b.coeff);
        }
    }

    #[test]
    fn single_mode_density_is_static() {
        let wf = ModeWavefunction::new(
            Domain::line(0.0, PI),
            [1.0, 1.0],
            &[([3, 1], Complex64::new(0.7, -0.2))],
        )
        .unwrap();
        let x = [1.234, 0.0];
        let d0 = wf.density(x, 0.0);
        for &t in &[0.1, 1.0, 17.3] {
            assert!((wf.density(x, t) - d0).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_exactly_conserved() {
        let wf = two_mode_2d();
        let e = wf.evolve(123.456).unwrap();
        assert!((e.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_mode_density_recurrence() {
        // Density has period 2π/(E₂ − E₁).
        let wf = two_mode_2d();
        let period = 2.0 * PI / (wf.modes()[1].energy - wf.modes()[0].energy);
        let probe = [
            [0.3, 1.1],
            [1.5, 2.2],
            [2.8, 0.4],
        ];
        for &x in &probe {
            let d0 = wf.density(x, 0.123);
            let d1 = wf.density(x, 0.123 + period);
            assert!((d0 - d1).abs() < 1e-10, "recurrence broken: {d0} vs {d1}");
        }
    }

    #[test]
    fn ground_state_velocity_vanishes() {
        // A single real mode: spatially constant phase, zero current.
        let wf = ModeWavefunction::new(
            Domain::square(PI),
            [1.0, 1.0],
            &[([1, 1], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        let j = wf.current([1.0, 2.0], 0.7).unwrap();
        assert!(j[0].abs() < 1e-14 && j[1].abs() < 1e-14);
    }

    #[test]
    fn current_errors_at_nodes() {
        let wf = ModeWavefunction::new(
            Domain::line(0.0, PI),
            [1.0, 1.0],
            &[([2, 1], Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        // sin(2x) vanishes at x = π/2.
        assert!(matches!(
            wf.current([PI / 2.0, 0.0], 0.0),
            Err(Error::Node { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let wf = two_mode_2d();
        let x = [1.1, 0.9];
        let t = 0.37;
        let (_, grad) = wf.value_and_gradient(x, t);
        let eps = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += eps;
            xm[a] -= eps;
            let fd = (wf.value(xp, t) - wf.value(xm, t)) / (2.0 * eps);
            assert!((fd - grad[a]).norm() < 1e-8, "axis {a}: {fd} vs {:?}", grad[a]);
        }
    }

    #[test]
    fn cell_masses_sum_to_one_and_match_quadrature() {
        let wf = two_mode_2d();
        let t = 0.61;
        let cells = [5, 4];
        let masses = wf.cell_masses(cells, t);
        let total: f64 = masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // Midpoint quadrature oracle per cell.
        let (wx, wy) = (PI / cells[0] as f64, PI / cells[1] as f64);
        let sub = 60;
        for cx in 0..cells[0] {
            for cy in 0..cells[1] {
                let mut q = 0.0;
                for i in 0..sub {
                    for j in 0..sub {
                        let x = [
                            cx as f64 * wx + (i as f64 + 0.5) * wx / sub as f64,
                            cy as f64 * wy + (j as f64 + 0.5) * wy / sub as f64,
                        ];
                        q += wf.density(x, t);
                    }
                }
                q *= wx * wy / (sub * sub) as f64;
                let exact = masses[cx * cells[1] + cy];
                assert!(
                    (q - exact).abs() < 5e-5,
                    "cell ({cx},{cy}): quadrature {q} vs exact {exact}"
                );
            }
        }
    }

    #[test]
    fn evolve_then_value_matches_dynamic_phases() {
        let wf = two_mode_2d();
        let t = 2.9;
        let snapshot = wf.evolve(t).unwrap();
        let x = [0.8, 2.0];
        assert!((snapshot.value(x, 0.0) - wf.value(x, t)).norm() < 1e-12);
    }
}
