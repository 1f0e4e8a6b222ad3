//! Flat and foliated spacetime bookkeeping.
//!
//! Everything lives in a preferred frame with global time `t`. Flat-space
//! operations cover Lorentz clock readings, the first-order local-time
//! convention, and proper time along piecewise-linear worldlines. The
//! foliated variant equips slices with a positive lapse `N(x,t)` and a
//! positive-definite 3-metric `g_ij(x,t)` (shift held at zero): rods measure
//! `dl = (g_ij dx^i dx^j)^{1/2}` while clocks tick `dτ² = N²dt² − dl²`.
//!
//! *Simultaneity* (sharing a slice label) and *synchronicity* (equal
//! accumulated proper time) are tracked as independent flags.

use crate::{Error, Result};
use std::sync::Arc;

/// Default tolerance on `|τ₁ − τ₂|` for calling two clocks synchronous.
pub const DEFAULT_SYNCHRONY_TOL: f64 = 1e-9;

/// A point in the preferred coordinates: slice label `t` and position `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: [f64; 3],
}

impl Event {
    pub fn new(t: f64, x: [f64; 3]) -> Result<Self> {
        if !t.is_finite() || x.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("event coordinates must be finite".into()));
        }
        Ok(Self { t, x })
    }

    /// Convenience for 1+1-dimensional scenarios.
    pub fn on_line(t: f64, x: f64) -> Self {
        Self { t, x: [x, 0.0, 0.0] }
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3_sq(a: [f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Piecewise-linear worldline: strictly increasing slice labels, every
/// segment at or below the speed limit `c`.
#[derive(Debug, Clone)]
pub struct Worldline {
    events: Vec<Event>,
    c: f64,
}

impl Worldline {
    pub fn new(events: Vec<Event>, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidInput("speed limit c must be positive".into()));
        }
        if events.len() < 2 {
            return Err(Error::InvalidInput("a worldline needs at least two events".into()));
        }
        for pair in events.windows(2) {
            let dt = pair[1].t - pair[0].t;
            if dt <= 0.0 {
                return Err(Error::InvalidInput(
                    "worldline slice labels must be strictly increasing".into(),
                ));
            }
            let dx2 = norm3_sq(sub3(pair[1].x, pair[0].x));
            if dx2 > c * c * dt * dt * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "superluminal segment: |dx| = {} over dt = {dt} exceeds c = {c}",
                    dx2.sqrt()
                )));
            }
        }
        Ok(Self { events, c })
    }

    /// A clock at rest at `x` between slice labels `t0` and `t1`.
    pub fn at_rest(x: [f64; 3], t0: f64, t1: f64, c: f64) -> Result<Self> {
        Self::new(vec![Event { t: t0, x }, Event { t: t1, x }], c)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn start(&self) -> Event {
        self.events[0]
    }

    pub fn end(&self) -> Event {
        *self.events.last().unwrap()
    }

    /// Position at slice label `t` by linear interpolation.
    pub fn position_at(&self, t: f64) -> Result<[f64; 3]> {
        if t < self.start().t - 1e-12 || t > self.end().t + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "label {t} outside worldline span [{}, {}]",
                self.start().t,
                self.end().t
            )));
        }
        for pair in self.events.windows(2) {
            if t <= pair[1].t {
                let f = ((t - pair[0].t) / (pair[1].t - pair[0].t)).clamp(0.0, 1.0);
                let d = sub3(pair[1].x, pair[0].x);
                return Ok([
                    pair[0].x[0] + f * d[0],
                    pair[0].x[1] + f * d[1],
                    pair[0].x[2] + f * d[2],
                ]);
            }
        }
        Ok(self.end().x)
    }

    /// Restriction to `[t0, t1]`, interpolating the endpoints.
    pub fn clip(&self, t0: f64, t1: f64) -> Result<Self> {
        if t1 <= t0 {
            return Err(Error::InvalidInput("clip needs t1 > t0".into()));
        }
        let mut events = vec![Event {
            t: t0,
            x: self.position_at(t0)?,
        }];
        for e in &self.events {
            if e.t > t0 && e.t < t1 {
                events.push(*e);
            }
        }
        events.push(Event {
            t: t1,
            x: self.position_at(t1)?,
        });
        Self::new(events, self.c)
    }

    /// Splits every segment into `parts` equal pieces (for refinement studies).
    pub fn refine(&self, parts: usize) -> Self {
        if parts <= 1 {
            return self.clone();
        }
        let mut events = Vec::with_capacity(self.events.len() * parts);
        for pair in self.events.windows(2) {
            for k in 0..parts {
                let f = k as f64 / parts as f64;
                let d = sub3(pair[1].x, pair[0].x);
                events.push(Event {
                    t: pair[0].t + f * (pair[1].t - pair[0].t),
                    x: [
                        pair[0].x[0] + f * d[0],
                        pair[0].x[1] + f * d[1],
                        pair[0].x[2] + f * d[2],
                    ],
                });
            }
        }
        events.push(self.end());
        Self {
            events,
            c: self.c,
        }
    }
}

/// Reading of a clock synchronised by the Einstein light-pulse convention in
/// a frame moving at `v` along x: `t′ = (t − vx/c²)/√(1 − v²/c²)`.
pub fn lorentz_clock_reading(t: f64, x: f64, v: f64, c: f64) -> Result<f64> {
    let gamma = lorentz_gamma(v, c)?;
    Ok(gamma * (t - v * x / (c * c)))
}

/// Companion spatial transform `x′ = (x − vt)/√(1 − v²/c²)`, so boost
/// round-trips can be checked.
pub fn lorentz_boost(t: f64, x: f64, v: f64, c: f64) -> Result<(f64, f64)> {
    let gamma = lorentz_gamma(v, c)?;
    Ok((gamma * (t - v * x / (c * c)), gamma * (x - v * t)))
}

fn lorentz_gamma(v: f64, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidInput("speed limit c must be positive".into()));
    }
    if v.abs() >= c {
        return Err(Error::InvalidInput(format!("|v| = {} must be below c = {c}", v.abs())));
    }
    Ok(1.0 / (1.0 - v * v / (c * c)).sqrt())
}

/// The first-order local time `t′ = t − vx/c²` (no dilation factor).
///
/// The gap to [`lorentz_clock_reading`] is `O((v/c)²)` relative to
/// `max(|t|, |x|/c)`.
pub fn poincare_first_order(t: f64, x: f64, v: f64, c: f64) -> Result<f64> {
    lorentz_gamma(v, c)?; // same validity domain
    Ok(t - v * x / (c * c))
}

/// Proper time accumulated along a worldline in flat spacetime:
/// `τ = Σ √(Δt² − |Δx|²/c²)`.
pub fn proper_time_flat(w: &Worldline) -> f64 {
    let c = w.c();
    w.events()
        .windows(2)
        .map(|pair| {
            let dt = pair[1].t - pair[0].t;
            let dx2 = norm3_sq(sub3(pair[1].x, pair[0].x)) / (c * c);
            (dt * dt - dx2).max(0.0).sqrt()
        })
        .sum()
}

/// Symmetric 3-metric, stored as `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMetric3 {
    pub m: [f64; 6],
}

impl SymMetric3 {
    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Self {
            m: [a, 0.0, 0.0, b, 0.0, c],
        }
    }

    pub fn conformal(a: f64) -> Self {
        Self::diag(a * a, a * a, a * a)
    }

    pub fn det(&self) -> f64 {
        let [xx, xy, xz, yy, yz, zz] = self.m;
        xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)
    }

    /// Positive-definiteness via leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        let [xx, xy, _, yy, _, _] = self.m;
        xx > 0.0 && (xx * yy - xy * xy) > 0.0 && self.det() > 0.0
    }

    /// Quadratic form `g_ij d^i d^j`.
    pub fn quad(&self, d: [f64; 3]) -> f64 {
        let [xx, xy, xz, yy, yz, zz] = self.m;
        xx * d[0] * d[0]
            + yy * d[1] * d[1]
            + zz * d[2] * d[2]
            + 2.0 * (xy * d[0] * d[1] + xz * d[0] * d[2] + yz * d[1] * d[2])
    }
}

/// Unimodular lapse `N = (det g)^{−1/2}`.
pub fn unimodular_lapse(g: &SymMetric3) -> Result<f64> {
    let det = g.det();
    if det <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "metric determinant must be positive, got {det}"
        )));
    }
    Ok(1.0 / det.sqrt())
}

/// Uniform sample grid over `(t, x, y, z)`. An axis with `count == 1` is
/// treated as constant along that direction.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub origin: [f64; 4],
    pub step: [f64; 4],
    pub count: [usize; 4],
}

impl GridSpec {
    fn len(&self) -> usize {
        self.count.iter().product()
    }

    /// Per-axis (lower index, fraction) with clamping to the grid.
    fn locate(&self, p: [f64; 4]) -> [(usize, f64); 4] {
        let mut out = [(0usize, 0.0f64); 4];
        for a in 0..4 {
            if self.count[a] <= 1 {
                out[a] = (0, 0.0);
                continue;
            }
            let s = (p[a] - self.origin[a]) / self.step[a];
            let max_i = self.count[a] - 2;
            let i = s.floor().clamp(0.0, max_i as f64) as usize;
            out[a] = (i, (s - i as f64).clamp(0.0, 1.0));
        }
        out
    }

    fn index(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.count[1] + i[1]) * self.count[2] + i[2]) * self.count[3] + i[3]
    }
}

fn multilinear(spec: &GridSpec, values: &[f64], t: f64, x: [f64; 3]) -> f64 {
    let loc = spec.locate([t, x[0], x[1], x[2]]);
    let mut acc = 0.0;
    for corner in 0..16usize {
        let mut idx = [0usize; 4];
        let mut weight = 1.0;
        for a in 0..4 {
            let hi = (corner >> a) & 1 == 1;
            let (i, f) = loc[a];
            if spec.count[a] <= 1 {
                if hi {
                    weight = 0.0;
                }
                idx[a] = 0;
            } else {
                idx[a] = i + hi as usize;
                weight *= if hi { f } else { 1.0 - f };
            }
        }
        if weight != 0.0 {
            acc += weight * values[spec.index(idx)];
        }
    }
    acc
}

/// A scalar field over slices: constant, analytic, or gridded samples with
/// multilinear interpolation.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Analytic(Arc<dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync>),
    Grid { spec: GridSpec, values: Vec<f64> },
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Constant(v) => write!(f, "Constant({v})"),
            ScalarField::Analytic(_) => write!(f, "Analytic"),
            ScalarField::Grid { spec, .. } => write!(f, "Grid({:?})", spec.count),
        }
    }
}

impl ScalarField {
    pub fn analytic<F>(f: F) -> Self
    where
        F: Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static,
    {
        ScalarField::Analytic(Arc::new(f))
    }

    pub fn grid(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "grid expects {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(ScalarField::Grid { spec, values })
    }

    pub fn eval(&self, t: f64, x: [f64; 3]) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::Analytic(f) => f(t, x),
            ScalarField::Grid { spec, values } => multilinear(spec, values, t, x),
        }
    }
}

/// The 3-metric over slices, under the same three entry paths.
#[derive(Clone)]
pub enum MetricField {
    Identity,
    Constant(SymMetric3),
    Analytic(Arc<dyn Fn(f64, [f64; 3]) -> SymMetric3 + Send + Sync>),
    Grid { spec: GridSpec, values: Vec<SymMetric3> },
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricField::Identity => write!(f, "Identity"),
            MetricField::Constant(g) => write!(f, "Constant({:?})", g.m),
            MetricField::Analytic(_) => write!(f, "Analytic"),
            MetricField::Grid { spec, .. } => write!(f, "Grid({:?})", spec.count),
        }
    }
}

impl MetricField {
    pub fn analytic<F>(f: F) -> Self
    where
        F: Fn(f64, [f64; 3]) -> SymMetric3 + Send + Sync + 'static,
    {
        MetricField::Analytic(Arc::new(f))
    }

    pub fn grid(spec: GridSpec, values: Vec<SymMetric3>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "grid expects {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(MetricField::Grid { spec, values })
    }

    pub fn eval(&self, t: f64, x: [f64; 3]) -> SymMetric3 {
        match self {
            MetricField::Identity => SymMetric3::identity(),
            MetricField::Constant(g) => *g,
            MetricField::Analytic(f) => f(t, x),
            MetricField::Grid { spec, values } => {
                let mut m = [0.0; 6];
                for (k, entry) in m.iter_mut().enumerate() {
                    let comp: Vec<f64> = values.iter().map(|g| g.m[k]).collect();
                    *entry = multilinear(spec, &comp, t, x);
                }
                SymMetric3 { m }
            }
        }
    }
}

/// A preferred foliation: lapse field and slice 3-metric, shift ≡ 0.
#[derive(Debug, Clone)]
pub struct Foliation {
    pub lapse: ScalarField,
    pub metric: MetricField,
}

impl Foliation {
    pub fn minkowski() -> Self {
        Self {
            lapse: ScalarField::Constant(1.0),
            metric: MetricField::Identity,
        }
    }

    fn sample(&self, t: f64, x: [f64; 3]) -> Result<(f64, SymMetric3)> {
        let n = self.lapse.eval(t, x);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lapse must be positive, got N({t}, {x:?}) = {n}"
            )));
        }
        let g = self.metric.eval(t, x);
        if !g.is_positive_definite() {
            return Err(Error::InvalidInput(format!(
                "3-metric must be positive-definite at ({t}, {x:?})"
            )));
        }
        Ok((n, g))
    }
}

/// Proper time along a path in a foliated spacetime:
/// `τ = Σ √(N²Δt² − g_ij Δx^i Δx^j)` with midpoint-sampled fields.
pub fn proper_time_foliated(path: &Worldline, f: &Foliation) -> Result<f64> {
    let mut tau = 0.0;
    for pair in path.events().windows(2) {
        let tm = 0.5 * (pair[0].t + pair[1].t);
        let xm = [
            0.5 * (pair[0].x[0] + pair[1].x[0]),
            0.5 * (pair[0].x[1] + pair[1].x[1]),
            0.5 * (pair[0].x[2] + pair[1].x[2]),
        ];
        let (n, g) = f.sample(tm, xm)?;
        let dt = pair[1].t - pair[0].t;
        let dl2 = g.quad(sub3(pair[1].x, pair[0].x));
        let s2 = n * n * dt * dt - dl2;
        if s2 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "segment at t = {tm} is not timelike in the foliated sense (N²Δt² − dl² = {s2})"
            )));
        }
        tau += s2.sqrt();
    }
    Ok(tau)
}

/// Proper length of a spatial curve on the slice labelled `t`:
/// `l = Σ √(g_ij Δx^i Δx^j)` with midpoint-sampled metric.
pub fn proper_length(curve: &[[f64; 3]], g: &MetricField, t: f64) -> Result<f64> {
    let mut len = 0.0;
    for pair in curve.windows(2) {
        let mid = [
            0.5 * (pair[0][0] + pair[1][0]),
            0.5 * (pair[0][1] + pair[1][1]),
            0.5 * (pair[0][2] + pair[1][2]),
        ];
        let metric = g.eval(t, mid);
        if !metric.is_positive_definite() {
            return Err(Error::InvalidInput(format!(
                "metric degenerate at ({t}, {mid:?})"
            )));
        }
        len += metric.quad(sub3(pair[1], pair[0])).max(0.0).sqrt();
    }
    Ok(len)
}

/// Comparison of two clocks over a slice interval.
#[derive(Debug, Clone)]
pub struct ClockPairReport {
    /// `(start, end)` slice labels of each evaluated clock path.
    pub span_1: (f64, f64),
    pub span_2: (f64, f64),
    pub tau_1: f64,
    pub tau_2: f64,
    /// True when the compared endpoints share slice labels.
    pub simultaneous: bool,
    /// True when `|τ₁ − τ₂| < tolerance`.
    pub synchronous: bool,
    pub tolerance: f64,
}

impl ClockPairReport {
    pub fn tau_gap(&self) -> f64 {
        (self.tau_1 - self.tau_2).abs()
    }
}

/// Proper-time comparison of two clocks over the common slice interval
/// `[t1, t2]`. Both worldlines must span it.
pub fn synchrony_report(
    clock1: &Worldline,
    clock2: &Worldline,
    f: &Foliation,
    t1: f64,
    t2: f64,
    tol: f64,
) -> Result<ClockPairReport> {
    for (name, w) in [("clock1", clock1), ("clock2", clock2)] {
        if w.start().t > t1 + 1e-12 || w.end().t < t2 - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "{name} spans [{}, {}], does not cover [{t1}, {t2}]",
                w.start().t,
                w.end().t
            )));
        }
    }
    let c1 = clock1.clip(t1, t2)?;
    let c2 = clock2.clip(t1, t2)?;
    compare_clock_paths(&c1, &c2, f, tol)
}

/// Proper-time comparison of two clock paths over their own full spans.
/// Unlike [`synchrony_report`] the spans need not coincide, so all four
/// simultaneity/synchrony combinations can be realized.
pub fn compare_clock_paths(
    clock1: &Worldline,
    clock2: &Worldline,
    f: &Foliation,
    tol: f64,
) -> Result<ClockPairReport> {
    let tau_1 = proper_time_foliated(clock1, f)?;
    let tau_2 = proper_time_foliated(clock2, f)?;
    let span_1 = (clock1.start().t, clock1.end().t);
    let span_2 = (clock2.start().t, clock2.end().t);
    Ok(ClockPairReport {
        span_1,
        span_2,
        tau_1,
        tau_2,
        simultaneous: span_1.0 == span_2.0 && span_1.1 == span_2.1,
        synchronous: (tau_1 - tau_2).abs() < tol,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentz_identity_boost() {
        assert_eq!(lorentz_clock_reading(3.7, 12.0, 0.0, 1.0).unwrap(), 3.7);
    }

    #[test]
    fn lorentz_hand_values() {
        // γ(0.6) = 1.25.
        assert!((lorentz_clock_reading(1.0, 0.0, 0.6, 1.0).unwrap() - 1.25).abs() < 1e-12);
        // Position lag: the moving clock at x = 1 reads a negative time at t = 0.
        assert!((lorentz_clock_reading(0.0, 1.0, 0.6, 1.0).unwrap() + 0.75).abs() < 1e-12);
    }

    #[test]
    fn lorentz_rejects_superluminal() {
        assert!(lorentz_clock_reading(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(lorentz_clock_reading(0.0, 0.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn boost_round_trip_is_identity() {
        let (t, x) = (0.8, -2.3);
        let (t1, x1) = lorentz_boost(t, x, 0.6, 1.0).unwrap();
        let (t2, x2) = lorentz_boost(t1, x1, -0.6, 1.0).unwrap();
        assert!((t2 - t).abs() < 1e-12 && (x2 - x).abs() < 1e-12);
    }

    #[test]
    fn poincare_first_order_values() {
        assert_eq!(poincare_first_order(2.5, 4.0, 0.0, 1.0).unwrap(), 2.5);
        let p = poincare_first_order(0.0, 1.0, 0.1, 1.0).unwrap();
        assert!((p + 0.1).abs() < 1e-15);
        let full = lorentz_clock_reading(0.0, 1.0, 0.1, 1.0).unwrap();
        assert!((p - full).abs() < 0.01); // gap < (v/c)²
        // No dilation at x = 0.
        assert_eq!(poincare_first_order(1.3, 0.0, 0.7, 1.0).unwrap(), 1.3);
    }

    #[test]
    fn first_order_gap_scales_quadratically() {
        // log-log slope of the gap over v/c ∈ [1e-3, 1e-1].
        let (t, x) = (1.0, 0.3);
        let mut pts = Vec::new();
        for k in 0..=20 {
            let v = 1e-3 * (100.0f64).powf(k as f64 / 20.0);
            let gap = (poincare_first_order(t, x, v, 1.0).unwrap()
                - lorentz_clock_reading(t, x, v, 1.0).unwrap())
            .abs();
            pts.push((v.ln(), gap.ln()));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 2.0).abs() < 0.05, "slope = {slope}");
    }

    #[test]
    fn proper_time_rest_clock() {
        let w = Worldline::at_rest([0.0; 3], 0.0, 2.0, 1.0).unwrap();
        assert_eq!(proper_time_flat(&w), 2.0);
    }

    #[test]
    fn proper_time_twin_round_trip() {
        let w = Worldline::new(
            vec![
                Event::on_line(0.0, 0.0),
                Event::on_line(1.0, 0.6),
                Event::on_line(2.0, 0.0),
            ],
            1.0,
        )
        .unwrap();
        assert!((proper_time_flat(&w) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn proper_time_lightlike_segment() {
        let w = Worldline::new(
            vec![Event::on_line(0.0, 0.0), Event::on_line(1.0, 1.0)],
            1.0,
        )
        .unwrap();
        assert_eq!(proper_time_flat(&w), 0.0);
    }

    #[test]
    fn worldline_rejects_superluminal_and_backwards() {
        assert!(Worldline::new(
            vec![Event::on_line(0.0, 0.0), Event::on_line(1.0, 1.5)],
            1.0
        )
        .is_err());
        assert!(Worldline::new(
            vec![Event::on_line(0.0, 0.0), Event::on_line(0.0, 0.0)],
            1.0
        )
        .is_err());
    }

    #[test]
    fn dilation_bound_holds_on_random_paths() {
        use rand::Rng;
        let mut rng = crate::mc::partition_rng(4, 0);
        for _ in 0..40 {
            let mut events = vec![Event::on_line(0.0, 0.0)];
            let mut t = 0.0;
            let mut x = 0.0;
            for _ in 0..10 {
                let dt = 0.1 + rng.gen::<f64>();
                let v: f64 = rng.gen::<f64>() * 1.8 - 0.9;
                t += dt;
                x += v * dt;
                events.push(Event::on_line(t, x));
            }
            let w = Worldline::new(events, 1.0).unwrap();
            assert!(proper_time_flat(&w) <= t + 1e-12);
        }
        // Equality iff at rest.
        let rest = Worldline::at_rest([1.0, 2.0, 3.0], 0.0, 5.0, 1.0).unwrap();
        assert_eq!(proper_time_flat(&rest), 5.0);
    }

    #[test]
    fn foliated_rest_clock_in_minkowski() {
        let f = Foliation::minkowski();
        let w = Worldline::at_rest([0.3, 0.0, 0.0], 0.0, 2.0, 1.0).unwrap();
        assert!((proper_time_foliated(&w, &f).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_lapse_rest_clock() {
        let eps = 0.01;
        let f = Foliation {
            lapse: ScalarField::analytic(move |_, x| 1.0 + eps * x[0]),
            metric: MetricField::Identity,
        };
        let w = Worldline::at_rest([5.0, 0.0, 0.0], 0.0, 3.0, 1.0).unwrap();
        let tau = proper_time_foliated(&w, &f).unwrap();
        assert!((tau - (1.0 + eps * 5.0) * 3.0).abs() < 1e-12);
    }

    #[test]
    fn foliated_reduces_to_flat_in_minkowski() {
        use rand::Rng;
        let f = Foliation::minkowski();
        let mut rng = crate::mc::partition_rng(8, 0);
        for _ in 0..20 {
            let mut events = vec![Event::on_line(0.0, 0.0)];
            let mut t = 0.0;
            let mut x = 0.0;
            for _ in 0..6 {
                let dt = 0.2 + rng.gen::<f64>();
                let v: f64 = rng.gen::<f64>() * 1.6 - 0.8;
                t += dt;
                x += v * dt;
                events.push(Event::on_line(t, x));
            }
            let w = Worldline::new(events, 1.0).unwrap();
            let flat = proper_time_flat(&w);
            let fol = proper_time_foliated(&w, &f).unwrap();
            assert!((flat - fol).abs() < 1e-12, "flat {flat} vs foliated {fol}");
        }
    }

    #[test]
    fn foliated_rejects_spacelike_segment() {
        let f = Foliation {
            lapse: ScalarField::Constant(0.5),
            metric: MetricField::Identity,
        };
        // Fine in flat terms (|v| = 0.8 < 1) but spacelike once N = 0.5.
        let w = Worldline::new(
            vec![Event::on_line(0.0, 0.0), Event::on_line(1.0, 0.8)],
            1.0,
        )
        .unwrap();
        assert!(proper_time_foliated(&w, &f).is_err());
    }

    #[test]
    fn refinement_converges_at_second_order() {
        // Smoothly varying lapse along a moving path; self-convergence ratios.
        let f = Foliation {
            lapse: ScalarField::analytic(|t, x| 1.0 + 0.1 * (x[0].sin() + 0.5 * t.cos())),
            metric: MetricField::analytic(|_, x| SymMetric3::conformal(1.0 + 0.05 * x[0].cos())),
        };
        let base = Worldline::new(
            vec![Event::on_line(0.0, 0.0), Event::on_line(4.0, 1.2)],
            1.0,
        )
        .unwrap();
        let reference = proper_time_foliated(&base.refine(4096), &f).unwrap();
        let err = |parts: usize| (proper_time_foliated(&base.refine(parts), &f).unwrap() - reference).abs();
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!(r1 > 3.5 && r1 < 4.5, "ratio {r1}");
        assert!(r2 > 3.5 && r2 < 4.5, "ratio {r2}");
    }

    #[test]
    fn proper_length_identity_and_conformal() {
        let curve = [[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]];
        let l = proper_length(&curve, &MetricField::Identity, 0.0).unwrap();
        assert!((l - 5.0).abs() < 1e-12);

        let g = MetricField::Constant(SymMetric3::conformal(2.0));
        let l2 = proper_length(&curve, &g, 0.0).unwrap();
        assert!((l2 - 10.0).abs() < 1e-12);

        assert_eq!(proper_length(&[], &MetricField::Identity, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn proper_length_rejects_degenerate_metric() {
        let g = MetricField::Constant(SymMetric3::diag(1.0, 0.0, 1.0));
        assert!(proper_length(&[[0.0; 3], [1.0, 0.0, 0.0]], &g, 0.0).is_err());
    }

    #[test]
    fn unimodular_lapse_values() {
        assert_eq!(unimodular_lapse(&SymMetric3::identity()).unwrap(), 1.0);
        assert!((unimodular_lapse(&SymMetric3::diag(4.0, 1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let a: f64 = 1.3;
        let n = unimodular_lapse(&SymMetric3::conformal(a)).unwrap();
        assert!((n - a.powi(-3)).abs() < 1e-12);
        assert!(unimodular_lapse(&SymMetric3::diag(-1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn synchrony_rest_clocks_minkowski() {
        let f = Foliation::minkowski();
        let c1 = Worldline::at_rest([0.0; 3], 0.0, 2.0, 1.0).unwrap();
        let c2 = Worldline::at_rest([4.0, 0.0, 0.0], 0.0, 2.0, 1.0).unwrap();
        let rep = synchrony_report(&c1, &c2, &f, 0.0, 2.0, DEFAULT_SYNCHRONY_TOL).unwrap();
        assert!(rep.simultaneous && rep.synchronous);
    }

    #[test]
    fn lapse_gradient_desynchronizes_rest_clocks() {
        let (eps, l, dt) = (0.01, 3.0, 2.0);
        let f = Foliation {
            lapse: ScalarField::analytic(move |_, x| 1.0 + eps * x[0]),
            metric: MetricField::Identity,
        };
        let c1 = Worldline::at_rest([0.0; 3], 0.0, dt, 1.0).unwrap();
        let c2 = Worldline::at_rest([l, 0.0, 0.0], 0.0, dt, 1.0).unwrap();
        let rep = synchrony_report(&c1, &c2, &f, 0.0, dt, DEFAULT_SYNCHRONY_TOL).unwrap();
        assert!(rep.simultaneous && !rep.synchronous);
        assert!((rep.tau_gap() - eps * l * dt).abs() < 1e-12);
    }

    #[test]
    fn twin_trip_is_simultaneous_not_synchronous() {
        let f = Foliation::minkowski();
        let rest = Worldline::at_rest([0.0; 3], 0.0, 2.0, 1.0).unwrap();
        let mover = Worldline::new(
            vec![
                Event::on_line(0.0, 0.0),
                Event::on_line(1.0, 0.6),
                Event::on_line(2.0, 0.0),
            ],
            1.0,
        )
        .unwrap();
        let rep = synchrony_report(&rest, &mover, &f, 0.0, 2.0, 1e-9).unwrap();
        assert!(rep.simultaneous && !rep.synchronous);
        assert!((rep.tau_gap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn all_four_flag_combinations_are_realizable() {
        let eps = 0.01;
        let f = Foliation {
            lapse: ScalarField::analytic(move |_, x| 1.0 + eps * x[0]),
            metric: MetricField::Identity,
        };
        let tol = DEFAULT_SYNCHRONY_TOL;
        let rest0 = |t1: f64| Worldline::at_rest([0.0; 3], 0.0, t1, 1.0).unwrap();
        let rest_l = |t1: f64| Worldline::at_rest([5.0, 0.0, 0.0], 0.0, t1, 1.0).unwrap();

        // simultaneous ∧ synchronous: same height, same span.
        let r = compare_clock_paths(&rest0(2.0), &rest0(2.0), &f, tol).unwrap();
        assert!(r.simultaneous && r.synchronous);

        // simultaneous ∧ ¬synchronous: different heights, same span.
        let r = compare_clock_paths(&rest0(2.0), &rest_l(2.0), &f, tol).unwrap();
        assert!(r.simultaneous && !r.synchronous);

        // ¬simultaneous ∧ synchronous: spans chosen so proper times agree.
        // τ = (1 + εL)·Δt: clock at L over Δt = 2 matches clock at 0 over 2(1 + εL).
        let span = 2.0 * (1.0 + eps * 5.0);
        let r = compare_clock_paths(&rest0(span), &rest_l(2.0), &f, tol).unwrap();
        assert!(!r.simultaneous && r.synchronous, "gap {}", r.tau_gap());

        // ¬simultaneous ∧ ¬synchronous.
        let r = compare_clock_paths(&rest0(3.0), &rest_l(2.0), &f, tol).unwrap();
        assert!(!r.simultaneous && !r.synchronous);
    }

    #[test]
    fn synchrony_report_rejects_span_mismatch() {
        let f = Foliation::minkowski();
        let c1 = Worldline::at_rest([0.0; 3], 0.0, 1.0, 1.0).unwrap();
        let c2 = Worldline::at_rest([0.0; 3], 0.0, 3.0, 1.0).unwrap();
        assert!(synchrony_report(&c1, &c2, &f, 0.0, 2.0, 1e-9).is_err());
    }

    #[test]
    fn gridded_fields_interpolate_linearly() {
        // N(x) = 1 + 0.1 x sampled on a coarse grid is reproduced exactly
        // by multilinear interpolation.
        let spec = GridSpec {
            origin: [0.0, 0.0, 0.0, 0.0],
            step: [1.0, 2.0, 1.0, 1.0],
            count: [1, 6, 1, 1],
        };
        let values: Vec<f64> = (0..6).map(|i| 1.0 + 0.1 * (2.0 * i as f64)).collect();
        let field = ScalarField::grid(spec, values).unwrap();
        for &x in &[0.0, 0.7, 3.3, 9.9] {
            assert!((field.eval(0.5, [x, 0.0, 0.0]) - (1.0 + 0.1 * x)).abs() < 1e-12);
        }

        // Same scenario as the analytic desync case, now through the grid path.
        let f = Foliation {
            lapse: field,
            metric: MetricField::Identity,
        };
        let c1 = Worldline::at_rest([0.0; 3], 0.0, 2.0, 1.0).unwrap();
        let c2 = Worldline::at_rest([5.0, 0.0, 0.0], 0.0, 2.0, 1.0).unwrap();
        let rep = synchrony_report(&c1, &c2, &f, 0.0, 2.0, 1e-9).unwrap();
        assert!((rep.tau_gap() - 0.1 * 5.0 * 2.0).abs() < 1e-12);
    }
}
