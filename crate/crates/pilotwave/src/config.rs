//! Flat key–value experiment configuration.
//!
//! The format is line-based text: `key = value`, `#` starts a comment,
//! blank lines are ignored. Values are scalars, space-separated number
//! lists, or words. Every experiment kind declares its admissible keys;
//! unknown or duplicate keys are rejected before any computation runs, so
//! a config is either fully understood or refused.

use crate::signal::{Propagation, SignalExperiment};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Parsed but untyped `key = value` pairs.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    fn take_floats(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::Config(format!("key `{key}`: bad number `{tok}`")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    fn take_vec3(&mut self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        match self.take_floats(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
            Some(v) => Err(Error::Config(format!(
                "key `{key}`: expected 3 components, got {}",
                v.len()
            ))),
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("key `{key}`: expected a boolean, got `{v}`"))),
            },
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        Ok(())
    }
}

/// Parameter block of the singlet-pair study.
#[derive(Debug, Clone)]
pub struct SingletConfig {
    pub samples: usize,
    pub pair_count: usize,
    /// Piecewise-constant weights of the hidden-variable density (one cell
    /// each means the uniform equilibrium measure).
    pub rho_u: Vec<f64>,
    pub rho_w: Vec<f64>,
    pub m_fixed: [f64; 3],
    pub m_old: [f64; 3],
    pub m_new: [f64; 3],
}

/// Parameter block of the relaxation / equivariance studies.
#[derive(Debug, Clone)]
pub struct RelaxConfig {
    /// `relaxation`: superposition of the `modes_per_axis`² lowest box
    /// modes with seeded random phases, started from the ground density.
    /// `equivariance`: two-mode state started from `|Ψ₀|²`.
    pub variant: RelaxVariant,
    pub modes_per_axis: usize,
    pub box_side: f64,
    pub mass: f64,
    pub points: usize,
    pub cells: usize,
    pub t_final: f64,
    pub checkpoints: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxVariant {
    Relaxation,
    Equivariance,
}

/// Parameter block of the kinematics studies.
#[derive(Debug, Clone)]
pub struct KinematicsConfig {
    pub variant: KinematicsVariant,
    /// Flat: twin-trip speed. Foliated: unused.
    pub speed: f64,
    /// Flat: coordinate duration of the twin trip; foliated: slice span.
    pub duration: f64,
    /// Foliated lapse gradient `N = 1 + ε·x`.
    pub lapse_gradient: f64,
    /// Foliated clock separation.
    pub separation: f64,
    /// Worldline refinement segments for the foliated integrator.
    pub segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KinematicsVariant {
    Flat,
    Foliated,
}

/// One experiment with its module-specific block.
#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    Singlet(SingletConfig),
    Relax(RelaxConfig),
    Signal(Box<SignalExperiment>),
    Kinematics(KinematicsConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Singlet(_) => "singlet",
            ExperimentConfig::Relax(_) => "relax",
            ExperimentConfig::Signal(_) => "signal",
            ExperimentConfig::Kinematics(_) => "kinematics",
        }
    }
}

/// A fully validated run: experiment, seed, workers, output directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub output_dir: Option<String>,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Parses and validates the full schema. Rejects unknown keys.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let kind: String = raw.require("experiment")?;
        let seed: u64 = raw.require("seed")?;
        let workers: usize = raw.take_or("workers", 1)?;
        if workers == 0 {
            return Err(Error::Config("workers must be ≥ 1".into()));
        }
        let output_dir = raw.take("output_dir");

        let experiment = match kind.as_str() {
            "singlet" => {
                let cfg = SingletConfig {
                    samples: raw.take_or("samples", 1_000_000)?,
                    pair_count: raw.take_or("pair_count", 12)?,
                    rho_u: raw.take_floats("rho_u")?.unwrap_or_else(|| vec![1.0]),
                    rho_w: raw.take_floats("rho_w")?.unwrap_or_else(|| vec![1.0]),
                    m_fixed: raw.take_vec3("m_fixed", [0.0, 0.0, 1.0])?,
                    m_old: raw.take_vec3("m_old", [0.0, 0.0, 1.0])?,
                    m_new: raw.take_vec3("m_new", [1.0, 0.0, 0.0])?,
                };
                if cfg.samples == 0 || cfg.pair_count == 0 {
                    return Err(Error::Config("samples and pair_count must be ≥ 1".into()));
                }
                ExperimentConfig::Singlet(cfg)
            }
            "relax" => {
                let variant = match raw.take("variant").as_deref() {
                    None | Some("relaxation") => RelaxVariant::Relaxation,
                    Some("equivariance") => RelaxVariant::Equivariance,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown relax variant `{other}`")))
                    }
                };
                ExperimentConfig::Relax(RelaxConfig {
                    variant,
                    modes_per_axis: raw.take_or("modes_per_axis", 4)?,
                    box_side: raw.take_or("box_side", std::f64::consts::PI)?,
                    mass: raw.take_or("mass", 1.0)?,
                    points: raw.take_or("points", 100_000)?,
                    cells: raw.take_or("cells", 16)?,
                    t_final: raw.take_or("t_final", 4.0 * std::f64::consts::PI)?,
                    checkpoints: raw.take_or("checkpoints", 8)?,
                    tol: raw.take_or("tol", 1e-5)?,
                })
            }
            "signal" => {
                let reference = SignalExperiment::reference();
                let propagation = match raw.take("propagation").as_deref() {
                    None | Some("modes") => Propagation::OscillatorModes {
                        basis_size: raw.take_or("basis_size", 48)?,
                    },
                    Some("grid") => Propagation::GridCrankNicolson,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown propagation `{other}`")))
                    }
                };
                let cfg = SignalExperiment {
                    mass: raw.take_or("mass", reference.mass)?,
                    omega: raw.take_or("omega", reference.omega)?,
                    relative_phase: raw.take_or("relative_phase", reference.relative_phase)?,
                    switch_frequency: raw
                        .take_or("switch_frequency", reference.switch_frequency)?,
                    tilt: raw.take_or("tilt", reference.tilt)?,
                    epsilon: raw.take_or("epsilon", reference.epsilon)?,
                    skew_width: raw.take_or("skew_width", reference.skew_width)?,
                    half_width: raw.take_or("half_width", reference.half_width)?,
                    grid_nodes: raw.take_or("grid_nodes", reference.grid_nodes)?,
                    dt: raw.take_or("dt", reference.dt)?,
                    snapshot_stride: raw.take_or("snapshot_stride", reference.snapshot_stride)?,
                    observation_times: raw
                        .take_floats("times")?
                        .unwrap_or_else(|| reference.observation_times.clone()),
                    bins: raw.take_or("bins", reference.bins)?,
                    samples: raw.take_or("samples", reference.samples)?,
                    tol: raw.take_or("tol", reference.tol)?,
                    seed,
                    equilibrium: raw.take_bool("equilibrium", false)?,
                    switched: raw.take_bool("switched", true)?,
                    propagation,
                };
                ExperimentConfig::Signal(Box::new(cfg))
            }
            "kinematics" => {
                let variant = match raw.take("variant").as_deref() {
                    None | Some("flat") => KinematicsVariant::Flat,
                    Some("foliated") => KinematicsVariant::Foliated,
                    Some(other) => {
                        return Err(Error::Config(format!(
                            "unknown kinematics variant `{other}`"
                        )))
                    }
                };
                let cfg = KinematicsConfig {
                    variant,
                    speed: raw.take_or("speed", 0.6)?,
                    duration: raw.take_or("duration", 2.0)?,
                    lapse_gradient: raw.take_or("lapse_gradient", 0.01)?,
                    separation: raw.take_or("separation", 3.0)?,
                    segments: raw.take_or("segments", 10_000)?,
                };
                if cfg.speed.abs() >= 1.0 {
                    return Err(Error::Config("twin speed must satisfy |v| < 1".into()));
                }
                ExperimentConfig::Kinematics(cfg)
            }
            other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
        };
        raw.finish()?;
        Ok(RunConfig {
            seed,
            workers,
            output_dir,
            experiment,
        })
    }
}
