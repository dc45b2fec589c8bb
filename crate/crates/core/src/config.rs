//! JSON experiment configuration.
//!
//! Units: lengths in window units, rates per unit time (`b` per unit volume
//! per unit time, `m` per particle per unit time, kernel amplitude per
//! particle pair per unit time), times in model time units.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "sides": [10.0],
//!   "boundary": "periodic",
//!   "kernel": {"kind": "gaussian", "amplitude": 1.0, "range": 0.4},
//!   "b": {"kind": "constant", "value": 1.0},
//!   "m": {"kind": "constant", "value": 0.0},
//!   "theta0": 0.0,
//!   "initial": {"kind": "poisson", "density": {"kind": "constant", "value": 0.5}},
//!   "simulation": {"replicas": 200, "snapshots": [1, 2, 5]},
//!   "estimators": {"density_bins": [10], "radial_bins": 20, "cell_side": 1.0},
//!   "hierarchy": {"nodes": 256, "closure": "zero-third-cumulant"}
//! }
//! ```
//!
//! `boundary` is `"periodic"` or `{"kind": "absorbing", "buffer": w}`.
//! Fields are `constant {value}`, `tabulated {grid: {shape, values, lo?, hi?}}`,
//! `bump {base, amplitude, center, width}` or
//! `cosine {base, amplitude, axis, wavelength}`. Kernels are `none`,
//! `gaussian`, `exponential`, `top-hat` or `tabulated {values, r_cut}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierarchy::Closure;
use crate::model::{
    point_from_slice, Boundary, CompetitionKernel, Field, KernelShape, ModelParams, RateField, Region, Window,
};
use crate::simulator::{InitialCondition, ReplicaPlan, AUDIT_INTERVAL, DEFAULT_MAX_EVENTS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_cut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub replicas: usize,
    pub snapshots: Vec<f64>,
    pub max_events: u64,
    pub audit_interval: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            replicas: 100,
            snapshots: vec![1.0],
            max_events: DEFAULT_MAX_EVENTS,
            audit_interval: AUDIT_INTERVAL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSpec {
    /// Density bins per axis over the observation window.
    pub density_bins: Option<Vec<usize>>,
    pub radial_bins: usize,
    /// Defaults to half the smallest side.
    pub r_max: Option<f64>,
    /// Cubic cell side for the moment series; defaults to the smallest side.
    pub cell_side: Option<f64>,
    pub l_max: usize,
    pub n_max: usize,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            density_bins: None,
            radial_bins: 20,
            r_max: None,
            cell_side: None,
            l_max: 4,
            n_max: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchySpec {
    pub nodes: usize,
    pub closure: String,
    pub n_max: usize,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub snapshots: Option<Vec<f64>>,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec {
            nodes: 128,
            closure: Closure::default().name().to_string(),
            n_max: 2,
            dt: 1e-3,
            t_end: None,
            snapshots: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurgailisSpec {
    /// Output nodes per axis for the density grid.
    pub nodes: Option<usize>,
    pub times: Option<Vec<f64>>,
}

impl Default for SurgailisSpec {
    fn default() -> Self {
        SurgailisSpec { nodes: None, times: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub dimension: usize,
    pub sides: Vec<f64>,
    #[serde(default = "periodic_value")]
    pub boundary: Value,
    pub kernel: KernelSpec,
    pub b: FieldSpec,
    pub m: FieldSpec,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub estimators: EstimatorSpec,
    #[serde(default)]
    pub hierarchy: HierarchySpec,
    #[serde(default)]
    pub surgailis: SurgailisSpec,
}

fn periodic_value() -> Value {
    Value::String("periodic".into())
}

/// A parsed configuration with the hash of its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub file: ConfigFile,
    pub hash: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(extra) = boundary_unknown_keys(&file.boundary) {
            unknown.extend(extra);
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        let config = Config {
            file,
            hash: content_hash(text.as_bytes()),
        };
        config.params()?;
        config.initial()?;
        Ok(config)
    }

    pub fn window(&self) -> Result<Window> {
        let f = &self.file;
        if f.sides.len() != f.dimension {
            return Err(Error::Config(format!(
                "dimension {} but {} sides given",
                f.dimension,
                f.sides.len()
            )));
        }
        Window::new(&f.sides, parse_boundary(&f.boundary)?)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let window = self.window()?;
        let domain = window.domain();
        let dim = window.dim();
        let kernel = build_kernel(&self.file.kernel, dim)?;
        let b = build_field(&self.file.b, &domain, "b")?;
        let m = build_field(&self.file.m, &domain, "m")?;
        ModelParams::new(window, kernel, RateField::new(b, m), self.file.theta0)
    }

    pub fn initial(&self) -> Result<InitialCondition> {
        let window = self.window()?;
        let Some(spec) = &self.file.initial else {
            return Ok(InitialCondition::Empty);
        };
        match spec.kind.as_str() {
            "empty" => Ok(InitialCondition::Empty),
            "poisson" => {
                let d = spec
                    .density
                    .as_ref()
                    .ok_or_else(|| Error::Config("poisson initial state needs a density".into()))?;
                Ok(InitialCondition::Poisson(build_field(d, &window.domain(), "initial.density")?))
            }
            "explicit" => {
                let pts = spec
                    .points
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit initial state needs points".into()))?;
                let pts = pts
                    .iter()
                    .map(|p| point_from_slice(window.dim(), p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InitialCondition::Explicit(pts))
            }
            other => Err(Error::Config(format!("unknown initial kind {other:?}"))),
        }
    }

    /// Initial density as a field: the Poisson intensity, or zero.
    pub fn initial_density(&self) -> Result<Option<Field>> {
        Ok(match self.initial()? {
            InitialCondition::Poisson(f) => Some(f),
            InitialCondition::Empty => Some(Field::Constant(0.0)),
            InitialCondition::Explicit(_) => None,
        })
    }

    pub fn plan(&self, seed: u64) -> Result<ReplicaPlan> {
        let s = &self.file.simulation;
        let mut plan = ReplicaPlan::new(s.replicas, seed, s.snapshots.clone(), self.initial()?);
        plan.max_events = s.max_events;
        plan.audit_interval = s.audit_interval.max(1);
        plan.validate()?;
        Ok(plan)
    }

    pub fn closure(&self) -> Result<Closure> {
        self.file.hierarchy.closure.parse()
    }
}

fn parse_boundary(v: &Value) -> Result<Boundary> {
    match v {
        Value::String(s) if s == "periodic" => Ok(Boundary::Periodic),
        Value::Object(map) => match map.get("kind").and_then(Value::as_str) {
            Some("periodic") => Ok(Boundary::Periodic),
            Some("absorbing") => {
                let buffer = map
                    .get("buffer")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Config("absorbing boundary needs a numeric buffer".into()))?;
                Ok(Boundary::Absorbing { buffer })
            }
            other => Err(Error::Config(format!("unknown boundary kind {other:?}"))),
        },
        other => Err(Error::Config(format!("invalid boundary {other}"))),
    }
}

fn boundary_unknown_keys(v: &Value) -> Option<Vec<String>> {
    let map = v.as_object()?;
    let extra: Vec<String> = map
        .keys()
        .filter(|k| !matches!(k.as_str(), "kind" | "buffer"))
        .map(|k| format!("boundary.{k}"))
        .collect();
    (!extra.is_empty()).then_some(extra)
}

fn need(v: Option<f64>, what: &str, key: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("{what} needs `{key}`")))
}

fn build_field(spec: &FieldSpec, domain: &Region, what: &str) -> Result<Field> {
    match spec.kind.as_str() {
        "constant" => Field::constant(need(spec.value, what, "value")?),
        "tabulated" => {
            let g = spec
                .grid
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{what} needs `grid`")))?;
            let region = match (&g.lo, &g.hi) {
                (Some(lo), Some(hi)) => Region::new(domain.dim, lo, hi)?,
                (None, None) => domain.clone(),
                _ => return Err(Error::Config(format!("{what}: give both grid.lo and grid.hi or neither"))),
            };
            Field::tabulated(region, &g.shape, g.values.clone())
        }
        "bump" => {
            let center = spec
                .center
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{what} needs `center`")))?;
            Field::bump(
                need(spec.base, what, "base")?,
                need(spec.amplitude, what, "amplitude")?,
                point_from_slice(domain.dim, center)?,
                need(spec.width, what, "width")?,
            )
        }
        "cosine" => Field::cosine(
            need(spec.base, what, "base")?,
            need(spec.amplitude, what, "amplitude")?,
            spec.axis.unwrap_or(0),
            need(spec.wavelength, what, "wavelength")?,
        ),
        other => Err(Error::Config(format!("{what}: unknown field kind {other:?}"))),
    }
}

fn build_kernel(spec: &KernelSpec, dim: usize) -> Result<CompetitionKernel> {
    let shape = match spec.kind.as_str() {
        "none" | "zero" => return CompetitionKernel::zero(dim),
        "gaussian" => KernelShape::Gaussian,
        "exponential" => KernelShape::Exponential,
        "top-hat" | "tophat" => KernelShape::TopHat,
        "tabulated" => KernelShape::Tabulated(
            spec.values
                .clone()
                .ok_or_else(|| Error::Config("tabulated kernel needs `values`".into()))?,
        ),
        other => return Err(Error::Config(format!("unknown kernel kind {other:?}"))),
    };
    CompetitionKernel::new(shape, dim, spec.amplitude, spec.range, spec.r_cut)
}
