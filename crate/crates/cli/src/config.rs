//! TOML run configuration. Every section rejects unknown keys, and
//! validation errors name the offending key path.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thinfilm::energy::{AnisotropyModel, MaterialParams, SampleGeometry};
use thinfilm::minimize::{InitialState, MinimizeConfig};
use thinfilm::spectral::{read_crml_file, SpectralGrid};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub minimize: MinimizeSection,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub io: IoConfig,
}

/// Box resolution and size. Give either `lengths` or `padding`; the latter
/// sizes the box as a multiple of the film's bounding box.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub counts: [usize; 3],
    pub lengths: Option<[f64; 3]>,
    pub padding: Option<[f64; 3]>,
    #[serde(default = "one")]
    pub eps: f64,
}

fn one() -> f64 {
    1.0
}

/// Cross section `ω`, centered in the box, in physical units.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum OmegaShape {
    #[default]
    Full,
    Disk {
        r: f64,
    },
    Rect {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub omega: OmegaShape,
    /// Film thickness in rescaled units.
    #[serde(default = "one")]
    pub thickness: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            omega: OmegaShape::Full,
            thickness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub alpha: f64,
    pub m_s: f64,
    #[serde(default)]
    pub anisotropy: AnisotropyModel,
}

#[derive(Debug, Clone, Deserialize, Default, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitConfig {
    #[default]
    EasyAxis,
    Uniform {
        axis: [f64; 3],
    },
    Random,
    RandomInPlane,
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    /// The thin-film energy at the grid's `ε`.
    #[default]
    Feps,
    /// The reduced 2-D limit functional.
    Limit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeSection {
    #[serde(default)]
    pub functional: Functional,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "defaults::step0")]
    pub step0: f64,
    #[serde(default = "defaults::armijo_c")]
    pub armijo_c: f64,
    #[serde(default = "defaults::armijo_shrink")]
    pub armijo_shrink: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitConfig,
}

mod defaults {
    use thinfilm::minimize::MinimizeConfig;

    pub fn max_iters() -> usize {
        MinimizeConfig::default().max_iters
    }
    pub fn grad_tol() -> f64 {
        MinimizeConfig::default().grad_tol
    }
    pub fn step0() -> f64 {
        MinimizeConfig::default().step0
    }
    pub fn armijo_c() -> f64 {
        MinimizeConfig::default().armijo_c
    }
    pub fn armijo_shrink() -> f64 {
        MinimizeConfig::default().armijo_shrink
    }
}

impl Default for MinimizeSection {
    fn default() -> Self {
        let d = MinimizeConfig::default();
        Self {
            functional: Functional::Feps,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            step0: d.step0,
            armijo_c: d.armijo_c,
            armijo_shrink: d.armijo_shrink,
            seed: d.seed,
            init: InitConfig::EasyAxis,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "defaults_schedule")]
    pub eps: Vec<f64>,
}

fn defaults_schedule() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125]
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: defaults_schedule(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default = "default_out")]
    pub output_directory: PathBuf,
    /// Write CRML field files alongside the tables.
    #[serde(default = "yes")]
    pub write_fields: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            output_directory: default_out(),
            write_fields: true,
        }
    }
}

/// Everything a subcommand needs, checked against the library invariants.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub geom: SampleGeometry,
    pub params: MaterialParams,
    pub minimize: MinimizeConfig,
    pub functional: Functional,
    pub schedule: Vec<f64>,
    pub out: PathBuf,
    pub write_fields: bool,
    /// Box edge over film extent along each axis.
    pub padding: [f64; 3],
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Film bounding box `[w₁, w₂, thickness]`, `None` in-plane for `Full`.
    fn film_extent(&self) -> [Option<f64>; 3] {
        let t = Some(self.geometry.thickness);
        match self.geometry.omega {
            OmegaShape::Full => [None, None, t],
            OmegaShape::Disk { r } => [Some(2.0 * r), Some(2.0 * r), t],
            OmegaShape::Rect { a, b } => [Some(a), Some(b), t],
        }
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let g = &self.grid;
        if g.counts.contains(&0) {
            return Err(invalid("grid.counts", "every count must be positive"));
        }
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(
                    key,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        positive("grid.eps", g.eps)?;
        positive("geometry.thickness", self.geometry.thickness)?;
        match self.geometry.omega {
            OmegaShape::Full => {}
            OmegaShape::Disk { r } => positive("geometry.omega.r", r)?,
            OmegaShape::Rect { a, b } => {
                positive("geometry.omega.a", a)?;
                positive("geometry.omega.b", b)?;
            }
        }
        let extent = self.film_extent();
        let lengths = match (g.lengths, g.padding) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "grid",
                    "give either `lengths` or `padding`, not both",
                ))
            }
            (None, None) => {
                return Err(invalid("grid", "one of `lengths` or `padding` is required"))
            }
            (Some(l), None) => {
                for (a, v) in l.iter().enumerate() {
                    positive(&format!("grid.lengths[{a}]"), *v)?;
                }
                l
            }
            (None, Some(p)) => {
                let mut l = [0.0; 3];
                for a in 0..3 {
                    let key = format!("grid.padding[{a}]");
                    positive(&key, p[a])?;
                    l[a] = match extent[a] {
                        Some(w) => p[a] * w,
                        None => {
                            return Err(invalid(
                                &key,
                                "padding needs a bounded cross section; use grid.lengths with omega = full",
                            ))
                        }
                    };
                }
                l
            }
        };
        let grid = SpectralGrid::new(g.counts, lengths, g.eps)
            .map_err(|e| invalid("grid", e.to_string()))?;

        let [n1, n2, n3] = g.counts;
        let h = [grid.spacing(0), grid.spacing(1), grid.spacing(2)];
        let layers_f = self.geometry.thickness / h[2];
        let layers = layers_f.round() as usize;
        if layers == 0 || layers > n3 || (layers_f - layers as f64).abs() > 1e-9 * layers_f.max(1.0)
        {
            return Err(invalid(
                "geometry.thickness",
                format!(
                    "must be a whole number of cells between 1 and N3 = {n3} (cell height {})",
                    h[2]
                ),
            ));
        }
        let o3 = (n3 - layers) / 2;
        let centre = [lengths[0] / 2.0, lengths[1] / 2.0];
        let mut mask = vec![false; n1 * n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                // cell centres relative to the box centre
                let x = (i1 as f64 + 0.5) * h[0] - centre[0];
                let y = (i2 as f64 + 0.5) * h[1] - centre[1];
                mask[i1 * n2 + i2] = match self.geometry.omega {
                    OmegaShape::Full => true,
                    OmegaShape::Disk { r } => x * x + y * y <= r * r,
                    OmegaShape::Rect { a, b } => x.abs() <= a / 2.0 && y.abs() <= b / 2.0,
                };
            }
        }
        let geom = SampleGeometry::new(grid, mask, o3..o3 + layers)
            .map_err(|e| invalid("geometry", e.to_string()))?;

        let params = MaterialParams::new(
            self.material.alpha,
            self.material.m_s,
            self.material.anisotropy.clone(),
        )
        .map_err(|e| invalid("material", e.to_string()))?;

        let m = &self.minimize;
        let init = match &m.init {
            InitConfig::EasyAxis => InitialState::EasyAxis,
            InitConfig::Uniform { axis } => InitialState::Uniform(*axis),
            InitConfig::Random => InitialState::Random,
            InitConfig::RandomInPlane => InitialState::RandomInPlane,
            InitConfig::File { path } => {
                let f = read_crml_file(path)
                    .map_err(|e| invalid("minimize.init.path", e.to_string()))?;
                if f.grid().counts() != g.counts || f.channels() != 3 {
                    return Err(invalid(
                        "minimize.init.path",
                        format!(
                            "field is {:?} with {} channels, expected {:?} with 3",
                            f.grid().counts(),
                            f.channels(),
                            g.counts
                        ),
                    ));
                }
                InitialState::Field(
                    f.with_eps(g.eps)
                        .map_err(|e| invalid("minimize.init.path", e.to_string()))?,
                )
            }
        };
        let minimize = MinimizeConfig {
            max_iters: m.max_iters,
            grad_tol: m.grad_tol,
            step0: m.step0,
            armijo_c: m.armijo_c,
            armijo_shrink: m.armijo_shrink,
            seed: m.seed,
            init,
        };
        minimize
            .validate()
            .map_err(|e| invalid("minimize", e.to_string()))?;

        let s = &self.sweep.eps;
        if s.is_empty()
            || s.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || s.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(invalid(
                "sweep.eps",
                "must be nonempty, positive and strictly decreasing",
            ));
        }

        let padding = std::array::from_fn(|a| match extent[a] {
            Some(w) => lengths[a] / w,
            None => 1.0,
        });
        Ok(Resolved {
            geom,
            params,
            minimize,
            functional: m.functional,
            schedule: s.clone(),
            out: self.io.output_directory.clone(),
            write_fields: self.io.write_fields,
            padding,
        })
    }
}
