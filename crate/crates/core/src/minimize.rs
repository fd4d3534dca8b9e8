//! Projected gradient descent on `|m| = m_s`.
//!
//! Each step moves along the tangential effective field, renormalizes
//! cellwise, and backtracks until an Armijo condition holds. Trial steps
//! start from a Barzilai-Borwein estimate. For `F_ε` the stray field is
//! re-solved at every evaluation, so every accepted iterate satisfies the
//! Maxwell constraints by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    effective_field, feps_energy, limit_energy_terms, limit_field, limit_stray_field,
    saturation_error, EnergyError, EnergyReport, MaterialParams, SampleGeometry, SATURATION_TOL,
};
use crate::spectral::{SpectralError, VectorField};

/// Trial steps shorter than this abort the line search.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error("invalid minimizer config: {0}")]
    Config(String),
    #[error("cannot normalize zero magnetization at film cell {0:?}")]
    ZeroCell([usize; 3]),
    #[error("line search failed after {} iterations (step below {MIN_STEP:e}); last total {}", .0.iterations, .0.report.total)]
    LineSearch(Box<MinimizeResult>),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

impl From<SpectralError> for MinimizeError {
    fn from(e: SpectralError) -> Self {
        Self::Energy(e.into())
    }
}

/// Starting magnetization.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    /// Uniform along the first easy axis of the anisotropy, else `e₁`.
    #[default]
    EasyAxis,
    Uniform([f64; 3]),
    /// Independent uniformly distributed directions per cell.
    Random,
    /// Random directions in the `x₁x₂` plane.
    RandomInPlane,
    Field(VectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub seed: u64,
    pub init: InitialState,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            step0: 1e-3,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            seed: 0,
            init: InitialState::EasyAxis,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<(), MinimizeError> {
        let bad = |msg: String| Err(MinimizeError::Config(msg));
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            ));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad(format!(
                "armijo_shrink must lie in (0, 1), got {}",
                self.armijo_shrink
            ));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return bad(format!("grad_tol must be > 0, got {}", self.grad_tol));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad(format!("step0 must be > 0, got {}", self.step0));
        }
        Ok(())
    }
}

/// One row of the audit trail. Row 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub step: f64,
    pub exchange: f64,
    pub anisotropy: f64,
    pub stray: f64,
    pub total: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub m_final: VectorField,
    pub h_final: VectorField,
    pub report: EnergyReport,
    pub iterations: usize,
    pub converged: bool,
    /// `‖H_t‖_{L²}` at the final iterate.
    pub residual: f64,
    pub trail: Vec<IterationRecord>,
}

/// `m ↦ m_s m/|m|` on the film, zero elsewhere.
pub fn renormalize_sphere(
    m: &VectorField,
    geom: &SampleGeometry,
    m_s: f64,
) -> Result<VectorField, MinimizeError> {
    let grid = *m.grid();
    let mut out = VectorField::zeros(grid, 3);
    for idx in geom.film_cells() {
        let v = m.at(idx);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(n > 0.0) {
            return Err(MinimizeError::ZeroCell(grid.multi_index(idx)));
        }
        let o = out.at_mut(idx);
        for k in 0..3 {
            o[k] = m_s * v[k] / n;
        }
    }
    Ok(out)
}

/// Initial field for `init` on `geom`, already saturated.
pub fn initial_state(
    init: &InitialState,
    geom: &SampleGeometry,
    params: &MaterialParams,
    seed: u64,
) -> Result<VectorField, MinimizeError> {
    let grid = *geom.grid();
    let raw = match init {
        InitialState::EasyAxis => {
            geom.uniform(params.anisotropy.easy_axis().unwrap_or([1.0, 0.0, 0.0]))
        }
        InitialState::Uniform(v) => geom.uniform(*v),
        InitialState::Random | InitialState::RandomInPlane => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let planar = matches!(init, InitialState::RandomInPlane);
            let mut m = VectorField::zeros(grid, 3);
            for idx in geom.film_cells() {
                let o = m.at_mut(idx);
                for (k, v) in o.iter_mut().enumerate() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v = if planar && k == 2 { 0.0 } else { g };
                }
            }
            m
        }
        InitialState::Field(f) => {
            geom.check_field(f, 3)?;
            f.clone().with_eps(grid.eps()).map_err(EnergyError::from)?
        }
    };
    renormalize_sphere(&raw, geom, params.m_s)
}

/// Tangential part `H − (H·m) m / m_s²` on the film.
fn tangential(
    field: &VectorField,
    m: &VectorField,
    geom: &SampleGeometry,
    m_s: f64,
) -> VectorField {
    let mut out = VectorField::zeros(*m.grid(), 3);
    for idx in geom.film_cells() {
        let (hv, mv) = (field.at(idx), m.at(idx));
        let c = (hv[0] * mv[0] + hv[1] * mv[1] + hv[2] * mv[2]) / (m_s * m_s);
        let o = out.at_mut(idx);
        for k in 0..3 {
            o[k] = hv[k] - c * mv[k];
        }
    }
    out
}

trait Objective {
    fn geometry(&self) -> &SampleGeometry;
    fn m_s(&self) -> f64;
    /// Energy and the induced field paired with `m`.
    fn evaluate(&self, m: &VectorField) -> Result<(VectorField, EnergyReport), MinimizeError>;
    /// `−δF/δm`.
    fn field(&self, m: &VectorField, h: &VectorField) -> Result<VectorField, MinimizeError>;
}

struct Feps<'a> {
    geom: &'a SampleGeometry,
    params: &'a MaterialParams,
}

impl Objective for Feps<'_> {
    fn geometry(&self) -> &SampleGeometry {
        self.geom
    }
    fn m_s(&self) -> f64 {
        self.params.m_s
    }
    fn evaluate(&self, m: &VectorField) -> Result<(VectorField, EnergyReport), MinimizeError> {
        Ok(feps_energy(m, self.geom, self.params)?)
    }
    fn field(&self, m: &VectorField, h: &VectorField) -> Result<VectorField, MinimizeError> {
        Ok(effective_field(m, h, self.geom, self.params))
    }
}

struct Reduced<'a> {
    plane: SampleGeometry,
    params: &'a MaterialParams,
}

impl Objective for Reduced<'_> {
    fn geometry(&self) -> &SampleGeometry {
        &self.plane
    }
    fn m_s(&self) -> f64 {
        self.params.m_s
    }
    fn evaluate(&self, m: &VectorField) -> Result<(VectorField, EnergyReport), MinimizeError> {
        let mut report = limit_energy_terms(m, &self.plane, self.params);
        let (err, cell) = saturation_error(m, &self.plane, self.params.m_s);
        if err > SATURATION_TOL * self.params.m_s {
            report.total = f64::INFINITY;
            report.feasible = false;
            report.violation = Some(format!("saturation defect {err:.3e} at cell {cell:?}"));
        }
        Ok((limit_stray_field(m), report))
    }
    fn field(&self, m: &VectorField, _h: &VectorField) -> Result<VectorField, MinimizeError> {
        Ok(limit_field(m, &self.plane, self.params)?)
    }
}

fn record(iter: usize, step: f64, r: &EnergyReport, grad_norm: f64) -> IterationRecord {
    IterationRecord {
        iter,
        step,
        exchange: r.exchange,
        anisotropy: r.anisotropy,
        stray: r.stray,
        total: r.total,
        grad_norm,
    }
}

fn run(
    obj: &dyn Objective,
    m0: VectorField,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult, MinimizeError> {
    let geom = obj.geometry();
    let m_s = obj.m_s();
    let mut m = m0;
    let (mut h, mut report) = obj.evaluate(&m)?;
    let mut ht = tangential(&obj.field(&m, &h)?, &m, geom, m_s);
    let mut grad = ht.l2_norm();
    let mut trail = vec![record(0, 0.0, &report, grad)];
    let mut prev: Option<(VectorField, VectorField)> = None;
    let mut step = cfg.step0;
    let mut iterations = 0;

    let finish = |m, h, report, iterations, converged, residual, trail| MinimizeResult {
        m_final: m,
        h_final: h,
        report,
        iterations,
        converged,
        residual,
        trail,
    };

    while grad >= cfg.grad_tol && iterations < cfg.max_iters {
        if let Some((pm, pht)) = &prev {
            // BB1 with gradient g = −H_t
            let s = m.sub(pm)?;
            let y = pht.sub(&ht)?;
            let sy = s.dot(&y);
            if sy > 0.0 {
                step = s.dot(&s) / sy;
            } else {
                step /= cfg.armijo_shrink;
            }
        }
        let slack = 4.0 * f64::EPSILON * report.total.abs().max(1.0);
        let accepted = loop {
            if step < MIN_STEP {
                break None;
            }
            let trial = renormalize_sphere(&m.axpy(step, &ht)?, geom, m_s)?;
            let (th, tr) = obj.evaluate(&trial)?;
            let decrease = ht.dot(&trial.sub(&m)?);
            if tr.total <= report.total - cfg.armijo_c * decrease + slack {
                break Some((trial, th, tr));
            }
            step *= cfg.armijo_shrink;
        };
        let Some((nm, nh, nr)) = accepted else {
            let result = finish(m, h, report, iterations, false, grad, trail);
            return Err(MinimizeError::LineSearch(Box::new(result)));
        };
        assert!(
            nr.total <= report.total + 1e-12 * report.total.abs().max(1.0),
            "energy increased across an accepted step"
        );
        iterations += 1;
        let nht = tangential(&obj.field(&nm, &nh)?, &nm, geom, m_s);
        prev = Some((
            std::mem::replace(&mut m, nm),
            std::mem::replace(&mut ht, nht),
        ));
        h = nh;
        report = nr;
        grad = ht.l2_norm();
        trail.push(record(iterations, step, &report, grad));
    }
    let converged = grad < cfg.grad_tol;
    Ok(finish(m, h, report, iterations, converged, grad, trail))
}

/// Minimize `F_ε` over `m` with `h = solve_magnetostatics(m)`, `ε` taken
/// from the geometry's grid.
pub fn minimize_feps(
    geom: &SampleGeometry,
    params: &MaterialParams,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult, MinimizeError> {
    cfg.validate()?;
    let m0 = initial_state(&cfg.init, geom, params, cfg.seed)?;
    run(&Feps { geom, params }, m0, cfg)
}

/// Minimize the reduced limit functional `F̃₀` on the cross section of
/// `geom`; the reported field is `h = −(0, 0, m₃)`.
pub fn minimize_limit2d(
    geom: &SampleGeometry,
    params: &MaterialParams,
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult, MinimizeError> {
    cfg.validate()?;
    let plane = if geom.grid().counts()[2] == 1 {
        geom.clone()
    } else {
        geom.cross_section()
    };
    let m0 = initial_state(&cfg.init, &plane, params, cfg.seed)?;
    run(&Reduced { plane, params }, m0, cfg)
}
