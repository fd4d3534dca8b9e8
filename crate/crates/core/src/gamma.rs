//! Numerical witnesses for the thin-film Γ-limit: ε-sweeps of minimizers,
//! compactness diagnostics, limit-space membership and the explicit
//! recovery sequence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    d3_norm, grad_eps_norm, limit_energy_3d, maxwell_residual, saturation_error, total_energy,
    EnergyError, MaterialParams, SampleGeometry,
};
use crate::minimize::{
    minimize_feps, minimize_limit2d, InitialState, MinimizeConfig, MinimizeError, MinimizeResult,
};
use crate::spectral::{
    constraint_row_residuals, split_zero_plane, AfreeProjector, SpectralError, VectorField,
};
use crate::symbol::OperatorSpec;

/// Relative slack when testing that a sequence decreases.
pub const MONOTONE_RTOL: f64 = 1e-9;
/// Absolute slack when testing that a sequence decreases.
pub const MONOTONE_ATOL: f64 = 1e-14;
/// Number of trailing entries inspected by [`decreasing_tail`].
pub const TAIL: usize = 3;

#[derive(Debug, Error)]
pub enum GammaError {
    #[error("eps schedule must be nonempty, positive and strictly decreasing")]
    BadSchedule,
    #[error("recovery input invalid: {0}")]
    Input(String),
    #[error("need at least {0} results")]
    TooFew(usize),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Minimize(#[from] MinimizeError),
}

impl From<SpectralError> for GammaError {
    fn from(e: SpectralError) -> Self {
        Self::Energy(e.into())
    }
}

/// `x[i+1] ≤ x[i]` over the last [`TAIL`] entries, up to roundoff slack.
pub fn decreasing_tail(x: &[f64]) -> bool {
    let tail = &x[x.len().saturating_sub(TAIL)..];
    tail.windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + MONOTONE_RTOL) + MONOTONE_ATOL)
}

fn check_schedule(eps: &[f64]) -> Result<(), GammaError> {
    let ok = !eps.is_empty()
        && eps.iter().all(|e| e.is_finite() && *e > 0.0)
        && eps.windows(2).all(|w| w[1] < w[0]);
    if ok {
        Ok(())
    } else {
        Err(GammaError::BadSchedule)
    }
}

/// `‖h + (0, 0, m₃) χ_{Ω₁}‖_{L²}` over the box.
pub fn reduced_field_gap(m: &VectorField, h: &VectorField, geom: &SampleGeometry) -> f64 {
    let mut d = h.clone();
    for idx in geom.film_cells() {
        d.at_mut(idx)[2] += m.at(idx)[2];
    }
    d.l2_norm()
}

/// Residuals of the limit-space conditions for a pair `(m, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitMembership {
    /// `L²` norms of the four rows of `A₀^mag (m, h)`.
    pub row_residuals: [f64; 4],
    pub d3m_norm: f64,
    pub saturation_error: f64,
    /// `‖h + (0, 0, m₃) χ‖`, which vanishes on the reduced limit space.
    pub reduced_gap: f64,
    /// All limit-space residuals below `tol`.
    pub in_limit_space: bool,
    pub tol: f64,
}

/// Evaluate the limit-space conditions `A₀^mag (m, h) = 0`, `∂₃m = 0` and
/// `|m| = m_s`, together with the reduced-field gap. Pure diagnostics.
pub fn check_limit_membership(
    m: &VectorField,
    h: &VectorField,
    geom: &SampleGeometry,
    m_s: f64,
    tol: f64,
) -> Result<LimitMembership, GammaError> {
    let limit = OperatorSpec::maxwell()
        .limit_operator()
        .expect("Maxwell operator satisfies the row-rule hypothesis");
    let u = VectorField::stack(&[m, h])?;
    let rows = constraint_row_residuals(&u, &limit, false)?;
    let row_residuals = [rows[0], rows[1], rows[2], rows[3]];
    let d3m_norm = d3_norm(m, geom);
    let (saturation_error, _) = saturation_error(m, geom, m_s);
    let in_limit_space = row_residuals.iter().all(|r| *r < tol)
        && d3m_norm < tol
        && saturation_error < tol * m_s.max(1.0);
    Ok(LimitMembership {
        row_residuals,
        d3m_norm,
        saturation_error,
        reduced_gap: reduced_field_gap(m, h, geom),
        in_limit_space,
        tol,
    })
}

/// A limit-space pair `(m₀, h₀)` to be approximated by a recovery sequence.
#[derive(Debug, Clone)]
pub struct RecoveryInput {
    m0: VectorField,
    h0: VectorField,
}

impl RecoveryInput {
    /// Validates `∂₃m₀ = 0` exactly, `|m₀| = m_s` on the film and a limit
    /// constraint residual below `1e-10`.
    pub fn new(
        m0: VectorField,
        h0: VectorField,
        geom: &SampleGeometry,
        m_s: f64,
    ) -> Result<Self, GammaError> {
        if m0.channels() != 3 || h0.channels() != 3 {
            return Err(GammaError::Input("m0 and h0 need 3 channels".into()));
        }
        let d3 = d3_norm(&m0, geom);
        if d3 != 0.0 {
            return Err(GammaError::Input(format!(
                "m0 varies along x3 (‖∂₃m₀‖ = {d3:.3e})"
            )));
        }
        let mem = check_limit_membership(&m0, &h0, geom, m_s, 1e-10)?;
        if !mem.in_limit_space {
            return Err(GammaError::Input(format!(
                "pair is not in the limit space: rows {:?}, saturation {:.3e}",
                mem.row_residuals, mem.saturation_error
            )));
        }
        Ok(Self { m0, h0 })
    }

    /// The reduced-limit pair `h₀ = −(0, 0, m₃) χ_{Ω₁}` built from `m₀`.
    pub fn reduced(m0: VectorField, geom: &SampleGeometry, m_s: f64) -> Result<Self, GammaError> {
        let mut h0 = VectorField::zeros(*m0.grid(), 3);
        for idx in geom.film_cells() {
            h0.at_mut(idx)[2] = -m0.at(idx)[2];
        }
        Self::new(m0, h0, geom, m_s)
    }

    pub fn m0(&self) -> &VectorField {
        &self.m0
    }

    pub fn h0(&self) -> &VectorField {
        &self.h0
    }
}

/// `(m_ε, h_ε)` with `m_ε = m₀` and `h_ε = 𝒫_{curl_ε}(ĥ_ε − m₀ + m̂_ε)`,
/// where `(m̂_ε, ĥ_ε)` is the `A_ε^mag`-free projection of the part of
/// `(m₀, h₀)` off the `k₃ = 0` plane.
pub fn recovery_sequence(
    inp: &RecoveryInput,
    eps: f64,
) -> Result<(VectorField, VectorField), GammaError> {
    let m0 = inp.m0.clone().with_eps(eps)?;
    let h0 = inp.h0.clone().with_eps(eps)?;
    let grid = *m0.grid();
    let (u1, _) = split_zero_plane(&VectorField::stack(&[&m0, &h0])?);
    let proj = AfreeProjector::new(&OperatorSpec::maxwell(), grid, true)?.apply(&u1)?;
    let m_hat = proj.channel_range(0..3);
    let h_hat = proj.channel_range(3..6);
    let target = h_hat.sub(&m0)?.add(&m_hat)?;
    let h_eps = AfreeProjector::new(&OperatorSpec::curl(), grid, true)?.apply(&target)?;
    Ok((m0, h_eps))
}

/// One row of a recovery-sequence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub eps: f64,
    pub energy_eps: f64,
    pub energy_limit: f64,
    pub energy_gap: f64,
    pub h_distance: f64,
    pub maxwell_residual: f64,
    pub saturation_error: f64,
}

/// Run [`recovery_sequence`] along `schedule` and evaluate `F_ε` against
/// `F₀[m₀, h₀]`.
pub fn recovery_sweep(
    inp: &RecoveryInput,
    geom: &SampleGeometry,
    params: &MaterialParams,
    schedule: &[f64],
) -> Result<Vec<RecoveryRecord>, GammaError> {
    check_schedule(schedule)?;
    let limit = limit_energy_3d(&inp.m0, &inp.h0, geom, params).total;
    schedule
        .iter()
        .map(|&eps| {
            let (m, h) = recovery_sequence(inp, eps)?;
            let report = total_energy(&m, &h, geom, params)?;
            Ok(RecoveryRecord {
                eps,
                energy_eps: report.total,
                energy_limit: limit,
                energy_gap: (report.total - limit).abs(),
                h_distance: h.sub(&inp.h0)?.l2_norm(),
                maxwell_residual: maxwell_residual(&m, &h)?,
                saturation_error: saturation_error(&m, geom, params.m_s).0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub energy_eps: f64,
    pub energy_limit: f64,
    pub d3m_norm: f64,
    pub h_gap: f64,
    pub maxwell_residual: f64,
    pub saturation_error: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
    pub limit: MinimizeResult,
    pub results: Vec<MinimizeResult>,
}

fn record_for(
    eps: f64,
    r: &MinimizeResult,
    geom: &SampleGeometry,
    m_s: f64,
    limit: f64,
    failure: Option<String>,
) -> Result<SweepRecord, GammaError> {
    Ok(SweepRecord {
        eps,
        energy_eps: r.report.total,
        energy_limit: limit,
        d3m_norm: d3_norm(&r.m_final, geom),
        h_gap: reduced_field_gap(&r.m_final, &r.h_final, geom),
        maxwell_residual: maxwell_residual(&r.m_final, &r.h_final)?,
        saturation_error: saturation_error(&r.m_final, geom, m_s).0,
        converged: r.converged,
        iterations: r.iterations,
        failure,
    })
}

/// Tail-monotonicity checks on a completed list of records.
pub fn summarize(records: &[SweepRecord], mut notes: Vec<String>) -> SweepSummary {
    if records.len() < TAIL {
        notes.push(format!(
            "insufficient points: {} records, need {TAIL}",
            records.len()
        ));
        return SweepSummary {
            passed: true,
            assertions: Vec::new(),
            notes,
        };
    }
    let series = |name: &str, f: &dyn Fn(&SweepRecord) -> f64| {
        let values: Vec<f64> = records.iter().map(f).collect();
        Assertion {
            name: name.to_string(),
            passed: decreasing_tail(&values),
            values,
        }
    };
    let assertions = vec![
        series("d3m_norm decreasing", &|r| r.d3m_norm),
        series("h_gap decreasing", &|r| r.h_gap),
        series("energy gap decreasing", &|r| {
            (r.energy_eps - r.energy_limit).abs()
        }),
    ];
    if records.iter().any(|r| r.failure.is_some()) {
        notes.push("some minimizations failed; see per-record failure".into());
    }
    SweepSummary {
        passed: assertions.iter().all(|a| a.passed),
        assertions,
        notes,
    }
}

/// Minimize `F_ε` along a strictly decreasing schedule, warm-starting each
/// `ε` from the previous minimizer, and compare with the minimum of the
/// reduced limit functional.
pub fn eps_sweep(
    geom: &SampleGeometry,
    params: &MaterialParams,
    schedule: &[f64],
    cfg: &MinimizeConfig,
) -> Result<SweepOutcome, GammaError> {
    check_schedule(schedule)?;
    let mut notes = Vec::new();
    let resolved = 4.0 / geom.grid().counts()[2] as f64;
    if let Some(e) = schedule.iter().find(|&&e| e < resolved) {
        let msg = format!(
            "eps = {e} is below 4/N3 = {resolved}; vertical differences are under-resolved"
        );
        log::warn!("{msg}");
        notes.push(msg);
    }

    let limit_cfg = MinimizeConfig {
        init: match &cfg.init {
            InitialState::Field(_) => InitialState::EasyAxis,
            other => other.clone(),
        },
        ..cfg.clone()
    };
    let limit = match minimize_limit2d(geom, params, &limit_cfg) {
        Ok(r) => r,
        Err(MinimizeError::LineSearch(r)) => {
            notes.push("limit minimization stopped on line-search failure".into());
            *r
        }
        Err(e) => return Err(e.into()),
    };
    let energy_limit = limit.report.total;

    let mut records = Vec::new();
    let mut results: Vec<MinimizeResult> = Vec::new();
    let mut init = cfg.init.clone();
    for &eps in schedule {
        let g = geom.with_eps(eps)?;
        let step_cfg = MinimizeConfig {
            init: init.clone(),
            ..cfg.clone()
        };
        let (result, failure) = match minimize_feps(&g, params, &step_cfg) {
            Ok(r) => (r, None),
            Err(MinimizeError::LineSearch(r)) => (*r, Some("line search failed".to_string())),
            Err(e) => {
                notes.push(format!("sweep stopped at eps = {eps}: {e}"));
                break;
            }
        };
        records.push(record_for(
            eps,
            &result,
            &g,
            params.m_s,
            energy_limit,
            failure,
        )?);
        init = InitialState::Field(result.m_final.clone());
        results.push(result);
    }
    let summary = summarize(&records, notes);
    Ok(SweepOutcome {
        records,
        summary,
        limit,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub eps: Vec<f64>,
    pub grad_eps_norms: Vec<f64>,
    pub d3m_norms: Vec<f64>,
    /// `‖m_{k+1} − m_k‖_{L²(Ω₁)}`.
    pub cauchy_steps: Vec<f64>,
    /// `‖∂₃m‖ ≤ ε ‖∇_ε m‖` at every entry.
    pub d3_bound_holds: bool,
    /// `max ‖∇_ε m‖ / ‖∇_ε m‖` at the first entry.
    pub grad_growth: f64,
    pub bounded: bool,
    pub d3_decreasing: bool,
}

/// Largest allowed growth of `‖∇_ε m‖` along a sequence still called bounded.
pub const GRAD_GROWTH_LIMIT: f64 = 4.0;

/// Diagnostics for a sequence of magnetizations on the same geometry, each
/// carrying its `ε` in its grid.
pub fn compactness_diagnostics(
    seq: &[&VectorField],
    geom: &SampleGeometry,
) -> Result<CompactnessReport, GammaError> {
    if seq.len() < 2 {
        return Err(GammaError::TooFew(2));
    }
    let eps: Vec<f64> = seq.iter().map(|m| m.grid().eps()).collect();
    let grad_eps_norms: Vec<f64> = seq.iter().map(|m| grad_eps_norm(m, geom)).collect();
    let d3m_norms: Vec<f64> = seq.iter().map(|m| d3_norm(m, geom)).collect();
    let mut cauchy_steps = Vec::new();
    for w in seq.windows(2) {
        cauchy_steps.push(geom.restrict(&w[1].sub(w[0])?).l2_norm());
    }
    let d3_bound_holds = d3m_norms
        .iter()
        .zip(&eps)
        .zip(&grad_eps_norms)
        .all(|((d, e), g)| *d <= e * g * (1.0 + 1e-12) + 1e-15);
    let max_grad = grad_eps_norms.iter().cloned().fold(0.0, f64::max);
    let first = grad_eps_norms[0];
    let floor = 1e-8 * geom.film_volume().sqrt();
    let grad_growth = if first > floor {
        max_grad / first
    } else if max_grad > floor {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(CompactnessReport {
        bounded: grad_growth <= GRAD_GROWTH_LIMIT,
        d3_decreasing: decreasing_tail(&d3m_norms),
        eps,
        grad_eps_norms,
        d3m_norms,
        cauchy_steps,
        d3_bound_holds,
        grad_growth,
    })
}
