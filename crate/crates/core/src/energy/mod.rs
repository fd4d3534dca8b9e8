//! The rescaled micromagnetic free energy
//!
//! ```text
//! F_ε[m, h] = ∫_{Ω₁} α|∇_ε m|² + φ(m) dx + ½ ∫ |h|² dx   on 𝒰_ε,
//! ```
//!
//! its magnetostatic field, and the thin-film limit functionals `F₀` (3-D
//! form on `Ω₁`) and `F̃₀` (reduced 2-D form on `ω`).
//!
//! Gradients are edge-based forward differences over pairs of neighbouring
//! film cells, so the discrete exchange energy is a positive semidefinite
//! quadratic form whose null space is the constants on each connected piece
//! of the film. The stray field is solved spectrally on the whole periodic
//! box. Energies are integrals, not divided by `|ω|`.

mod anisotropy;
mod geometry;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    constraint_residual, dft_forward, dft_inverse, SpectralError, SpectralGrid, VectorField,
};
use crate::symbol::OperatorSpec;

pub use anisotropy::AnisotropyModel;
pub use geometry::SampleGeometry;

/// Allowed `||m| − m_s|` on the film, relative to `m_s`.
pub const SATURATION_TOL: f64 = 1e-8;
/// Allowed `‖A_ε(m, h)‖_{L²}`, relative to `max(1, ‖(m, h)‖_{L²})`.
pub const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("invalid material parameter: {0}")]
    Param(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("|m| = {norm} at cell {cell:?} violates saturation m_s = {m_s}")]
    Saturation {
        cell: [usize; 3],
        norm: f64,
        m_s: f64,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub alpha: f64,
    pub m_s: f64,
    #[serde(default)]
    pub anisotropy: AnisotropyModel,
}

impl MaterialParams {
    pub fn new(alpha: f64, m_s: f64, anisotropy: AnisotropyModel) -> Result<Self, EnergyError> {
        Self {
            alpha,
            m_s,
            anisotropy,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, EnergyError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(EnergyError::Param(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.m_s.is_finite() && self.m_s > 0.0) {
            return Err(EnergyError::Param(format!(
                "m_s must be > 0, got {}",
                self.m_s
            )));
        }
        Ok(Self {
            anisotropy: self.anisotropy.validated()?,
            ..self
        })
    }
}

/// Energy terms of one evaluation. An infeasible pair carries
/// `total = +∞` and the reason in `violation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: f64,
    pub exchange: f64,
    pub anisotropy: f64,
    pub stray: f64,
    pub total: f64,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub violation: Option<String>,
}

impl EnergyReport {
    fn feasible(eps: f64, exchange: f64, anisotropy: f64, stray: f64) -> Self {
        Self {
            eps,
            exchange,
            anisotropy,
            stray,
            total: exchange + anisotropy + stray,
            feasible: true,
            violation: None,
        }
    }

    fn mark_infeasible(mut self, reason: String) -> Self {
        self.total = f64::INFINITY;
        self.feasible = false;
        self.violation = Some(reason);
        self
    }
}

/// `ĥ(ξ) = −(ξ_ε·m̂) ξ_ε / |ξ_ε|²`, `ĥ(0) = 0`, with `ε` taken from the
/// grid of `m`. The result is the unique zero-mean field with
/// `curl_ε h = 0` and `div_ε(m + h) = 0`.
pub fn solve_magnetostatics(m: &VectorField) -> Result<VectorField, EnergyError> {
    if m.channels() != 3 {
        return Err(SpectralError::ChannelMismatch {
            expected: 3,
            found: m.channels(),
        }
        .into());
    }
    let grid = *m.grid();
    let eps = grid.eps();
    let mut s = dft_forward(m);
    s.data_mut()
        .par_chunks_mut(3)
        .enumerate()
        .for_each(|(idx, z)| {
            let mut xi = grid.symmetric_frequency(idx);
            xi[2] /= eps;
            let n2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            if n2 == 0.0 {
                z.fill(Default::default());
                return;
            }
            let proj = (z[0] * xi[0] + z[1] * xi[1] + z[2] * xi[2]) / n2;
            for (zk, xk) in z.iter_mut().zip(xi) {
                *zk = -proj * xk;
            }
        });
    Ok(dft_inverse(&s))
}

/// `‖A_ε^mag (m, h)‖_{L²}`, evaluated spectrally.
pub fn maxwell_residual(m: &VectorField, h: &VectorField) -> Result<f64, EnergyError> {
    let u = VectorField::stack(&[m, h])?;
    Ok(constraint_residual(&u, &OperatorSpec::maxwell(), true)?)
}

/// Edge weights `scale_a / h_a²`.
fn edge_weights(grid: &SpectralGrid, scale: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|a| scale[a] * grid.spacing(a).powi(-2))
}

fn neighbour(grid: &SpectralGrid, i: [usize; 3], axis: usize, forward: bool) -> Option<[usize; 3]> {
    let n = grid.counts()[axis];
    if n == 1 {
        return None;
    }
    let mut j = i;
    j[axis] = if forward {
        (i[axis] + 1) % n
    } else {
        (i[axis] + n - 1) % n
    };
    Some(j)
}

// Parallel reductions collect before summing so the result does not depend
// on how work was split across threads.
fn exchange_sum(m: &VectorField, geom: &SampleGeometry, scale: [f64; 3]) -> f64 {
    let grid = *m.grid();
    let weights = edge_weights(&grid, scale);
    let cells = geom.film_cells();
    cells
        .par_iter()
        .map(|&idx| {
            let i = grid.multi_index(idx);
            let mi = m.at(idx);
            let mut acc = 0.0;
            for (axis, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let Some(j) = neighbour(&grid, i, axis, true) else {
                    continue;
                };
                if !geom.contains(j) {
                    continue;
                }
                let mj = m.at(grid.index(j));
                acc += w * mi.iter().zip(mj).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn exchange_gradient(
    m: &VectorField,
    geom: &SampleGeometry,
    alpha: f64,
    vertical: f64,
) -> VectorField {
    let grid = *m.grid();
    let weights = edge_weights(&grid, [1.0, 1.0, vertical]);
    let mut out = VectorField::zeros(grid, 3);
    out.data_mut()
        .par_chunks_mut(3)
        .enumerate()
        .for_each(|(idx, o)| {
            let i = grid.multi_index(idx);
            if !geom.contains(i) {
                return;
            }
            let mi = m.at(idx);
            for (axis, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                for forward in [true, false] {
                    let Some(j) = neighbour(&grid, i, axis, forward) else {
                        continue;
                    };
                    if !geom.contains(j) {
                        continue;
                    }
                    let mj = m.at(grid.index(j));
                    for k in 0..3 {
                        o[k] += 2.0 * alpha * w * (mj[k] - mi[k]);
                    }
                }
            }
        });
    out
}

/// `α ∫_{Ω₁} |∇_ε m|²` with `ε` from the grid of `m`.
pub fn exchange_energy(m: &VectorField, geom: &SampleGeometry, alpha: f64) -> f64 {
    let eps = m.grid().eps();
    alpha * m.grid().cell_volume() * exchange_sum(m, geom, [1.0, 1.0, eps.powi(-2)])
}

/// `α ∫_{Ω₁} |∇′ m|²`, the in-plane part only.
pub fn exchange_energy_inplane(m: &VectorField, geom: &SampleGeometry, alpha: f64) -> f64 {
    alpha * m.grid().cell_volume() * exchange_sum(m, geom, [1.0, 1.0, 0.0])
}

/// `‖∂₃m‖_{L²(Ω₁)}`, unscaled by `ε`.
pub fn d3_norm(m: &VectorField, geom: &SampleGeometry) -> f64 {
    (m.grid().cell_volume() * exchange_sum(m, geom, [0.0, 0.0, 1.0])).sqrt()
}

/// `‖∇_ε m‖_{L²(Ω₁)}`.
pub fn grad_eps_norm(m: &VectorField, geom: &SampleGeometry) -> f64 {
    exchange_energy(m, geom, 1.0).sqrt()
}

pub fn anisotropy_energy(m: &VectorField, geom: &SampleGeometry, params: &MaterialParams) -> f64 {
    let cells = geom.film_cells();
    let sum: f64 = cells
        .par_iter()
        .map(|&idx| params.anisotropy.density(m.at(idx), params.m_s))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    m.grid().cell_volume() * sum
}

/// `½ ∫_box |h|²`.
pub fn stray_energy(h: &VectorField) -> f64 {
    0.5 * h.l2_norm().powi(2)
}

/// `½ Σ_ξ |ĥ(ξ)|²` (Plancherel form of [`stray_energy`]).
pub fn stray_energy_fourier(h: &VectorField) -> f64 {
    0.5 * dft_forward(h).l2_norm().powi(2)
}

/// Largest saturation defect: `||m| − m_s|` on the film, `|m|` outside it,
/// and the cell where it occurs.
pub fn saturation_error(m: &VectorField, geom: &SampleGeometry, m_s: f64) -> (f64, [usize; 3]) {
    let grid = m.grid();
    let mut worst = (0.0, [0; 3]);
    for idx in 0..grid.len() {
        let norm = m.at(idx).iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = if geom.contains_index(idx) {
            (norm - m_s).abs()
        } else {
            norm
        };
        if err > worst.0 {
            worst = (err, grid.multi_index(idx));
        }
    }
    worst
}

/// The three `F_ε` terms without any feasibility check.
pub fn energy_terms(
    m: &VectorField,
    h: &VectorField,
    geom: &SampleGeometry,
    params: &MaterialParams,
) -> EnergyReport {
    EnergyReport::feasible(
        m.grid().eps(),
        exchange_energy(m, geom, params.alpha),
        anisotropy_energy(m, geom, params),
        stray_energy(h),
    )
}

fn check_saturation(
    report: EnergyReport,
    m: &VectorField,
    geom: &SampleGeometry,
    m_s: f64,
) -> EnergyReport {
    let (err, cell) = saturation_error(m, geom, m_s);
    if err > SATURATION_TOL * m_s {
        report.mark_infeasible(format!("saturation defect {err:.3e} at cell {cell:?}"))
    } else {
        report
    }
}

/// `F_ε[m, h]`, or an infeasible report if `|m| ≠ m_s` on the film, `m ≠ 0`
/// outside it, or `A_ε^mag(m, h) ≠ 0`.
pub fn total_energy(
    m: &VectorField,
    h: &VectorField,
    geom: &SampleGeometry,
    params: &MaterialParams,
) -> Result<EnergyReport, EnergyError> {
    geom.check_field(m, 3)?;
    geom.check_field(h, 3)?;
    let report = check_saturation(energy_terms(m, h, geom, params), m, geom, params.m_s);
    if !report.feasible {
        return Ok(report);
    }
    let residual = maxwell_residual(m, h)?;
    let scale = (m.l2_norm().powi(2) + h.l2_norm().powi(2)).sqrt().max(1.0);
    if residual > CONSTRAINT_TOL * scale {
        return Ok(report.mark_infeasible(format!("Maxwell residual {residual:.3e}")));
    }
    Ok(report)
}

/// `h = solve_magnetostatics(m)` and `F_ε[m, h]`; the constraint holds by
/// construction so only saturation is checked.
pub fn feps_energy(
    m: &VectorField,
    geom: &SampleGeometry,
    params: &MaterialParams,
) -> Result<(VectorField, EnergyReport), EnergyError> {
    geom.check_field(m, 3)?;
    let h = solve_magnetostatics(m)?;
    let report = check_saturation(energy_terms(m, &h, geom, params), m, geom, params.m_s);
    Ok((h, report))
}

/// `H = −δF_ε/δm = 2α Δ_ε m − ∇φ(m) + h` on the film, zero elsewhere, in
/// the sense `dF_ε = −∫ H·δm` for variations supported in the film.
pub fn effective_field(
    m: &VectorField,
    h: &VectorField,
    geom: &SampleGeometry,
    params: &MaterialParams,
) -> VectorField {
    let grid = *m.grid();
    let mut out = exchange_gradient(m, geom, params.alpha, grid.eps().powi(-2));
    out.data_mut()
        .par_chunks_mut(3)
        .enumerate()
        .for_each(|(idx, o)| {
            if !geom.contains_index(idx) {
                return;
            }
            let g = params.anisotropy.gradient(m.at(idx), params.m_s);
            let hi = h.at(idx);
            for k in 0..3 {
                o[k] += hi[k] - g[k];
            }
        });
    out
}

/// `F₀[m, h] = ∫_{Ω₁} α|∇′m|² + φ(m) + ½ ∫ |h|²`, the limit energy in its
/// 3-D form. Membership of `(m, h)` in the limit space is not checked.
pub fn limit_energy_3d(
    m: &VectorField,
    h: &VectorField,
    geom: &SampleGeometry,
    params: &MaterialParams,
) -> EnergyReport {
    EnergyReport::feasible(
        0.0,
        exchange_energy_inplane(m, geom, params.alpha),
        anisotropy_energy(m, geom, params),
        stray_energy(h),
    )
}

fn check_plane(m2d: &VectorField, plane: &SampleGeometry) -> Result<(), EnergyError> {
    plane.check_field(m2d, 3)?;
    if plane.grid().counts()[2] != 1 {
        return Err(EnergyError::Geometry(
            "reduced functional needs a one-layer grid".into(),
        ));
    }
    Ok(())
}

/// `F̃₀[m] = ∫_ω α|∇m|² + φ(m) + ½ m₃²` on a one-layer cross-section
/// geometry (see [`SampleGeometry::cross_section`]). The `½ m₃²` term is
/// reported as `stray`.
pub fn limit_energy(
    m2d: &VectorField,
    plane: &SampleGeometry,
    params: &MaterialParams,
) -> Result<EnergyReport, EnergyError> {
    check_plane(m2d, plane)?;
    let (err, cell) = saturation_error(m2d, plane, params.m_s);
    if err > SATURATION_TOL * params.m_s {
        let norm = m2d
            .at(plane.grid().index(cell))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        return Err(EnergyError::Saturation {
            cell,
            norm,
            m_s: params.m_s,
        });
    }
    Ok(limit_energy_terms(m2d, plane, params))
}

pub(crate) fn limit_energy_terms(
    m2d: &VectorField,
    plane: &SampleGeometry,
    params: &MaterialParams,
) -> EnergyReport {
    let w = m2d.grid().cell_volume();
    let demag: f64 = plane
        .film_cells()
        .iter()
        .map(|&i| m2d.at(i)[2].powi(2))
        .sum();
    EnergyReport::feasible(
        0.0,
        exchange_energy_inplane(m2d, plane, params.alpha),
        anisotropy_energy(m2d, plane, params),
        0.5 * w * demag,
    )
}

/// `−δF̃₀/δm = 2α Δm − ∇φ(m) − (0, 0, m₃)` on `ω`.
pub fn limit_field(
    m2d: &VectorField,
    plane: &SampleGeometry,
    params: &MaterialParams,
) -> Result<VectorField, EnergyError> {
    check_plane(m2d, plane)?;
    let mut out = exchange_gradient(m2d, plane, params.alpha, 0.0);
    for idx in plane.film_cells() {
        let mi = m2d.at(idx).to_vec();
        let g = params.anisotropy.gradient(&mi, params.m_s);
        let o = out.at_mut(idx);
        for k in 0..3 {
            o[k] -= g[k];
        }
        o[2] -= mi[2];
    }
    Ok(out)
}

/// The reduced-limit stray field `h = −(0, 0, m₃)` extended by zero.
pub fn limit_stray_field(m2d: &VectorField) -> VectorField {
    let mut h = VectorField::zeros(*m2d.grid(), 3);
    for idx in 0..m2d.grid().len() {
        h.at_mut(idx)[2] = -m2d.at(idx)[2];
    }
    h
}
