//! Matrix-valued Fourier multipliers and the A_ε-free projections built
//! from them.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fft::{dft_forward, dft_inverse};
use super::{Complex64, SpectralError, SpectralGrid, Spectrum, VectorField};
use crate::symbol::{kernel_projector_of, OperatorSpec};

/// What to do with the multiplier at `ξ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroModePolicy {
    /// Use whatever the multiplier returns at the origin.
    AsGiven,
    /// Replace `M(0)` by the identity.
    #[default]
    Identity,
    /// Replace `M(0)` by zero.
    Zero,
}

/// Real multiplier matrices `M(ξ)` tabulated over every frequency of a grid.
#[derive(Debug, Clone)]
pub struct MultiplierTable {
    grid: SpectralGrid,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MultiplierTable {
    /// Tabulate `m` at the unscaled frequencies of `grid`. Fails if `m` is
    /// not even under `ξ ↦ −ξ`, which would make the filtered field complex.
    pub fn build<F>(grid: SpectralGrid, m: F, policy: ZeroModePolicy) -> Result<Self, SpectralError>
    where
        F: Fn(&[f64; 3]) -> DMatrix<f64> + Sync,
    {
        Self::build_indexed(grid, |idx| m(&grid.frequency(idx)), policy)
    }

    /// Like [`MultiplierTable::build`] but `m` receives the flat bin index.
    pub fn build_indexed<F>(
        grid: SpectralGrid,
        m: F,
        policy: ZeroModePolicy,
    ) -> Result<Self, SpectralError>
    where
        F: Fn(usize) -> DMatrix<f64> + Sync,
    {
        let probe = m(0);
        let (rows, cols) = probe.shape();
        let size = rows * cols;
        let blocks: Vec<Result<Vec<f64>, SpectralError>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mat = if idx == 0 { probe.clone() } else { m(idx) };
                if mat.shape() != (rows, cols) {
                    return Err(SpectralError::MultiplierShape {
                        expected: (rows, cols),
                        found: mat.shape(),
                    });
                }
                Ok(mat.transpose().as_slice().to_vec())
            })
            .collect();
        let mut data = Vec::with_capacity(size * grid.len());
        for b in blocks {
            data.extend(b?);
        }
        match policy {
            ZeroModePolicy::AsGiven => {}
            ZeroModePolicy::Zero => data[..size].fill(0.0),
            ZeroModePolicy::Identity => {
                if rows != cols {
                    return Err(SpectralError::NonSquareIdentity);
                }
                data[..size].fill(0.0);
                for i in 0..rows {
                    data[i * cols + i] = 1.0;
                }
            }
        }
        let table = Self {
            grid,
            rows,
            cols,
            data,
        };
        table.check_even()?;
        Ok(table)
    }

    fn check_even(&self) -> Result<(), SpectralError> {
        let size = self.rows * self.cols;
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for idx in 0..self.grid.len() {
            let neg = self.grid.negated(idx);
            if neg <= idx {
                continue;
            }
            let a = &self.data[idx * size..(idx + 1) * size];
            let b = &self.data[neg * size..(neg + 1) * size];
            let deviation = a
                .iter()
                .zip(b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if deviation > 1e-12 * scale {
                return Err(SpectralError::NotEven {
                    k: self.grid.wavenumbers(idx),
                    deviation,
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major `rows × cols` block at flat bin `idx`.
    pub fn at(&self, idx: usize) -> &[f64] {
        let size = self.rows * self.cols;
        &self.data[idx * size..(idx + 1) * size]
    }

    pub fn apply_spectrum(&self, s: &Spectrum) -> Result<Spectrum, SpectralError> {
        if s.channels() != self.cols {
            return Err(SpectralError::ChannelMismatch {
                expected: self.cols,
                found: s.channels(),
            });
        }
        if s.grid().counts() != self.grid.counts() || s.grid().lengths() != self.grid.lengths() {
            return Err(SpectralError::GridMismatch);
        }
        let (rows, cols) = (self.rows, self.cols);
        let mut out = vec![Complex64::default(); self.grid.len() * rows];
        out.par_chunks_mut(rows).enumerate().for_each(|(idx, dst)| {
            let m = self.at(idx);
            let src = s.at(idx);
            for (r, d) in dst.iter_mut().enumerate() {
                let row = &m[r * cols..(r + 1) * cols];
                *d = row.iter().zip(src).map(|(a, z)| z * *a).sum();
            }
        });
        Ok(Spectrum {
            grid: *s.grid(),
            channels: rows,
            data: out,
        })
    }

    pub fn apply(&self, f: &VectorField) -> Result<VectorField, SpectralError> {
        let s = self.apply_spectrum(&dft_forward(f))?;
        Ok(dft_inverse(&s))
    }
}

/// `F⁻¹(M(·) F f)` with the chosen zero-mode override.
pub fn apply_multiplier<F>(
    f: &VectorField,
    m: F,
    policy: ZeroModePolicy,
) -> Result<VectorField, SpectralError>
where
    F: Fn(&[f64; 3]) -> DMatrix<f64> + Sync,
{
    MultiplierTable::build(*f.grid(), m, policy)?.apply(f)
}

/// The projection `𝒫_{A_ε} u = F⁻¹(P_{A_ε}(·) F u)` onto `A_ε`-free fields,
/// tabulated once for a grid and reusable across fields.
#[derive(Debug, Clone)]
pub struct AfreeProjector {
    table: MultiplierTable,
    eps: f64,
}

impl AfreeProjector {
    /// Uses the grid's `ε` when `use_eps`, otherwise `ε = 1`.
    pub fn new(
        op: &OperatorSpec,
        grid: SpectralGrid,
        use_eps: bool,
    ) -> Result<Self, SpectralError> {
        Self::with_policy(op, grid, use_eps, ZeroModePolicy::Identity)
    }

    pub fn with_policy(
        op: &OperatorSpec,
        grid: SpectralGrid,
        use_eps: bool,
        policy: ZeroModePolicy,
    ) -> Result<Self, SpectralError> {
        check_dim3(op)?;
        let eps = if use_eps { grid.eps() } else { 1.0 };
        let n = op.fields();
        // Every bin whose symmetric frequency vanishes (the origin and the
        // pure Nyquist bins) gets the zero-mode treatment.
        let table = MultiplierTable::build_indexed(
            grid,
            |idx| {
                let xi = grid.symmetric_frequency(idx);
                match policy {
                    ZeroModePolicy::Zero if xi == [0.0; 3] => DMatrix::zeros(n, n),
                    ZeroModePolicy::Identity if xi == [0.0; 3] => DMatrix::identity(n, n),
                    _ => kernel_projector_of(&op.symbol_entries(&[xi[0], xi[1], xi[2] / eps])),
                }
            },
            ZeroModePolicy::AsGiven,
        )?;
        Ok(Self { table, eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn table(&self) -> &MultiplierTable {
        &self.table
    }

    pub fn apply(&self, u: &VectorField) -> Result<VectorField, SpectralError> {
        self.table.apply(u)
    }
}

fn check_dim3(op: &OperatorSpec) -> Result<(), SpectralError> {
    if op.dim() != 3 {
        return Err(crate::symbol::SymbolError::DimensionMismatch {
            expected: 3,
            found: op.dim(),
        }
        .into());
    }
    Ok(())
}

fn check_channels(u: &VectorField, op: &OperatorSpec) -> Result<(), SpectralError> {
    if u.channels() != op.fields() {
        return Err(SpectralError::ChannelMismatch {
            expected: op.fields(),
            found: u.channels(),
        });
    }
    check_dim3(op)
}

/// One-shot `𝒫_{A_ε} u`; build an [`AfreeProjector`] to reuse the table.
pub fn project_afree(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
) -> Result<VectorField, SpectralError> {
    check_channels(u, op)?;
    AfreeProjector::new(op, *u.grid(), use_eps)?.apply(u)
}

/// Per row `i`: `Σ_ξ w(ξ) |(A(ξ_ε) û(ξ))_i|²` with the cell-volume factor.
fn weighted_row_sums(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
    weight: impl Fn(&[f64; 3]) -> f64 + Sync,
) -> Result<Vec<f64>, SpectralError> {
    check_channels(u, op)?;
    let grid = *u.grid();
    let eps = if use_eps { grid.eps() } else { 1.0 };
    let s = dft_forward(u);
    let (l, n) = (op.rows(), op.fields());
    let per_bin: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let xi = grid.symmetric_frequency(idx);
            let a = op.symbol_entries(&[xi[0], xi[1], xi[2] / eps]);
            let w = weight(&grid.frequency(idx));
            let uh = s.at(idx);
            (0..l)
                .map(|i| {
                    let z: Complex64 = (0..n).map(|j| uh[j] * a[(i, j)]).sum();
                    z.norm_sqr() * w
                })
                .collect()
        })
        .collect();
    let mut rows = vec![0.0; l];
    for bin in &per_bin {
        for (r, v) in rows.iter_mut().zip(bin) {
            *r += v;
        }
    }
    Ok(rows.into_iter().map(|r| r * grid.cell_volume()).collect())
}

fn weighted_symbol_sum(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
    weight: impl Fn(&[f64; 3]) -> f64 + Sync,
) -> Result<f64, SpectralError> {
    Ok(weighted_row_sums(u, op, use_eps, weight)?.iter().sum())
}

/// `L²` norm of each row of `A_ε u`, evaluated on the Fourier side.
pub fn constraint_row_residuals(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
) -> Result<Vec<f64>, SpectralError> {
    Ok(weighted_row_sums(u, op, use_eps, |_| 1.0)?
        .into_iter()
        .map(f64::sqrt)
        .collect())
}

/// Discrete `W^{−1,2}` norm of `A_ε u`: `(Σ_ξ |A(ξ_ε) û(ξ)|² / (1 + |ξ|²))^{1/2}`.
pub fn defect_norm(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
) -> Result<f64, SpectralError> {
    weighted_symbol_sum(u, op, use_eps, |xi| {
        1.0 / (1.0 + xi.iter().map(|x| x * x).sum::<f64>())
    })
    .map(f64::sqrt)
}

/// Discrete `L²` norm of `A_ε u`, evaluated on the Fourier side.
pub fn constraint_residual(
    u: &VectorField,
    op: &OperatorSpec,
    use_eps: bool,
) -> Result<f64, SpectralError> {
    weighted_symbol_sum(u, op, use_eps, |_| 1.0).map(f64::sqrt)
}

/// `f = 𝒫_{curl_ε} f + 𝒫_{div_ε} f`; the curl-free part keeps the mean.
pub fn helmholtz_decompose(f: &VectorField) -> Result<(VectorField, VectorField), SpectralError> {
    if f.channels() != 3 {
        return Err(SpectralError::ChannelMismatch {
            expected: 3,
            found: f.channels(),
        });
    }
    let curl_free = AfreeProjector::new(&OperatorSpec::curl(), *f.grid(), true)?.apply(f)?;
    let div_free = f.sub(&curl_free)?;
    Ok((curl_free, div_free))
}

/// Split `u = u₁ + u₂` where `û₁` lives on `k₃ ≠ 0` and `û₂` on the plane
/// `k₃ = 0`. The `k₃ = 0` part is the average of `u` along `x₃`, which is
/// computed directly in real space.
pub fn split_zero_plane(u: &VectorField) -> (VectorField, VectorField) {
    let grid = *u.grid();
    let [n1, n2, n3] = grid.counts();
    let n = u.channels();
    let mut plane = VectorField::zeros(grid, n);
    let mut mean = vec![0.0; n];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            mean.fill(0.0);
            for i3 in 0..n3 {
                for (m, v) in mean.iter_mut().zip(u.at(grid.index([i1, i2, i3]))) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= n3 as f64;
            }
            for i3 in 0..n3 {
                plane
                    .at_mut(grid.index([i1, i2, i3]))
                    .copy_from_slice(&mean);
            }
        }
    }
    let rest = u.sub(&plane).expect("same grid");
    (rest, plane)
}
