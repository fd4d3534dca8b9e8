//! First-order constant-coefficient operators `A = Σ_k A⁽ᵏ⁾ ∂_k` and the
//! finite-dimensional linear algebra of their symbols.
//!
//! Everything here is a pure function of its inputs: symbol evaluation,
//! rank, orthogonal kernel projectors, the pseudo-inverse `Q(ξ)` with
//! `Q(ξ)·A(ξ) = I − P(ξ)`, the thickness rescaling of the last frequency
//! coordinate, and the row rule that produces the thin-film limit operator.

use std::f64::consts::PI;
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Singular values at or below `RANK_TOL * σ_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("operator needs at least one coefficient matrix")]
    Empty,
    #[error("coefficient {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("all coefficient matrices are zero")]
    AllZero,
    #[error("frequency has {found} components, operator acts in dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("thickness parameter must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("the pseudo-inverse symbol is undefined at zero frequency")]
    ZeroFrequency,
    #[error(
        "limit operator needs #nonzero rows of the last coefficient ({nonzero_rows}) to equal its rank ({rank})"
    )]
    LimitHypothesis { nonzero_rows: usize, rank: usize },
    #[error("eps schedule must be nonempty, positive and strictly decreasing")]
    BadSchedule,
    #[error("operator text, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// `A = Σ_{k=1}^{d} A⁽ᵏ⁾ ∂_k` with `d` coefficient matrices of shape `l × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    coeffs: Vec<DMatrix<f64>>,
}

/// `A(ξ) = Σ A⁽ᵏ⁾ ξ_k`, an `l × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix {
    pub entries: DMatrix<f64>,
    pub frequency: Vec<f64>,
}

/// Orthogonal projector (`n × n`) onto a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix {
    pub entries: DMatrix<f64>,
    pub frequency: Vec<f64>,
}

/// Moore–Penrose pseudo-inverse of the symbol (`n × l`).
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub entries: DMatrix<f64>,
    pub frequency: Vec<f64>,
}

/// Outcome of a constant-rank scan over the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Most frequent rank among all sampled frequencies.
    pub rank: usize,
    pub constant: bool,
    pub samples_checked: usize,
    /// Rank at `+e_k` for each axis.
    pub axis_ranks: Vec<usize>,
    /// Frequencies whose rank differs from `rank`.
    pub deviations: Vec<(Vec<f64>, usize)>,
}

impl OperatorSpec {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self, SymbolError> {
        let first = coeffs.first().ok_or(SymbolError::Empty)?;
        let expected = first.shape();
        for (index, c) in coeffs.iter().enumerate() {
            if c.shape() != expected {
                return Err(SymbolError::ShapeMismatch {
                    index,
                    expected,
                    found: c.shape(),
                });
            }
        }
        if expected.0 == 0 || expected.1 == 0 {
            return Err(SymbolError::Empty);
        }
        if coeffs.iter().all(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(SymbolError::AllZero);
        }
        Ok(Self { coeffs })
    }

    /// Convenience constructor from row-major nested slices, one per `k`.
    pub fn from_rows(blocks: &[&[&[f64]]]) -> Result<Self, SymbolError> {
        let coeffs = blocks
            .iter()
            .map(|rows| {
                let l = rows.len();
                let n = rows.first().map_or(0, |r| r.len());
                DMatrix::from_fn(l, n, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
            })
            .collect::<Vec<_>>();
        for (index, (rows, c)) in blocks.iter().zip(&coeffs).enumerate() {
            if rows.iter().any(|r| r.len() != c.ncols()) {
                return Err(SymbolError::ShapeMismatch {
                    index,
                    expected: c.shape(),
                    found: (rows.len(), rows.iter().map(|r| r.len()).max().unwrap_or(0)),
                });
            }
        }
        Self::new(coeffs)
    }

    /// `div u = Σ ∂_k u_k` on `ℝ³`.
    pub fn div() -> Self {
        let coeffs = (0..3)
            .map(|k| DMatrix::from_fn(1, 3, |_, j| if j == k { 1.0 } else { 0.0 }))
            .collect();
        Self { coeffs }
    }

    /// `curl u = ∇ × u` on `ℝ³`.
    pub fn curl() -> Self {
        let coeffs = (0..3).map(cross_matrix).collect();
        Self { coeffs }
    }

    /// Magnetostatic operator on `u = (m, h)`: rows `(div(m + h), curl h)`.
    pub fn maxwell() -> Self {
        let coeffs = (0..3)
            .map(|k| {
                let mut a = DMatrix::zeros(4, 6);
                a[(0, k)] = 1.0;
                a[(0, 3 + k)] = 1.0;
                a.view_mut((1, 3), (3, 3)).copy_from(&cross_matrix(k));
                a
            })
            .collect();
        Self { coeffs }
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Number of field components `n`.
    pub fn fields(&self) -> usize {
        self.coeffs[0].ncols()
    }

    /// Number of equations `l`.
    pub fn rows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    fn check_dim(&self, xi: &[f64]) -> Result<(), SymbolError> {
        if xi.len() != self.dim() {
            return Err(SymbolError::DimensionMismatch {
                expected: self.dim(),
                found: xi.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn symbol_entries(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.fields());
        for (c, &x) in self.coeffs.iter().zip(xi) {
            if x != 0.0 {
                out += c * x;
            }
        }
        out
    }

    pub fn symbol(&self, xi: &[f64]) -> Result<SymbolMatrix, SymbolError> {
        self.check_dim(xi)?;
        Ok(SymbolMatrix {
            entries: self.symbol_entries(xi),
            frequency: xi.to_vec(),
        })
    }

    /// Symbol of the rescaled operator `A_ε`, i.e. `A(ξ_ε)` with the last
    /// coordinate of `ξ` multiplied by `1/ε`.
    pub fn rescaled_symbol(&self, xi: &[f64], eps: f64) -> Result<SymbolMatrix, SymbolError> {
        self.check_dim(xi)?;
        let scaled = rescale_frequency(xi, eps)?;
        Ok(SymbolMatrix {
            entries: self.symbol_entries(&scaled),
            frequency: xi.to_vec(),
        })
    }

    pub fn kernel_projector(&self, xi: &[f64]) -> Result<ProjectorMatrix, SymbolError> {
        self.check_dim(xi)?;
        Ok(ProjectorMatrix {
            entries: kernel_projector_of(&self.symbol_entries(xi)),
            frequency: xi.to_vec(),
        })
    }

    /// Kernel projector of the rescaled symbol `A(ξ_ε)`.
    pub fn rescaled_kernel_projector(
        &self,
        xi: &[f64],
        eps: f64,
    ) -> Result<ProjectorMatrix, SymbolError> {
        self.check_dim(xi)?;
        let scaled = rescale_frequency(xi, eps)?;
        Ok(ProjectorMatrix {
            entries: kernel_projector_of(&self.symbol_entries(&scaled)),
            frequency: xi.to_vec(),
        })
    }

    pub fn q_matrix(&self, xi: &[f64]) -> Result<QMatrix, SymbolError> {
        self.check_dim(xi)?;
        if xi.iter().all(|&x| x == 0.0) {
            return Err(SymbolError::ZeroFrequency);
        }
        Ok(QMatrix {
            entries: pseudo_inverse_of(&self.symbol_entries(xi)),
            frequency: xi.to_vec(),
        })
    }

    pub fn rank_at(&self, xi: &[f64]) -> Result<usize, SymbolError> {
        self.check_dim(xi)?;
        Ok(rank_of(&self.symbol_entries(xi)))
    }

    /// Scans `sample_count` quasi-uniform points of the unit sphere plus the
    /// `2d` coordinate axes and compares the symbol ranks.
    pub fn check_constant_rank(&self, sample_count: usize, seed: u64) -> RankReport {
        let d = self.dim();
        let mut points = sphere_points(d, sample_count.max(1), seed);
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; d];
                e[k] = sign;
                points.push(e);
            }
        }
        let ranks: Vec<usize> = points
            .iter()
            .map(|p| rank_of(&self.symbol_entries(p)))
            .collect();
        let max_rank = ranks.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0usize; max_rank + 1];
        for &r in &ranks {
            counts[r] += 1;
        }
        // ties resolve to the larger rank
        let rank = counts
            .iter()
            .enumerate()
            .max_by_key(|&(r, c)| (*c, r))
            .map_or(0, |(r, _)| r);
        let deviations: Vec<_> = points
            .iter()
            .zip(&ranks)
            .filter(|(_, &r)| r != rank)
            .map(|(p, &r)| (p.clone(), r))
            .collect();
        let axis_ranks = (0..d)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                rank_of(&self.symbol_entries(&e))
            })
            .collect();
        RankReport {
            rank,
            constant: deviations.is_empty(),
            samples_checked: points.len(),
            axis_ranks,
            deviations,
        }
    }

    /// Thin-film limit operator: row `i` keeps `[A⁽ᵈ⁾]ⁱ ∂_d` when that row is
    /// nonzero and otherwise becomes `Σ_{k<d} [A⁽ᵏ⁾]ⁱ ∂_k`.
    pub fn limit_operator(&self) -> Result<OperatorSpec, SymbolError> {
        let d = self.dim();
        let last = &self.coeffs[d - 1];
        let nonzero: Vec<bool> = (0..self.rows())
            .map(|i| last.row(i).iter().any(|&v| v != 0.0))
            .collect();
        let nonzero_rows = nonzero.iter().filter(|&&z| z).count();
        let rank = rank_of(last);
        if nonzero_rows != rank {
            return Err(SymbolError::LimitHypothesis { nonzero_rows, rank });
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let mut out = c.clone();
                for (i, &keep_last) in nonzero.iter().enumerate() {
                    if keep_last == (k + 1 < d) {
                        out.row_mut(i).fill(0.0);
                    }
                }
                out
            })
            .collect();
        OperatorSpec::new(coeffs)
    }

    /// The row-wise auxiliary matrix `Ã₀(ξ)`; it agrees with the symbol of
    /// the limit operator whenever `ξ_d ≠ 0` and with `A(ξ)` when `ξ_d = 0`.
    pub fn auxiliary_symbol(&self, xi: &[f64]) -> Result<SymbolMatrix, SymbolError> {
        self.check_dim(xi)?;
        let d = self.dim();
        let last = &self.coeffs[d - 1];
        let xi_d = xi[d - 1];
        let mut out = DMatrix::zeros(self.rows(), self.fields());
        for i in 0..self.rows() {
            let row_last = last.row(i);
            if xi_d != 0.0 && row_last.iter().any(|&v| v != 0.0) {
                out.row_mut(i).copy_from(&(row_last * xi_d));
            } else {
                for k in 0..d - 1 {
                    if xi[k] != 0.0 {
                        let r = self.coeffs[k].row(i) * xi[k];
                        out.row_mut(i).add_assign(&r);
                    }
                }
            }
        }
        Ok(SymbolMatrix {
            entries: out,
            frequency: xi.to_vec(),
        })
    }

    /// Orthogonal projector onto `ker Ã₀(ξ)`.
    pub fn auxiliary_projector(&self, xi: &[f64]) -> Result<ProjectorMatrix, SymbolError> {
        let aux = self.auxiliary_symbol(xi)?;
        Ok(ProjectorMatrix {
            entries: kernel_projector_of(&aux.entries),
            frequency: aux.frequency,
        })
    }

    /// `‖P_{A_ε}(ξ) − P̃₀(ξ)‖₂` for each `ε` of a strictly decreasing schedule.
    pub fn symbol_convergence_check(
        &self,
        xi: &[f64],
        schedule: &[f64],
    ) -> Result<Vec<(f64, f64)>, SymbolError> {
        if schedule.is_empty()
            || schedule.iter().any(|&e| !(e > 0.0))
            || schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(SymbolError::BadSchedule);
        }
        let limit = self.auxiliary_projector(xi)?.entries;
        schedule
            .iter()
            .map(|&eps| {
                let p = self.rescaled_kernel_projector(xi, eps)?.entries;
                Ok((eps, spectral_norm(&(p - &limit))))
            })
            .collect()
    }

    /// Plain-text form: a header `d n l`, then `d` blocks of `l` rows with
    /// `n` whitespace-separated numbers each.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.dim(), self.fields(), self.rows());
        for c in &self.coeffs {
            for i in 0..c.nrows() {
                let row: Vec<String> = c.row(i).iter().map(|v| format!("{v}")).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }
}

impl FromStr for OperatorSpec {
    type Err = SymbolError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(SymbolError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims = parse_numbers::<usize>(header, hline)?;
        let [d, n, l] = dims[..] else {
            return Err(SymbolError::Parse {
                line: hline,
                msg: format!("header needs 3 integers `d n l`, got {}", dims.len()),
            });
        };
        let mut coeffs = Vec::with_capacity(d);
        for _ in 0..d {
            let mut block = DMatrix::zeros(l, n);
            for i in 0..l {
                let (lineno, row) = lines.next().ok_or(SymbolError::Parse {
                    line: hline,
                    msg: format!("expected {d} blocks of {l} rows"),
                })?;
                let vals = parse_numbers::<f64>(row, lineno)?;
                if vals.len() != n {
                    return Err(SymbolError::Parse {
                        line: lineno,
                        msg: format!("expected {n} entries, got {}", vals.len()),
                    });
                }
                for (j, v) in vals.into_iter().enumerate() {
                    block[(i, j)] = v;
                }
            }
            coeffs.push(block);
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(SymbolError::Parse {
                line: lineno,
                msg: "trailing data after last block".into(),
            });
        }
        OperatorSpec::new(coeffs)
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_numbers<T: FromStr>(line: &str, lineno: usize) -> Result<Vec<T>, SymbolError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| SymbolError::Parse {
                line: lineno,
                msg: format!("cannot parse `{tok}`"),
            })
        })
        .collect()
}

/// `[e_k]_×` as the coefficient of `∂_k` in `curl`: `(curl u)_i = ε_{ikj} ∂_k u_j`.
fn cross_matrix(k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(3, 3);
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    // (k, i, j) cyclic: (curl u)_i ∋ -∂_k u_j and (curl u)_j ∋ +∂_k u_i
    a[(i, j)] = -1.0;
    a[(j, i)] = 1.0;
    a
}

/// `ξ_ε = (ξ_1, …, ξ_{d−1}, ξ_d / ε)`.
pub fn rescale_frequency(xi: &[f64], eps: f64) -> Result<Vec<f64>, SymbolError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(SymbolError::NonPositiveEps(eps));
    }
    let mut out = xi.to_vec();
    if let Some(last) = out.last_mut() {
        *last /= eps;
    }
    Ok(out)
}

/// Singular values and singular vectors of an `l × n` matrix with a full
/// set of `n` right singular vectors (columns of `v`); the matrix is padded
/// with zero rows when `l < n`.
struct FullSvd {
    sigma: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    cutoff: f64,
}

impl FullSvd {
    fn new(a: &DMatrix<f64>) -> Self {
        let (l, n) = a.shape();
        let padded = if l < n {
            let mut p = DMatrix::zeros(n, n);
            p.view_mut((0, 0), (l, n)).copy_from(a);
            p
        } else {
            a.clone()
        };
        let svd = SVD::new(padded, true, true);
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let u = svd.u.expect("u requested").rows(0, l).into_owned();
        let v = svd.v_t.expect("v_t requested").transpose();
        let smax = sigma.iter().copied().fold(0.0, f64::max);
        Self {
            sigma,
            u,
            v,
            cutoff: RANK_TOL * smax,
        }
    }

    fn is_nonzero(&self, i: usize) -> bool {
        self.sigma[i] > self.cutoff
    }
}

pub(crate) fn rank_of(a: &DMatrix<f64>) -> usize {
    let svd = FullSvd::new(a);
    (0..svd.sigma.len()).filter(|&i| svd.is_nonzero(i)).count()
}

/// Orthogonal projector onto `ker a`, built from the right singular vectors
/// with negligible singular value. The zero matrix yields the identity.
pub(crate) fn kernel_projector_of(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.iter().all(|&v| v == 0.0) {
        return DMatrix::identity(n, n);
    }
    let svd = FullSvd::new(a);
    let mut p = DMatrix::zeros(n, n);
    for i in (0..n).filter(|&i| !svd.is_nonzero(i)) {
        let v = svd.v.column(i);
        p.ger(1.0, &v, &v, 1.0);
    }
    p
}

pub(crate) fn pseudo_inverse_of(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (l, n) = a.shape();
    let svd = FullSvd::new(a);
    let mut q = DMatrix::zeros(n, l);
    for i in (0..n).filter(|&i| svd.is_nonzero(i)) {
        q.ger(1.0 / svd.sigma[i], &svd.v.column(i), &svd.u.column(i), 1.0);
    }
    q
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Deterministic quasi-uniform points on `S^{d−1}`: a Fibonacci lattice for
/// `d = 3` (rotated by a seeded random rotation), equispaced angles for
/// `d = 2`, seeded Gaussian directions otherwise.
pub fn sphere_points(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match d {
        1 => (0..count)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => {
            let offset: f64 = if seed == 0 { 0.5 } else { rng.random() };
            (0..count)
                .map(|i| {
                    let t = 2.0 * PI * (i as f64 + offset) / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        3 => {
            let rot = if seed == 0 {
                DMatrix::identity(3, 3)
            } else {
                random_rotation(&mut rng)
            };
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * i as f64;
                    let p = nalgebra::DVector::from_vec(vec![r * t.cos(), r * t.sin(), z]);
                    (&rot * p).iter().copied().collect()
                })
                .collect()
        }
        _ => (0..count)
            .map(|_| loop {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect(),
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // unit quaternion from four normals
    let q: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
}
