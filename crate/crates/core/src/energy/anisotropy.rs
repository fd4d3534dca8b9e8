use serde::{Deserialize, Serialize};

use super::EnergyError;

/// Crystalline anisotropy density `φ`, even and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnisotropyModel {
    #[default]
    Zero,
    /// `φ(m) = K (1 − (m·e)² / m_s²)`.
    Uniaxial { axis: [f64; 3], strength: f64 },
    /// `φ(m) = K (p₁²p₂² + p₂²p₃² + p₃²p₁²) / m_s⁴` with `pᵢ = m·aᵢ`.
    Cubic { axes: [[f64; 3]; 3], strength: f64 },
}

fn dot(a: &[f64; 3], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl AnisotropyModel {
    pub fn uniaxial(axis: [f64; 3], strength: f64) -> Result<Self, EnergyError> {
        let model = Self::Uniaxial { axis, strength };
        model.validated()
    }

    /// Cubic anisotropy in the coordinate frame.
    pub fn cubic(strength: f64) -> Result<Self, EnergyError> {
        Self::Cubic {
            axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            strength,
        }
        .validated()
    }

    /// Checks `K ≥ 0` and normalizes axes; cubic axes must be orthogonal.
    pub fn validated(self) -> Result<Self, EnergyError> {
        let unit = |v: [f64; 3]| -> Result<[f64; 3], EnergyError> {
            let n = dot(&v, &v).sqrt();
            if !n.is_finite() || n < 1e-12 {
                return Err(EnergyError::Param(format!(
                    "anisotropy axis {v:?} has no direction"
                )));
            }
            Ok(v.map(|x| x / n))
        };
        let check_k = |k: f64| {
            if k.is_finite() && k >= 0.0 {
                Ok(())
            } else {
                Err(EnergyError::Param(format!(
                    "anisotropy strength must be ≥ 0, got {k}"
                )))
            }
        };
        match self {
            Self::Zero => Ok(Self::Zero),
            Self::Uniaxial { axis, strength } => {
                check_k(strength)?;
                Ok(Self::Uniaxial {
                    axis: unit(axis)?,
                    strength,
                })
            }
            Self::Cubic { axes, strength } => {
                check_k(strength)?;
                let axes = [unit(axes[0])?, unit(axes[1])?, unit(axes[2])?];
                for i in 0..3 {
                    for j in i + 1..3 {
                        if dot(&axes[i], &axes[j]).abs() > 1e-10 {
                            return Err(EnergyError::Param("cubic axes must be orthogonal".into()));
                        }
                    }
                }
                Ok(Self::Cubic { axes, strength })
            }
        }
    }

    /// An axis along which `φ` vanishes, if the model singles one out.
    pub fn easy_axis(&self) -> Option<[f64; 3]> {
        match self {
            Self::Zero => None,
            Self::Uniaxial { axis, .. } => Some(*axis),
            Self::Cubic { axes, .. } => Some(axes[0]),
        }
    }

    pub fn density(&self, m: &[f64], m_s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Uniaxial { axis, strength } => {
                let p = dot(axis, m);
                strength * (1.0 - p * p / (m_s * m_s))
            }
            Self::Cubic { axes, strength } => {
                let p = axes.map(|a| dot(&a, m).powi(2));
                strength * (p[0] * p[1] + p[1] * p[2] + p[2] * p[0]) / m_s.powi(4)
            }
        }
    }

    /// `∇_m φ(m)`.
    pub fn gradient(&self, m: &[f64], m_s: f64) -> [f64; 3] {
        match self {
            Self::Zero => [0.0; 3],
            Self::Uniaxial { axis, strength } => {
                let c = -2.0 * strength * dot(axis, m) / (m_s * m_s);
                axis.map(|a| c * a)
            }
            Self::Cubic { axes, strength } => {
                let p = axes.map(|a| dot(&a, m));
                let sq = p.map(|x| x * x);
                let scale = strength / m_s.powi(4);
                let mut g = [0.0; 3];
                for i in 0..3 {
                    let others = sq[(i + 1) % 3] + sq[(i + 2) % 3];
                    let c = 2.0 * scale * p[i] * others;
                    for (gk, ak) in g.iter_mut().zip(&axes[i]) {
                        *gk += c * ak;
                    }
                }
                g
            }
        }
    }
}
