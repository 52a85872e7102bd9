//! Electromagnetic fields and the joined gravitational plus electromagnetic
//! phase structures of a charged particle.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{self, DiffConfig, Mat4, Mat7, MultiIndexArray, Vec4};
use crate::multivector::{schouten_skew, wedge};
use crate::phase::{
    assemble, duality_residuals, gamma_hat_field, lambda_field, phase_connection, phase_frame, sharp,
    DualityResiduals, PhaseConnection, PhaseFrame, PhasePoint, PhaseStructures, StructureEvaluation,
};
use crate::spacetime::{ScaleConstants, SpacetimeMetric};
use crate::symmetry::exterior_derivative_time_form;

pub type FieldFn = Arc<dyn Fn(&Vec4) -> Result<Mat4> + Send + Sync>;
/// `df[ρ][λ][μ]` = ∂_ρ F_{λμ}.
pub type FieldDerivFn = Arc<dyn Fn(&Vec4) -> Result<[Mat4; 4]> + Send + Sync>;

/// Largest admissible `|dF|` at the closedness check points.
pub const CLOSEDNESS_TOLERANCE: f64 = 1e-8;

pub const EM_FIELD_NAMES: [&str; 3] = ["affine", "constant", "coulomb"];

/// An electromagnetic 2-form `F_{λμ}` on spacetime.
#[derive(Clone)]
pub struct EmField {
    name: String,
    field: FieldFn,
    derivative: Option<FieldDerivFn>,
    diff: DiffConfig,
}

impl fmt::Debug for EmField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmField").field("name", &self.name).finish()
    }
}

fn from_electric_magnetic(e: [f64; 3], b: [f64; 3]) -> Mat4 {
    let mut f = [[0.0; 4]; 4];
    for i in 0..3 {
        f[0][i + 1] = -e[i];
        f[i + 1][0] = e[i];
    }
    f[1][2] = b[2];
    f[2][1] = -b[2];
    f[2][3] = b[0];
    f[3][2] = -b[0];
    f[3][1] = b[1];
    f[1][3] = -b[1];
    f
}

impl EmField {
    pub fn new(name: impl Into<String>, field: FieldFn, derivative: Option<FieldDerivFn>) -> Self {
        Self { name: name.into(), field, derivative, diff: DiffConfig::default() }
    }

    /// A uniform field with electric part `F_{i0} = E_i` and magnetic part
    /// `F_{ij} = ε_{ijk} B_k`.
    pub fn constant(electric: [f64; 3], magnetic: [f64; 3]) -> Self {
        let f = from_electric_magnetic(electric, magnetic);
        Self::new("constant", Arc::new(move |_| Ok(f)), Some(Arc::new(|_| Ok([[[0.0; 4]; 4]; 4]))))
    }

    /// Field of a point charge at the centre of a spherical chart
    /// (t, r, θ, φ): `A = −Q/r dt`, so `F_{rt} = Q/r²`.
    pub fn coulomb(charge: f64) -> Self {
        Self::new(
            "coulomb",
            Arc::new(move |x| {
                if x[1] <= 0.0 {
                    return Err(Error::EvaluationDomain(format!("coulomb field needs r > 0, got {}", x[1])));
                }
                let mut f = [[0.0; 4]; 4];
                f[1][0] = charge / (x[1] * x[1]);
                f[0][1] = -f[1][0];
                Ok(f)
            }),
            Some(Arc::new(move |x| {
                let mut d = [[[0.0; 4]; 4]; 4];
                d[1][1][0] = -2.0 * charge / (x[1] * x[1] * x[1]);
                d[1][0][1] = -d[1][1][0];
                Ok(d)
            })),
        )
    }

    /// `F(x) = base + x^ρ slope[ρ]`; rejected unless antisymmetric and closed.
    pub fn affine(base: Mat4, slope: [Mat4; 4]) -> Result<Self> {
        let field = Self::new(
            "affine",
            Arc::new(move |x| {
                let mut f = base;
                for rho in 0..4 {
                    for l in 0..4 {
                        for m in 0..4 {
                            f[l][m] += x[rho] * slope[rho][l][m];
                        }
                    }
                }
                Ok(f)
            }),
            Some(Arc::new(move |_| Ok(slope))),
        );
        let asym = (0..4)
            .flat_map(|l| (0..4).map(move |m| (l, m)))
            .map(|(l, m)| {
                let s = slope.iter().map(|d| (d[l][m] + d[m][l]).abs()).fold(0.0, f64::max);
                s.max((base[l][m] + base[m][l]).abs())
            })
            .fold(0.0, f64::max);
        if asym > 1e-14 {
            return Err(Error::InvalidParameter(format!("field is not antisymmetric (defect {asym:.3e})")));
        }
        field.require_closed(&[[0.0; 4]])?;
        Ok(field)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self, x: &Vec4) -> Result<Mat4> {
        (self.field)(x)
    }

    pub fn derivatives(&self, x: &Vec4) -> Result<[Mat4; 4]> {
        if let Some(d) = &self.derivative {
            return d(x);
        }
        let jac = geometry::jacobian(
            |y| Ok(self.components(&[y[0], y[1], y[2], y[3]])?.iter().flatten().copied().collect()),
            x,
            &self.diff,
        )?;
        Ok(std::array::from_fn(|r| std::array::from_fn(|l| std::array::from_fn(|m| jac[r][l * 4 + m]))))
    }

    pub fn antisymmetry_residual(&self, x: &Vec4) -> Result<f64> {
        let f = self.components(x)?;
        Ok((0..4).flat_map(|l| (0..4).map(move |m| (l, m))).map(|(l, m)| (f[l][m] + f[m][l]).abs()).fold(0.0, f64::max))
    }

    /// max |∂_ρ F_{λμ} + ∂_λ F_{μρ} + ∂_μ F_{ρλ}|.
    pub fn closedness_residual(&self, x: &Vec4) -> Result<f64> {
        let d = self.derivatives(x)?;
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            for l in 0..4 {
                for m in 0..4 {
                    worst = worst.max((d[r][l][m] + d[l][m][r] + d[m][r][l]).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn require_closed(&self, points: &[Vec4]) -> Result<()> {
        for x in points {
            let r = self.closedness_residual(x)?;
            if r > CLOSEDNESS_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "electromagnetic field `{}` is not closed: |dF| = {r:.3e} at {x:?}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str) -> f64 {
    params.get(key).copied().unwrap_or(0.0)
}

/// Build a catalog field. `constant` takes `ex, ey, ez, bx, by, bz`;
/// `coulomb` takes `charge`. Affine fields are built from arrays with
/// [`EmField::affine`].
pub fn em_field_catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<EmField> {
    let allowed: &[&str] = match name {
        "constant" => &["ex", "ey", "ez", "bx", "by", "bz"],
        "coulomb" => &["charge"],
        "affine" => return Err(Error::InvalidParameter("affine fields need `base` and `slope` arrays".into())),
        _ => return Err(Error::Unknown { kind: "electromagnetic field", name: name.into() }),
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParameter(format!("unknown parameter `{k}` for field `{name}`")));
    }
    Ok(match name {
        "constant" => EmField::constant(
            [param(params, "ex"), param(params, "ey"), param(params, "ez")],
            [param(params, "bx"), param(params, "by"), param(params, "bz")],
        ),
        _ => EmField::coulomb(param(params, "charge")),
    })
}

/// `Γᵉ^i_λ = −(1/(2cα)) Ğ^{iμ} (F̂_{λμ} − α² ğ_{0λ} F̂_{ρμ} u^ρ)` with F̂ = (q/2ℏ) F.
pub fn em_phase_connection(frame: &PhaseFrame, f: &Mat4) -> PhaseConnection {
    let s = &frame.scales;
    let fh = f.map(|row| row.map(|c| s.q / (2.0 * s.hbar0) * c));
    let a2 = frame.alpha * frame.alpha;
    let pre = -1.0 / (2.0 * s.c0 * frame.alpha);
    let fu: Vec4 = geometry::contract4(&frame.direction, &fh);
    let mut out = [[0.0; 4]; 3];
    for i in 0..3 {
        for l in 0..4 {
            out[i][l] = pre
                * (0..4)
                    .map(|m| frame.mass_projector_up[i][m] * (fh[l][m] - a2 * frame.direction_covector[l] * fu[m]))
                    .sum::<f64>();
        }
    }
    PhaseConnection(out)
}

/// The joined structures of a charged particle: the phase connection is the
/// metric one plus the electromagnetic term, and Ω gains `(q/2ℏ) F`.
#[derive(Debug, Clone)]
pub struct JoinedStructure {
    metric: SpacetimeMetric,
    scales: ScaleConstants,
    field: EmField,
}

impl JoinedStructure {
    pub fn new(metric: SpacetimeMetric, scales: ScaleConstants, field: EmField) -> Result<Self> {
        scales.validate()?;
        Ok(Self { metric, scales, field })
    }

    pub fn field(&self) -> &EmField {
        &self.field
    }

    /// `F̂ = (q/2ℏ) F` pulled back to the phase space.
    pub fn scaled_field(&self, x: &Vec4) -> Result<Mat7> {
        let f = self.field.components(x)?;
        let k = self.scales.q / (2.0 * self.scales.hbar0);
        let mut out = [[0.0; 7]; 7];
        for l in 0..4 {
            for m in 0..4 {
                out[l][m] = k * f[l][m];
            }
        }
        Ok(out)
    }
}

impl PhaseStructures for JoinedStructure {
    fn metric(&self) -> &SpacetimeMetric {
        &self.metric
    }

    fn scales(&self) -> &ScaleConstants {
        &self.scales
    }

    fn label(&self) -> String {
        format!("{}+{}", self.metric.name(), self.field.name)
    }

    fn exact(&self) -> bool {
        self.scales.q == 0.0
    }

    fn evaluate(&self, p: &PhasePoint) -> Result<StructureEvaluation> {
        let frame = phase_frame(&self.metric, &self.scales, p)?;
        let gravity = phase_connection(&self.metric, &frame)?;
        if self.scales.q == 0.0 {
            return Ok(assemble(frame, gravity));
        }
        let em = em_phase_connection(&frame, &self.field.components(&p.x)?);
        Ok(assemble(frame, gravity.add(&em)))
    }
}

/// Residuals of the almost-coPoisson-Jacobi identities
/// `[γ̂, Λ] = −γ̂ ∧ Λ♯(L_γ̂ τ̂)` and `[Λ, Λ] = 2 γ̂ ∧ (Λ♯⊗Λ♯)(dτ̂)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlmostJacobiResiduals {
    pub reeb_bracket: f64,
    pub bivector_bracket: f64,
    pub duality: DualityResiduals,
}

impl AlmostJacobiResiduals {
    pub fn max(&self) -> f64 {
        self.reeb_bracket.max(self.bivector_bracket).max(self.duality.max())
    }
}

/// Targets of the two bracket identities at `p`.
pub fn almost_jacobi_targets(s: &dyn PhaseStructures, p: &PhasePoint) -> Result<(MultiIndexArray, MultiIndexArray)> {
    let e = s.evaluate(p)?;
    let dtau = exterior_derivative_time_form(s, p)?;
    // L_γ̂ τ̂ = γ̂ ⌟ dτ̂ since τ̂(γ̂) = 1
    let lie: [f64; 7] = std::array::from_fn(|b| (0..7).map(|a| e.gamma_hat[a] * dtau[a][b]).sum());
    let lifted = sharp(&e.lambda, &lie);
    let g = MultiIndexArray::from_vec7(&e.gamma_hat);
    let reeb = wedge(&g, &MultiIndexArray::from_vec7(&lifted))?.scaled(-1.0);
    // (Λ♯⊗Λ♯)(β)^{AB} = Λ^{CA} Λ^{DB} β_{CD}
    let mut pushed = [[0.0; 7]; 7];
    for a in 0..7 {
        for b in 0..7 {
            let mut v = 0.0;
            for c in 0..7 {
                for d in 0..7 {
                    v += e.lambda[c][a] * e.lambda[d][b] * dtau[c][d];
                }
            }
            pushed[a][b] = v;
        }
    }
    let bi = wedge(&g, &MultiIndexArray::from_mat7(&pushed))?.scaled(2.0);
    Ok((reeb, bi))
}

/// Evaluate both bracket identities and the duality relations at `p`.
pub fn verify_almost_jacobi_pair(s: Arc<dyn PhaseStructures>, p: &PhasePoint) -> Result<AlmostJacobiResiduals> {
    let c = p.coords();
    let g = gamma_hat_field(s.clone());
    let l = lambda_field(s.clone());
    let (reeb_target, bi_target) = almost_jacobi_targets(s.as_ref(), p)?;
    let reeb = schouten_skew(&g, &l, &c)?.sub(&reeb_target)?.max_abs();
    let bi = schouten_skew(&l, &l, &c)?.sub(&bi_target)?.max_abs();
    Ok(AlmostJacobiResiduals { reeb_bracket: reeb, bivector_bracket: bi, duality: duality_residuals(&s.evaluate(p)?) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{closedness_residual, verify_jacobi_pair, GravitationalStructure};
    use crate::spacetime::{minkowski, schwarzschild, DEFAULT_MARGIN};
    use crate::symmetry::phase_diff;

    fn charged(q: f64) -> ScaleConstants {
        ScaleConstants::new(1.3, 0.7, 1.9, q).unwrap()
    }

    fn uniform() -> EmField {
        EmField::constant([0.3, -0.2, 0.1], [0.05, 0.4, -0.25])
    }

    fn point() -> PhasePoint {
        PhasePoint::new([0.2, 0.5, -0.3, 0.8], [0.2, -0.1, 0.25])
    }

    #[test]
    fn two_form_gains_scaled_field() {
        let p = point();
        let j = JoinedStructure::new(minkowski(), charged(0.8), uniform()).unwrap();
        let g = GravitationalStructure::new(minkowski(), charged(0.8)).unwrap();
        let (wj, wg) = (j.evaluate(&p).unwrap().omega, g.evaluate(&p).unwrap().omega);
        let f = j.scaled_field(&p.x).unwrap();
        for a in 0..7 {
            for b in 0..7 {
                assert!((wj[a][b] - wg[a][b] - f[a][b]).abs() < 1e-12, "{a}{b}: {} vs {}", wj[a][b] - wg[a][b], f[a][b]);
            }
        }
    }

    #[test]
    fn zero_charge_is_exactly_gravitational() {
        let p = PhasePoint::new([0.0, 6.0, 1.1, 0.3], [0.1, 0.01, 0.02]);
        let m = schwarzschild(1.0, DEFAULT_MARGIN).unwrap();
        let j = JoinedStructure::new(m.clone(), charged(0.0), EmField::coulomb(0.5)).unwrap();
        let g = GravitationalStructure::new(m, charged(0.0)).unwrap();
        assert_eq!(j.evaluate(&p).unwrap(), g.evaluate(&p).unwrap());
    }

    #[test]
    fn joined_pair_identities() {
        for (m, field, p) in [
            (minkowski(), uniform(), point()),
            (
                schwarzschild(1.0, DEFAULT_MARGIN).unwrap(),
                EmField::coulomb(0.7),
                PhasePoint::new([0.0, 6.0, 1.1, 0.3], [0.1, 0.01, 0.02]),
            ),
        ] {
            let s: Arc<dyn PhaseStructures> = Arc::new(JoinedStructure::new(m, charged(0.6), field).unwrap());
            let r = verify_almost_jacobi_pair(s.clone(), &p).unwrap();
            assert!(r.max() < 1e-6, "{r:?}");
            assert!(closedness_residual(s.as_ref(), &p, &phase_diff()).unwrap() < 1e-7);
        }
    }

    #[test]
    fn zero_charge_matches_jacobi_pair() {
        let s: Arc<dyn PhaseStructures> = Arc::new(JoinedStructure::new(minkowski(), charged(0.0), uniform()).unwrap());
        let a = verify_almost_jacobi_pair(s.clone(), &point()).unwrap();
        let b = verify_jacobi_pair(s, &point()).unwrap();
        assert!((a.reeb_bracket - b.reeb_bracket).abs() < 1e-12);
        assert!((a.bivector_bracket - b.bivector_bracket).abs() < 1e-12);
        assert!(JoinedStructure::new(minkowski(), charged(0.0), uniform()).unwrap().exact());
        assert!(!JoinedStructure::new(minkowski(), charged(0.3), uniform()).unwrap().exact());
    }

    #[test]
    fn non_closed_field_is_rejected() {
        let mut slope = [[[0.0; 4]; 4]; 4];
        slope[3][0][1] = 1.0;
        slope[3][1][0] = -1.0;
        assert!(EmField::affine([[0.0; 4]; 4], slope).is_err());
        // ∂_x F_{t y} paired with ∂_y F_{t x} is exact: F = d(x y dt)
        let mut slope = [[[0.0; 4]; 4]; 4];
        slope[1][2][0] = 1.0;
        slope[1][0][2] = -1.0;
        slope[2][1][0] = 1.0;
        slope[2][0][1] = -1.0;
        assert!(EmField::affine([[0.0; 4]; 4], slope).is_ok());
    }

    #[test]
    fn coulomb_field_is_closed() {
        let f = EmField::coulomb(0.4);
        let x = [0.0, 5.0, 1.0, 0.2];
        assert!(f.closedness_residual(&x).unwrap() < 1e-14);
        assert_eq!(f.antisymmetry_residual(&x).unwrap(), 0.0);
    }

    #[test]
    fn lorentz_acceleration() {
        // at rest in a pure electric field: dv/dt = q E / (2 m c)
        let sc = charged(0.8);
        let j = JoinedStructure::new(minkowski(), sc, EmField::constant([0.3, 0.0, 0.0], [0.0; 3])).unwrap();
        let acc = j.evaluate(&PhasePoint::new([0.0; 4], [0.0; 3])).unwrap().dynamical.acceleration;
        let expected = sc.q * 0.3 / (2.0 * sc.m * sc.c0);
        assert!((acc[0] - expected).abs() < 1e-14 && acc[1] == 0.0 && acc[2] == 0.0, "{acc:?}");
        // moving along x through B_z: force along −y, as q v × B
        let j = JoinedStructure::new(minkowski(), sc, EmField::constant([0.0; 3], [0.0, 0.0, 0.5])).unwrap();
        let acc = j.evaluate(&PhasePoint::new([0.0; 4], [0.4, 0.0, 0.0])).unwrap().dynamical.acceleration;
        assert!(acc[1] < 0.0 && acc[0].abs() < 1e-14 && acc[2].abs() < 1e-14, "{acc:?}");
    }
}
