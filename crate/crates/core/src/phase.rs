//! The 7-dimensional phase space of 1-jets of timelike motions and the
//! structures a metric induces on it: contact map, time form, phase
//! connection, dynamical connection, phase 2-form and 2-vector.
//!
//! Coordinates are ordered `(x0, x1, x2, x3, v1, v2, v3)` throughout, where
//! `v` are the jet coordinates dx^i/dx^0. A 2-form matrix `W` acts as
//! `W(X, Y) = X^A W_{AB} Y^B`; a 2-vector matrix `P` acts as
//! `P(α, β) = α_A P^{AB} β_B`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, DiffConfig, Mat4, Mat7, MultiIndexArray, Vec4, Vec7};
use crate::multivector::{schouten_skew, wedge, SkewMultivectorField};
use crate::spacetime::{christoffel_symbols, Christoffel, ScaleConstants, SpacetimeMetric};

/// A point of the phase space: an event and a coordinate velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec4,
    pub v: [f64; 3],
}

impl PhasePoint {
    pub fn new(x: Vec4, v: [f64; 3]) -> Self {
        Self { x, v }
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        if c.len() != 7 {
            return Err(Error::DimensionMismatch(format!("phase point needs 7 coordinates, got {}", c.len())));
        }
        Ok(Self { x: [c[0], c[1], c[2], c[3]], v: [c[4], c[5], c[6]] })
    }

    pub fn coords(&self) -> Vec7 {
        [self.x[0], self.x[1], self.x[2], self.x[3], self.v[0], self.v[1], self.v[2]]
    }

    /// The lifted direction (1, v).
    pub fn direction(&self) -> Vec4 {
        [1.0, self.v[0], self.v[1], self.v[2]]
    }
}

/// Pointwise contractions of the metric with the lifted direction `u = (1, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFrame {
    pub point: PhasePoint,
    pub scales: ScaleConstants,
    pub metric: Mat4,
    pub metric_inv: Mat4,
    /// `u^μ = (1, v)`
    pub direction: Vec4,
    /// `1/√|g(u, u)|`
    pub alpha: f64,
    /// `g(u, u)`, negative on admissible points
    pub direction_norm: f64,
    /// `(m/ℏ) g(u, u)`
    pub mass_direction_norm: f64,
    /// `δ^i_λ − v^i δ^0_λ`, rows i = 1..3
    pub projector: [Vec4; 3],
    /// `g_{μλ} u^μ`
    pub direction_covector: Vec4,
    /// `(m/ℏ) g_{μλ} u^μ`
    pub mass_direction_covector: Vec4,
    /// `projector^i_ρ (ℏ/m) g^{ρλ}`
    pub mass_projector_up: [Vec4; 3],
    /// `(m/ℏ) g_{iμ} + α² g(u, ∂_i) (m/ℏ) g(u, ∂_μ)`
    pub mass_projector_down: [Vec4; 3],
}

pub fn phase_frame(metric: &SpacetimeMetric, scales: &ScaleConstants, p: &PhasePoint) -> Result<PhaseFrame> {
    scales.validate()?;
    if p.v.iter().any(|c| !c.is_finite()) {
        return Err(Error::EvaluationDomain("non-finite velocity".into()));
    }
    let g = metric.g(&p.x)?;
    let gi = geometry::invert4(&g)?;
    let u = p.direction();
    let direction_covector = geometry::contract4(&u, &g);
    let norm = geometry::dot4(&direction_covector, &u);
    if norm.is_nan() || norm >= 0.0 {
        return Err(Error::NotTimelike(norm));
    }
    let alpha = 1.0 / norm.abs().sqrt();
    let mass = scales.m / scales.hbar0;
    let mut projector = [[0.0; 4]; 3];
    for i in 0..3 {
        projector[i][i + 1] = 1.0;
        projector[i][0] = -p.v[i];
    }
    let mass_direction_covector = direction_covector.map(|c| mass * c);
    let mut mass_projector_up = [[0.0; 4]; 3];
    let mut mass_projector_down = [[0.0; 4]; 3];
    for i in 0..3 {
        for l in 0..4 {
            mass_projector_up[i][l] = (0..4).map(|r| projector[i][r] * gi[r][l]).sum::<f64>() / mass;
            mass_projector_down[i][l] =
                mass * g[i + 1][l] + alpha * alpha * direction_covector[i + 1] * mass_direction_covector[l];
        }
    }
    Ok(PhaseFrame {
        point: *p,
        scales: *scales,
        metric: g,
        metric_inv: gi,
        direction: u,
        alpha,
        direction_norm: norm,
        mass_direction_norm: mass * norm,
        projector,
        direction_covector,
        mass_direction_covector,
        mass_projector_up,
        mass_projector_down,
    })
}

/// The contact map `cα u` and its unscaled counterpart `(ℏα/mc) u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactMap {
    pub scaled: Vec4,
    pub unscaled: Vec4,
}

pub fn contact_map(frame: &PhaseFrame) -> ContactMap {
    let s = &frame.scales;
    let c = s.c0 * frame.alpha;
    let k = s.hbar0 * frame.alpha / (s.m * s.c0);
    ContactMap { scaled: frame.direction.map(|u| c * u), unscaled: frame.direction.map(|u| k * u) }
}

/// The time form `−(α/c) g(u, ·)` and its unscaled counterpart `(mc²/ℏ) τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeForm {
    pub scaled: Vec4,
    pub unscaled: Vec4,
}

pub fn time_form(frame: &PhaseFrame) -> TimeForm {
    let s = &frame.scales;
    let scaled = frame.direction_covector.map(|c| -frame.alpha / s.c0 * c);
    let k = s.m * s.c0 * s.c0 / s.hbar0;
    TimeForm { scaled, unscaled: scaled.map(|t| k * t) }
}

/// The fibred isomorphisms between fibre directions and the kernel of τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuTau {
    /// `forward[i][λ]`: (1/(cα)) projector^i_λ
    pub forward: [Vec4; 3],
    /// `inverse[i]`: spacetime image of ∂/∂v^i, `cα (∂_i − cα τ_i u)`
    pub inverse: [Vec4; 3],
}

pub fn nu_tau(frame: &PhaseFrame) -> NuTau {
    let ca = frame.scales.c0 * frame.alpha;
    let tau = time_form(frame).scaled;
    let mut forward = [[0.0; 4]; 3];
    let mut inverse = [[0.0; 4]; 3];
    for i in 0..3 {
        for l in 0..4 {
            forward[i][l] = frame.projector[i][l] / ca;
            let e = if l == i + 1 { 1.0 } else { 0.0 };
            inverse[i][l] = ca * (e - ca * tau[i + 1] * frame.direction[l]);
        }
    }
    NuTau { forward, inverse }
}

/// `δ^λ_μ − д^λ τ_μ`, the projector onto ker τ along the contact map.
pub fn complementary_contact_map(frame: &PhaseFrame) -> Mat4 {
    let d = contact_map(frame).scaled;
    let t = time_form(frame).scaled;
    let mut out = [[0.0; 4]; 4];
    for l in 0..4 {
        for m in 0..4 {
            out[l][m] = if l == m { 1.0 } else { 0.0 } - d[l] * t[m];
        }
    }
    out
}

/// Connection coefficients `Γ^i_λ` of the jet bundle over spacetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConnection(pub [Vec4; 3]);

impl PhaseConnection {
    pub fn zero() -> Self {
        Self([[0.0; 4]; 3])
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.0;
        for i in 0..3 {
            for l in 0..4 {
                out[i][l] += other.0[i][l];
            }
        }
        Self(out)
    }
}

/// Phase connection induced by a linear spacetime connection with
/// Christoffel symbols `Γ^ν_{λμ}`. The induced coefficients carry the
/// connection with opposite sign to the Christoffels, so
/// `Γ^i_λ = −projector^i_ρ Γ^ρ_{λσ} u^σ`.
pub fn phase_connection_from_christoffel(frame: &PhaseFrame, chr: &Christoffel) -> PhaseConnection {
    let u = &frame.direction;
    let mut out = [[0.0; 4]; 3];
    for i in 0..3 {
        for l in 0..4 {
            let mut acc = 0.0;
            for rho in 0..4 {
                let pr = frame.projector[i][rho];
                if pr == 0.0 {
                    continue;
                }
                acc += pr * (0..4).map(|s| chr[rho][l][s] * u[s]).sum::<f64>();
            }
            out[i][l] = -acc;
        }
    }
    PhaseConnection(out)
}

/// Phase connection of the Levi-Civita connection.
pub fn phase_connection(metric: &SpacetimeMetric, frame: &PhaseFrame) -> Result<PhaseConnection> {
    Ok(phase_connection_from_christoffel(frame, &christoffel_symbols(metric, &frame.point.x)?))
}

/// The second-order connection `cα(∂_0 + v^i ∂_i + γ^i ∂/∂v^i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicalConnection {
    /// `γ^i = Γ^i_ρ u^ρ`, the coordinate acceleration dv^i/dx^0
    pub acceleration: [f64; 3],
    pub scaled: Vec7,
    /// `(ℏ/mc²)` times the scaled field; satisfies τ̂(γ̂) = 1
    pub unscaled: Vec7,
}

pub fn dynamical_connection(frame: &PhaseFrame, gamma: &PhaseConnection) -> DynamicalConnection {
    let s = &frame.scales;
    let u = &frame.direction;
    let acc: [f64; 3] = std::array::from_fn(|i| geometry::dot4(&gamma.0[i], u));
    let ca = s.c0 * frame.alpha;
    let mut scaled = [0.0; 7];
    for l in 0..4 {
        scaled[l] = ca * u[l];
    }
    for i in 0..3 {
        scaled[4 + i] = ca * acc[i];
    }
    let k = s.hbar0 / (s.m * s.c0 * s.c0);
    DynamicalConnection { acceleration: acc, scaled, unscaled: scaled.map(|c| k * c) }
}

/// `cα Ğ_{iμ} (dv^i − Γ^i_λ dx^λ) ∧ dx^μ` as a 7x7 matrix.
pub fn phase_two_form(frame: &PhaseFrame, gamma: &PhaseConnection) -> Mat7 {
    let ca = frame.scales.c0 * frame.alpha;
    let mut w = [[0.0; 7]; 7];
    for i in 0..3 {
        // θ^i as a 7-covector
        let mut theta = [0.0; 7];
        for l in 0..4 {
            theta[l] = -gamma.0[i][l];
        }
        theta[4 + i] = 1.0;
        for mu in 0..4 {
            let coef = ca * frame.mass_projector_down[i][mu];
            if coef == 0.0 {
                continue;
            }
            for a in 0..7 {
                w[a][mu] += coef * theta[a];
                w[mu][a] -= coef * theta[a];
            }
        }
    }
    w
}

/// `(1/(cα)) Ğ^{jλ} (∂_λ + Γ^i_λ ∂/∂v^i) ∧ ∂/∂v^j` as a 7x7 matrix.
pub fn phase_two_vector(frame: &PhaseFrame, gamma: &PhaseConnection) -> Mat7 {
    let ica = 1.0 / (frame.scales.c0 * frame.alpha);
    let mut p = [[0.0; 7]; 7];
    for j in 0..3 {
        for l in 0..4 {
            let coef = ica * frame.mass_projector_up[j][l];
            if coef == 0.0 {
                continue;
            }
            let mut h = [0.0; 7];
            h[l] = 1.0;
            for i in 0..3 {
                h[4 + i] = gamma.0[i][l];
            }
            for a in 0..7 {
                p[a][4 + j] += coef * h[a];
                p[4 + j][a] -= coef * h[a];
            }
        }
    }
    p
}

/// Lower a vector with a 2-form: `X ↦ X^A W_{AB}`.
pub fn flat(form: &Mat7, x: &Vec7) -> Vec7 {
    std::array::from_fn(|b| (0..7).map(|a| x[a] * form[a][b]).sum())
}

/// Raise a covector with a 2-vector: `β ↦ β_A P^{AB}`.
pub fn sharp(bivector: &Mat7, beta: &Vec7) -> Vec7 {
    std::array::from_fn(|b| (0..7).map(|a| beta[a] * bivector[a][b]).sum())
}

/// Extend a spacetime covector to the phase space by zero fibre slots.
pub fn lift_covector(c: &Vec4) -> Vec7 {
    [c[0], c[1], c[2], c[3], 0.0, 0.0, 0.0]
}

/// All structure components at one phase point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureEvaluation {
    pub frame: PhaseFrame,
    pub connection: PhaseConnection,
    pub dynamical: DynamicalConnection,
    /// unscaled time form on the phase space
    pub tau_hat: Vec7,
    pub omega: Mat7,
    /// unscaled dynamical connection, the negative of the Reeb field
    pub gamma_hat: Vec7,
    pub lambda: Mat7,
}

impl StructureEvaluation {
    pub fn point(&self) -> &PhasePoint {
        &self.frame.point
    }

    /// Unscaled contact map `(ℏα/mc) u`.
    pub fn contact_unscaled(&self) -> Vec4 {
        contact_map(&self.frame).unscaled
    }
}

/// Something that assigns (τ̂, Ω, γ̂, Λ) to every admissible phase point.
pub trait PhaseStructures: Send + Sync {
    fn metric(&self) -> &SpacetimeMetric;
    fn scales(&self) -> &ScaleConstants;
    fn evaluate(&self, p: &PhasePoint) -> Result<StructureEvaluation>;

    /// Short label for reports.
    fn label(&self) -> String {
        self.metric().name().to_string()
    }

    /// Whether Ω = −dτ̂, i.e. the pair is contact and (γ̂, Λ) is Jacobi.
    fn exact(&self) -> bool {
        true
    }

    fn frame(&self, p: &PhasePoint) -> Result<PhaseFrame> {
        phase_frame(self.metric(), self.scales(), p)
    }

    fn tau_hat(&self, p: &PhasePoint) -> Result<Vec7> {
        Ok(lift_covector(&time_form(&self.frame(p)?).unscaled))
    }
}

/// Structures induced by the metric alone.
#[derive(Debug, Clone)]
pub struct GravitationalStructure {
    metric: SpacetimeMetric,
    scales: ScaleConstants,
}

impl GravitationalStructure {
    pub fn new(metric: SpacetimeMetric, scales: ScaleConstants) -> Result<Self> {
        scales.validate()?;
        Ok(Self { metric, scales })
    }
}

/// Assemble an evaluation from a frame and a phase connection.
pub fn assemble(frame: PhaseFrame, connection: PhaseConnection) -> StructureEvaluation {
    let dynamical = dynamical_connection(&frame, &connection);
    StructureEvaluation {
        frame,
        connection,
        dynamical,
        tau_hat: lift_covector(&time_form(&frame).unscaled),
        omega: phase_two_form(&frame, &connection),
        gamma_hat: dynamical.unscaled,
        lambda: phase_two_vector(&frame, &connection),
    }
}

impl PhaseStructures for GravitationalStructure {
    fn metric(&self) -> &SpacetimeMetric {
        &self.metric
    }

    fn scales(&self) -> &ScaleConstants {
        &self.scales
    }

    fn evaluate(&self, p: &PhasePoint) -> Result<StructureEvaluation> {
        let frame = phase_frame(&self.metric, &self.scales, p)?;
        let connection = phase_connection(&self.metric, &frame)?;
        Ok(assemble(frame, connection))
    }
}

/// Residuals of the pointwise duality identities between (−τ̂, Ω) and (−γ̂, Λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityResiduals {
    /// max |ΛΩΛ − Λ|
    pub lambda_omega_lambda: f64,
    /// max |ΩΛΩ − Ω|
    pub omega_lambda_omega: f64,
    /// max |ΩΛ − (id − τ̂ ⊗ γ̂)|
    pub partial_inverse: f64,
    /// |τ̂(γ̂) − 1|
    pub reeb_normalization: f64,
    /// max |γ̂ ⌟ Ω|
    pub reeb_kernel: f64,
    /// max |τ̂ ⌟ Λ|
    pub time_kernel: f64,
    /// max of antisymmetry defects of Ω and Λ
    pub antisymmetry: f64,
}

impl DualityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.lambda_omega_lambda,
            self.omega_lambda_omega,
            self.partial_inverse,
            self.reeb_normalization,
            self.reeb_kernel,
            self.time_kernel,
            self.antisymmetry,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn transpose_defect(m: &Mat7) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..7 {
        for b in 0..7 {
            worst = worst.max((m[a][b] + m[b][a]).abs());
        }
    }
    worst
}

pub fn duality_residuals(e: &StructureEvaluation) -> DualityResiduals {
    let (w, p) = (&e.omega, &e.lambda);
    let pwp = geometry::mat7_mul(&geometry::mat7_mul(p, w), p);
    let wpw = geometry::mat7_mul(&geometry::mat7_mul(w, p), w);
    let wp = geometry::mat7_mul(w, p);
    let mut expected = [[0.0; 7]; 7];
    for a in 0..7 {
        for c in 0..7 {
            expected[a][c] = if a == c { 1.0 } else { 0.0 } - e.tau_hat[a] * e.gamma_hat[c];
        }
    }
    DualityResiduals {
        lambda_omega_lambda: geometry::mat7_max_abs_diff(&pwp, p),
        omega_lambda_omega: geometry::mat7_max_abs_diff(&wpw, w),
        partial_inverse: geometry::mat7_max_abs_diff(&wp, &expected),
        reeb_normalization: (geometry::dot7(&e.tau_hat, &e.gamma_hat) - 1.0).abs(),
        reeb_kernel: geometry::max_abs(&flat(w, &e.gamma_hat)),
        time_kernel: geometry::max_abs(&sharp(p, &e.tau_hat)),
        antisymmetry: transpose_defect(w).max(transpose_defect(p)),
    }
}

/// max of |g(д,д) + c²|/c², |τ(д) − 1| and |Ĝ⁻¹(τ̂,τ̂) + 1|.
pub fn normalization_residual(frame: &PhaseFrame) -> f64 {
    let sc = &frame.scales;
    let d = contact_map(frame);
    let t = time_form(frame);
    let gdd = geometry::dot4(&geometry::contract4(&d.scaled, &frame.metric), &d.scaled);
    let k = sc.compton();
    let norm = geometry::dot4(&geometry::contract4(&t.unscaled, &frame.metric_inv), &t.unscaled) / (k * k);
    ((gdd + sc.c0 * sc.c0).abs() / (sc.c0 * sc.c0))
        .max((geometry::dot4(&t.scaled, &d.scaled) - 1.0).abs())
        .max((norm + 1.0).abs())
}

/// Coefficients of `τ̂ ∧ Ω³` and `γ̂ ∧ Λ³` on the coordinate volume.
pub fn regularity(e: &StructureEvaluation) -> (f64, f64) {
    (
        geometry::top_form_coefficient(&e.tau_hat, &geometry::mat7_rows(&e.omega)),
        geometry::top_form_coefficient(&e.gamma_hat, &geometry::mat7_rows(&e.lambda)),
    )
}

/// Evaluate structures at raw phase coordinates.
pub fn evaluate_at(s: &dyn PhaseStructures, c: &[f64]) -> Result<StructureEvaluation> {
    s.evaluate(&PhasePoint::from_coords(c)?)
}

/// `max |Ω + dτ̂|` with dτ̂ by central differences over all 7 coordinates.
pub fn exactness_residual(s: &dyn PhaseStructures, p: &PhasePoint, cfg: &DiffConfig) -> Result<f64> {
    let e = s.evaluate(p)?;
    let d = geometry::exterior_derivative_1form(
        |c| Ok(s.tau_hat(&PhasePoint::from_coords(c)?)?.to_vec()),
        &p.coords(),
        cfg,
    )?;
    let mut worst: f64 = 0.0;
    for a in 0..7 {
        for b in 0..7 {
            worst = worst.max((e.omega[a][b] + d.data()[a * 7 + b]).abs());
        }
    }
    Ok(worst)
}

/// `max |dΩ|` by central differences.
pub fn closedness_residual(s: &dyn PhaseStructures, p: &PhasePoint, cfg: &DiffConfig) -> Result<f64> {
    let d = geometry::exterior_derivative_2form(
        |c| Ok(evaluate_at(s, c)?.omega.iter().flatten().copied().collect()),
        &p.coords(),
        cfg,
    )?;
    Ok(d.max_abs())
}

/// The unscaled dynamical connection as a skew 1-field over the phase chart.
/// Step for differentiating the phase structures: single level when the
/// metric has analytic derivatives, nested otherwise.
pub fn structure_diff(metric: &SpacetimeMetric) -> DiffConfig {
    if metric.has_analytic_derivatives() {
        DiffConfig::default()
    } else {
        DiffConfig::nested()
    }
}

pub fn gamma_hat_field(s: Arc<dyn PhaseStructures>) -> SkewMultivectorField {
    let cfg = structure_diff(s.metric());
    SkewMultivectorField::new(
        "gamma_hat",
        1,
        7,
        Arc::new(move |c| Ok(MultiIndexArray::from_vec7(&evaluate_at(s.as_ref(), c)?.gamma_hat))),
    )
    .with_diff_config(cfg)
}

/// The phase 2-vector as a skew 2-field over the phase chart.
pub fn lambda_field(s: Arc<dyn PhaseStructures>) -> SkewMultivectorField {
    let cfg = structure_diff(s.metric());
    SkewMultivectorField::new(
        "lambda",
        2,
        7,
        Arc::new(move |c| Ok(MultiIndexArray::from_mat7(&evaluate_at(s.as_ref(), c)?.lambda))),
    )
    .with_diff_config(cfg)
}

/// Residuals of the bracket identities of a Jacobi-type pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiResiduals {
    /// max |[γ̂, Λ] − expected|
    pub reeb_bracket: f64,
    /// max |[Λ, Λ] − expected|
    pub bivector_bracket: f64,
}

impl JacobiResiduals {
    pub fn max(&self) -> f64 {
        self.reeb_bracket.max(self.bivector_bracket)
    }
}

/// The two brackets `[γ̂, Λ]` and `[Λ, Λ]` at a point.
pub fn structure_brackets(s: Arc<dyn PhaseStructures>, p: &PhasePoint) -> Result<(MultiIndexArray, MultiIndexArray)> {
    let c = p.coords();
    let g = gamma_hat_field(s.clone());
    let l = lambda_field(s);
    Ok((schouten_skew(&g, &l, &c)?, schouten_skew(&l, &l, &c)?))
}

/// Residuals of `[γ̂, Λ] = 0` and `[Λ, Λ] = 2 γ̂ ∧ Λ`, the statement that
/// (−γ̂, Λ) is a Jacobi pair in the alternating bracket convention.
pub fn verify_jacobi_pair(s: Arc<dyn PhaseStructures>, p: &PhasePoint) -> Result<JacobiResiduals> {
    let e = s.evaluate(p)?;
    let (reeb, bi) = structure_brackets(s, p)?;
    let target = wedge(&MultiIndexArray::from_vec7(&e.gamma_hat), &MultiIndexArray::from_mat7(&e.lambda))?.scaled(2.0);
    Ok(JacobiResiduals { reeb_bracket: reeb.max_abs(), bivector_bracket: bi.sub(&target)?.max_abs() })
}
