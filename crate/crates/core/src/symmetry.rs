//! Infinitesimal symmetries of the contact phase structure: Hamilton–Jacobi
//! lifts of phase functions, the projectability and conservation tests for
//! generalized vector fields, hidden symmetries generated by symmetric
//! multivectors, and the bracket identities relating them.
//!
//! Sign bookkeeping: the contact form is ω = −τ̂ and the Reeb field is
//! E = −γ̂, so the Hamilton–Jacobi lift `Λ♯df − f E` reads `Λ♯df + f γ̂`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{self, DiffConfig, Mat4, MultiIndexArray, Vec4, Vec7};
use crate::multivector::{
    compton_metric, full_contraction, killing_residual, partial_contraction, schouten_sym, schouten_sym_field,
    SymmetricMultivectorField,
};
use crate::phase::{sharp, PhaseFrame, PhasePoint, PhaseStructures};

pub type ScalarFn = Arc<dyn Fn(&PhasePoint) -> Result<f64> + Send + Sync>;
pub type CovectorFn = Arc<dyn Fn(&PhasePoint) -> Result<Vec7> + Send + Sync>;
pub type SpacetimeVectorFn = Arc<dyn Fn(&PhasePoint) -> Result<Vec4> + Send + Sync>;
/// `jac[A][λ]` = ∂_A X^λ over the 7 phase coordinates.
pub type SpacetimeJacobianFn = Arc<dyn Fn(&PhasePoint) -> Result<[Vec4; 7]> + Send + Sync>;
pub type PhaseVectorFn = Arc<dyn Fn(&PhasePoint) -> Result<Vec7> + Send + Sync>;

/// Default step for single-level derivatives of phase-space fields.
pub fn phase_diff() -> DiffConfig {
    DiffConfig::new(1e-5, true, 2).expect("static difference config is valid")
}

fn numeric_jacobian7<const N: usize>(
    f: impl Fn(&PhasePoint) -> Result<[f64; N]>,
    p: &PhasePoint,
    cfg: &DiffConfig,
) -> Result<[[f64; N]; 7]> {
    let jac = geometry::jacobian(|c| Ok(f(&PhasePoint::from_coords(c)?)?.to_vec()), &p.coords(), cfg)?;
    let mut out = [[0.0; N]; 7];
    for (a, row) in jac.iter().enumerate() {
        out[a].copy_from_slice(row);
    }
    Ok(out)
}

/// A real function on the phase space with an optional analytic gradient.
#[derive(Clone)]
pub struct PhaseFunction {
    name: String,
    value: ScalarFn,
    gradient: Option<CovectorFn>,
    diff: DiffConfig,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction").field("name", &self.name).field("analytic", &self.gradient.is_some()).finish()
    }
}

impl PhaseFunction {
    pub fn new(name: impl Into<String>, value: ScalarFn) -> Self {
        Self { name: name.into(), value, gradient: None, diff: phase_diff() }
    }

    pub fn with_gradient(mut self, gradient: CovectorFn) -> Self {
        self.gradient = Some(gradient);
        self
    }

    pub fn with_diff_config(mut self, cfg: DiffConfig) -> Self {
        self.diff = cfg;
        self
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("{value}"), Arc::new(move |_| Ok(value))).with_gradient(Arc::new(|_| Ok([0.0; 7])))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, p: &PhasePoint) -> Result<f64> {
        (self.value)(p)
    }

    pub fn gradient(&self, p: &PhasePoint) -> Result<Vec7> {
        match &self.gradient {
            Some(g) => g(p),
            None => self.numeric_gradient(p),
        }
    }

    pub fn numeric_gradient(&self, p: &PhasePoint) -> Result<Vec7> {
        let g = geometry::gradient(|c| self.value(&PhasePoint::from_coords(c)?), &p.coords(), &self.diff)?;
        Ok(std::array::from_fn(|a| g[a]))
    }

    /// max |analytic − numeric gradient|; zero when no analytic gradient exists.
    pub fn gradient_consistency(&self, p: &PhasePoint) -> Result<f64> {
        if self.gradient.is_none() {
            return Ok(0.0);
        }
        let (a, n) = (self.gradient(p)?, self.numeric_gradient(p)?);
        Ok((0..7).map(|i| (a[i] - n[i]).abs()).fold(0.0, f64::max))
    }
}

/// A fibred map from the phase space to spacetime vectors.
#[derive(Clone)]
pub struct GeneralizedVectorField {
    name: String,
    value: SpacetimeVectorFn,
    jacobian: Option<SpacetimeJacobianFn>,
    diff: DiffConfig,
}

impl fmt::Debug for GeneralizedVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedVectorField").field("name", &self.name).finish()
    }
}

impl GeneralizedVectorField {
    pub fn new(name: impl Into<String>, value: SpacetimeVectorFn) -> Self {
        Self { name: name.into(), value, jacobian: None, diff: DiffConfig::default() }
    }

    pub fn with_jacobian(mut self, jacobian: SpacetimeJacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// A spacetime vector field pulled back to the phase space.
    pub fn from_spacetime(field: &SymmetricMultivectorField) -> Result<Self> {
        if field.degree() != 1 || field.dim() != 4 {
            return Err(Error::DimensionMismatch("expected a spacetime vector field".into()));
        }
        let (f1, f2) = (field.clone(), field.clone());
        Ok(Self::new(
            field.name().to_string(),
            Arc::new(move |p| {
                let c = f1.components(&p.x)?;
                Ok(std::array::from_fn(|l| c.data()[l]))
            }),
        )
        .with_jacobian(Arc::new(move |p| {
            let d = f2.derivatives(&p.x)?;
            let mut out = [[0.0; 4]; 7];
            for rho in 0..4 {
                for l in 0..4 {
                    out[rho][l] = d[rho].data()[l];
                }
            }
            Ok(out)
        })))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, p: &PhasePoint) -> Result<Vec4> {
        (self.value)(p)
    }

    pub fn jacobian(&self, p: &PhasePoint) -> Result<[Vec4; 7]> {
        match &self.jacobian {
            Some(j) => j(p),
            None => self.numeric_jacobian(p),
        }
    }

    pub fn numeric_jacobian(&self, p: &PhasePoint) -> Result<[Vec4; 7]> {
        numeric_jacobian7(|q| self.value(q), p, &self.diff)
    }

    pub fn jacobian_consistency(&self, p: &PhasePoint) -> Result<f64> {
        if self.jacobian.is_none() {
            return Ok(0.0);
        }
        let (a, n) = (self.jacobian(p)?, self.numeric_jacobian(p)?);
        let mut worst: f64 = 0.0;
        for i in 0..7 {
            for l in 0..4 {
                worst = worst.max((a[i][l] - n[i][l]).abs());
            }
        }
        Ok(worst)
    }
}

/// A vector field on the phase space.
#[derive(Clone)]
pub struct PhaseVectorField {
    name: String,
    value: PhaseVectorFn,
    diff: DiffConfig,
}

impl fmt::Debug for PhaseVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseVectorField").field("name", &self.name).finish()
    }
}

impl PhaseVectorField {
    pub fn new(name: impl Into<String>, value: PhaseVectorFn) -> Self {
        Self { name: name.into(), value, diff: phase_diff() }
    }

    pub fn with_diff_config(mut self, cfg: DiffConfig) -> Self {
        self.diff = cfg;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, p: &PhasePoint) -> Result<Vec7> {
        (self.value)(p)
    }

    /// The spacetime part.
    pub fn projection(&self, p: &PhasePoint) -> Result<Vec4> {
        let v = self.value(p)?;
        Ok([v[0], v[1], v[2], v[3]])
    }

    /// `jac[A][B]` = ∂_A X^B.
    pub fn jacobian(&self, p: &PhasePoint) -> Result<[Vec7; 7]> {
        numeric_jacobian7(|q| self.value(q), p, &self.diff)
    }

    /// Derivative of a function along this field.
    pub fn apply(&self, f: &PhaseFunction, p: &PhasePoint) -> Result<f64> {
        Ok(geometry::dot7(&self.value(p)?, &f.gradient(p)?))
    }
}

/// The unscaled dynamical connection γ̂ as a phase vector field.
pub fn dynamical_field(s: Arc<dyn PhaseStructures>) -> PhaseVectorField {
    PhaseVectorField::new("gamma_hat", Arc::new(move |p| Ok(s.evaluate(p)?.gamma_hat)))
}

/// `[X, Y]^a = X^b ∂_b Y^a − Y^b ∂_b X^a`.
pub fn lie_bracket_phase(x: &PhaseVectorField, y: &PhaseVectorField, p: &PhasePoint) -> Result<Vec7> {
    let (xv, yv) = (x.value(p)?, y.value(p)?);
    let (dx, dy) = (x.jacobian(p)?, y.jacobian(p)?);
    Ok(std::array::from_fn(|a| (0..7).map(|b| xv[b] * dy[b][a] - yv[b] * dx[b][a]).sum()))
}

/// The unscaled time form, unscaled contact map and their derivatives over
/// the phase coordinates, from analytic metric derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFormJet {
    pub frame: PhaseFrame,
    pub tau_hat: Vec4,
    /// `d_tau[A][λ]` = ∂_A τ̂_λ
    pub d_tau: [Vec4; 7],
    pub contact_hat: Vec4,
    /// `d_contact[A][λ]` = ∂_A д̂^λ
    pub d_contact: [Vec4; 7],
    /// `metric_derivative[ρ]` = ∂_ρ g
    pub metric_derivative: [Mat4; 4],
}

pub fn time_form_jet(s: &dyn PhaseStructures, p: &PhasePoint) -> Result<TimeFormJet> {
    let frame = s.frame(p)?;
    let dg = s.metric().dg(&p.x)?;
    let sc = frame.scales;
    let u = frame.direction;
    let a = frame.alpha;
    let k = sc.compton();
    let g = &frame.metric;
    // derivatives of g(u,u) and g(u, ·)
    let mut d_norm = [0.0; 7];
    let mut d_cov = [[0.0; 4]; 7];
    for rho in 0..4 {
        let du = geometry::contract4(&u, &dg[rho]);
        d_norm[rho] = geometry::dot4(&du, &u);
        d_cov[rho] = du;
    }
    for j in 0..3 {
        d_norm[4 + j] = 2.0 * frame.direction_covector[j + 1];
        d_cov[4 + j] = g[j + 1];
    }
    let d_alpha: [f64; 7] = std::array::from_fn(|i| 0.5 * a * a * a * d_norm[i]);
    let tau_hat = frame.direction_covector.map(|c| -k * a * c);
    let contact_hat = u.map(|c| a * c / k);
    let mut d_tau = [[0.0; 4]; 7];
    let mut d_contact = [[0.0; 4]; 7];
    for i in 0..7 {
        for l in 0..4 {
            d_tau[i][l] = -k * (d_alpha[i] * frame.direction_covector[l] + a * d_cov[i][l]);
            let du = if i >= 4 && l == i - 3 { 1.0 } else { 0.0 };
            d_contact[i][l] = (d_alpha[i] * u[l] + a * du) / k;
        }
    }
    Ok(TimeFormJet { frame, tau_hat, d_tau, contact_hat, d_contact, metric_derivative: dg })
}

/// `f = τ̂(X̱)` with gradient assembled from the jet of τ̂ and the Jacobian of X̱.
pub fn tau_of(xbar: &GeneralizedVectorField, s: Arc<dyn PhaseStructures>) -> PhaseFunction {
    let (x1, x2) = (xbar.clone(), xbar.clone());
    let s2 = s.clone();
    PhaseFunction::new(
        format!("tau({})", xbar.name()),
        Arc::new(move |p| {
            let t = s.tau_hat(p)?;
            let x = x1.value(p)?;
            Ok((0..4).map(|l| t[l] * x[l]).sum())
        }),
    )
    .with_gradient(Arc::new(move |p| {
        let jet = time_form_jet(s2.as_ref(), p)?;
        let x = x2.value(p)?;
        let dx = x2.jacobian(p)?;
        Ok(std::array::from_fn(|a| {
            geometry::dot4(&jet.d_tau[a], &x) + geometry::dot4(&jet.tau_hat, &dx[a])
        }))
    }))
}

/// Hamilton–Jacobi lift `Λ♯df + f γ̂`.
pub fn hamilton_jacobi_lift(f: &PhaseFunction, s: Arc<dyn PhaseStructures>) -> PhaseVectorField {
    let f = f.clone();
    PhaseVectorField::new(
        format!("hj({})", f.name()),
        Arc::new(move |p| {
            let e = s.evaluate(p)?;
            let df = f.gradient(p)?;
            let fv = f.value(p)?;
            let lifted = sharp(&e.lambda, &df);
            Ok(std::array::from_fn(|a| lifted[a] + fv * e.gamma_hat[a]))
        }),
    )
}

/// `Ğ_{0ρ}(x, v) = (m/ℏ) g_{μρ} u^μ` and its x-derivatives at fixed v.
fn mass_covector_jet(jet: &TimeFormJet) -> (Vec4, [Vec4; 4]) {
    let f = &jet.frame;
    let mass = f.scales.m / f.scales.hbar0;
    let mut d = [[0.0; 4]; 4];
    for rho in 0..4 {
        d[rho] = geometry::contract4(&f.direction, &jet.metric_derivative[rho]).map(|c| mass * c);
    }
    (f.mass_direction_covector, d)
}

/// Closed-form coordinate expansion of the Hamilton–Jacobi lift of τ̂(X̱)
/// for the metric structure alone, used as an independent oracle.
pub fn hamilton_jacobi_lift_expanded(
    xbar: &GeneralizedVectorField,
    s: &dyn PhaseStructures,
    p: &PhasePoint,
) -> Result<Vec7> {
    let jet = time_form_jet(s, p)?;
    let f = &jet.frame;
    let (b0, db0) = mass_covector_jet(&jet);
    let up = &f.mass_projector_up;
    let x = xbar.value(p)?;
    let dx = xbar.jacobian(p)?;
    let mut out = [0.0; 7];
    // Ğ_{0ρ} ∂⁰_j X̱^ρ
    let w: [f64; 3] = std::array::from_fn(|j| geometry::dot4(&b0, &dx[4 + j]));
    for l in 0..4 {
        out[l] = x[l] + (0..3).map(|j| w[j] * up[j][l]).sum::<f64>();
    }
    for i in 0..3 {
        let mut acc = 0.0;
        for rho in 0..4 {
            let mut bracket = 0.0;
            for sg in 0..4 {
                bracket += x[sg] * db0[sg][rho] + b0[sg] * dx[rho][sg];
            }
            for j in 0..3 {
                for om in 0..4 {
                    bracket += w[j] * up[j][om] * (db0[om][rho] - db0[rho][om]);
                }
            }
            acc += up[i][rho] * bracket;
        }
        out[4 + i] = -acc;
    }
    Ok(out)
}

/// `Ğ_{0ρ} ∂⁰_j X̱^ρ`, j = 1..3; vanishes exactly when the Hamilton–Jacobi
/// lift of τ̂(X̱) projects onto X̱.
pub fn projectability_residual(xbar: &GeneralizedVectorField, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<[f64; 3]> {
    let f = s.frame(p)?;
    let dx = xbar.jacobian(p)?;
    Ok(std::array::from_fn(|j| geometry::dot4(&f.mass_direction_covector, &dx[4 + j])))
}

/// `max_j |Ğ_{0ρ} ∂⁰_j X̱^ρ| / max(1, Σ_ρ |Ğ_{0ρ} ∂⁰_j X̱^ρ|)`: the
/// projectability residual relative to the size of the cancelling terms.
pub fn projectability_residual_scaled(xbar: &GeneralizedVectorField, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<f64> {
    let f = s.frame(p)?;
    let dx = xbar.jacobian(p)?;
    let b = &f.mass_direction_covector;
    Ok((0..3)
        .map(|j| {
            let sum: f64 = (0..4).map(|r| b[r] * dx[4 + j][r]).sum();
            let size: f64 = (0..4).map(|r| (b[r] * dx[4 + j][r]).abs()).sum();
            sum.abs() / size.max(1.0)
        })
        .fold(0.0, f64::max))
}

/// Threshold below which a field counts as projectable for the fast path.
pub const PROJECTABLE_TOLERANCE: f64 = 1e-9;

/// Which expression evaluated the conservation residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConservationPath {
    Projectable,
    General,
}

/// `γ̂.(τ̂(X̱))` from the coordinate expressions: the short form for
/// projectable fields, the full form otherwise.
pub fn conservation_residual(
    xbar: &GeneralizedVectorField,
    s: &dyn PhaseStructures,
    p: &PhasePoint,
) -> Result<(f64, ConservationPath)> {
    let proj = projectability_residual(xbar, s, p)?;
    let jet = time_form_jet(s, p)?;
    let f = &jet.frame;
    let u = &f.direction;
    let a2 = f.alpha * f.alpha;
    let x = xbar.value(p)?;
    let dx = xbar.jacobian(p)?;
    // u^ρ ∂_ρ X̱^σ and ∂_σ g(u,u)
    let u_dx: Vec4 = std::array::from_fn(|sg| (0..4).map(|rho| u[rho] * dx[rho][sg]).sum());
    let d_norm: Vec4 =
        std::array::from_fn(|sg| geometry::dot4(&geometry::contract4(u, &jet.metric_derivative[sg]), u));
    let short = geometry::dot4(&f.direction_covector, &u_dx) + 0.5 * geometry::dot4(&x, &d_norm);
    if geometry::max_abs(&proj) <= PROJECTABLE_TOLERANCE {
        return Ok((-a2 * short, ConservationPath::Projectable));
    }
    let (_, db0) = mass_covector_jet(&jet);
    let mass = f.scales.m / f.scales.hbar0;
    let up = &f.mass_projector_up;
    let mut extra = 0.0;
    for j in 0..3 {
        for rho in 0..4 {
            let u_db: f64 = (0..4).map(|sg| u[sg] * db0[sg][rho]).sum();
            extra += proj[j] * up[j][rho] * (u_db - 0.5 * mass * d_norm[rho]);
        }
    }
    // γ̂.f = (ℏ/m) α² (−(m/ℏ) short + extra)
    Ok((a2 * (-short + extra / mass), ConservationPath::General))
}

/// `γ̂.(τ̂(X̱))` by differentiating the phase function along γ̂.
pub fn conservation_residual_direct(
    xbar: &GeneralizedVectorField,
    s: Arc<dyn PhaseStructures>,
    p: &PhasePoint,
) -> Result<f64> {
    let f = tau_of(xbar, s.clone());
    reeb_derivative(&f, s.as_ref(), p)
}

/// `γ̂.f`.
pub fn reeb_derivative(f: &PhaseFunction, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<f64> {
    Ok(geometry::dot7(&s.evaluate(p)?.gamma_hat, &f.gradient(p)?))
}

/// `{f, g} = Λ(df, dg)`.
pub fn poisson_bracket(f: &PhaseFunction, g: &PhaseFunction, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<f64> {
    let e = s.evaluate(p)?;
    Ok(geometry::dot7(&sharp(&e.lambda, &f.gradient(p)?), &g.gradient(p)?))
}

/// Contract all slots but the first with τ̂, one of them replaced by `w`.
fn contract_with_one(k: &MultiIndexArray, tau: &[f64], w: &[f64]) -> Result<Vec4> {
    match k.rank() {
        0 | 1 => Err(Error::Unsupported("needs degree >= 2".into())),
        _ => {
            // reduce trailing slots down to a matrix
            let mut acc = k.data().to_vec();
            for _ in 2..k.rank() {
                acc = acc.chunks(4).map(|c| c.iter().zip(tau).map(|(x, y)| x * y).sum()).collect();
            }
            Ok(std::array::from_fn(|l| (0..4).map(|r| acc[l * 4 + r] * w[r]).sum()))
        }
    }
}

/// The phase function `K(τ̂, …, τ̂)` and its analytic gradient.
pub fn phase_function_from_multivector(
    k: &SymmetricMultivectorField,
    s: Arc<dyn PhaseStructures>,
) -> Result<PhaseFunction> {
    if k.degree() == 0 {
        return Err(Error::Unsupported("phase function of a degree-0 field".into()));
    }
    if k.dim() != 4 {
        return Err(Error::DimensionMismatch("phase functions need spacetime multivectors".into()));
    }
    let (k1, k2) = (k.clone(), k.clone());
    let s1 = s.clone();
    let deg = k.degree() as f64;
    Ok(PhaseFunction::new(
        format!("{}(tau)", k.name()),
        Arc::new(move |p| full_contraction(&k1.components(&p.x)?, &s1.tau_hat(p)?[..4])),
    )
    .with_gradient(Arc::new(move |p| {
        let jet = time_form_jet(s.as_ref(), p)?;
        let kc = k2.components(&p.x)?;
        let dk = k2.derivatives(&p.x)?;
        let partial = partial_contraction(&kc, &jet.tau_hat)?;
        let mut out = [0.0; 7];
        for a in 0..7 {
            let mut v = deg * geometry::dot4(&partial[..4].try_into().expect("length 4"), &jet.d_tau[a]);
            if a < 4 {
                v += full_contraction(&dk[a], &jet.tau_hat)?;
            }
            out[a] = v;
        }
        Ok(out)
    })))
}

/// `(−1)^k (cα)^k Ğ_{0ρ₁}…Ğ_{0ρ_k} K^{ρ₁…ρ_k}`, the coordinate form of K(τ̂).
pub fn multivector_phase_value_coordinate(k: &SymmetricMultivectorField, frame: &PhaseFrame) -> Result<f64> {
    let deg = k.degree() as i32;
    let ca = frame.scales.c0 * frame.alpha;
    Ok((-ca).powi(deg) * full_contraction(&k.components(&frame.point.x)?, &frame.mass_direction_covector)?)
}

/// `X̱[K] = k τ̂⌟…⌟K − (k−1) K(τ̂) д̂` with analytic Jacobian.
pub fn generalized_field_from_multivector(
    k: &SymmetricMultivectorField,
    s: Arc<dyn PhaseStructures>,
) -> Result<GeneralizedVectorField> {
    if k.degree() == 0 {
        return Err(Error::Unsupported("generalized field of a degree-0 field".into()));
    }
    let (k1, k2) = (k.clone(), k.clone());
    let s1 = s.clone();
    let deg = k.degree();
    let kf = deg as f64;
    Ok(GeneralizedVectorField::new(
        format!("Xbar[{}]", k.name()),
        Arc::new(move |p| {
            let jet = time_form_jet(s1.as_ref(), p)?;
            let kc = k1.components(&p.x)?;
            let partial = partial_contraction(&kc, &jet.tau_hat)?;
            let full = full_contraction(&kc, &jet.tau_hat)?;
            Ok(std::array::from_fn(|l| kf * partial[l] - (kf - 1.0) * full * jet.contact_hat[l]))
        }),
    )
    .with_jacobian(Arc::new(move |p| {
        let jet = time_form_jet(s.as_ref(), p)?;
        let kc = k2.components(&p.x)?;
        let dk = k2.derivatives(&p.x)?;
        let tau = &jet.tau_hat;
        let partial = partial_contraction(&kc, tau)?;
        let full = full_contraction(&kc, tau)?;
        let mut out = [[0.0; 4]; 7];
        for a in 0..7 {
            // ∂_A of τ̂⌟…⌟K
            let mut d_partial = [0.0; 4];
            if a < 4 {
                let pd = partial_contraction(&dk[a], tau)?;
                d_partial.copy_from_slice(&pd[..4]);
            }
            if deg >= 2 {
                let w = contract_with_one(&kc, tau, &jet.d_tau[a])?;
                for l in 0..4 {
                    d_partial[l] += (kf - 1.0) * w[l];
                }
            }
            let mut d_full = kf * geometry::dot4(&partial[..4].try_into().expect("length 4"), &jet.d_tau[a]);
            if a < 4 {
                d_full += full_contraction(&dk[a], tau)?;
            }
            for l in 0..4 {
                out[a][l] = kf * d_partial[l]
                    - (kf - 1.0) * (d_full * jet.contact_hat[l] + full * jet.d_contact[a][l]);
            }
        }
        Ok(out)
    })))
}

/// Coordinate form of X̱[K]:
/// `(−cα)^{k−1} [k Ğ_{0ρ…} K^{ρ…λ} + (k−1)(ℏ/m) α² Ğ_{0ρ…} K^{ρ…} u^λ]`.
pub fn generalized_field_coordinate(k: &SymmetricMultivectorField, frame: &PhaseFrame) -> Result<Vec4> {
    let deg = k.degree();
    let kf = deg as f64;
    let ca = frame.scales.c0 * frame.alpha;
    let kc = k.components(&frame.point.x)?;
    let b0 = &frame.mass_direction_covector;
    let partial = partial_contraction(&kc, b0)?;
    let full = full_contraction(&kc, b0)?;
    let lead = (-ca).powi(deg as i32 - 1);
    let hm = frame.scales.hbar0 / frame.scales.m;
    Ok(std::array::from_fn(|l| {
        lead * (kf * partial[l] + (kf - 1.0) * hm * frame.alpha * frame.alpha * full * frame.direction[l])
    }))
}

/// A symmetry generated by a symmetric multivector.
#[derive(Debug, Clone)]
pub struct HiddenSymmetry {
    pub degree: usize,
    pub phase_function: PhaseFunction,
    pub projection: GeneralizedVectorField,
    pub field: PhaseVectorField,
    /// Set when the generator failed the Killing test at the probe points.
    pub warning: Option<String>,
}

/// Tolerance on the Killing residual below which a generator counts as Killing.
pub const KILLING_TOLERANCE: f64 = 1e-7;

/// Build `X[K]`, the Hamilton–Jacobi lift of K(τ̂), and its projection
/// X̱[K]. The Killing property is checked at `probes`; failures are reported
/// through `warning` rather than as errors.
pub fn hidden_symmetry(
    k: &SymmetricMultivectorField,
    s: Arc<dyn PhaseStructures>,
    probes: &[PhasePoint],
) -> Result<HiddenSymmetry> {
    let f = phase_function_from_multivector(k, s.clone())?;
    let projection = generalized_field_from_multivector(k, s.clone())?;
    let field = hamilton_jacobi_lift(&f, s.clone()).with_name(format!("X[{}]", k.name()));
    let mut worst: f64 = 0.0;
    for p in probes {
        worst = worst.max(killing_residual(k, s.metric(), &p.x)?.max_abs());
    }
    let warning = (worst > KILLING_TOLERANCE)
        .then(|| format!("{} is not Killing: residual {worst:.3e}; its phase function is not conserved", k.name()));
    Ok(HiddenSymmetry { degree: k.degree(), phase_function: f, projection, field, warning })
}

impl PhaseVectorField {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// `(L_X τ̂)_B = X^A ∂_A τ̂_B + τ̂_A ∂_B X^A`.
pub fn lie_derivative_time_form(x: &PhaseVectorField, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<Vec7> {
    let jet = time_form_jet(s, p)?;
    let xv = x.value(p)?;
    let dx = x.jacobian(p)?;
    Ok(std::array::from_fn(|b| {
        let transport: f64 = if b < 4 { (0..7).map(|a| xv[a] * jet.d_tau[a][b]).sum() } else { 0.0 };
        let twist: f64 = (0..4).map(|a| jet.tau_hat[a] * dx[b][a]).sum();
        transport + twist
    }))
}

/// `(L_X Ω)_{BC} = X^A ∂_A Ω_{BC} + Ω_{AC} ∂_B X^A + Ω_{BA} ∂_C X^A`, as a
/// flattened 7x7 array.
pub fn lie_derivative_two_form(x: &PhaseVectorField, s: &dyn PhaseStructures, p: &PhasePoint) -> Result<Vec<f64>> {
    let e = s.evaluate(p)?;
    let cfg = phase_diff();
    let d_omega = geometry::jacobian(
        |c| Ok(s.evaluate(&PhasePoint::from_coords(c)?)?.omega.iter().flatten().copied().collect()),
        &p.coords(),
        &cfg,
    )?;
    let xv = x.value(p)?;
    let dx = x.jacobian(p)?;
    let w = &e.omega;
    let mut out = vec![0.0; 49];
    for b in 0..7 {
        for c in 0..7 {
            let mut v: f64 = (0..7).map(|a| xv[a] * d_omega[a][b * 7 + c]).sum();
            for a in 0..7 {
                v += w[a][c] * dx[b][a] + w[b][a] * dx[c][a];
            }
            out[b * 7 + c] = v;
        }
    }
    Ok(out)
}

/// `(dτ̂)_{AB} = ∂_A τ̂_B − ∂_B τ̂_A` from the analytic jet.
pub fn exterior_derivative_time_form(s: &dyn PhaseStructures, p: &PhasePoint) -> Result<[Vec7; 7]> {
    let jet = time_form_jet(s, p)?;
    let t = |a: usize, b: usize| if b < 4 { jet.d_tau[a][b] } else { 0.0 };
    Ok(std::array::from_fn(|a| std::array::from_fn(|b| t(a, b) - t(b, a))))
}

/// Generator bracket `((f,h); (g,k)) ↦ ({f,g}, {f,k} − {g,h} − dω(df♯, dg♯))`
/// with ω = −τ̂.
pub fn generator_bracket(
    f: &PhaseFunction,
    h: &PhaseFunction,
    g: &PhaseFunction,
    k: &PhaseFunction,
    s: &dyn PhaseStructures,
    p: &PhasePoint,
) -> Result<(f64, f64)> {
    let e = s.evaluate(p)?;
    let df = sharp(&e.lambda, &f.gradient(p)?);
    let dg = sharp(&e.lambda, &g.gradient(p)?);
    let dtau = exterior_derivative_time_form(s, p)?;
    let mut d_omega = 0.0;
    for a in 0..7 {
        for b in 0..7 {
            d_omega -= df[a] * dtau[a][b] * dg[b];
        }
    }
    let fg = poisson_bracket(f, g, s, p)?;
    let fk = poisson_bracket(f, k, s, p)?;
    let gh = poisson_bracket(g, h, s, p)?;
    Ok((fg, fk - gh - d_omega))
}

/// Residuals comparing the bracket of two generated symmetries with the
/// symmetry generated by the Schouten bracket.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HomomorphismResiduals {
    /// max |[X[K], X[L]] − X[[K, L]]| componentwise
    pub field: f64,
    /// max |{K(τ̂), L(τ̂)} − [K, L](τ̂)|
    pub poisson: f64,
    /// max |{K(τ̂), L(τ̂)} + k K γ̂.L − l L γ̂.K − [K, L](τ̂)|
    pub general_bracket: f64,
    /// max |τ̂([X[K], X[L]]) − [K,L](τ̂) − (l−1) L γ̂.K + (k−1) K γ̂.L|
    pub projected: f64,
}

impl HomomorphismResiduals {
    pub fn max(&self) -> f64 {
        self.field.max(self.poisson).max(self.general_bracket).max(self.projected)
    }
}

/// Evaluate the homomorphism identities at each point and keep the worst.
pub fn verify_homomorphism(
    k: &SymmetricMultivectorField,
    l: &SymmetricMultivectorField,
    s: Arc<dyn PhaseStructures>,
    points: &[PhasePoint],
) -> Result<HomomorphismResiduals> {
    let kl = schouten_sym_field(k, l)?;
    let xk = hidden_symmetry(k, s.clone(), &[])?;
    let xl = hidden_symmetry(l, s.clone(), &[])?;
    let xkl = hidden_symmetry(&kl, s.clone(), &[])?;
    let (kd, ld) = (k.degree() as f64, l.degree() as f64);
    let mut out = HomomorphismResiduals { field: 0.0, poisson: 0.0, general_bracket: 0.0, projected: 0.0 };
    for p in points {
        let lhs = lie_bracket_phase(&xk.field, &xl.field, p)?;
        let rhs = xkl.field.value(p)?;
        out.field = out.field.max((0..7).map(|a| (lhs[a] - rhs[a]).abs()).fold(0.0, f64::max));
        let (fk, fl) = (&xk.phase_function, &xl.phase_function);
        let pb = poisson_bracket(fk, fl, s.as_ref(), p)?;
        let target = xkl.phase_function.value(p)?;
        out.poisson = out.poisson.max((pb - target).abs());
        let (vk, vl) = (fk.value(p)?, fl.value(p)?);
        let (gk, gl) = (reeb_derivative(fk, s.as_ref(), p)?, reeb_derivative(fl, s.as_ref(), p)?);
        out.general_bracket = out.general_bracket.max((pb + kd * vk * gl - ld * vl * gk - target).abs());
        let tau = s.tau_hat(p)?;
        let projected = geometry::dot7(&tau, &lhs);
        out.projected =
            out.projected.max((projected - target - (ld - 1.0) * vl * gk + (kd - 1.0) * vk * gl).abs());
    }
    Ok(out)
}

/// `γ̂.K(τ̂) − ½ [K, Ĝ](τ̂)` for any symmetric K.
pub fn killing_conservation_identity_residual(
    k: &SymmetricMultivectorField,
    s: Arc<dyn PhaseStructures>,
    p: &PhasePoint,
) -> Result<f64> {
    let f = phase_function_from_multivector(k, s.clone())?;
    let lhs = reeb_derivative(&f, s.as_ref(), p)?;
    let bracket = schouten_sym(k, &compton_metric(s.metric(), s.scales()), &p.x)?;
    let rhs = 0.5 * full_contraction(&bracket, &s.tau_hat(p)?[..4])?;
    Ok(lhs - rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multivector::{auxiliary_field, killing_field, killing_field_names};
    use crate::phase::GravitationalStructure;
    use crate::spacetime::{kerr, minkowski, schwarzschild, ScaleConstants, SpacetimeMetric, DEFAULT_MARGIN};

    fn odd() -> ScaleConstants {
        ScaleConstants::new(1.3, 0.7, 1.9, 0.0).unwrap()
    }

    fn structures(m: SpacetimeMetric, sc: ScaleConstants) -> Arc<dyn PhaseStructures> {
        Arc::new(GravitationalStructure::new(m, sc).unwrap())
    }

    fn cases() -> Vec<(Arc<dyn PhaseStructures>, PhasePoint)> {
        vec![
            (structures(minkowski(), odd()), PhasePoint::new([0.4, 1.2, -0.7, 0.3], [0.2, -0.1, 0.3])),
            (
                structures(schwarzschild(1.0, DEFAULT_MARGIN).unwrap(), odd()),
                PhasePoint::new([0.0, 7.0, 1.2, 0.5], [0.1, 0.02, -0.03]),
            ),
            (
                structures(kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap(), odd()),
                PhasePoint::new([0.0, 8.0, 1.3, 0.4], [-0.05, 0.01, 0.02]),
            ),
        ]
    }

    #[test]
    fn hj_lift_of_constant_is_dynamical_field() {
        for (s, p) in cases() {
            let x = hamilton_jacobi_lift(&PhaseFunction::constant(1.0), s.clone()).value(&p).unwrap();
            let g = s.evaluate(&p).unwrap().gamma_hat;
            assert!((0..7).all(|a| (x[a] - g[a]).abs() < 1e-15));
        }
    }

    #[test]
    fn analytic_gradients_match_numeric() {
        for (s, p) in cases() {
            for name in killing_field_names(s.metric().name()).unwrap() {
                let k = killing_field(s.metric(), name).unwrap();
                let f = phase_function_from_multivector(&k, s.clone()).unwrap();
                let scale = 1.0 + geometry::max_abs(&f.gradient(&p).unwrap());
                assert!(f.gradient_consistency(&p).unwrap() < 1e-7 * scale, "{name}");
                let x = generalized_field_from_multivector(&k, s.clone()).unwrap();
                let scale = 1.0 + x.value(&p).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(x.jacobian_consistency(&p).unwrap() < 1e-7 * scale, "{name}");
            }
        }
    }

    #[test]
    fn phase_function_coordinate_form() {
        for (s, p) in cases() {
            let frame = s.frame(&p).unwrap();
            for name in killing_field_names(s.metric().name()).unwrap() {
                let k = killing_field(s.metric(), name).unwrap();
                let a = phase_function_from_multivector(&k, s.clone()).unwrap().value(&p).unwrap();
                let b = multivector_phase_value_coordinate(&k, &frame).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{name}: {a} vs {b}");
                let xa = generalized_field_from_multivector(&k, s.clone()).unwrap().value(&p).unwrap();
                let xb = generalized_field_coordinate(&k, &frame).unwrap();
                for l in 0..4 {
                    assert!((xa[l] - xb[l]).abs() < 1e-10 * (1.0 + xa[l].abs()));
                }
            }
        }
    }

    #[test]
    fn compton_metric_phase_function_is_minus_one() {
        for (s, p) in cases() {
            let g = compton_metric(s.metric(), s.scales());
            let f = phase_function_from_multivector(&g, s.clone()).unwrap();
            assert!((f.value(&p).unwrap() + 1.0).abs() < 1e-12);
            // the symmetry is minus the dynamical field
            let h = hidden_symmetry(&g, s.clone(), &[p]).unwrap();
            let x = h.field.value(&p).unwrap();
            let gh = s.evaluate(&p).unwrap().gamma_hat;
            assert!((0..7).all(|a| (x[a] + gh[a]).abs() < 1e-10));
            assert!(h.warning.is_none());
        }
    }

    #[test]
    fn tau_of_contact_map_is_one() {
        for (s, p) in cases() {
            let s2 = s.clone();
            let d = GeneralizedVectorField::new("contact", Arc::new(move |q| Ok(crate::phase::contact_map(&s2.frame(q)?).unscaled)));
            assert!((tau_of(&d, s.clone()).value(&p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expanded_lift_matches_hj_lift() {
        for (s, p) in cases() {
            let names = killing_field_names(s.metric().name()).unwrap();
            let mut fields: Vec<_> = names.iter().map(|n| killing_field(s.metric(), n).unwrap()).collect();
            if s.metric().name() != "minkowski" {
                fields.push(auxiliary_field(s.metric(), "radial_square").unwrap());
            }
            for k in fields {
                let xbar = generalized_field_from_multivector(&k, s.clone()).unwrap();
                let hj = hamilton_jacobi_lift(&tau_of(&xbar, s.clone()), s.clone()).value(&p).unwrap();
                let ex = hamilton_jacobi_lift_expanded(&xbar, s.as_ref(), &p).unwrap();
                let scale = 1.0 + geometry::max_abs(&hj);
                for a in 0..7 {
                    assert!((hj[a] - ex[a]).abs() < 1e-8 * scale, "{} slot {a}: {} vs {}", k.name(), hj[a], ex[a]);
                }
            }
        }
    }

    #[test]
    fn broken_field_fails_projectability() {
        let (s, p) = cases().remove(1);
        let s2 = s.clone();
        let broken = GeneralizedVectorField::new(
            "broken",
            Arc::new(move |q| {
                let d = crate::phase::contact_map(&s2.frame(q)?).unscaled;
                Ok(d.map(|c| c * (1.0 + q.v[0])))
            }),
        );
        let r = projectability_residual(&broken, s.as_ref(), &p).unwrap();
        assert!(geometry::max_abs(&r) > 1e-3);
        let (fast, path) = conservation_residual(&broken, s.as_ref(), &p).unwrap();
        assert_eq!(path, ConservationPath::General);
        let direct = conservation_residual_direct(&broken, s.clone(), &p).unwrap();
        assert!((fast - direct).abs() < 1e-8, "{fast} vs {direct}");
    }

    #[test]
    fn conservation_paths_agree_for_non_killing() {
        for (s, p) in cases().into_iter().skip(1) {
            let k = auxiliary_field(s.metric(), "radial_dilation").unwrap();
            let xbar = GeneralizedVectorField::from_spacetime(&k).unwrap();
            let (a, path) = conservation_residual(&xbar, s.as_ref(), &p).unwrap();
            assert_eq!(path, ConservationPath::Projectable);
            let b = conservation_residual_direct(&xbar, s.clone(), &p).unwrap();
            assert!(a.abs() > 1e-3);
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            // general expression applied to a non-projectable but conserved-free field
            let k2 = auxiliary_field(s.metric(), "radial_square").unwrap();
            let xb2 = generalized_field_from_multivector(&k2, s.clone()).unwrap();
            let (c, _) = conservation_residual(&xb2, s.as_ref(), &p).unwrap();
            let d = conservation_residual_direct(&xb2, s.clone(), &p).unwrap();
            assert!((c - d).abs() < 1e-8 * (1.0 + d.abs()), "{c} vs {d}");
        }
    }

    #[test]
    fn killing_conservation_identity() {
        for (s, p) in cases() {
            let mut fields = vec![];
            for n in killing_field_names(s.metric().name()).unwrap() {
                fields.push(killing_field(s.metric(), n).unwrap());
            }
            for n in crate::multivector::auxiliary_field_names(s.metric().name()) {
                fields.push(auxiliary_field(s.metric(), n).unwrap());
            }
            for k in fields {
                let r = killing_conservation_identity_residual(&k, s.clone(), &p).unwrap();
                assert!(r.abs() < 1e-9, "{}: {r}", k.name());
            }
        }
    }

    #[test]
    fn homomorphism_on_catalog_pairs() {
        let pairs = [("minkowski", "boost_x", "dt"), ("kerr", "dt", "dphi"), ("kerr", "carter", "dt")];
        for (metric, a, b) in pairs {
            let (s, p) = cases().into_iter().find(|(s, _)| s.metric().name() == metric).unwrap();
            let k = killing_field(s.metric(), a).unwrap();
            let l = killing_field(s.metric(), b).unwrap();
            let r = verify_homomorphism(&k, &l, s, &[p]).unwrap();
            assert!(r.max() < 1e-6, "{metric} {a} {b}: {r:?}");
        }
    }

    #[test]
    fn generator_bracket_contact_reduction() {
        let (s, p) = cases().remove(2);
        let f = phase_function_from_multivector(&killing_field(s.metric(), "dt").unwrap(), s.clone()).unwrap();
        let g = phase_function_from_multivector(&killing_field(s.metric(), "carter").unwrap(), s.clone()).unwrap();
        let neg = |h: &PhaseFunction| {
            let (h1, h2) = (h.clone(), h.clone());
            PhaseFunction::new("neg", Arc::new(move |q| Ok(-h1.value(q)?)))
                .with_gradient(Arc::new(move |q| Ok(h2.gradient(q)?.map(|c| -c))))
        };
        let (a, b) = generator_bracket(&f, &neg(&f), &g, &neg(&g), s.as_ref(), &p).unwrap();
        assert!((a + b).abs() < 1e-8 * (1.0 + a.abs()));
        let c = PhaseFunction::constant(2.0);
        let (z1, z2) = generator_bracket(&c, &c, &c, &c, s.as_ref(), &p).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
    }

    #[test]
    fn killing_symmetries_preserve_structure() {
        for (s, p) in cases() {
            for name in killing_field_names(s.metric().name()).unwrap() {
                let k = killing_field(s.metric(), name).unwrap();
                let h = hidden_symmetry(&k, s.clone(), &[p]).unwrap();
                let lt = lie_derivative_time_form(&h.field, s.as_ref(), &p).unwrap();
                let lo = lie_derivative_two_form(&h.field, s.as_ref(), &p).unwrap();
                let scale = 1.0 + geometry::max_abs(&h.field.value(&p).unwrap());
                assert!(geometry::max_abs(&lt) < 1e-7 * scale, "{name}: {lt:?}");
                assert!(geometry::max_abs(&lo) < 1e-6 * scale, "{name}: {}", geometry::max_abs(&lo));
            }
            let k = auxiliary_field(s.metric(), crate::multivector::auxiliary_field_names(s.metric().name())[0]).unwrap();
            let h = hidden_symmetry(&k, s.clone(), &[p]).unwrap();
            assert!(h.warning.is_some());
            assert!(geometry::max_abs(&lie_derivative_time_form(&h.field, s.as_ref(), &p).unwrap()) > 1e-4);
        }
    }
}
