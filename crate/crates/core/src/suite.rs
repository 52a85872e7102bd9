//! Named identity checks over seeded point sets, each producing
//! [`ResidualReport`]s.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{convergence_ratio, geodesic_residual, integrate, monitor, DriftReport, StepControl, Trajectory};
use crate::error::{Error, Result};
use crate::geometry;
use crate::multivector::{
    auxiliary_field, auxiliary_field_names, compton_metric, killing_field, killing_field_names, killing_residual,
    killing_residual_schouten, schouten_sym_field, SymmetricMultivectorField,
};
use crate::phase::{
    closedness_residual, duality_residuals, exactness_residual, normalization_residual, regularity, structure_diff,
    verify_jacobi_pair, PhasePoint, PhaseStructures,
};
use crate::report::{sample_points, sweep, ResidualReport, SampleBox};
use crate::electromagnetic::verify_almost_jacobi_pair;
use crate::symmetry::{
    conservation_residual, hidden_symmetry, lie_derivative_time_form, phase_function_from_multivector,
    projectability_residual_scaled, verify_homomorphism, PhaseFunction,
};

/// Per-identity tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub normalization: f64,
    pub duality: f64,
    pub exactness: f64,
    /// smallest acceptable |τ̂ ∧ Ω³| coefficient
    pub regularity: f64,
    pub jacobi: f64,
    pub killing: f64,
    pub killing_closure: f64,
    pub projectability: f64,
    pub conservation: f64,
    pub lie_derivative: f64,
    pub projection: f64,
    pub reeb_multiple: f64,
    pub homomorphism: f64,
    pub drift: f64,
    pub closedness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normalization: 1e-12,
            duality: 1e-9,
            exactness: 1e-6,
            regularity: 1e-8,
            jacobi: 1e-6,
            killing: 1e-8,
            killing_closure: 1e-7,
            projectability: 1e-9,
            conservation: 1e-8,
            lie_derivative: 1e-6,
            projection: 1e-10,
            reeb_multiple: 1e-10,
            homomorphism: 1e-5,
            drift: 1e-8,
            closedness: 1e-7,
        }
    }
}

/// Catalog Killing field, auxiliary field, or the rescaled metric by name.
pub fn resolve_field(s: &dyn PhaseStructures, name: &str) -> Result<SymmetricMultivectorField> {
    let metric = s.metric();
    if name == "compton_metric" {
        return Ok(compton_metric(metric, s.scales()));
    }
    if killing_field_names(metric.name())?.contains(&name) {
        return killing_field(metric, name);
    }
    if auxiliary_field_names(metric.name()).contains(&name) {
        return auxiliary_field(metric, name);
    }
    Err(Error::Unknown { kind: "multivector field", name: format!("{name} (on {})", metric.name()) })
}

/// A structure together with a fixed, seeded set of sample points.
#[derive(Clone)]
pub struct Suite {
    pub structures: Arc<dyn PhaseStructures>,
    pub points: Vec<PhasePoint>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl std::fmt::Debug for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Suite").field("structures", &self.structures.label()).field("points", &self.points.len()).finish()
    }
}

impl Suite {
    pub fn new(
        structures: Arc<dyn PhaseStructures>,
        bx: &SampleBox,
        count: usize,
        seed: u64,
        tolerances: Tolerances,
    ) -> Result<Self> {
        let points = sample_points(structures.as_ref(), bx, count, seed)?;
        Ok(Self { structures, points, seed, tolerances })
    }

    /// The first `n` sample points, for the costlier checks.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.points.truncate(n);
        out
    }

    fn sweep<F>(&self, identity: &str, tol: f64, f: F) -> Result<ResidualReport>
    where
        F: Fn(&PhasePoint) -> Result<f64> + Sync,
    {
        sweep(identity, self.structures.as_ref(), &self.points, tol, self.seed, f)
    }

    /// Normalizations, duality, exactness, regularity and the Jacobi-pair
    /// brackets of the metric structure.
    pub fn check_structures(&self) -> Result<Vec<ResidualReport>> {
        let s = self.structures.as_ref();
        let t = &self.tolerances;
        let cfg = structure_diff(s.metric());
        let mut out = vec![
            self.sweep("normalization g(d,d) = -c^2, tau(d) = 1, -G(tau,tau) = 1", t.normalization, |p| {
                Ok(normalization_residual(&s.frame(p)?))
            })?,
            self.sweep("duality of (tau, Omega) and (gamma, Lambda)", t.duality, |p| {
                Ok(duality_residuals(&s.evaluate(p)?).max())
            })?,
            // reported as the reciprocal so that smaller is better
            self.sweep("regularity 1/|tau ^ Omega^3|", 1.0 / t.regularity, |p| {
                Ok(1.0 / regularity(&s.evaluate(p)?).0.abs())
            })?,
        ];
        // a charged field breaks exactness; verify_em covers that case
        if s.exact() {
            out.push(self.sweep("Omega = -d tau", t.exactness, |p| exactness_residual(s, p, &cfg))?);
            out.push(self.sweep(
                "Jacobi pair [gamma, Lambda] = 0, [Lambda, Lambda] = 2 gamma ^ Lambda",
                t.jacobi,
                |p| Ok(verify_jacobi_pair(self.structures.clone(), p)?.max()),
            )?);
        }
        Ok(out)
    }

    /// Killing residual of `name` by both routes, and closure of its
    /// Schouten brackets with every other catalog Killing field.
    pub fn check_killing(&self, name: &str) -> Result<Vec<ResidualReport>> {
        let s = self.structures.as_ref();
        let metric = s.metric();
        let k = resolve_field(s, name)?;
        let t = &self.tolerances;
        let mut out = vec![
            self.sweep(&format!("Killing equation for {name}"), t.killing, |p| {
                Ok(killing_residual(&k, metric, &p.x)?.max_abs())
            })?,
            self.sweep(&format!("Killing equation for {name} via [K, g]"), t.killing, |p| {
                Ok(killing_residual_schouten(&k, metric, &p.x)?.max_abs())
            })?,
        ];
        for other in killing_field_names(metric.name())? {
            if *other == name {
                continue;
            }
            let bracket = schouten_sym_field(&k, &killing_field(metric, other)?)?;
            out.push(self.sweep(&format!("Killing closure [{name}, {other}]"), t.killing_closure, |p| {
                Ok(killing_residual(&bracket, metric, &p.x)?.max_abs())
            })?);
        }
        Ok(out)
    }

    /// Projectability, conservation and invariance of τ̂ for the symmetry
    /// generated by `name`; for vector fields the projection is compared
    /// with the field, for the rescaled metric the symmetry with −γ̂.
    pub fn build_symmetry(&self, name: &str) -> Result<Vec<ResidualReport>> {
        let s = self.structures.clone();
        let k = resolve_field(s.as_ref(), name)?;
        let h = hidden_symmetry(&k, s.clone(), &self.points)?;
        let t = &self.tolerances;
        let mut out = vec![
            self.sweep(&format!("projectability of Xbar[{name}] (relative)"), t.projectability, |p| {
                projectability_residual_scaled(&h.projection, s.as_ref(), p)
            })?,
            self.sweep(&format!("conservation gamma.tau(Xbar[{name}])"), t.conservation, |p| {
                Ok(conservation_residual(&h.projection, s.as_ref(), p)?.0.abs())
            })?,
            self.sweep(&format!("L_X[{name}] tau"), t.lie_derivative, |p| {
                Ok(geometry::max_abs(&lie_derivative_time_form(&h.field, s.as_ref(), p)?))
            })?,
        ];
        if k.degree() == 1 {
            out.push(self.sweep(&format!("projection of X[{name}] equals {name}"), t.projection, |p| {
                let x = h.field.projection(p)?;
                let c = k.components(&p.x)?;
                Ok((0..4).map(|l| (x[l] - c.data()[l]).abs()).fold(0.0, f64::max))
            })?);
        }
        if name == "compton_metric" {
            out.push(self.sweep("X[compton_metric] = -gamma", t.reeb_multiple, |p| {
                let x = h.field.value(p)?;
                let g = s.evaluate(p)?.gamma_hat;
                Ok((0..7).map(|a| (x[a] + g[a]).abs()).fold(0.0, f64::max))
            })?);
        }
        Ok(out)
    }

    /// `[X[K], X[L]] = X[[K, L]]` and the accompanying bracket identities.
    pub fn verify_homomorphism(&self, k_name: &str, l_name: &str) -> Result<Vec<ResidualReport>> {
        let s = self.structures.clone();
        let k = resolve_field(s.as_ref(), k_name)?;
        let l = resolve_field(s.as_ref(), l_name)?;
        let t = &self.tolerances;
        let each = |p: &PhasePoint| verify_homomorphism(&k, &l, s.clone(), std::slice::from_ref(p));
        Ok(vec![
            self.sweep(&format!("[X[{k_name}], X[{l_name}]] = X[[{k_name}, {l_name}]]"), t.homomorphism, |p| {
                Ok(each(p)?.field)
            })?,
            self.sweep(&format!("{{{k_name}(tau), {l_name}(tau)}} = [{k_name}, {l_name}](tau)"), t.homomorphism, |p| {
                Ok(each(p)?.poisson)
            })?,
        ])
    }

    /// Closedness, duality, regularity and the almost-coPoisson-Jacobi
    /// identities of the (joined) structure.
    pub fn verify_em(&self) -> Result<Vec<ResidualReport>> {
        let s = self.structures.as_ref();
        let t = &self.tolerances;
        let cfg = structure_diff(s.metric());
        Ok(vec![
            self.sweep("d Omega = 0", t.closedness, |p| closedness_residual(s, p, &cfg))?,
            self.sweep("duality of (tau, Omega) and (gamma, Lambda)", t.duality, |p| {
                Ok(duality_residuals(&s.evaluate(p)?).max())
            })?,
            self.sweep("regularity 1/|tau ^ Omega^3|", 1.0 / t.regularity, |p| {
                Ok(1.0 / regularity(&s.evaluate(p)?).0.abs())
            })?,
            self.sweep(
                "almost-coPoisson-Jacobi [gamma, Lambda] = -gamma ^ Lambda#(L_gamma tau), \
                 [Lambda, Lambda] = 2 gamma ^ (Lambda# x Lambda#)(d tau)",
                t.jacobi,
                |p| {
                    let r = verify_almost_jacobi_pair(self.structures.clone(), p)?;
                    Ok(r.reeb_bracket.max(r.bivector_bracket))
                },
            )?,
        ])
    }
}

/// Initial data and settings of one integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    pub name: String,
    pub initial: PhasePoint,
    pub length: f64,
    #[serde(default = "default_orbit_tolerance")]
    pub tolerance: f64,
    /// Monitored fields; the rescaled metric is always added.
    #[serde(default)]
    pub monitors: Vec<String>,
    /// Fixed RK4 step for the step-halving study; skipped when absent.
    #[serde(default)]
    pub convergence_step: Option<f64>,
}

fn default_orbit_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone)]
pub struct OrbitOutcome {
    pub trajectory: Trajectory,
    pub drift: DriftReport,
    /// Monitors that are not Killing; their drift is informational.
    pub non_killing: Vec<String>,
    pub reports: Vec<ResidualReport>,
}

/// Integrate one orbit, monitor its constants and report drift of the
/// Killing monitors, the geodesic residual (uncharged only) and the
/// convergence order.
pub fn run_orbit(s: Arc<dyn PhaseStructures>, spec: &OrbitSpec, tol: &Tolerances, seed: u64) -> Result<OrbitOutcome> {
    let mut names = vec!["compton_metric".to_string()];
    names.extend(spec.monitors.iter().filter(|n| n.as_str() != "compton_metric").cloned());
    let fields: Vec<SymmetricMultivectorField> =
        names.iter().map(|n| resolve_field(s.as_ref(), n)).collect::<Result<_>>()?;
    let functions: Vec<PhaseFunction> =
        fields.iter().map(|k| phase_function_from_multivector(k, s.clone())).collect::<Result<_>>()?;
    let mut non_killing = vec![];
    for k in &fields {
        if killing_residual(k, s.metric(), &spec.initial.x)?.max_abs() > crate::symmetry::KILLING_TOLERANCE {
            non_killing.push(k.name().to_string());
        }
    }
    let mut trajectory = integrate(s.as_ref(), &spec.initial, spec.length, &StepControl::adaptive(spec.tolerance))?;
    let drift = monitor(&mut trajectory, &functions)?;
    let mut reports = vec![];
    for (j, entry) in drift.entries.iter().enumerate() {
        if non_killing.contains(&fields[j].name().to_string()) {
            continue;
        }
        let scale = entry.initial.abs().max(1.0);
        let residuals: Vec<f64> =
            trajectory.monitor_values.iter().map(|row| (row[j] - entry.initial).abs() / scale).collect();
        let mut r = ResidualReport::from_residuals(
            format!("{}: drift of {}", spec.name, entry.name),
            s.as_ref(),
            &residuals,
            tol.drift,
            seed,
        );
        r.pass &= trajectory.completed();
        reports.push(r);
    }
    if s.scales().q == 0.0 {
        let g = geodesic_residual(s.as_ref(), &trajectory)?;
        reports.push(ResidualReport::from_residuals(
            format!("{}: geodesic equation", spec.name),
            s.as_ref(),
            &[g],
            tol.normalization,
            seed,
        ));
    }
    if let Some(h) = spec.convergence_step {
        let ratio = convergence_ratio(s.as_ref(), &spec.initial, spec.length.min(10.0), h)?;
        // ratio within 12..20 for a fourth order scheme
        reports.push(ResidualReport::from_residuals(
            format!("{}: step-halving ratio {ratio:.3} (|ratio - 16|)", spec.name),
            s.as_ref(),
            &[(ratio - 16.0).abs()],
            4.0,
            seed,
        ));
    }
    Ok(OrbitOutcome { trajectory, drift, non_killing, reports })
}
