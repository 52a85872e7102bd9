//! Integration of the dynamical phase connection γ̂ and conservation
//! monitoring along the resulting motions.
//!
//! The evolution parameter `s` is the one for which τ̂(dz/ds) = 1; proper
//! time is `ℏ s / (m c²)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec7};
use crate::phase::{PhasePoint, PhaseStructures};
use crate::spacetime::{christoffel_symbols, SpacetimeMetric};
use crate::symmetry::PhaseFunction;

/// Integration scheme and its step control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand–Prince 4(5).
    DormandPrince { rtol: f64, atol: f64, initial_step: f64, max_step: f64 },
    /// Classical fixed-step Runge–Kutta 4.
    Rk4 { step: f64 },
}

impl Method {
    pub fn adaptive(tolerance: f64) -> Self {
        Method::DormandPrince { rtol: tolerance, atol: tolerance, initial_step: 1e-2, max_step: f64::INFINITY }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Method::DormandPrince { rtol, atol, initial_step, max_step } => {
                rtol > 0.0 && atol > 0.0 && initial_step > 0.0 && max_step > 0.0
            }
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid integrator settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub method: Method,
    pub max_steps: usize,
    /// Smallest step the adaptive scheme may take before giving up.
    pub min_step: f64,
}

impl StepControl {
    pub fn adaptive(tolerance: f64) -> Self {
        Self { method: Method::adaptive(tolerance), max_steps: 1_000_000, min_step: 1e-12 }
    }

    pub fn fixed(step: f64) -> Self {
        Self { method: Method::Rk4 { step }, max_steps: 10_000_000, min_step: 0.0 }
    }
}

/// Why a trajectory stopped before the requested end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum ExitReason {
    LeftDomain(String),
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s: f64,
    pub point: PhasePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub control: StepControl,
    pub exit: Option<ExitReason>,
    pub rejected_steps: usize,
    /// monitored phase functions, one column per name
    pub monitor_names: Vec<String>,
    pub monitor_values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least the initial point")
    }

    pub fn completed(&self) -> bool {
        self.exit.is_none()
    }

    /// Proper time at each sample, `ℏ s / (m c²)`.
    pub fn proper_times(&self, s: &dyn PhaseStructures) -> Vec<f64> {
        let sc = s.scales();
        let k = sc.hbar0 / (sc.m * sc.c0 * sc.c0);
        self.samples.iter().map(|x| k * x.s).collect()
    }

    /// CSV with header `s, x0..x3, v1..v3` followed by the monitor columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["s", "x0", "x1", "x2", "x3", "v1", "v2", "v3"].iter().map(|s| s.to_string()).collect();
        header.extend(self.monitor_names.iter().cloned());
        w.write_record(&header)?;
        for (i, sample) in self.samples.iter().enumerate() {
            let mut row = vec![sample.s];
            row.extend(sample.point.coords());
            if !self.monitor_values.is_empty() {
                row.extend(self.monitor_values[i].iter());
            }
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn flow(s: &dyn PhaseStructures, z: &Vec7) -> Result<Vec7> {
    Ok(s.evaluate(&PhasePoint::from_coords(z)?)?.gamma_hat)
}

fn axpy(z: &Vec7, h: f64, terms: &[(f64, &Vec7)]) -> Vec7 {
    std::array::from_fn(|i| z[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn admissible(s: &dyn PhaseStructures, z: &Vec7) -> Result<()> {
    let p = PhasePoint::from_coords(z)?;
    s.metric().check_domain(&p.x)?;
    s.frame(&p).map(|_| ())
}

fn is_domain_error(e: &Error) -> bool {
    matches!(e, Error::EvaluationDomain(_) | Error::NotTimelike(_))
}

fn rk4_step(s: &dyn PhaseStructures, z: &Vec7, h: f64) -> Result<Vec7> {
    let k1 = flow(s, z)?;
    let k2 = flow(s, &axpy(z, h, &[(0.5, &k1)]))?;
    let k3 = flow(s, &axpy(z, h, &[(0.5, &k2)]))?;
    let k4 = flow(s, &axpy(z, h, &[(1.0, &k3)]))?;
    Ok(axpy(z, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]))
}

// Dormand–Prince tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step: the 5th order solution and the error estimate.
fn dp_step(s: &dyn PhaseStructures, z: &Vec7, h: f64) -> Result<(Vec7, Vec7)> {
    let mut k = [[0.0; 7]; 7];
    k[0] = flow(s, z)?;
    for st in 1..7 {
        let terms: Vec<(f64, &Vec7)> = (0..st).map(|j| (A[st][j], &k[j])).collect();
        k[st] = flow(s, &axpy(z, h, &terms))?;
    }
    let hi = axpy(z, h, &B5.iter().zip(&k).map(|(b, ki)| (*b, ki)).collect::<Vec<_>>());
    let err: Vec7 = std::array::from_fn(|i| h * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>());
    Ok((hi, err))
}

/// Integrate the γ̂ flow from `p0` over `[0, s_end]`. A trajectory that
/// leaves the chart or the timelike region is truncated and flagged.
pub fn integrate(s: &dyn PhaseStructures, p0: &PhasePoint, s_end: f64, control: &StepControl) -> Result<Trajectory> {
    control.method.validate()?;
    if !(s_end > 0.0 && s_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("integration length must be positive, got {s_end}")));
    }
    let z0 = p0.coords();
    admissible(s, &z0)?;
    let mut traj = Trajectory {
        samples: vec![Sample { s: 0.0, point: *p0 }],
        control: *control,
        exit: None,
        rejected_steps: 0,
        monitor_names: vec![],
        monitor_values: vec![],
    };
    let (mut t, mut z) = (0.0, z0);
    let mut h = match control.method {
        Method::DormandPrince { initial_step, .. } => initial_step,
        Method::Rk4 { step } => step,
    };
    let mut steps = 0;
    while t < s_end {
        if steps >= control.max_steps {
            traj.exit = Some(ExitReason::MaxSteps);
            break;
        }
        steps += 1;
        let last = s_end - t <= h * (1.0 + 1e-12);
        let hs = if last { s_end - t } else { h };
        let attempt = match control.method {
            Method::Rk4 { .. } => rk4_step(s, &z, hs).map(|n| (n, None)),
            Method::DormandPrince { .. } => dp_step(s, &z, hs).map(|(n, e)| (n, Some(e))),
        };
        let (next, err) = match attempt.and_then(|r| admissible(s, &r.0).map(|_| r)) {
            Ok(r) => r,
            Err(e) if is_domain_error(&e) => {
                if matches!(control.method, Method::DormandPrince { .. }) && hs * 0.5 >= control.min_step {
                    traj.rejected_steps += 1;
                    h = hs * 0.5;
                    continue;
                }
                traj.exit = Some(ExitReason::LeftDomain(e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        if let (Method::DormandPrince { rtol, atol, max_step, .. }, Some(err)) = (control.method, err) {
            let norm = (0..7)
                .map(|i| err[i].abs() / (atol + rtol * z[i].abs().max(next[i].abs())))
                .fold(0.0, f64::max);
            let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            if norm > 1.0 {
                traj.rejected_steps += 1;
                h = hs * factor;
                if h < control.min_step {
                    return Err(Error::Integration(format!("step size underflow at s = {t}")));
                }
                continue;
            }
            h = (hs * factor).min(max_step);
            if last {
                h = h.max(hs);
            }
        }
        t = if last { s_end } else { t + hs };
        z = next;
        traj.samples.push(Sample { s: t, point: PhasePoint::from_coords(&z)? });
    }
    Ok(traj)
}

/// Drift of one monitored phase function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub name: String,
    pub initial: f64,
    pub final_value: f64,
    pub max_deviation: f64,
    /// `max |f(s) − f(0)| / max(1, |f(0)|)`
    pub relative_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub samples: usize,
    pub s_end: f64,
    pub completed: bool,
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn entry(&self, name: &str) -> Option<&DriftEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluate each function along the trajectory, store the values as monitor
/// columns and report their drift.
pub fn monitor(traj: &mut Trajectory, functions: &[PhaseFunction]) -> Result<DriftReport> {
    if traj.samples.is_empty() {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    let values: Vec<Vec<f64>> = traj
        .samples
        .iter()
        .map(|smp| functions.iter().map(|f| f.value(&smp.point)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let entries = functions
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let initial = values[0][j];
            let max_deviation = values.iter().map(|row| (row[j] - initial).abs()).fold(0.0, f64::max);
            DriftEntry {
                name: f.name().to_string(),
                initial,
                final_value: values[values.len() - 1][j],
                max_deviation,
                relative_drift: max_deviation / initial.abs().max(1.0),
            }
        })
        .collect();
    traj.monitor_names = functions.iter().map(|f| f.name().to_string()).collect();
    traj.monitor_values = values;
    Ok(DriftReport { samples: traj.samples.len(), s_end: traj.last().s, completed: traj.completed(), entries })
}

/// Coordinate-time geodesic acceleration
/// `d²xⁱ/dt² = −Γⁱ_{ab} uᵃ uᵇ + vⁱ Γ⁰_{ab} uᵃ uᵇ` with u = (1, v).
pub fn geodesic_acceleration(metric: &SpacetimeMetric, p: &PhasePoint) -> Result<[f64; 3]> {
    let chr = christoffel_symbols(metric, &p.x)?;
    let u = p.direction();
    let quad = |nu: usize| -> f64 { (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| chr[nu][a][b] * u[a] * u[b]).sum() };
    let q0 = quad(0);
    Ok(std::array::from_fn(|i| -quad(i + 1) + p.v[i] * q0))
}

/// max over samples of the mismatch between the flow and the geodesic
/// equation, in units of the acceleration.
pub fn geodesic_residual(s: &dyn PhaseStructures, traj: &Trajectory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for smp in &traj.samples {
        let acc = s.evaluate(&smp.point)?.dynamical.acceleration;
        let geo = geodesic_acceleration(s.metric(), &smp.point)?;
        let scale = 1.0 + geometry::max_abs(&geo);
        worst = worst.max((0..3).map(|i| (acc[i] - geo[i]).abs()).fold(0.0, f64::max) / scale);
    }
    Ok(worst)
}

/// Step-halving study with fixed-step RK4: `|z_h − z_{h/2}| / |z_{h/2} − z_{h/4}|`
/// at the end point, about 16 for a 4th order scheme.
pub fn convergence_ratio(s: &dyn PhaseStructures, p0: &PhasePoint, s_end: f64, step: f64) -> Result<f64> {
    let end = |h: f64| -> Result<Vec7> {
        let t = integrate(s, p0, s_end, &StepControl::fixed(h))?;
        if let Some(e) = &t.exit {
            return Err(Error::Integration(format!("convergence run stopped early: {e:?}")));
        }
        Ok(t.last().point.coords())
    };
    let (a, b, c) = (end(step)?, end(step / 2.0)?, end(step / 4.0)?);
    let d1 = (0..7).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    let d2 = (0..7).map(|i| (b[i] - c[i]).abs()).fold(0.0, f64::max);
    Ok(d1 / d2)
}
