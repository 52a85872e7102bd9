//! Seeded sampling of admissible phase points and residual sweeps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{PhasePoint, PhaseStructures};

/// Coordinate box `[lo, hi]` for each of the 7 phase coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub ranges: [(f64, f64); 7],
}

impl SampleBox {
    /// Defaults: a box around the origin for Minkowski, and for the
    /// spherical charts r ∈ [4, 20], θ away from the axis, and angular
    /// velocities small enough that r·v stays well inside the light cone.
    pub fn for_metric(name: &str) -> Self {
        match name {
            "minkowski" => {
                let (x, v) = ((-5.0, 5.0), (-0.5, 0.5));
                Self { ranges: [x, x, x, x, v, v, v] }
            }
            _ => Self {
                ranges: [
                    (0.0, 10.0),
                    (4.0, 20.0),
                    (0.4, PI - 0.4),
                    (0.0, 2.0 * PI),
                    (-0.3, 0.3),
                    (-0.02, 0.02),
                    (-0.02, 0.02),
                ],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("coordinate range {i} is [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Attempts per requested point before rejection sampling gives up.
pub const MAX_ATTEMPTS_PER_POINT: usize = 1000;

/// Draw `count` admissible points uniformly from `bx`, rejecting points
/// outside the chart domain or with non-timelike direction.
pub fn sample_points(s: &dyn PhaseStructures, bx: &SampleBox, count: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    bx.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_POINT * count.max(1) {
            return Err(Error::InvalidParameter(format!(
                "sample box yields too few admissible points ({} of {count})",
                out.len()
            )));
        }
        let c: Vec<f64> =
            bx.ranges.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect();
        let p = PhasePoint::from_coords(&c)?;
        if s.metric().in_domain(&p.x) && s.frame(&p).is_ok() {
            out.push(p);
        }
    }
    Ok(out)
}

/// Outcome of evaluating one identity over a set of sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: String,
    pub metric: String,
    pub params: BTreeMap<String, f64>,
    pub points: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
}

impl ResidualReport {
    pub fn from_residuals(
        identity: impl Into<String>,
        s: &dyn PhaseStructures,
        residuals: &[f64],
        tolerance: f64,
        seed: u64,
    ) -> Self {
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        let mean_residual =
            if residuals.is_empty() { 0.0 } else { residuals.iter().sum::<f64>() / residuals.len() as f64 };
        let pass = residuals.iter().all(|r| r.is_finite()) && max_residual <= tolerance;
        let mut params = s.metric().params().clone();
        let sc = s.scales();
        for (k, v) in [("c0", sc.c0), ("hbar0", sc.hbar0), ("m", sc.m), ("q", sc.q)] {
            params.insert(k.to_string(), v);
        }
        Self {
            identity: identity.into(),
            metric: s.label(),
            params,
            points: residuals.len(),
            max_residual,
            mean_residual,
            tolerance,
            pass,
            seed,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} on {}: max {:.3e} mean {:.3e} tol {:.1e} ({} points, seed {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.identity,
            self.metric,
            self.max_residual,
            self.mean_residual,
            self.tolerance,
            self.points,
            self.seed
        )
    }
}

/// Evaluate `residual` at every point in parallel; results are gathered in
/// point order so the report does not depend on scheduling.
pub fn sweep<F>(
    identity: &str,
    s: &dyn PhaseStructures,
    points: &[PhasePoint],
    tolerance: f64,
    seed: u64,
    residual: F,
) -> Result<ResidualReport>
where
    F: Fn(&PhasePoint) -> Result<f64> + Sync,
{
    let values: Vec<f64> = points.par_iter().map(&residual).collect::<Result<_>>()?;
    Ok(ResidualReport::from_residuals(identity, s, &values, tolerance, seed))
}
