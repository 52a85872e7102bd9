//! Lorentzian metrics on a 4D chart, their Levi-Civita connection and the
//! mass/Planck rescaled metrics used on the phase space.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, DiffConfig, Mat4, MultiIndexArray, Vec4};

pub type MetricFn = Arc<dyn Fn(&Vec4) -> Mat4 + Send + Sync>;
/// `dg[ρ][λ][μ]` = ∂_ρ g_{λμ}.
pub type MetricDerivFn = Arc<dyn Fn(&Vec4) -> [Mat4; 4] + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&Vec4) -> bool + Send + Sync>;

/// How metric derivatives are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference(DiffConfig),
}

/// Default distance kept from horizons and the polar axis.
pub const DEFAULT_MARGIN: f64 = 1e-3;

/// A metric on a single chart with slot 0 as time.
#[derive(Clone)]
pub struct SpacetimeMetric {
    name: String,
    params: BTreeMap<String, f64>,
    g: MetricFn,
    dg: Option<MetricDerivFn>,
    domain: DomainFn,
    mode: DerivativeMode,
}

impl fmt::Debug for SpacetimeMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpacetimeMetric")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("mode", &self.mode)
            .finish()
    }
}

impl SpacetimeMetric {
    /// Build a metric from evaluators. Without `dg` the derivatives fall back
    /// to central differences.
    pub fn new(
        name: impl Into<String>,
        params: BTreeMap<String, f64>,
        g: MetricFn,
        dg: Option<MetricDerivFn>,
        domain: DomainFn,
    ) -> Self {
        let mode = if dg.is_some() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference(DiffConfig::default())
        };
        Self { name: name.into(), params, g, dg, domain, mode }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.dg.is_some()
    }

    /// Same metric with derivatives forced onto central differences.
    pub fn with_finite_differences(&self, cfg: DiffConfig) -> Self {
        Self { mode: DerivativeMode::FiniteDifference(cfg), ..self.clone() }
    }

    /// Same metric with analytic derivatives, if the catalog supplied them.
    pub fn with_analytic_derivatives(&self) -> Result<Self> {
        if self.dg.is_none() {
            return Err(Error::Unsupported(format!("{} has no analytic derivatives", self.name)));
        }
        Ok(Self { mode: DerivativeMode::Analytic, ..self.clone() })
    }

    pub fn in_domain(&self, x: &Vec4) -> bool {
        x.iter().all(|c| c.is_finite()) && (self.domain)(x)
    }

    pub fn check_domain(&self, x: &Vec4) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::EvaluationDomain(format!("{:?} outside the {} chart", x, self.name)))
        }
    }

    /// g_{λμ}(x).
    pub fn g(&self, x: &Vec4) -> Result<Mat4> {
        self.check_domain(x)?;
        Ok((self.g)(x))
    }

    /// g^{λμ}(x).
    pub fn g_inv(&self, x: &Vec4) -> Result<Mat4> {
        geometry::invert4(&self.g(x)?)
    }

    /// ∂_ρ g_{λμ}(x) as `[ρ][λ][μ]`.
    pub fn dg(&self, x: &Vec4) -> Result<[Mat4; 4]> {
        self.check_domain(x)?;
        match (self.mode, &self.dg) {
            (DerivativeMode::Analytic, Some(dg)) => Ok(dg(x)),
            (DerivativeMode::FiniteDifference(cfg), _) => self.dg_numeric(x, &cfg),
            (DerivativeMode::Analytic, None) => self.dg_numeric(x, &DiffConfig::default()),
        }
    }

    fn dg_numeric(&self, x: &Vec4, cfg: &DiffConfig) -> Result<[Mat4; 4]> {
        let flat = |y: &[f64]| -> Result<Vec<f64>> {
            let p = [y[0], y[1], y[2], y[3]];
            if !self.in_domain(&p) {
                return Err(Error::EvaluationDomain(format!("stencil point {p:?} left the chart")));
            }
            Ok((self.g)(&p).iter().flatten().copied().collect())
        };
        let jac = geometry::jacobian(flat, x, cfg)?;
        let mut out = [[[0.0; 4]; 4]; 4];
        for (rho, row) in jac.iter().enumerate() {
            for l in 0..4 {
                for m in 0..4 {
                    out[rho][l][m] = row[l * 4 + m];
                }
            }
        }
        Ok(out)
    }

    /// ∂_ρ g^{λμ} = −g^{λα} ∂_ρ g_{αβ} g^{βμ}.
    pub fn dg_inv(&self, x: &Vec4) -> Result<[Mat4; 4]> {
        let gi = self.g_inv(x)?;
        let dg = self.dg(x)?;
        let mut out = [[[0.0; 4]; 4]; 4];
        for rho in 0..4 {
            let t = geometry::mat4_mul(&geometry::mat4_mul(&gi, &dg[rho]), &gi);
            for l in 0..4 {
                for m in 0..4 {
                    out[rho][l][m] = -t[l][m];
                }
            }
        }
        Ok(out)
    }

    /// Eigenvalues of g(x), ascending.
    pub fn eigenvalues(&self, x: &Vec4) -> Result<Vec4> {
        Ok(geometry::symmetric_eigenvalues4(&self.g(x)?))
    }

    /// True when exactly one eigenvalue is negative.
    pub fn has_lorentzian_signature(&self, x: &Vec4) -> Result<bool> {
        let ev = self.eigenvalues(x)?;
        Ok(ev[0] < 0.0 && ev[1] > 0.0)
    }
}

/// Γ^ν_{λμ} stored as `[ν][λ][μ]`.
pub type Christoffel = [[[f64; 4]; 4]; 4];

/// Levi-Civita symbols Γ^ν_{λμ} = ½ g^{νρ}(∂_λ g_{ρμ} + ∂_μ g_{ρλ} − ∂_ρ g_{λμ}).
pub fn christoffel_symbols(metric: &SpacetimeMetric, x: &Vec4) -> Result<Christoffel> {
    let gi = metric.g_inv(x)?;
    let dg = metric.dg(x)?;
    let mut lowered = [[[0.0; 4]; 4]; 4];
    for rho in 0..4 {
        for l in 0..4 {
            for m in l..4 {
                let v = 0.5 * (dg[l][rho][m] + dg[m][rho][l] - dg[rho][l][m]);
                lowered[rho][l][m] = v;
                lowered[rho][m][l] = v;
            }
        }
    }
    let mut out = [[[0.0; 4]; 4]; 4];
    for nu in 0..4 {
        for l in 0..4 {
            for m in l..4 {
                let v: f64 = (0..4).map(|rho| gi[nu][rho] * lowered[rho][l][m]).sum();
                out[nu][l][m] = v;
                out[nu][m][l] = v;
            }
        }
    }
    Ok(out)
}

/// Christoffel symbols as a `[4,4,4]` array indexed `(ν, λ, μ)`.
pub fn christoffel(metric: &SpacetimeMetric, x: &Vec4) -> Result<MultiIndexArray> {
    let c = christoffel_symbols(metric, x)?;
    MultiIndexArray::from_vec(&[4, 4, 4], c.iter().flatten().flatten().copied().collect())
}

/// max |∇_ρ g_{λμ}|.
pub fn metric_compatibility_residual(metric: &SpacetimeMetric, x: &Vec4) -> Result<f64> {
    let g = metric.g(x)?;
    let dg = metric.dg(x)?;
    let gamma = christoffel_symbols(metric, x)?;
    let mut worst: f64 = 0.0;
    for rho in 0..4 {
        for l in 0..4 {
            for m in 0..4 {
                let mut r = dg[rho][l][m];
                for s in 0..4 {
                    r -= gamma[s][rho][l] * g[s][m] + gamma[s][rho][m] * g[l][s];
                }
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

/// Speed of light, Planck constant, particle mass and charge in a fixed gauge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConstants {
    pub c0: f64,
    pub hbar0: f64,
    pub m: f64,
    #[serde(default)]
    pub q: f64,
}

impl Default for ScaleConstants {
    fn default() -> Self {
        Self { c0: 1.0, hbar0: 1.0, m: 1.0, q: 0.0 }
    }
}

impl ScaleConstants {
    pub fn new(c0: f64, hbar0: f64, m: f64, q: f64) -> Result<Self> {
        let s = Self { c0, hbar0, m, q };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [("c0", self.c0), ("hbar0", self.hbar0), ("m", self.m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{label} must be positive, got {v}")));
            }
        }
        if !self.q.is_finite() {
            return Err(Error::InvalidParameter("charge must be finite".into()));
        }
        Ok(())
    }

    /// mc/ℏ, the inverse Compton length.
    pub fn compton(&self) -> f64 {
        self.m * self.c0 / self.hbar0
    }
}

/// The rescaled metrics at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledMetrics {
    /// (m/ℏ) g_{λμ}
    pub mass_lower: Mat4,
    /// (ℏ/m) g^{λμ}
    pub mass_upper: Mat4,
    /// (mc/ℏ)² g_{λμ}
    pub compton_lower: Mat4,
    /// (ℏ/mc)² g^{λμ}
    pub compton_upper: Mat4,
}

pub fn rescaled_metrics(metric: &SpacetimeMetric, scales: &ScaleConstants, x: &Vec4) -> Result<RescaledMetrics> {
    scales.validate()?;
    let g = metric.g(x)?;
    let gi = geometry::invert4(&g)?;
    let k = scales.compton();
    let scale = |m: &Mat4, f: f64| -> Mat4 { m.map(|row| row.map(|v| v * f)) };
    Ok(RescaledMetrics {
        mass_lower: scale(&g, scales.m / scales.hbar0),
        mass_upper: scale(&gi, scales.hbar0 / scales.m),
        compton_lower: scale(&g, k * k),
        compton_upper: scale(&gi, 1.0 / (k * k)),
    })
}

fn read_param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = params.get(key).copied().unwrap_or(default);
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{key} must be finite")));
    }
    Ok(v)
}

fn check_keys(params: &BTreeMap<String, f64>, allowed: &[&str], metric: &str) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::InvalidParameter(format!("{metric} has no parameter '{k}'")));
        }
    }
    Ok(())
}

/// Names accepted by [`metric_catalog`].
pub const METRIC_NAMES: [&str; 3] = ["minkowski", "schwarzschild", "kerr"];

/// Look up a metric by name. Parameters: `mass`, `spin` (kerr only) and
/// `margin` for the chart boundary.
pub fn metric_catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<SpacetimeMetric> {
    match name {
        "minkowski" => {
            check_keys(params, &[], name)?;
            Ok(minkowski())
        }
        "schwarzschild" => {
            check_keys(params, &["mass", "margin"], name)?;
            schwarzschild(read_param(params, "mass", 1.0)?, read_param(params, "margin", DEFAULT_MARGIN)?)
        }
        "kerr" => {
            check_keys(params, &["mass", "spin", "margin"], name)?;
            kerr(
                read_param(params, "mass", 1.0)?,
                read_param(params, "spin", 0.0)?,
                read_param(params, "margin", DEFAULT_MARGIN)?,
            )
        }
        other => Err(Error::Unknown { kind: "metric", name: other.to_string() }),
    }
}

/// Cartesian Minkowski metric diag(−1, 1, 1, 1).
pub fn minkowski() -> SpacetimeMetric {
    let eta = [[-1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    SpacetimeMetric::new(
        "minkowski",
        BTreeMap::new(),
        Arc::new(move |_| eta),
        Some(Arc::new(|_| [[[0.0; 4]; 4]; 4])),
        Arc::new(|_| true),
    )
}

fn check_margin(margin: f64) -> Result<()> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter(format!("margin must lie in [0, 1), got {margin}")));
    }
    Ok(())
}

/// Schwarzschild coordinates (t, r, θ, φ).
pub fn schwarzschild(mass: f64, margin: f64) -> Result<SpacetimeMetric> {
    if mass < 0.0 {
        return Err(Error::InvalidParameter(format!("mass must be non-negative, got {mass}")));
    }
    check_margin(margin)?;
    let params = BTreeMap::from([("mass".to_string(), mass), ("margin".to_string(), margin)]);
    let horizon = 2.0 * mass;
    Ok(SpacetimeMetric::new(
        "schwarzschild",
        params,
        Arc::new(move |x| schwarzschild_g(mass, x)),
        Some(Arc::new(move |x| schwarzschild_dg(mass, x))),
        Arc::new(move |x| x[1] > horizon * (1.0 + margin) && x[1] > 0.0 && x[2].sin() > margin),
    ))
}

fn schwarzschild_g(mass: f64, x: &Vec4) -> Mat4 {
    let (r, th) = (x[1], x[2]);
    let f = 1.0 - 2.0 * mass / r;
    let s = th.sin();
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -f;
    g[1][1] = 1.0 / f;
    g[2][2] = r * r;
    g[3][3] = r * r * s * s;
    g
}

fn schwarzschild_dg(mass: f64, x: &Vec4) -> [Mat4; 4] {
    let (r, th) = (x[1], x[2]);
    let f = 1.0 - 2.0 * mass / r;
    let df = 2.0 * mass / (r * r);
    let (s, co) = th.sin_cos();
    let mut d = [[[0.0; 4]; 4]; 4];
    d[1][0][0] = -df;
    d[1][1][1] = -df / (f * f);
    d[1][2][2] = 2.0 * r;
    d[1][3][3] = 2.0 * r * s * s;
    d[2][3][3] = 2.0 * r * r * s * co;
    d
}

/// Boyer–Lindquist coordinates (t, r, θ, φ) with mass M and spin a, |a| ≤ M.
pub fn kerr(mass: f64, spin: f64, margin: f64) -> Result<SpacetimeMetric> {
    if mass < 0.0 {
        return Err(Error::InvalidParameter(format!("mass must be non-negative, got {mass}")));
    }
    if spin.abs() > mass {
        return Err(Error::InvalidParameter(format!("kerr requires |spin| <= mass, got spin {spin}, mass {mass}")));
    }
    check_margin(margin)?;
    let params = BTreeMap::from([
        ("mass".to_string(), mass),
        ("spin".to_string(), spin),
        ("margin".to_string(), margin),
    ]);
    let outer = mass + (mass * mass - spin * spin).max(0.0).sqrt();
    Ok(SpacetimeMetric::new(
        "kerr",
        params,
        Arc::new(move |x| kerr_g(mass, spin, x)),
        Some(Arc::new(move |x| kerr_dg(mass, spin, x))),
        Arc::new(move |x| x[1] > outer * (1.0 + margin) && x[1] > 0.0 && x[2].sin() > margin),
    ))
}

/// Kerr components without parameter checks; also used by tests at M = 0, a ≠ 0.
pub(crate) fn kerr_g(mass: f64, a: f64, x: &Vec4) -> Mat4 {
    let (r, th) = (x[1], x[2]);
    let (s, co) = th.sin_cos();
    let s2 = s * s;
    let sigma = r * r + a * a * co * co;
    let delta = r * r - 2.0 * mass * r + a * a;
    let big_a = r * r + a * a + 2.0 * mass * a * a * r * s2 / sigma;
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -1.0 + 2.0 * mass * r / sigma;
    g[0][3] = -2.0 * mass * a * r * s2 / sigma;
    g[3][0] = g[0][3];
    g[1][1] = sigma / delta;
    g[2][2] = sigma;
    g[3][3] = big_a * s2;
    g
}

pub(crate) fn kerr_dg(mass: f64, a: f64, x: &Vec4) -> [Mat4; 4] {
    let (r, th) = (x[1], x[2]);
    let (s, co) = th.sin_cos();
    let s2 = s * s;
    let a2 = a * a;
    let sigma = r * r + a2 * co * co;
    let sigma2 = sigma * sigma;
    let delta = r * r - 2.0 * mass * r + a2;
    let big_a = r * r + a2 + 2.0 * mass * a2 * r * s2 / sigma;
    let dsigma_th = -2.0 * a2 * s * co;

    let mut d = [[[0.0; 4]; 4]; 4];
    // radial
    d[1][0][0] = 2.0 * mass * (sigma - 2.0 * r * r) / sigma2;
    d[1][0][3] = -2.0 * mass * a * s2 * (sigma - 2.0 * r * r) / sigma2;
    d[1][3][0] = d[1][0][3];
    d[1][1][1] = (2.0 * r * delta - sigma * (2.0 * r - 2.0 * mass)) / (delta * delta);
    d[1][2][2] = 2.0 * r;
    let da_r = 2.0 * r + 2.0 * mass * a2 * s2 * (sigma - 2.0 * r * r) / sigma2;
    d[1][3][3] = da_r * s2;
    // polar
    d[2][0][0] = 4.0 * mass * r * a2 * s * co / sigma2;
    d[2][0][3] = -4.0 * mass * a * r * s * co * (sigma + a2 * s2) / sigma2;
    d[2][3][0] = d[2][0][3];
    d[2][1][1] = dsigma_th / delta;
    d[2][2][2] = dsigma_th;
    let da_th = 4.0 * mass * a2 * r * s * co * (sigma + a2 * s2) / sigma2;
    d[2][3][3] = da_th * s2 + 2.0 * big_a * s * co;
    d
}
