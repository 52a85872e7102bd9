//! Symmetric and skew multivector fields, their Schouten brackets, the
//! polynomial map to cotangent functions, and Killing residuals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{self, DiffConfig, MultiIndexArray, Vec4};
use crate::spacetime::{ScaleConstants, SpacetimeMetric};

pub type ComponentFn = Arc<dyn Fn(&[f64]) -> Result<MultiIndexArray> + Send + Sync>;
/// Returns `∂_ρ K` for every coordinate ρ.
pub type ComponentDerivFn = Arc<dyn Fn(&[f64]) -> Result<Vec<MultiIndexArray>> + Send + Sync>;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Numerical `∂_ρ` of an array-valued evaluator at every coordinate.
pub fn array_derivatives(f: &ComponentFn, x: &[f64], cfg: &DiffConfig) -> Result<Vec<MultiIndexArray>> {
    let dims = f(x)?.dims().to_vec();
    let jac = geometry::jacobian(|y| Ok(f(y)?.into_data()), x, cfg)?;
    jac.into_iter().map(|d| MultiIndexArray::from_vec(&dims, d)).collect()
}

/// Totally symmetric contravariant field K^{λ₁…λ_k}(x).
#[derive(Clone)]
pub struct SymmetricMultivectorField {
    name: String,
    degree: usize,
    dim: usize,
    components: ComponentFn,
    derivatives: Option<ComponentDerivFn>,
    diff: DiffConfig,
}

impl fmt::Debug for SymmetricMultivectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricMultivectorField")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.derivatives.is_some())
            .finish()
    }
}

impl SymmetricMultivectorField {
    pub fn new(name: impl Into<String>, degree: usize, dim: usize, components: ComponentFn) -> Self {
        Self { name: name.into(), degree, dim, components, derivatives: None, diff: DiffConfig::default() }
    }

    pub fn with_derivatives(mut self, derivatives: ComponentDerivFn) -> Self {
        self.derivatives = Some(derivatives);
        self
    }

    /// Drop analytic derivatives so every `∂_ρ K` comes from central differences.
    pub fn without_derivatives(mut self) -> Self {
        self.derivatives = None;
        self
    }

    pub fn with_diff_config(mut self, cfg: DiffConfig) -> Self {
        self.diff = cfg;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn components(&self, x: &[f64]) -> Result<MultiIndexArray> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("{}-dim point for a {}-dim field", x.len(), self.dim)));
        }
        let a = (self.components)(x)?;
        if a.rank() != self.degree || (self.degree > 0 && a.uniform_dim() != Some(self.dim)) {
            return Err(Error::DimensionMismatch(format!(
                "{} returned dims {:?}, expected degree {} over {} coordinates",
                self.name,
                a.dims(),
                self.degree,
                self.dim
            )));
        }
        Ok(a)
    }

    pub fn derivatives(&self, x: &[f64]) -> Result<Vec<MultiIndexArray>> {
        match &self.derivatives {
            Some(d) => d(x),
            None => {
                let f: ComponentFn = self.components.clone();
                array_derivatives(&f, x, &self.diff)
            }
        }
    }

    pub fn symmetry_residual(&self, x: &[f64]) -> Result<f64> {
        self.components(x)?.symmetry_residual()
    }

    /// Constant components.
    pub fn constant(name: impl Into<String>, value: MultiIndexArray) -> Result<Self> {
        let degree = value.rank();
        let dim = value.uniform_dim().unwrap_or(0);
        if degree > 0 && value.uniform_dim().is_none() {
            return Err(Error::DimensionMismatch("constant field with mixed slot dimensions".into()));
        }
        let zero = MultiIndexArray::zeros(value.dims());
        Ok(Self::new(name, degree, dim, Arc::new(move |_| Ok(value.clone())))
            .with_derivatives(Arc::new(move |_| Ok(vec![zero.clone(); dim]))))
    }

    /// Vector field from component and Jacobian closures; `jac[ρ][λ]` = ∂_ρ X^λ.
    pub fn vector<F, J>(name: impl Into<String>, dim: usize, f: F, jac: J) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        J: Fn(&[f64]) -> Result<Vec<Vec<f64>>> + Send + Sync + 'static,
    {
        Self::new(name, 1, dim, Arc::new(move |x| MultiIndexArray::from_vec(&[dim], f(x)?))).with_derivatives(
            Arc::new(move |x| jac(x)?.into_iter().map(|row| MultiIndexArray::from_vec(&[dim], row)).collect()),
        )
    }
}

/// ∂_ρ K^{λ…} as a `(ρ, λ…)` lookup helper.
fn derivative_entry(d: &[MultiIndexArray], rho: usize, off: usize) -> f64 {
    d[rho].data()[off]
}

/// Symmetric Schouten bracket
/// `Sym(k K^{ρλ…} ∂_ρ L^{…} − l L^{ρλ…} ∂_ρ K^{…})` at a point.
pub fn schouten_sym(k: &SymmetricMultivectorField, l: &SymmetricMultivectorField, x: &[f64]) -> Result<MultiIndexArray> {
    let (kd, ld) = (k.degree(), l.degree());
    if kd == 0 || ld == 0 {
        return Err(Error::Unsupported(format!(
            "symmetric Schouten bracket needs degrees >= 1, got ({kd}, {ld})"
        )));
    }
    if k.dim() != l.dim() {
        return Err(Error::DimensionMismatch(format!("fields over {} and {} coordinates", k.dim(), l.dim())));
    }
    let n = k.dim();
    let (kc, lc) = (k.components(x)?, l.components(x)?);
    let (dk, dl) = (k.derivatives(x)?, l.derivatives(x)?);
    let out_deg = kd + ld - 1;
    let mut raw = MultiIndexArray::zeros_uniform(out_deg, n);
    let len_l = n.pow(ld as u32);
    let len_k = n.pow(kd as u32);
    let len_k_rest = n.pow(kd as u32 - 1);
    let len_l_rest = n.pow(ld as u32 - 1);
    let data = raw.data_mut();
    // k K^{ρ A'} ∂_ρ L^{B}: output index (A', B)
    for rho in 0..n {
        for a_rest in 0..len_k_rest {
            let kv = kc.data()[rho * len_k_rest + a_rest];
            if kv == 0.0 {
                continue;
            }
            for b in 0..len_l {
                data[a_rest * len_l + b] += kd as f64 * kv * derivative_entry(&dl, rho, b);
            }
        }
    }
    // − l L^{ρ B'} ∂_ρ K^{A}: output index (B', A)
    for rho in 0..n {
        for b_rest in 0..len_l_rest {
            let lv = lc.data()[rho * len_l_rest + b_rest];
            if lv == 0.0 {
                continue;
            }
            for a in 0..len_k {
                data[b_rest * len_k + a] -= ld as f64 * lv * derivative_entry(&dk, rho, a);
            }
        }
    }
    raw.symmetrize()
}

/// The bracket `[K, L]` as a field; its derivatives are numerical.
pub fn schouten_sym_field(k: &SymmetricMultivectorField, l: &SymmetricMultivectorField) -> Result<SymmetricMultivectorField> {
    if k.degree() == 0 || l.degree() == 0 {
        return Err(Error::Unsupported("symmetric Schouten bracket of a degree-0 field".into()));
    }
    if k.dim() != l.dim() {
        return Err(Error::DimensionMismatch("fields over different charts".into()));
    }
    let (kc, lc) = (k.clone(), l.clone());
    Ok(SymmetricMultivectorField::new(
        format!("[{}, {}]", k.name(), l.name()),
        k.degree() + l.degree() - 1,
        k.dim(),
        Arc::new(move |x| schouten_sym(&kc, &lc, x)),
    ))
}

/// K^{λ₁…λ_k}(x) p_{λ₁}…p_{λ_k}.
pub fn pi_star(k: &SymmetricMultivectorField, x: &[f64], p: &[f64]) -> Result<f64> {
    if p.len() != k.dim() {
        return Err(Error::DimensionMismatch(format!("covector of length {} for a {}-dim field", p.len(), k.dim())));
    }
    full_contraction(&k.components(x)?, p)
}

/// Contract every slot of `a` with the same covector.
pub fn full_contraction(a: &MultiIndexArray, p: &[f64]) -> Result<f64> {
    let mut acc = a.data().to_vec();
    for _ in 0..a.rank() {
        let n = p.len();
        if !acc.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch("covector length does not divide the array".into()));
        }
        acc = acc.chunks(n).map(|c| c.iter().zip(p).map(|(x, y)| x * y).sum()).collect();
    }
    Ok(acc[0])
}

/// Contract all but the first slot with `p`: returns K^{λ ρ…} p_ρ….
pub fn partial_contraction(a: &MultiIndexArray, p: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    if a.rank() == 0 {
        return Err(Error::Unsupported("partial contraction of a scalar".into()));
    }
    let mut acc = a.data().to_vec();
    for _ in 1..a.rank() {
        acc = acc.chunks(n).map(|c| c.iter().zip(p).map(|(x, y)| x * y).sum()).collect();
    }
    Ok(acc)
}

/// `∇^{(λ₁} K^{λ₂…λ_{k+1})}` via Christoffel symbols.
pub fn killing_residual(k: &SymmetricMultivectorField, metric: &SpacetimeMetric, x: &[f64]) -> Result<MultiIndexArray> {
    let deg = k.degree();
    if deg == 0 {
        return Err(Error::Unsupported("Killing residual of a degree-0 field".into()));
    }
    if k.dim() != 4 {
        return Err(Error::DimensionMismatch("Killing residual needs a spacetime field".into()));
    }
    let p: Vec4 = [x[0], x[1], x[2], x[3]];
    let gi = metric.g_inv(&p)?;
    let gamma = crate::spacetime::christoffel_symbols(metric, &p)?;
    let kc = k.components(x)?;
    let dk = k.derivatives(x)?;
    // covariant derivative ∇_ρ K^{a…}, indexed (ρ, a…)
    let mut cov = MultiIndexArray::zeros_uniform(deg + 1, 4);
    let len = 4usize.pow(deg as u32);
    for rho in 0..4 {
        for off in 0..len {
            let idx = kc.unravel(off);
            let mut v = dk[rho].data()[off];
            for slot in 0..deg {
                let mut j = idx.clone();
                for s in 0..4 {
                    j[slot] = s;
                    v += gamma[idx[slot]][rho][s] * kc.get(&j)?;
                }
            }
            cov.data_mut()[rho * len + off] = v;
        }
    }
    // raise ρ and symmetrize
    let mut raised = MultiIndexArray::zeros_uniform(deg + 1, 4);
    for lam in 0..4 {
        for off in 0..len {
            let v: f64 = (0..4).map(|rho| gi[lam][rho] * cov.data()[rho * len + off]).sum();
            raised.data_mut()[lam * len + off] = v;
        }
    }
    raised.symmetrize()
}

/// Same quantity as [`killing_residual`] computed as `−½ [K, ḡ]`.
pub fn killing_residual_schouten(
    k: &SymmetricMultivectorField,
    metric: &SpacetimeMetric,
    x: &[f64],
) -> Result<MultiIndexArray> {
    Ok(schouten_sym(k, &contravariant_metric(metric), x)?.scaled(-0.5))
}

/// ḡ = g^{λμ} as a degree-2 field with derivatives from the metric.
pub fn contravariant_metric(metric: &SpacetimeMetric) -> SymmetricMultivectorField {
    scaled_contravariant_metric(metric, 1.0, "metric")
}

/// Ĝ^{λμ} = (ℏ/mc)² g^{λμ}.
pub fn compton_metric(metric: &SpacetimeMetric, scales: &ScaleConstants) -> SymmetricMultivectorField {
    let k = scales.compton();
    scaled_contravariant_metric(metric, 1.0 / (k * k), "compton_metric")
}

fn scaled_contravariant_metric(metric: &SpacetimeMetric, factor: f64, name: &str) -> SymmetricMultivectorField {
    let (m1, m2) = (metric.clone(), metric.clone());
    SymmetricMultivectorField::new(
        name,
        2,
        4,
        Arc::new(move |x| Ok(MultiIndexArray::from_mat4(&m1.g_inv(&to4(x))?).scaled(factor))),
    )
    .with_derivatives(Arc::new(move |x| {
        Ok(m2.dg_inv(&to4(x))?.iter().map(|d| MultiIndexArray::from_mat4(d).scaled(factor)).collect())
    }))
}

pub(crate) fn to4(x: &[f64]) -> Vec4 {
    [x[0], x[1], x[2], x[3]]
}

/// Totally antisymmetric contravariant field over any chart dimension.
#[derive(Clone)]
pub struct SkewMultivectorField {
    name: String,
    degree: usize,
    dim: usize,
    components: ComponentFn,
    derivatives: Option<ComponentDerivFn>,
    diff: DiffConfig,
}

impl fmt::Debug for SkewMultivectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkewMultivectorField")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("dim", &self.dim)
            .finish()
    }
}

impl SkewMultivectorField {
    pub fn new(name: impl Into<String>, degree: usize, dim: usize, components: ComponentFn) -> Self {
        Self { name: name.into(), degree, dim, components, derivatives: None, diff: DiffConfig::nested() }
    }

    pub fn with_derivatives(mut self, derivatives: ComponentDerivFn) -> Self {
        self.derivatives = Some(derivatives);
        self
    }

    pub fn with_diff_config(mut self, cfg: DiffConfig) -> Self {
        self.diff = cfg;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self, x: &[f64]) -> Result<MultiIndexArray> {
        let a = (self.components)(x)?;
        if a.rank() != self.degree || (self.degree > 0 && a.uniform_dim() != Some(self.dim)) {
            return Err(Error::DimensionMismatch(format!("{} returned dims {:?}", self.name, a.dims())));
        }
        Ok(a)
    }

    pub fn derivatives(&self, x: &[f64]) -> Result<Vec<MultiIndexArray>> {
        match &self.derivatives {
            Some(d) => d(x),
            None => {
                let f: ComponentFn = self.components.clone();
                array_derivatives(&f, x, &self.diff)
            }
        }
    }

    pub fn antisymmetry_residual(&self, x: &[f64]) -> Result<f64> {
        self.components(x)?.antisymmetry_residual()
    }
}

/// Overall sign of the skew Schouten bracket. The two conventions agree
/// when the first argument is a vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkewConvention {
    /// `[X₁∧…∧X_p, Y₁∧…∧Y_q] = Σ (−1)^{i+j} [X_i, Y_j] ∧ (rest)`.
    Decomposable,
    /// `(−1)^{p−1}` times the decomposable bracket. A Jacobi pair (E, Λ)
    /// then satisfies `[Λ, Λ] = −2 E ∧ Λ`.
    #[default]
    Alternating,
}

/// Schouten–Nijenhuis bracket of skew fields for degree pairs (1,1), (1,2)
/// and (2,2) in the [`SkewConvention::Alternating`] convention. Reduces to
/// the Lie bracket on vectors and to the Lie derivative `L_X Q` for (1,2).
pub fn schouten_skew(p: &SkewMultivectorField, q: &SkewMultivectorField, x: &[f64]) -> Result<MultiIndexArray> {
    schouten_skew_with(p, q, x, SkewConvention::Alternating)
}

pub fn schouten_skew_with(
    p: &SkewMultivectorField,
    q: &SkewMultivectorField,
    x: &[f64],
    convention: SkewConvention,
) -> Result<MultiIndexArray> {
    let (pd, qd) = (p.degree(), q.degree());
    if !matches!((pd, qd), (1, 1) | (1, 2) | (2, 2)) {
        return Err(Error::Unsupported(format!("skew Schouten bracket of degrees ({pd}, {qd})")));
    }
    if p.dim() != q.dim() || x.len() != p.dim() {
        return Err(Error::DimensionMismatch("skew fields over different charts".into()));
    }
    schouten_skew_arrays(&p.components(x)?, &p.derivatives(x)?, &q.components(x)?, &q.derivatives(x)?, convention)
}

/// Bracket from component values and first derivatives.
pub fn schouten_skew_arrays(
    pc: &MultiIndexArray,
    dp: &[MultiIndexArray],
    qc: &MultiIndexArray,
    dq: &[MultiIndexArray],
    convention: SkewConvention,
) -> Result<MultiIndexArray> {
    let (pd, qd) = (pc.rank(), qc.rank());
    let n = dp.len();
    let out_deg = pd + qd - 1;
    let mut raw = MultiIndexArray::zeros_uniform(out_deg, n);
    let len_p_rest = n.pow(pd as u32 - 1);
    let len_q = n.pow(qd as u32);
    let len_p = n.pow(pd as u32);
    let len_q_rest = n.pow(qd as u32 - 1);
    let w1 = 1.0 / (factorial(pd - 1) * factorial(qd));
    let w2 = 1.0 / (factorial(pd) * factorial(qd - 1));
    let data = raw.data_mut();
    // P^{A' k} ∂_k Q^{B}: output (A', B)
    for a_rest in 0..len_p_rest {
        for k in 0..n {
            let pv = pc.data()[a_rest * n + k];
            if pv == 0.0 {
                continue;
            }
            for b in 0..len_q {
                data[a_rest * len_q + b] += w1 * pv * dq[k].data()[b];
            }
        }
    }
    // − ∂_k P^{A} Q^{k B'}: output (A, B')
    for k in 0..n {
        for a in 0..len_p {
            let dpv = dp[k].data()[a];
            if dpv == 0.0 {
                continue;
            }
            for b_rest in 0..len_q_rest {
                data[a * len_q_rest + b_rest] -= w2 * dpv * qc.data()[k * len_q_rest + b_rest];
            }
        }
    }
    let sign = match convention {
        SkewConvention::Alternating if pd % 2 == 0 => -1.0,
        _ => 1.0,
    };
    Ok(raw.antisymmetrize()?.scaled(sign * factorial(out_deg)))
}

/// Wedge product with the convention `(X∧Y)^{ab} = X^aY^b − X^bY^a`.
pub fn wedge(p: &MultiIndexArray, q: &MultiIndexArray) -> Result<MultiIndexArray> {
    let n = match (p.uniform_dim(), q.uniform_dim()) {
        (Some(a), Some(b)) if a == b => a,
        _ => return Err(Error::DimensionMismatch("wedge of arrays over different dimensions".into())),
    };
    let (pd, qd) = (p.rank(), q.rank());
    let mut t = MultiIndexArray::zeros_uniform(pd + qd, n);
    let lq = q.data().len();
    for (i, pv) in p.data().iter().enumerate() {
        for (j, qv) in q.data().iter().enumerate() {
            t.data_mut()[i * lq + j] = pv * qv;
        }
    }
    Ok(t.antisymmetrize()?.scaled(factorial(pd + qd) / (factorial(pd) * factorial(qd))))
}

/// Killing fields shipped for each catalog metric.
pub fn killing_field_names(metric_name: &str) -> Result<&'static [&'static str]> {
    match metric_name {
        "minkowski" => Ok(&[
            "dt", "dx", "dy", "dz", "rot_x", "rot_y", "rot_z", "boost_x", "boost_y", "boost_z", "metric",
        ]),
        "schwarzschild" => Ok(&["dt", "dphi", "rot_x", "rot_y", "metric"]),
        "kerr" => Ok(&["dt", "dphi", "carter", "metric"]),
        other => Err(Error::Unknown { kind: "metric", name: other.to_string() }),
    }
}

/// Non-Killing fields available for negative tests.
pub fn auxiliary_field_names(metric_name: &str) -> &'static [&'static str] {
    match metric_name {
        "schwarzschild" | "kerr" => &["radial_dilation", "radial_square"],
        "minkowski" => &["dilation", "t_squared"],
        _ => &[],
    }
}

fn coord_vector(metric: &SpacetimeMetric, name: &str, axis: usize) -> SymmetricMultivectorField {
    let m = metric.clone();
    SymmetricMultivectorField::vector(
        name,
        4,
        move |x| {
            m.check_domain(&to4(x))?;
            let mut v = vec![0.0; 4];
            v[axis] = 1.0;
            Ok(v)
        },
        |_| Ok(vec![vec![0.0; 4]; 4]),
    )
}

/// Linear vector field `X^λ = A^λ_μ x^μ`.
fn linear_vector(metric: &SpacetimeMetric, name: &str, a: [[f64; 4]; 4]) -> SymmetricMultivectorField {
    let m = metric.clone();
    SymmetricMultivectorField::vector(
        name,
        4,
        move |x| {
            m.check_domain(&to4(x))?;
            Ok((0..4).map(|l| (0..4).map(|mu| a[l][mu] * x[mu]).sum()).collect())
        },
        move |_| Ok((0..4).map(|rho| (0..4).map(|l| a[l][rho]).collect()).collect()),
    )
}

/// Look up a Killing field by name for a catalog metric.
pub fn killing_field(metric: &SpacetimeMetric, name: &str) -> Result<SymmetricMultivectorField> {
    let names = killing_field_names(metric.name())?;
    if !names.contains(&name) {
        return Err(Error::Unknown { kind: "Killing field", name: format!("{name} on {}", metric.name()) });
    }
    if name == "metric" {
        return Ok(contravariant_metric(metric));
    }
    match (metric.name(), name) {
        (_, "dt") => Ok(coord_vector(metric, "dt", 0)),
        ("minkowski", "dx") => Ok(coord_vector(metric, "dx", 1)),
        ("minkowski", "dy") => Ok(coord_vector(metric, "dy", 2)),
        ("minkowski", "dz") => Ok(coord_vector(metric, "dz", 3)),
        ("minkowski", rot) if rot.starts_with("rot_") => {
            // rotation about axis i: x^j ∂_k − x^k ∂_j with (i, j, k) cyclic
            let i = axis_index(rot)?;
            let (j, k) = (i % 3 + 1, (i + 1) % 3 + 1);
            let mut a = [[0.0; 4]; 4];
            a[k][j] = 1.0;
            a[j][k] = -1.0;
            Ok(linear_vector(metric, rot, a))
        }
        ("minkowski", boost) if boost.starts_with("boost_") => {
            let i = axis_index(boost)?;
            let mut a = [[0.0; 4]; 4];
            a[0][i] = 1.0;
            a[i][0] = 1.0;
            Ok(linear_vector(metric, boost, a))
        }
        (_, "dphi") => Ok(coord_vector(metric, "dphi", 3)),
        ("schwarzschild", "rot_x") => Ok(sphere_rotation(metric, "rot_x", false)),
        ("schwarzschild", "rot_y") => Ok(sphere_rotation(metric, "rot_y", true)),
        ("kerr", "carter") => carter_tensor(metric),
        _ => Err(Error::Unknown { kind: "Killing field", name: name.to_string() }),
    }
}

fn axis_index(name: &str) -> Result<usize> {
    match name.chars().last() {
        Some('x') => Ok(1),
        Some('y') => Ok(2),
        Some('z') => Ok(3),
        _ => Err(Error::Unknown { kind: "axis", name: name.to_string() }),
    }
}

/// Rotations of the round sphere not along the polar axis:
/// `−sinφ ∂_θ − cotθ cosφ ∂_φ` and `cosφ ∂_θ − cotθ sinφ ∂_φ`.
fn sphere_rotation(metric: &SpacetimeMetric, name: &str, about_y: bool) -> SymmetricMultivectorField {
    let m = metric.clone();
    SymmetricMultivectorField::vector(
        name,
        4,
        move |x| {
            m.check_domain(&to4(x))?;
            let (th, ph) = (x[2], x[3]);
            let cot = th.cos() / th.sin();
            Ok(if about_y {
                vec![0.0, 0.0, ph.cos(), -cot * ph.sin()]
            } else {
                vec![0.0, 0.0, -ph.sin(), -cot * ph.cos()]
            })
        },
        move |x| {
            let (th, ph) = (x[2], x[3]);
            let s = th.sin();
            let cot = th.cos() / s;
            let mut j = vec![vec![0.0; 4]; 4];
            if about_y {
                j[2][3] = ph.sin() / (s * s);
                j[3][2] = -ph.sin();
                j[3][3] = -cot * ph.cos();
            } else {
                j[2][3] = ph.cos() / (s * s);
                j[3][2] = -ph.cos();
                j[3][3] = cot * ph.sin();
            }
            Ok(j)
        },
    )
}

/// `∂_θ∂_θ + sin⁻²θ (∂_φ + a sin²θ ∂_t)² − a² cos²θ ḡ` in Boyer–Lindquist
/// coordinates.
fn carter_tensor(metric: &SpacetimeMetric) -> Result<SymmetricMultivectorField> {
    let a = metric.param("spin").unwrap_or(0.0);
    let (m1, m2) = (metric.clone(), metric.clone());
    let base = move |th: f64| -> [[f64; 4]; 4] {
        let s = th.sin();
        let mut k = [[0.0; 4]; 4];
        k[2][2] = 1.0;
        k[0][0] = a * a * s * s;
        k[0][3] = a;
        k[3][0] = a;
        k[3][3] = 1.0 / (s * s);
        k
    };
    Ok(SymmetricMultivectorField::new(
        "carter",
        2,
        4,
        Arc::new(move |x| {
            let p = to4(x);
            let gi = m1.g_inv(&p)?;
            let b = base(x[2]);
            let c2 = a * a * x[2].cos().powi(2);
            let mut k = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    k[i][j] = b[i][j] - c2 * gi[i][j];
                }
            }
            Ok(MultiIndexArray::from_mat4(&k))
        }),
    )
    .with_derivatives(Arc::new(move |x| {
        let p = to4(x);
        let gi = m2.g_inv(&p)?;
        let dgi = m2.dg_inv(&p)?;
        let (s, co) = x[2].sin_cos();
        let c2 = a * a * co * co;
        let dc2 = -2.0 * a * a * co * s;
        let mut out = Vec::with_capacity(4);
        for rho in 0..4 {
            let mut d = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    d[i][j] = -c2 * dgi[rho][i][j];
                    if rho == 2 {
                        d[i][j] -= dc2 * gi[i][j];
                    }
                }
            }
            if rho == 2 {
                d[0][0] += 2.0 * a * a * s * co;
                d[3][3] += -2.0 * co / (s * s * s);
            }
            out.push(MultiIndexArray::from_mat4(&d));
        }
        Ok(out)
    })))
}

/// Non-Killing fields: `r∂_r`, `r²∂_r∂_r` on the spherical charts and
/// `x^μ∂_μ`, `t²∂_t∂_t` on Minkowski.
pub fn auxiliary_field(metric: &SpacetimeMetric, name: &str) -> Result<SymmetricMultivectorField> {
    let m = metric.clone();
    match (metric.name(), name) {
        ("schwarzschild" | "kerr", "radial_dilation") => Ok(SymmetricMultivectorField::vector(
            name,
            4,
            move |x| {
                m.check_domain(&to4(x))?;
                Ok(vec![0.0, x[1], 0.0, 0.0])
            },
            |_| {
                let mut j = vec![vec![0.0; 4]; 4];
                j[1][1] = 1.0;
                Ok(j)
            },
        )),
        ("schwarzschild" | "kerr", "radial_square") => Ok(diagonal_monomial(m, name, 1)),
        ("minkowski", "dilation") => Ok(SymmetricMultivectorField::vector(
            name,
            4,
            |x| Ok(x.to_vec()),
            |_| Ok((0..4).map(|r| (0..4).map(|l| if r == l { 1.0 } else { 0.0 }).collect()).collect()),
        )),
        ("minkowski", "t_squared") => Ok(diagonal_monomial(m, name, 0)),
        _ => Err(Error::Unknown { kind: "auxiliary field", name: format!("{name} on {}", metric.name()) }),
    }
}

/// `(x^axis)² ∂_axis ∂_axis`.
fn diagonal_monomial(metric: SpacetimeMetric, name: &str, axis: usize) -> SymmetricMultivectorField {
    SymmetricMultivectorField::new(
        name,
        2,
        4,
        Arc::new(move |x| {
            metric.check_domain(&to4(x))?;
            let mut k = MultiIndexArray::zeros_uniform(2, 4);
            k.set(&[axis, axis], x[axis] * x[axis])?;
            Ok(k)
        }),
    )
    .with_derivatives(Arc::new(move |x| {
        let mut out = vec![MultiIndexArray::zeros_uniform(2, 4); 4];
        out[axis].set(&[axis, axis], 2.0 * x[axis])?;
        Ok(out)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::{kerr, minkowski, schwarzschild, DEFAULT_MARGIN};

    fn skew_from<F>(degree: usize, dim: usize, f: F) -> SkewMultivectorField
    where
        F: Fn(&[f64]) -> Result<MultiIndexArray> + Send + Sync + 'static,
    {
        SkewMultivectorField::new("test", degree, dim, Arc::new(f))
    }

    fn lie_bracket(x: &SymmetricMultivectorField, y: &SymmetricMultivectorField, p: &[f64]) -> Vec<f64> {
        let (xc, yc) = (x.components(p).unwrap(), y.components(p).unwrap());
        let (dx, dy) = (x.derivatives(p).unwrap(), y.derivatives(p).unwrap());
        (0..4)
            .map(|a| (0..4).map(|b| xc.data()[b] * dy[b].data()[a] - yc.data()[b] * dx[b].data()[a]).sum())
            .collect()
    }

    #[test]
    fn constant_fields_commute() {
        let mut a = MultiIndexArray::zeros_uniform(2, 4);
        a.set(&[0, 1], 1.0).unwrap();
        a.set(&[1, 0], 1.0).unwrap();
        let k = SymmetricMultivectorField::constant("k", a).unwrap();
        let l = SymmetricMultivectorField::constant("l", MultiIndexArray::from_vec4(&[1.0, 2.0, 0.0, 3.0])).unwrap();
        assert_eq!(schouten_sym(&k, &l, &[0.0, 1.0, 2.0, 3.0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn degree_one_bracket_is_lie_bracket() {
        let m = minkowski();
        let boost = killing_field(&m, "boost_x").unwrap();
        let rot = killing_field(&m, "rot_z").unwrap();
        let p = [0.4, 1.1, -0.7, 2.0];
        let b = schouten_sym(&boost, &rot, &p).unwrap();
        let lie = lie_bracket(&boost, &rot, &p);
        for a in 0..4 {
            assert!((b.data()[a] - lie[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn boost_translation_commutator() {
        let m = minkowski();
        let b = schouten_sym(&killing_field(&m, "boost_x").unwrap(), &killing_field(&m, "dt").unwrap(), &[0.2, 0.3, 0.4, 0.5])
            .unwrap();
        assert_eq!(b.data(), &[0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn degree_zero_is_rejected() {
        let f = SymmetricMultivectorField::constant("f", MultiIndexArray::scalar(2.0)).unwrap();
        let k = killing_field(&minkowski(), "dt").unwrap();
        assert!(matches!(schouten_sym(&f, &k, &[0.0; 4]), Err(Error::Unsupported(_))));
        assert!(matches!(killing_residual(&f, &minkowski(), &[0.0; 4]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pi_star_examples() {
        let m = minkowski();
        let g = contravariant_metric(&m);
        assert_eq!(pi_star(&g, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap(), -1.0);
        let dt = killing_field(&m, "dt").unwrap();
        assert_eq!(pi_star(&dt, &[0.0; 4], &[3.5, 1.0, 2.0, 3.0]).unwrap(), 3.5);
    }

    #[test]
    fn catalog_fields_are_killing() {
        let sets = [
            minkowski(),
            schwarzschild(1.0, DEFAULT_MARGIN).unwrap(),
            kerr(1.0, 0.7, DEFAULT_MARGIN).unwrap(),
        ];
        let p = [0.3, 5.5, 1.1, 0.8];
        for m in &sets {
            for name in killing_field_names(m.name()).unwrap() {
                let k = killing_field(m, name).unwrap();
                let r = killing_residual(&k, m, &p).unwrap().max_abs();
                assert!(r < 1e-12, "{} on {}: {r}", name, m.name());
                let s = killing_residual_schouten(&k, m, &p).unwrap().max_abs();
                assert!(s < 1e-12, "{} on {} (Schouten): {s}", name, m.name());
            }
        }
    }

    #[test]
    fn auxiliary_fields_are_not_killing() {
        let m = schwarzschild(1.0, DEFAULT_MARGIN).unwrap();
        let p = [0.0, 6.0, 1.0, 0.0];
        for name in auxiliary_field_names("schwarzschild") {
            let k = auxiliary_field(&m, name).unwrap();
            let a = killing_residual(&k, &m, &p).unwrap();
            let b = killing_residual_schouten(&k, &m, &p).unwrap();
            assert!(a.max_abs() > 1e-2, "{name}");
            assert!(a.sub(&b).unwrap().max_abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn carter_analytic_derivatives_match_numeric() {
        let m = kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap();
        let k = killing_field(&m, "carter").unwrap();
        let kn = k.clone().without_derivatives();
        let p = [0.0, 7.0, 1.3, 0.4];
        let (a, n) = (k.derivatives(&p).unwrap(), kn.derivatives(&p).unwrap());
        for rho in 0..4 {
            assert!(a[rho].sub(&n[rho]).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn unknown_killing_field() {
        assert!(killing_field(&minkowski(), "carter").is_err());
        assert!(killing_field_names("desitter").is_err());
    }

    #[test]
    fn skew_bracket_of_vectors_is_lie() {
        let x = skew_from(1, 3, |p| MultiIndexArray::from_vec(&[3], vec![p[1] * p[2], p[0].sin(), 1.0]));
        let y = skew_from(1, 3, |p| MultiIndexArray::from_vec(&[3], vec![p[2], p[0] * p[0], p[1]]));
        let p = [0.4, -0.3, 0.9];
        let b = schouten_skew(&x, &y, &p).unwrap();
        let (xc, yc) = (x.components(&p).unwrap(), y.components(&p).unwrap());
        let (dx, dy) = (x.derivatives(&p).unwrap(), y.derivatives(&p).unwrap());
        for a in 0..3 {
            let lie: f64 = (0..3).map(|k| xc.data()[k] * dy[k].data()[a] - yc.data()[k] * dx[k].data()[a]).sum();
            assert!((b.data()[a] - lie).abs() < 1e-9);
        }
        assert!(schouten_skew(&x, &x, &p).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn skew_bracket_rejects_high_degree() {
        let q = skew_from(3, 3, |_| Ok(MultiIndexArray::zeros_uniform(3, 3)));
        let x = skew_from(1, 3, |_| Ok(MultiIndexArray::zeros_uniform(1, 3)));
        assert!(matches!(schouten_skew(&x, &q, &[0.0; 3]), Err(Error::Unsupported(_))));
        assert!(matches!(schouten_skew(&q, &x, &[0.0; 3]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn wedge_of_vectors() {
        let a = MultiIndexArray::from_vec(&[3], vec![1.0, 2.0, 0.0]).unwrap();
        let b = MultiIndexArray::from_vec(&[3], vec![0.0, 1.0, 3.0]).unwrap();
        let w = wedge(&a, &b).unwrap();
        assert_eq!(w.get(&[0, 1]).unwrap(), 1.0);
        assert_eq!(w.get(&[1, 2]).unwrap(), 6.0);
        assert_eq!(w.get(&[2, 1]).unwrap(), -6.0);
    }

    fn poly_vector(k: f64) -> SkewMultivectorField {
        skew_from(1, 3, move |p| {
            MultiIndexArray::from_vec(&[3], vec![p[1] * p[2] + k, (k * p[0]).sin() + p[2], p[0] * p[1] * k - p[2] * p[2]])
        })
    }

    fn wedge_field(a: SkewMultivectorField, b: SkewMultivectorField) -> SkewMultivectorField {
        skew_from(a.degree() + b.degree(), 3, move |q| wedge(&a.components(q)?, &b.components(q)?))
    }

    #[test]
    fn decomposable_bivector_bracket() {
        let (x1, x2, y1, y2) = (poly_vector(1.0), poly_vector(2.0), poly_vector(3.0), poly_vector(4.0));
        let p = [0.3, 0.7, -0.4];
        let xx = wedge_field(x1.clone(), x2.clone());
        let yy = wedge_field(y1.clone(), y2.clone());
        let xs = [&x1, &x2];
        let ys = [&y1, &y2];
        let mut expected = MultiIndexArray::zeros_uniform(3, 3);
        for i in 0..2 {
            for j in 0..2 {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let lie = schouten_skew(xs[i], ys[j], &p).unwrap();
                let t = wedge(&wedge(&lie, &xs[1 - i].components(&p).unwrap()).unwrap(), &ys[1 - j].components(&p).unwrap())
                    .unwrap();
                expected = expected.add(&t.scaled(sign)).unwrap();
            }
        }
        let d = schouten_skew_with(&xx, &yy, &p, SkewConvention::Decomposable).unwrap();
        assert!(d.sub(&expected).unwrap().max_abs() < 1e-8);
        let a = schouten_skew(&xx, &yy, &p).unwrap();
        assert!(a.add(&expected).unwrap().max_abs() < 1e-8);
        // both agree when the first slot is a vector
        let v1 = schouten_skew_with(&x1, &yy, &p, SkewConvention::Decomposable).unwrap();
        assert!(v1.sub(&schouten_skew(&x1, &yy, &p).unwrap()).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn vector_bivector_bracket_against_closed_form() {
        // For closed β: ½[X,Q]^{ab}β_{ab} = X(½Q^{ab}β_{ab}) − ½Q^{ab}(d i_X β)_{ab}
        let x = poly_vector(0.7);
        let q = wedge_field(poly_vector(1.3), poly_vector(-0.4));
        // β = d(y z dx + x² dz), closed by construction
        let beta_of = |c: &[f64]| -> Vec<Vec<f64>> {
            let (x0, y, z) = (c[0], c[1], c[2]);
            // ∂_a A_b − ∂_b A_a with A = (y z, 0, x²)
            let da = [[0.0, 0.0, 2.0 * x0], [z, 0.0, 0.0], [y, 0.0, 0.0]];
            (0..3).map(|a| (0..3).map(|b| da[a][b] - da[b][a]).collect()).collect()
        };
        let cfg = DiffConfig::nested();
        let pt = [0.2, -0.6, 0.9];
        let half_qb = |c: &[f64]| -> Result<f64> {
            let qc = q.components(c)?;
            let b = beta_of(c);
            Ok(0.5 * (0..3).flat_map(|a| (0..3).map(move |bb| (a, bb))).map(|(a, bb)| qc.data()[a * 3 + bb] * b[a][bb]).sum::<f64>())
        };
        let xc = x.components(&pt).unwrap();
        let grad = geometry::gradient(half_qb, &pt, &cfg).unwrap();
        let x_of_qb: f64 = (0..3).map(|a| xc.data()[a] * grad[a]).sum();
        let ixb = |c: &[f64]| -> Result<Vec<f64>> {
            let xc = x.components(c)?;
            let b = beta_of(c);
            Ok((0..3).map(|bb| (0..3).map(|a| xc.data()[a] * b[a][bb]).sum()).collect())
        };
        let d_ixb = geometry::exterior_derivative_1form(ixb, &pt, &cfg).unwrap();
        let qc = q.components(&pt).unwrap();
        let rhs = x_of_qb - 0.5 * (0..9).map(|k| qc.data()[k] * d_ixb.data()[k]).sum::<f64>();
        let br = schouten_skew(&x, &q, &pt).unwrap();
        let b = beta_of(&pt);
        let lhs = 0.5 * (0..9).map(|k| br.data()[k] * b[k / 3][k % 3]).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }
}
