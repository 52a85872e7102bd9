//! Dense small-tensor storage, slot symmetrization and the finite-difference
//! engine shared by every other module.
//!
//! Tensors in this crate never exceed rank 5 or slot dimension 7, so
//! everything is stored densely in row-major slot order.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacetime 4-vector / covector components.
pub type Vec4 = [f64; 4];
/// 4x4 component matrix.
pub type Mat4 = [[f64; 4]; 4];
/// Phase-space 7-vector / covector components in the order
/// `(x0, x1, x2, x3, v1, v2, v3)`.
pub type Vec7 = [f64; 7];
/// 7x7 component matrix over the phase basis.
pub type Mat7 = [[f64; 7]; 7];

/// Dense multi-index array with per-slot dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexArray {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl MultiIndexArray {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![0.0; len] }
    }

    /// `rank` slots, each of dimension `dim`.
    pub fn zeros_uniform(rank: usize, dim: usize) -> Self {
        Self::zeros(&vec![dim; rank])
    }

    pub fn scalar(value: f64) -> Self {
        Self { dims: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    pub fn from_vec4(v: &Vec4) -> Self {
        Self { dims: vec![4], data: v.to_vec() }
    }

    pub fn from_mat4(m: &Mat4) -> Self {
        Self { dims: vec![4, 4], data: m.iter().flatten().copied().collect() }
    }

    pub fn from_mat7(m: &Mat7) -> Self {
        Self { dims: vec![7, 7], data: m.iter().flatten().copied().collect() }
    }

    pub fn from_vec7(v: &Vec7) -> Self {
        Self { dims: vec![7], data: v.to_vec() }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Common slot dimension, if all slots agree. Rank-0 arrays report `None`.
    pub fn uniform_dim(&self) -> Option<usize> {
        let first = *self.dims.first()?;
        self.dims.iter().all(|&d| d == first).then_some(first)
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::IndexOutOfRange(format!(
                "index of length {} for rank {}",
                index.len(),
                self.dims.len()
            )));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return Err(Error::IndexOutOfRange(format!(
                    "index {:?} outside dims {:?}",
                    index, self.dims
                )));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    /// Decode a flat offset back into a multi-index.
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for slot in (0..self.dims.len()).rev() {
            idx[slot] = offset % self.dims[slot];
            offset /= self.dims[slot];
        }
        idx
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { dims: self.dims.clone(), data })
    }

    /// Average over all slot permutations.
    pub fn symmetrize(&self) -> Result<Self> {
        self.permutation_average(false)
    }

    /// Signed average over all slot permutations.
    pub fn antisymmetrize(&self) -> Result<Self> {
        self.permutation_average(true)
    }

    fn permutation_average(&self, signed: bool) -> Result<Self> {
        let rank = self.rank();
        if rank <= 1 {
            return Ok(self.clone());
        }
        if self.uniform_dim().is_none() {
            return Err(Error::DimensionMismatch(format!(
                "cannot permute slots of mixed dimensions {:?}",
                self.dims
            )));
        }
        let perms: Vec<(Vec<usize>, f64)> = (0..rank)
            .permutations(rank)
            .map(|p| {
                let sign = if signed { permutation_sign(&p) } else { 1.0 };
                (p, sign)
            })
            .collect();
        let norm = 1.0 / perms.len() as f64;
        let mut out = Self::zeros(&self.dims);
        let mut permuted = vec![0usize; rank];
        for off in 0..self.data.len() {
            let idx = self.unravel(off);
            let mut acc = 0.0;
            for (p, sign) in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    permuted[slot] = idx[src];
                }
                acc += sign * self.data[self.offset(&permuted)?];
            }
            out.data[off] = acc * norm;
        }
        Ok(out)
    }

    /// Largest deviation from total symmetry.
    pub fn symmetry_residual(&self) -> Result<f64> {
        Ok(self.sub(&self.symmetrize()?)?.max_abs())
    }

    /// Largest deviation from total antisymmetry.
    pub fn antisymmetry_residual(&self) -> Result<f64> {
        Ok(self.sub(&self.antisymmetrize()?)?.max_abs())
    }

    pub fn to_mat7(&self) -> Result<Mat7> {
        if self.dims != [7, 7] {
            return Err(Error::DimensionMismatch(format!("expected 7x7, got {:?}", self.dims)));
        }
        let mut m = [[0.0; 7]; 7];
        for (a, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&self.data[a * 7..a * 7 + 7]);
        }
        Ok(m)
    }
}

impl std::ops::Index<&[usize]> for MultiIndexArray {
    type Output = f64;

    fn index(&self, index: &[usize]) -> &f64 {
        match self.offset(index) {
            Ok(off) => &self.data[off],
            Err(e) => panic!("{e}"),
        }
    }
}

/// Sign of a permutation given as an image list.
pub fn permutation_sign(p: &[usize]) -> f64 {
    let mut inversions = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Free-function form of [`MultiIndexArray::symmetrize`].
pub fn symmetrize(a: &MultiIndexArray) -> Result<MultiIndexArray> {
    a.symmetrize()
}

/// Central-difference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffConfig {
    step: f64,
    richardson: bool,
    order: u8,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { step: 1e-5, richardson: true, order: 2 }
    }
}

impl DiffConfig {
    pub fn new(step: f64, richardson: bool, order: u8) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("difference step must be positive, got {step}")));
        }
        if order != 2 && order != 4 {
            return Err(Error::InvalidParameter(format!("difference order must be 2 or 4, got {order}")));
        }
        Ok(Self { step, richardson, order })
    }

    /// Step for derivatives of quantities that are themselves finite
    /// differences; rounding noise dominates below ~1e-4.
    pub fn nested() -> Self {
        Self { step: 1e-3, richardson: true, order: 2 }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn richardson(&self) -> bool {
        self.richardson
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    /// (offset, weight) pairs such that `f'(x) ≈ Σ w f(x + offset)`.
    pub fn stencil(&self, h: f64) -> Vec<(f64, f64)> {
        let base = |h: f64| -> Vec<(f64, f64)> {
            match self.order {
                2 => vec![(h, 0.5 / h), (-h, -0.5 / h)],
                _ => vec![
                    (2.0 * h, -1.0 / (12.0 * h)),
                    (h, 8.0 / (12.0 * h)),
                    (-h, -8.0 / (12.0 * h)),
                    (-2.0 * h, 1.0 / (12.0 * h)),
                ],
            }
        };
        if !self.richardson {
            return base(h);
        }
        let gain = f64::from(1u32 << self.order);
        let mut out: Vec<(f64, f64)> =
            base(0.5 * h).into_iter().map(|(o, w)| (o, w * gain / (gain - 1.0))).collect();
        out.extend(base(h).into_iter().map(|(o, w)| (o, -w / (gain - 1.0))));
        out
    }

    /// Absolute step for a coordinate value: relative above unit scale.
    pub fn step_at(&self, coordinate: f64) -> f64 {
        self.step * coordinate.abs().max(1.0)
    }
}

/// ∂f/∂x^axis by central differences.
pub fn partial_derivative<F>(f: F, x: &[f64], axis: usize, cfg: &DiffConfig) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let v = partial_derivative_vec(|y| Ok(vec![f(y)?]), x, axis, cfg)?;
    Ok(v[0])
}

/// Componentwise ∂F/∂x^axis for a vector-valued F.
pub fn partial_derivative_vec<F>(f: F, x: &[f64], axis: usize, cfg: &DiffConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if axis >= x.len() {
        return Err(Error::IndexOutOfRange(format!("axis {axis} for a {}-dim point", x.len())));
    }
    let h = cfg.step_at(x[axis]);
    let mut acc: Option<Vec<f64>> = None;
    let mut y = x.to_vec();
    for (offset, weight) in cfg.stencil(h) {
        y[axis] = x[axis] + offset;
        let sample = f(&y)?;
        if sample.iter().any(|s| !s.is_finite()) {
            return Err(Error::EvaluationDomain(format!(
                "non-finite sample at offset {offset:e} along axis {axis}"
            )));
        }
        match acc.as_mut() {
            None => acc = Some(sample.iter().map(|s| s * weight).collect()),
            Some(a) => {
                if a.len() != sample.len() {
                    return Err(Error::DimensionMismatch("sample length changed between evaluations".into()));
                }
                for (ai, si) in a.iter_mut().zip(&sample) {
                    *ai += si * weight;
                }
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

/// Gradient of a scalar field.
pub fn gradient<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    (0..x.len()).map(|axis| partial_derivative(&f, x, axis, cfg)).collect()
}

/// `jac[axis][component]` = ∂F^component/∂x^axis.
pub fn jacobian<F>(f: F, x: &[f64], cfg: &DiffConfig) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    (0..x.len()).map(|axis| partial_derivative_vec(&f, x, axis, cfg)).collect()
}

/// (dβ)_{ab} = ∂_a β_b − ∂_b β_a for a 1-form field β.
pub fn exterior_derivative_1form<F>(beta: F, x: &[f64], cfg: &DiffConfig) -> Result<MultiIndexArray>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let jac = jacobian(beta, x, cfg)?;
    let mut out = MultiIndexArray::zeros_uniform(2, n);
    for a in 0..n {
        for b in 0..n {
            out.data[a * n + b] = jac[a][b] - jac[b][a];
        }
    }
    Ok(out)
}

/// (dβ)_{abc} = ∂_a β_{bc} + ∂_b β_{ca} + ∂_c β_{ab} for a 2-form given as a
/// flattened antisymmetric matrix.
pub fn exterior_derivative_2form<F>(beta: F, x: &[f64], cfg: &DiffConfig) -> Result<MultiIndexArray>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let jac = jacobian(beta, x, cfg)?;
    let mut out = MultiIndexArray::zeros_uniform(3, n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out.data[(a * n + b) * n + c] =
                    jac[a][b * n + c] + jac[b][c * n + a] + jac[c][a * n + b];
            }
        }
    }
    Ok(out)
}

pub fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dot7(a: &Vec7, b: &Vec7) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contract the first slot of a 4x4 matrix with a vector: `v^λ m_{λμ}`.
pub fn contract4(v: &Vec4, m: &Mat4) -> Vec4 {
    let mut out = [0.0; 4];
    for (l, row) in m.iter().enumerate() {
        for (mu, val) in row.iter().enumerate() {
            out[mu] += v[l] * val;
        }
    }
    out
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat7_mul(a: &Mat7, b: &Mat7) -> Mat7 {
    let mut out = [[0.0; 7]; 7];
    for i in 0..7 {
        for k in 0..7 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..7 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat7_max_abs_diff(a: &Mat7, b: &Mat7) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Inverse of a 4x4 matrix.
pub fn invert4(m: &Mat4) -> Result<Mat4> {
    let nm = nalgebra::Matrix4::from_fn(|i, j| m[i][j]);
    let inv = nm
        .try_inverse()
        .ok_or_else(|| Error::EvaluationDomain("singular 4x4 matrix".into()))?;
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, val) in row.iter_mut().enumerate() {
            *val = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Eigenvalues of a symmetric 4x4 matrix, ascending.
pub fn symmetric_eigenvalues4(m: &Mat4) -> Vec4 {
    let nm = nalgebra::Matrix4::from_fn(|i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = nalgebra::SymmetricEigen::new(nm);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    [vals[0], vals[1], vals[2], vals[3]]
}

/// Pfaffian of an even-dimensional antisymmetric matrix by expansion along
/// the first row.
pub fn pfaffian(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    if n % 2 == 1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in 1..n {
        let a = m[0][j];
        if a == 0.0 {
            continue;
        }
        let keep: Vec<usize> = (1..n).filter(|&k| k != j).collect();
        let minor: Vec<Vec<f64>> =
            keep.iter().map(|&r| keep.iter().map(|&c| m[r][c]).collect()).collect();
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        acc += sign * a * pfaffian(&minor);
    }
    acc
}

/// Coefficient of `e^0 ∧ … ∧ e^{2n}` in `ω ∧ Ω^n` for a 1-form ω and a 2-form
/// Ω with matrix `Ω(X, Y) = X^a Ω_{ab} Y^b`. The same formula evaluates
/// `E ∧ Λ^n` for a vector and bivector.
pub fn top_form_coefficient(one: &[f64], two: &[Vec<f64>]) -> f64 {
    let dim = one.len();
    let n = dim / 2;
    let mut factorial = 1.0;
    for k in 1..=n {
        factorial *= k as f64;
    }
    let mut acc = 0.0;
    for a in 0..dim {
        if one[a] == 0.0 {
            continue;
        }
        let keep: Vec<usize> = (0..dim).filter(|&k| k != a).collect();
        let minor: Vec<Vec<f64>> =
            keep.iter().map(|&r| keep.iter().map(|&c| two[r][c]).collect()).collect();
        let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * one[a] * pfaffian(&minor);
    }
    factorial * acc
}

pub fn mat7_rows(m: &Mat7) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}
