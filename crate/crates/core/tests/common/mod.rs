#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use gravcontact::geometry::MultiIndexArray;
use gravcontact::multivector::SymmetricMultivectorField;
use gravcontact::phase::{GravitationalStructure, PhaseStructures};
use gravcontact::spacetime::{kerr, minkowski, schwarzschild, ScaleConstants, SpacetimeMetric, DEFAULT_MARGIN};
use rand::Rng;

pub fn catalog_metrics() -> Vec<SpacetimeMetric> {
    vec![minkowski(), schwarzschild(1.0, DEFAULT_MARGIN).unwrap(), kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap()]
}

pub fn structures(metric: SpacetimeMetric, scales: ScaleConstants) -> Arc<dyn PhaseStructures> {
    Arc::new(GravitationalStructure::new(metric, scales).unwrap())
}

pub fn odd_scales() -> ScaleConstants {
    ScaleConstants::new(1.3, 0.7, 1.9, 0.0).unwrap()
}

/// Random symmetric field `A + B_c x^c + C_{cd} x^c x^d` in `dim`
/// dimensions with coefficients uniform in ±`scale[i]` for the constant,
/// linear and quadratic parts.
pub fn polynomial_field<R: Rng>(rng: &mut R, degree: usize, dim: usize, scale: [f64; 3]) -> SymmetricMultivectorField {
    let dims = vec![dim; degree];
    let mut draw = |s: f64| {
        let data: Vec<f64> = (0..dim.pow(degree as u32)).map(|_| rng.gen_range(-s..s)).collect();
        MultiIndexArray::from_vec(&dims, data).unwrap().symmetrize().unwrap()
    };
    let a = draw(scale[0]);
    let b: Vec<MultiIndexArray> = (0..dim).map(|_| draw(scale[1])).collect();
    // c[c][d] symmetric in (c, d)
    let mut c: Vec<Vec<MultiIndexArray>> = (0..dim).map(|_| (0..dim).map(|_| draw(scale[2])).collect()).collect();
    for i in 0..dim {
        for j in 0..i {
            let avg = c[i][j].add(&c[j][i]).unwrap().scaled(0.5);
            c[i][j] = avg.clone();
            c[j][i] = avg;
        }
    }
    let (a1, b1, c1) = (a.clone(), b.clone(), c.clone());
    let value = move |x: &[f64]| -> gravcontact::Result<MultiIndexArray> {
        let mut out = a1.clone();
        for i in 0..dim {
            out = out.add(&b1[i].scaled(x[i]))?;
            for j in 0..dim {
                out = out.add(&c1[i][j].scaled(x[i] * x[j]))?;
            }
        }
        Ok(out)
    };
    let deriv = move |x: &[f64]| -> gravcontact::Result<Vec<MultiIndexArray>> {
        (0..dim)
            .map(|r| {
                let mut out = b[r].clone();
                for j in 0..dim {
                    out = out.add(&c[r][j].scaled(2.0 * x[j]))?;
                }
                Ok(out)
            })
            .collect()
    };
    SymmetricMultivectorField::new(format!("poly{degree}"), degree, dim, Arc::new(value))
        .with_derivatives(Arc::new(deriv))
}
