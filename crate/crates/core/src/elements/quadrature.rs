//! Symmetric positive-weight quadrature on the reference triangle
//! `{(0,0),(1,0),(0,1)}` and Gauss-Legendre rules on `[0,1]`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TriangleRule = QuadratureRule<2>;
pub type EdgeRule = QuadratureRule<1>;

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

pub const MAX_TRIANGLE_DEGREE: usize = 6;
pub const MAX_EDGE_DEGREE: usize = 5;

/// Orbit of a point `(a, a, 1-2a)` under the symmetric group, as reference
/// coordinates.
fn orbit3(a: f64) -> [[f64; 2]; 3] {
    let b = 1.0 - 2.0 * a;
    [[a, a], [b, a], [a, b]]
}

fn orbit6(a: f64, b: f64) -> [[f64; 2]; 6] {
    let c = 1.0 - a - b;
    [[a, b], [b, a], [b, c], [c, b], [c, a], [a, c]]
}

/// Smallest tabulated triangle rule with degree at least `min_degree`.
pub fn quadrature_triangle(min_degree: usize) -> Result<TriangleRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut push = |pts: &[[f64; 2]], w: f64| {
        for p in pts {
            points.push(*p);
            weights.push(0.5 * w);
        }
    };
    let degree = match min_degree {
        1 => {
            push(&[[1.0 / 3.0, 1.0 / 3.0]], 1.0);
            1
        }
        2 => {
            push(&orbit3(1.0 / 6.0), 1.0 / 3.0);
            2
        }
        3 | 4 => {
            push(&orbit3(0.445_948_490_915_964_886_32), 0.223_381_589_678_011_465_70);
            push(&orbit3(0.091_576_213_509_770_743_46), 0.109_951_743_655_321_867_64);
            4
        }
        5 => {
            let s = 15f64.sqrt();
            push(&[[1.0 / 3.0, 1.0 / 3.0]], 0.225);
            push(&orbit3((6.0 - s) / 21.0), (155.0 - s) / 1200.0);
            push(&orbit3((6.0 + s) / 21.0), (155.0 + s) / 1200.0);
            5
        }
        6 => {
            push(&orbit3(0.063_089_014_491_502_228_34), 0.050_844_906_370_206_816_92);
            push(&orbit3(0.249_286_745_170_910_421_29), 0.116_786_275_726_379_366_03);
            push(
                &orbit6(0.053_145_049_844_816_947_35, 0.310_352_451_033_784_405_42),
                0.082_851_075_618_373_575_19,
            );
            6
        }
        _ => {
            return Err(Error::UnsupportedQuadrature {
                kind: "triangle",
                degree: min_degree,
                max: MAX_TRIANGLE_DEGREE,
            })
        }
    };
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

/// Gauss-Legendre rule on `[0,1]` with degree at least `min_degree`.
pub fn quadrature_edge(min_degree: usize) -> Result<EdgeRule> {
    let (points, weights, degree): (Vec<f64>, Vec<f64>, usize) = match min_degree {
        1 => (vec![0.5], vec![1.0], 1),
        2 | 3 => {
            let d = 0.5 / 3f64.sqrt();
            (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5], 3)
        }
        4 | 5 => {
            let d = 0.5 * 0.6f64.sqrt();
            (
                vec![0.5 - d, 0.5, 0.5 + d],
                vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
                5,
            )
        }
        _ => {
            return Err(Error::UnsupportedQuadrature {
                kind: "edge",
                degree: min_degree,
                max: MAX_EDGE_DEGREE,
            })
        }
    };
    Ok(QuadratureRule {
        points: points.into_iter().map(|s| [s]).collect(),
        weights,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of `x^a y^b` over the reference triangle.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn integrate(rule: &TriangleRule, a: i32, b: i32) -> f64 {
        rule.iter().map(|(p, w)| w * p[0].powi(a) * p[1].powi(b)).sum()
    }

    #[test]
    fn centroid_rule() {
        let r = quadrature_triangle(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 0.5);
        assert_eq!(r.points[0], [1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn second_degree_rule_integrates_quadratics() {
        let r = quadrature_triangle(2).unwrap();
        assert_eq!(r.len(), 3);
        assert!((integrate(&r, 2, 0) - 1.0 / 12.0).abs() < 1e-15);
        assert!((integrate(&r, 1, 1) - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn fourth_degree_rule() {
        let r = quadrature_triangle(4).unwrap();
        assert_eq!(r.len(), 6);
        assert!((integrate(&r, 4, 0) - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn every_rule_is_exact_to_its_degree() {
        for d in 1..=MAX_TRIANGLE_DEGREE {
            let r = quadrature_triangle(d).unwrap();
            assert!(r.degree >= d);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let total: f64 = r.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-15);
            for a in 0..=r.degree as u32 {
                for b in 0..=(r.degree as u32 - a) {
                    let exact = monomial_exact(a, b);
                    let got = integrate(&r, a as i32, b as i32);
                    assert!(
                        ((got - exact) / exact).abs() < 1e-14,
                        "degree {d}: x^{a} y^{b} {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn edge_rules() {
        let r = quadrature_edge(1).unwrap();
        assert_eq!(r.points, vec![[0.5]]);
        assert_eq!(r.weights, vec![1.0]);

        let r = quadrature_edge(3).unwrap();
        assert_eq!(r.len(), 2);
        let s3: f64 = r.iter().map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((s3 - 0.25).abs() < 1e-15);

        let r = quadrature_edge(5).unwrap();
        assert_eq!(r.len(), 3);
        let s5: f64 = r.iter().map(|(p, w)| w * p[0].powi(5)).sum();
        assert!((s5 - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn edge_rules_exact_to_degree() {
        for d in 1..=MAX_EDGE_DEGREE {
            let r = quadrature_edge(d).unwrap();
            for k in 0..=r.degree as i32 {
                let got: f64 = r.iter().map(|(p, w)| w * p[0].powi(k)).sum();
                assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unsupported_degrees_are_rejected() {
        assert!(quadrature_triangle(0).is_err());
        assert!(quadrature_triangle(7).is_err());
        assert!(quadrature_edge(6).is_err());
    }
}
