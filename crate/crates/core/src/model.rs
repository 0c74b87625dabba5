//! Physical parameters, the per-time-step rescaling, and the network coupling
//! matrices that define the parameter-dependent norms.
//!
//! The elasticity form is assembled with unit strain coefficient, i.e. the
//! momentum balance is taken as `-div eps(u) - lambda grad div u + sum grad p_i`.
//! Physical data with a shear modulus other than `1/2` therefore has to be
//! brought to that form first; [`PhysicalParams::shear_normalized`] does so by
//! dividing every stress-like quantity by `2 mu`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub lambda: f64,
    pub mu: f64,
    pub c_p: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Symmetric, zero diagonal.
    pub beta: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub tau: f64,
}

impl PhysicalParams {
    pub fn n(&self) -> usize {
        self.k.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if n == 0 {
            return bad("at least one network is required".into());
        }
        for (name, len) in [
            ("c_p", self.c_p.len()),
            ("alpha", self.alpha.len()),
            ("beta", self.beta.len()),
        ] {
            if len != n {
                return bad(format!("{name} has {len} entries for {n} networks"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        for i in 0..n {
            if !(self.k[i] > 0.0 && self.k[i].is_finite()) {
                return bad(format!("K{} must be positive, got {}", i + 1, self.k[i]));
            }
            if !(self.c_p[i] >= 0.0 && self.c_p[i].is_finite()) {
                return bad(format!("c_p{} must be nonnegative, got {}", i + 1, self.c_p[i]));
            }
            if !(self.alpha[i] > 0.0 && self.alpha[i] <= 1.0) {
                return bad(format!("alpha{} must lie in (0, 1], got {}", i + 1, self.alpha[i]));
            }
            if self.beta[i].len() != n {
                return bad(format!("beta row {} has {} entries", i + 1, self.beta[i].len()));
            }
            if self.beta[i][i] != 0.0 {
                return bad(format!("beta{}{} must be zero", i + 1, i + 1));
            }
            for j in 0..n {
                let b = self.beta[i][j];
                if !(b >= 0.0 && b.is_finite()) {
                    return bad(format!("beta{}{} must be nonnegative, got {b}", i + 1, j + 1));
                }
                if b != self.beta[j][i] {
                    return bad(format!("beta is not symmetric at ({}, {})", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    /// Equivalent parameters for a momentum balance divided by `2 mu`:
    /// pressures become `p / (2 mu)`, so `lambda -> lambda / (2 mu)` while
    /// storage, transfer and conductivity coefficients are multiplied by
    /// `2 mu`. The result has `mu = 1/2`.
    pub fn shear_normalized(&self) -> PhysicalParams {
        let s = 2.0 * self.mu;
        PhysicalParams {
            lambda: self.lambda / s,
            mu: 0.5,
            c_p: self.c_p.iter().map(|c| c * s).collect(),
            alpha: self.alpha.clone(),
            beta: self
                .beta
                .iter()
                .map(|row| row.iter().map(|b| b * s).collect())
                .collect(),
            k: self.k.iter().map(|k| k * s).collect(),
            tau: self.tau,
        }
    }
}

/// Choice of the fixed-stress stabilization parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LMode {
    /// `L = 1 / (1 + lambda)`.
    Paper,
    /// `L = 1 / (lambda + cK2)`.
    Theory { ck2: f64 },
    Explicit(f64),
}

/// Identifies one of the network coupling matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaId {
    /// Transfer.
    L1,
    /// Storage.
    L2,
    /// Conductivity floor `R I`.
    L3,
    /// `ones / lambda0`.
    L4,
    /// `L1 + L2 + L3 + L4`.
    Total,
    /// `L * ones`.
    Stab,
    /// `L3 + L4 + Stab`.
    Tilde,
    /// `Total + Stab`.
    Extended,
}

#[derive(Debug, Clone)]
pub struct RescaledModel {
    pub n: usize,
    pub lambda: f64,
    pub lambda0: f64,
    pub rinv: Vec<f64>,
    pub alpha_p: Vec<f64>,
    /// `tau beta_ij / (alpha_i alpha_j)` off the diagonal; the diagonal holds
    /// `sum_{j != i} tau beta_ij / alpha_i^2`.
    pub alpha_c: DMatrix<f64>,
    /// `(max_i rinv_i)^{-1}`.
    pub r: f64,
    pub l: f64,
    pub eta: f64,
    pub lambda1: DMatrix<f64>,
    pub lambda2: DMatrix<f64>,
    pub lambda3: DMatrix<f64>,
    pub lambda4: DMatrix<f64>,
    pub lambda_total: DMatrix<f64>,
    pub lambda_stab: DMatrix<f64>,
    pub lambda_tilde: DMatrix<f64>,
    pub lambda_e: DMatrix<f64>,
}

pub fn rescale(p: &PhysicalParams, l_mode: LMode, eta: f64) -> Result<RescaledModel> {
    p.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let n = p.n();
    let tau = p.tau;
    let rinv: Vec<f64> = (0..n).map(|i| p.alpha[i] * p.alpha[i] / (tau * p.k[i])).collect();
    let alpha_p: Vec<f64> = (0..n).map(|i| p.c_p[i] / (p.alpha[i] * p.alpha[i])).collect();

    let mut alpha_c = DMatrix::zeros(n, n);
    let mut lambda1 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let a = tau * p.beta[i][j] / (p.alpha[i] * p.alpha[j]);
                alpha_c[(i, j)] = a;
                lambda1[(i, j)] = -a;
                let d = tau * p.beta[i][j] / (p.alpha[i] * p.alpha[i]);
                alpha_c[(i, i)] += d;
                lambda1[(i, i)] += d;
            }
        }
    }
    let lambda2 = DMatrix::from_diagonal(&DVector::from_vec(alpha_p.clone()));
    let r = 1.0 / rinv.iter().copied().fold(f64::MIN, f64::max);
    let lambda3 = DMatrix::identity(n, n) * r;
    let lambda0 = p.lambda.max(1.0);
    let lambda4 = DMatrix::from_element(n, n, 1.0 / lambda0);
    let l = match l_mode {
        LMode::Paper => 1.0 / (1.0 + p.lambda),
        LMode::Theory { ck2 } => {
            if !(ck2 > 0.0) {
                return Err(Error::InvalidParameter(format!("cK2 must be positive, got {ck2}")));
            }
            1.0 / (p.lambda + ck2)
        }
        LMode::Explicit(v) => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("L must be nonnegative, got {v}")));
            }
            v
        }
    };
    let lambda_stab = DMatrix::from_element(n, n, l);
    let lambda_total = &lambda1 + &lambda2 + &lambda3 + &lambda4;
    let lambda_tilde = &lambda3 + &lambda4 + &lambda_stab;
    let lambda_e = &lambda_total + &lambda_stab;
    Ok(RescaledModel {
        n,
        lambda: p.lambda,
        lambda0,
        rinv,
        alpha_p,
        alpha_c,
        r,
        l,
        eta,
        lambda1,
        lambda2,
        lambda3,
        lambda4,
        lambda_total,
        lambda_stab,
        lambda_tilde,
        lambda_e,
    })
}

impl RescaledModel {
    pub fn matrix(&self, which: LambdaId) -> &DMatrix<f64> {
        match which {
            LambdaId::L1 => &self.lambda1,
            LambdaId::L2 => &self.lambda2,
            LambdaId::L3 => &self.lambda3,
            LambdaId::L4 => &self.lambda4,
            LambdaId::Total => &self.lambda_total,
            LambdaId::Stab => &self.lambda_stab,
            LambdaId::Tilde => &self.lambda_tilde,
            LambdaId::Extended => &self.lambda_e,
        }
    }

    /// `Lambda1 + Lambda2`, the pressure block of the coupled system.
    pub fn pressure_coupling(&self) -> DMatrix<f64> {
        &self.lambda1 + &self.lambda2
    }

    /// `Lambda1 + Lambda2 + Lambda_L`, the per-cell matrix of the stabilized
    /// flow step.
    pub fn flow_pressure_matrix(&self) -> DMatrix<f64> {
        &self.lambda1 + &self.lambda2 + &self.lambda_stab
    }
}

pub fn lambda_quadratic_forms(m: &RescaledModel, which: LambdaId, x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    x.dot(&(m.matrix(which) * &x))
}

/// Which benchmark a parameter set describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    Barenblatt,
    Mpet4,
    Custom,
}

/// How the printed parameter tables are turned into numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    /// Values expanded to SI base units.
    Si,
    /// Printed mantissas used verbatim, without their unit prefixes.
    PaperRaw,
}

/// How physical data is brought to the unit-strain-coefficient form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide the momentum balance by `2 mu` (see
    /// [`PhysicalParams::shear_normalized`]).
    Shear,
    /// Use the parameters as given.
    None,
}

/// Transfer coefficient values swept for the two-network benchmark.
pub const BARENBLATT_BETAS: [f64; 2] = [5e-10, 1e-8];

/// Two-network benchmark parameters; `beta` is given in SI units and
/// converted for [`UnitMode::PaperRaw`].
pub fn barenblatt_params(units: UnitMode, beta: f64) -> PhysicalParams {
    let (lambda, mu, c_p, beta, k) = match units {
        UnitMode::Si => (4.2e6, 2.4e6, [54e-9, 14e-9], beta, [6.18e-15, 27.2e-15]),
        UnitMode::PaperRaw => (4.2, 2.4, [54.0, 14.0], beta * 1e10, [6.18, 27.2]),
    };
    PhysicalParams {
        lambda,
        mu,
        c_p: c_p.to_vec(),
        alpha: vec![0.95, 0.12],
        beta: vec![vec![0.0, beta], vec![beta, 0.0]],
        k: k.to_vec(),
        tau: 1.0,
    }
}

/// Four-network benchmark parameters. Its table is printed in base units,
/// so both unit modes agree.
pub fn mpet4_params(_units: UnitMode) -> PhysicalParams {
    let (b12, b23, b34) = (1.5e-19, 2.0e-19, 1.0e-13);
    let kk = 1.0e-10 / 2.67e-3;
    PhysicalParams {
        lambda: 505.0,
        mu: 216.0,
        c_p: vec![4.5e-10; 4],
        alpha: vec![0.99; 4],
        beta: vec![
            vec![0.0, b12, 0.0, 0.0],
            vec![b12, 0.0, b23, b12],
            vec![0.0, b23, 0.0, b34],
            vec![0.0, b12, b34, 0.0],
        ],
        k: vec![kk, kk, 1.4e-14 / 8.9e-4, kk],
        tau: 1.0,
    }
}

/// Dirichlet pressures on the whole boundary, one per network.
pub fn boundary_pressures(id: BenchmarkId) -> Vec<f64> {
    match id {
        BenchmarkId::Barenblatt => vec![2.0, 20.0],
        BenchmarkId::Mpet4 => vec![2.0, 20.0, 30.0, 40.0],
        BenchmarkId::Custom => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_network(b: f64, tau: f64) -> PhysicalParams {
        PhysicalParams {
            lambda: 1.0,
            mu: 0.5,
            c_p: vec![0.0, 0.0],
            alpha: vec![1.0, 1.0],
            beta: vec![vec![0.0, b], vec![b, 0.0]],
            k: vec![1.0, 1.0],
            tau,
        }
    }

    #[test]
    fn barenblatt_conductivity_coefficient() {
        let p = barenblatt_params(UnitMode::Si, 5e-10);
        let m = rescale(&p, LMode::Paper, 10.0).unwrap();
        let expected = 0.95f64.powi(2) / 6.18e-15;
        assert!((m.rinv[0] / expected - 1.0).abs() < 1e-14);
        assert!((m.rinv[0] / 1.4604e14 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn single_network_has_no_transfer() {
        let p = PhysicalParams {
            lambda: 3.0,
            mu: 0.5,
            c_p: vec![0.1],
            alpha: vec![1.0],
            beta: vec![vec![0.0]],
            k: vec![2.0],
            tau: 1.0,
        };
        let m = rescale(&p, LMode::Paper, 10.0).unwrap();
        assert_eq!(m.lambda1[(0, 0)], 0.0);
        assert_eq!(m.lambda_stab[(0, 0)], 0.25);
    }

    #[test]
    fn symmetric_two_network_transfer() {
        let b = 0.3;
        let tau = 2.0;
        let m = rescale(&two_network(b, tau), LMode::Paper, 10.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) * (tau * b);
        assert!((&m.lambda1 - expected).norm() < 1e-15);
        let eig = m.lambda1.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        assert!(lo.abs() < 1e-15);
        assert!((hi - 2.0 * tau * b).abs() < 1e-15);
    }

    #[test]
    fn quadratic_forms_trivial_cases() {
        let p = mpet4_params(UnitMode::Si).shear_normalized();
        let m = rescale(&p, LMode::Paper, 10.0).unwrap();
        let zero = [0.0; 4];
        for id in [
            LambdaId::L1,
            LambdaId::L2,
            LambdaId::L3,
            LambdaId::L4,
            LambdaId::Total,
            LambdaId::Stab,
            LambdaId::Tilde,
            LambdaId::Extended,
        ] {
            assert_eq!(lambda_quadratic_forms(&m, id, &zero), 0.0);
        }
        let ones = [1.0; 4];
        let q = lambda_quadratic_forms(&m, LambdaId::L4, &ones);
        assert!((q - 16.0 / m.lambda0).abs() < 1e-14);
    }

    #[test]
    fn lambda0_floor() {
        let m = rescale(&two_network(0.0, 1.0), LMode::Paper, 10.0).unwrap();
        assert_eq!(m.lambda0, 1.0);
        let mut p = two_network(0.0, 1.0);
        p.lambda = 7.0;
        assert_eq!(rescale(&p, LMode::Paper, 10.0).unwrap().lambda0, 7.0);
    }

    #[test]
    fn l_modes() {
        let p = two_network(0.1, 1.0);
        assert_eq!(rescale(&p, LMode::Paper, 1.0).unwrap().l, 0.5);
        assert_eq!(rescale(&p, LMode::Theory { ck2: 0.5 }, 1.0).unwrap().l, 1.0 / 1.5);
        assert_eq!(rescale(&p, LMode::Explicit(0.0), 1.0).unwrap().l, 0.0);
        assert!(rescale(&p, LMode::Theory { ck2: 0.0 }, 1.0).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let good = two_network(0.1, 1.0);
        let mut p = good.clone();
        p.k[1] = 0.0;
        assert!(rescale(&p, LMode::Paper, 10.0).is_err());
        let mut p = good.clone();
        p.beta[0][1] = 0.2;
        assert!(rescale(&p, LMode::Paper, 10.0).is_err());
        let mut p = good.clone();
        p.c_p[0] = -1.0;
        assert!(rescale(&p, LMode::Paper, 10.0).is_err());
        let mut p = good.clone();
        p.tau = 0.0;
        assert!(rescale(&p, LMode::Paper, 10.0).is_err());
        assert!(rescale(&good, LMode::Paper, 0.0).is_err());
    }

    #[test]
    fn shear_normalization_scales_stress_quantities() {
        let p = barenblatt_params(UnitMode::Si, 5e-10);
        let q = p.shear_normalized();
        assert!((q.lambda - 0.875).abs() < 1e-15);
        assert_eq!(q.mu, 0.5);
        assert!((q.c_p[0] - 54e-9 * 4.8e6).abs() < 1e-15);
        // raw and SI tables describe the same nondimensional lambda
        let r = barenblatt_params(UnitMode::PaperRaw, 5e-10).shear_normalized();
        assert!((r.lambda - q.lambda).abs() < 1e-15);
        // normalizing twice is a no-op
        assert_eq!(q.shear_normalized(), q);
    }

    #[test]
    fn matrices_are_spd_for_benchmarks() {
        for p in [
            barenblatt_params(UnitMode::Si, 5e-10),
            barenblatt_params(UnitMode::PaperRaw, 1e-8),
            mpet4_params(UnitMode::Si),
        ] {
            let m = rescale(&p.shear_normalized(), LMode::Paper, 10.0).unwrap();
            for mat in [&m.lambda_total, &m.lambda_tilde, &m.lambda_e, &m.lambda3] {
                assert!(mat.clone().cholesky().is_some());
                assert!((mat - mat.transpose()).norm() == 0.0);
            }
        }
    }

    fn pair_sum(p: &PhysicalParams, x: &[f64]) -> f64 {
        let n = p.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = x[i] / p.alpha[i] - x[j] / p.alpha[j];
                s += p.tau * p.beta[i][j] * d * d;
            }
        }
        s
    }

    proptest! {
        #[test]
        fn transfer_form_matches_pair_sum(
            x in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(0.0f64..2.0, 6),
            alpha in prop::collection::vec(0.05f64..1.0, 4),
            tau in 1e-3f64..1e3,
        ) {
            let beta = vec![
                vec![0.0, b[0], b[1], b[2]],
                vec![b[0], 0.0, b[3], b[4]],
                vec![b[1], b[3], 0.0, b[5]],
                vec![b[2], b[4], b[5], 0.0],
            ];
            let p = PhysicalParams {
                lambda: 1.0, mu: 0.5, c_p: vec![0.1; 4], alpha, beta,
                k: vec![1.0; 4], tau,
            };
            let m = rescale(&p, LMode::Paper, 10.0).unwrap();
            let q = lambda_quadratic_forms(&m, LambdaId::L1, &x);
            let exact = pair_sum(&p, &x);
            prop_assert!((q - exact).abs() <= 1e-12 * exact.abs().max(1e-300) + 1e-13);
        }

        #[test]
        fn time_step_scaling(tau in 1e-3f64..1e3) {
            let mut p1 = mpet4_params(UnitMode::Si);
            p1.tau = tau;
            let mut p2 = p1.clone();
            p2.tau = 2.0 * tau;
            let m1 = rescale(&p1, LMode::Paper, 10.0).unwrap();
            let m2 = rescale(&p2, LMode::Paper, 10.0).unwrap();
            for i in 0..4 {
                prop_assert!((m2.rinv[i] * 2.0 / m1.rinv[i] - 1.0).abs() < 1e-14);
                for j in 0..4 {
                    if i != j {
                        let (a, b) = (m1.alpha_c[(i, j)], m2.alpha_c[(i, j)]);
                        prop_assert!((b - 2.0 * a).abs() <= 1e-14 * a.abs());
                    }
                }
            }
        }
    }
}
