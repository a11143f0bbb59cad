//! Biorthogonal eigenbasis of the three-mode generator and first-order
//! non-Hermitian perturbation theory around it.
//!
//! The unperturbed generator is
//!
//! ```text
//! [[-iG, 0, g], [0, -iG, -1], [-g, -1, -ig]]
//! ```
//!
//! on (b1, b2†, a†), with perturbation diag(eps1, -eps2, 0).

use nalgebra::{DVector, Matrix3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, expm, CMat, I};
use crate::spectral::PerturbationCase;

/// Default bound on eps / chi^3 for the first-order results to be trusted.
pub const DEFAULT_REGIME_RATIO: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BiorthogonalBasis {
    /// Right vectors for (lambda_0, lambda_+, lambda_-).
    pub right: [DVector<Complex64>; 3],
    /// Left vectors, normalised so that <L_i|R_j> = delta_ij.
    pub left: [DVector<Complex64>; 3],
    pub eigenvalues: [Complex64; 3],
    pub g: f64,
    pub chi: f64,
    pub gamma_minus: f64,
}

impl BiorthogonalBasis {
    /// max |<L_i|R_j> - delta_ij|
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let ip = self.left[i].dotc(&self.right[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - want).norm());
            }
        }
        worst
    }

    /// max-norm of sum_i |R_i><L_i| - I
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = CMat::zeros(3, 3);
        for i in 0..3 {
            sum += &self.right[i] * self.left[i].adjoint();
        }
        (sum - CMat::identity(3, 3)).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

pub fn biorthogonal_basis(g: f64, gamma: f64, gamma_m: f64) -> Result<BiorthogonalBasis> {
    let gm = gamma - gamma_m;
    let gp = gamma + gamma_m;
    let chi2 = 1.0 - g * g - gm * gm / 4.0;
    if !(chi2 > 0.0) {
        return Err(Error::Regime(format!(
            "chi^2 = {chi2:e} <= 0: no biorthogonal basis at or beyond the exceptional point"
        )));
    }
    let chi = chi2.sqrt();
    let l0 = c(0.0, -gamma_m);
    let lp = c(chi, -gp / 2.0);
    let lm = c(-chi, -gp / 2.0);

    let norm0 = (1.0 - g * g).sqrt();
    let r0 = DVector::from_vec(vec![c(1.0, 0.0), c(-g, 0.0), c(0.0, 0.0)]) / c(norm0, 0.0);
    // dual row (1, g, 0); stored conjugated so that <L|R> = L^dagger R
    let d0 = DVector::from_vec(vec![c(1.0, 0.0), c(g, 0.0), c(0.0, 0.0)]) / c(norm0, 0.0);

    let pair = |lam: Complex64| {
        let s = lam + c(0.0, gamma_m);
        let r = DVector::from_vec(vec![c(g, 0.0), c(-1.0, 0.0), s]);
        let d = DVector::from_vec(vec![c(-g, 0.0), c(-1.0, 0.0), s]);
        // d . r = 1 - g^2 + s^2
        let k = (c(1.0 - g * g, 0.0) + s * s).sqrt();
        (r / k, d / k)
    };
    let (rp, dp) = pair(lp);
    let (rm, dm) = pair(lm);
    let conj = |v: DVector<Complex64>| v.map(|x| x.conj());
    Ok(BiorthogonalBasis {
        right: [r0, rp, rm],
        left: [conj(d0), conj(dp), conj(dm)],
        eigenvalues: [l0, lp, lm],
        g,
        chi,
        gamma_minus: gm,
    })
}

/// Reduced generator of the three-mode system with unit exchange coupling.
pub fn three_mode_generator(g: f64, eps1: f64, eps2: f64, gamma: f64, gamma_m: f64) -> CMat {
    CMat::from_row_slice(
        3,
        3,
        &[
            c(eps1, -gamma_m),
            c(0.0, 0.0),
            c(g, 0.0),
            c(0.0, 0.0),
            c(-eps2, -gamma_m),
            c(-1.0, 0.0),
            c(-g, 0.0),
            c(-1.0, 0.0),
            c(0.0, -gamma),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeFlag {
    /// max(|eps1|, |eps2|) / chi^3
    pub ratio: f64,
    pub valid: bool,
}

impl RegimeFlag {
    pub fn new(eps1: f64, eps2: f64, chi: f64, threshold: f64) -> Self {
        let ratio = eps1.abs().max(eps2.abs()) / chi.powi(3);
        RegimeFlag { ratio, valid: ratio < threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderEigenvalues {
    /// (lambda'_0, lambda'_+, lambda'_-)
    pub values: [Complex64; 3],
    pub regime: RegimeFlag,
}

pub fn first_order_eigenvalues(basis: &BiorthogonalBasis, eps1: f64, eps2: f64) -> FirstOrderEigenvalues {
    let v = [c(eps1, 0.0), c(-eps2, 0.0), c(0.0, 0.0)];
    let mut values = basis.eigenvalues;
    for (k, val) in values.iter_mut().enumerate() {
        let shift: Complex64 = (0..3)
            .map(|i| basis.left[k][i].conj() * v[i] * basis.right[k][i])
            .sum();
        *val += shift;
    }
    FirstOrderEigenvalues { values, regime: RegimeFlag::new(eps1, eps2, basis.chi, DEFAULT_REGIME_RATIO) }
}

/// Matrix elements of the three-mode propagator,
///
/// ```text
/// K = [[A1, C, -iB], [-C, A2, iD], [iB, iD, Aa]]
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatorCoefficients {
    pub a1: Complex64,
    pub a2: Complex64,
    pub aa: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl PropagatorCoefficients {
    /// Reads the coefficients off the first two rows and the last diagonal
    /// entry of a propagator.
    pub fn from_matrix(k: &CMat) -> Self {
        PropagatorCoefficients {
            a1: k[(0, 0)],
            c: k[(0, 1)],
            b: I * k[(0, 2)],
            a2: k[(1, 1)],
            d: -I * k[(1, 2)],
            aa: k[(2, 2)],
        }
    }

    pub fn to_matrix(&self) -> CMat {
        CMat::from_row_slice(
            3,
            3,
            &[self.a1, self.c, -I * self.b, -self.c, self.a2, I * self.d, I * self.b, I * self.d, self.aa],
        )
    }

    pub fn as_array(&self) -> [Complex64; 6] {
        [self.a1, self.a2, self.aa, self.b, self.c, self.d]
    }

    /// max |x - y| over the six coefficients divided by max |y|.
    pub fn relative_error(&self, exact: &PropagatorCoefficients) -> f64 {
        let a = self.as_array();
        let b = exact.as_array();
        let num = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let den = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
        num / den
    }
}

/// Exact lossless coefficients from the spectral sums over the three
/// eigenvalues of the perturbed generator.
pub fn exact_coefficients(g: f64, eps1: f64, eps2: f64, t: f64) -> Result<PropagatorCoefficients> {
    let h = three_mode_generator(g, eps1, eps2, 0.0, 0.0);
    let l = crate::spectral::eigenvalues_general(&h)?;
    let omega_inv = (l[0] - l[1]) * (l[1] - l[2]) * (l[0] - l[2]);
    if omega_inv.norm() < 1e-12 {
        return Err(Error::Regime("degenerate eigenvalues: spectral sums undefined".into()));
    }
    let omega = 1.0 / omega_inv;
    let (e1, e2) = (c(eps1, 0.0), c(eps2, 0.0));
    let gc = c(g, 0.0);
    let sum = |f: &dyn Fn(Complex64) -> Complex64| -> Complex64 {
        (0..3)
            .map(|i| {
                let next = l[(i + 1) % 3];
                let prev = l[(i + 2) % 3];
                (-I * l[i] * t).exp() * f(l[i]) * (next - prev)
            })
            .sum::<Complex64>()
            * omega
    };
    Ok(PropagatorCoefficients {
        a1: sum(&|x| x * x + e2 * x - 1.0),
        aa: sum(&|x| (x - e1) * (x + e2)),
        a2: sum(&|x| x * x - e1 * x + gc * gc),
        b: I * gc * sum(&|x| e2 + x),
        c: -gc * sum(&|_| c(1.0, 0.0)),
        d: -I * sum(&|x| e1 - x),
    })
}

/// Exact coefficients by matrix exponential (any loss).
pub fn exponential_coefficients(g: f64, eps1: f64, eps2: f64, gamma: f64, gamma_m: f64, t: f64) -> PropagatorCoefficients {
    let h = three_mode_generator(g, eps1, eps2, gamma, gamma_m);
    PropagatorCoefficients::from_matrix(&expm(&(h * (-I * t))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderPropagator {
    pub coefficients: PropagatorCoefficients,
    pub regime: RegimeFlag,
}

/// Lossless first-order propagation coefficients.
pub fn first_order_propagator(g: f64, eps1: f64, eps2: f64, t: f64) -> Result<FirstOrderPropagator> {
    first_order_propagator_with(g, eps1, eps2, t, DEFAULT_REGIME_RATIO)
}

pub fn first_order_propagator_with(g: f64, eps1: f64, eps2: f64, t: f64, threshold: f64) -> Result<FirstOrderPropagator> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Regime(format!("first-order propagator needs 0 <= g < 1, got {g}")));
    }
    let c2 = 1.0 - g * g;
    let chi = c2.sqrt();
    let chi3 = chi * c2;
    let chi5 = chi3 * c2;
    let chi6 = c2 * c2 * c2;
    let chi7 = chi6 * chi;
    let chi8 = chi6 * c2;
    let g2 = g * g;

    // slow phases of the zero mode and of the oscillating pair
    let e0 = (-I * ((eps1 + g2 * eps2) * t / c2)).exp();
    let ep = (I * ((g2 * eps1 + eps2) * t / (2.0 * c2))).exp();
    let (co, si) = ((chi * t).cos(), (chi * t).sin());

    let u = g2 * eps1 - 4.0 * eps1 - 3.0 * eps2;
    let v = g2 * eps1 + eps2;
    let w = 3.0 * g2 * eps1 + 4.0 * g2 * eps2 - eps2;
    let s = eps1 + eps2;
    let x = g2 * eps1 + 2.0 * g2 * eps2 + 2.0 * eps1 + eps2;
    let k6 = 16.0 * chi6;

    let a1 = e0 / c2 - ep * (g2 * (k6 + u * u) * co / (16.0 * chi8)) - I * ep * (g2 * u * si / (2.0 * chi5));
    let aa = -e0 * (g2 * s * s / chi6) + ep * ((k6 + v * v) * co / (16.0 * chi6)) - I * ep * (v * si / (2.0 * chi3));
    let a2 = -e0 * (g2 / c2) + ep * ((k6 + w * w) * co / (16.0 * chi8)) - I * ep * (w * si / (2.0 * chi5));
    let b = -I * e0 * (g * s / (c2 * c2)) + ep * (g * (k6 - v * u) * si / (16.0 * chi7)) + I * ep * (g * s * co / (c2 * c2));
    let cc = e0 * (g / c2) - ep * (g * (k6 - w * u) * co / (16.0 * chi8)) + I * ep * (g * x * si / (2.0 * chi5));
    let d = -I * e0 * (g2 * s / (c2 * c2)) + ep * ((k6 + v * w) * si / (16.0 * chi7)) + I * ep * (g2 * s * co / (c2 * c2));

    Ok(FirstOrderPropagator {
        coefficients: PropagatorCoefficients { a1, a2, aa, b, c: cc, d },
        regime: RegimeFlag::new(eps1, eps2, chi, threshold),
    })
}

/// d/d(eps) of (A1, A2, C) at eps = 0, lossless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientDerivatives {
    pub a1: Complex64,
    pub a2: Complex64,
    pub c: Complex64,
}

pub fn susceptibility_derivatives(g: f64, t: f64, case: PerturbationCase) -> Result<CoefficientDerivatives> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Regime(format!("derivatives need 0 <= g < 1, got {g}")));
    }
    let chi = (1.0 - g * g).sqrt();
    let chi5 = chi.powi(5);
    let ct = chi * t;
    let (co, si) = (ct.cos(), ct.sin());
    let g2 = g * g;
    let p = 1.0 + g2;
    let (a1, a2, cc) = match case {
        PerturbationCase::Same => (
            -(p * ct) - g2 * p * ct * co / 2.0 - g2 * (g2 - 7.0) * si / 2.0,
            g2 * p * ct + p * ct * co / 2.0 + (1.0 - 7.0 * g2) * si / 2.0,
            -(g * p * ct) - g * p * ct * co / 2.0 + 3.0 * g * p * si / 2.0,
        ),
        PerturbationCase::Different => (
            -ct - g2 * g2 * ct * co / 2.0 - g2 * (g2 - 4.0) * si / 2.0,
            g2 * ct + g2 * ct * co / 2.0 - 3.0 * g2 * si / 2.0,
            -(g * ct) - g * g2 * ct * co / 2.0 + g * (2.0 + g2) * si / 2.0,
        ),
    };
    Ok(CoefficientDerivatives { a1: I * (a1 / chi5), a2: I * (a2 / chi5), c: I * (cc / chi5) })
}

/// Central finite-difference derivatives of the exact coefficients.
pub fn finite_difference_derivatives(g: f64, t: f64, case: PerturbationCase, step: f64) -> CoefficientDerivatives {
    let (w1, w2) = match case {
        PerturbationCase::Same => (1.0, 1.0),
        PerturbationCase::Different => (1.0, 0.0),
    };
    let plus = exponential_coefficients(g, w1 * step, w2 * step, 0.0, 0.0, t);
    let minus = exponential_coefficients(g, -w1 * step, -w2 * step, 0.0, 0.0, t);
    let h = 2.0 * step;
    CoefficientDerivatives {
        a1: (plus.a1 - minus.a1) / h,
        a2: (plus.a2 - minus.a2) / h,
        c: (plus.c - minus.c) / h,
    }
}

/// 3x3 generator as a fixed-size matrix, for callers that want one.
pub fn generator3(g: f64, eps1: f64, eps2: f64) -> Matrix3<Complex64> {
    let h = three_mode_generator(g, eps1, eps2, 0.0, 0.0);
    Matrix3::from_fn(|i, j| h[(i, j)])
}
