//! Closed-form polyharmonic Green function of the unit ball (Boggio) and
//! quadrature of ball solutions, used as an independent oracle.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

const KERNEL_REL_TOL: f64 = 1e-10;
const SOLUTION_REL_TOL: f64 = 1e-6;
const MAX_ANGULAR: usize = 1 << 12;

#[derive(Clone, Debug, PartialEq)]
pub struct BallKernelQuery {
    pub n: usize,
    pub m: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl BallKernelQuery {
    pub fn new(n: usize, m: usize, x: &[f64], y: &[f64]) -> Self {
        Self {
            n,
            m,
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < 1 {
            return Err(Error::Capability(format!("ball kernel needs n >= 2 and m >= 1, got n = {}, m = {}", self.n, self.m)));
        }
        for p in [&self.x, &self.y] {
            if p.len() != self.n {
                return Err(Error::Domain(format!("point has {} coordinates, expected {}", p.len(), self.n)));
            }
            if norm2(p) >= 1.0 {
                return Err(Error::Domain(format!("point {p:?} is not inside the unit ball")));
            }
        }
        Ok(())
    }
}

fn norm2(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum()
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / libm::tgamma(n as f64 / 2.0 + 1.0)
}

/// `1 / (n e_n 4^{m-1} ((m-1)!)^2)`.
pub fn boggio_constant(n: usize, m: usize) -> f64 {
    let fact = libm::tgamma(m as f64);
    1.0 / (n as f64 * unit_ball_volume(n) * 4f64.powi(m as i32 - 1) * fact * fact)
}

pub fn boggio_green(q: &BallKernelQuery) -> Result<f64> {
    q.validate()?;
    let (n, m) = (q.n, q.m);
    let r2: f64 = q.x.iter().zip(&q.y).map(|(a, b)| (a - b).powi(2)).sum();
    let a2 = (1.0 - norm2(&q.x)) * (1.0 - norm2(&q.y));
    boggio_from_parts(n, m, r2, a2)
}

/// Boggio kernel from `|x - y|²` and `(1 - |x|²)(1 - |y|²)`.
fn boggio_from_parts(n: usize, m: usize, r2: f64, a2: f64) -> Result<f64> {
    let k = boggio_constant(n, m);
    let p = 2 * m as i32 - n as i32;
    if r2 == 0.0 {
        if p <= 0 {
            return Err(Error::Domain("the ball Green function is singular at x = y".into()));
        }
        // r^{2m-n} ∫_1^{A/r} (v²-1)^{m-1} v^{1-n} dv → A^{2m-n} / (2m - n).
        return Ok(k * a2.sqrt().powi(p) / f64::from(p));
    }
    let r = r2.sqrt();
    let theta = ((r2 + a2) / r2).sqrt();
    // With v = e^t the integrand (e^{2t} - 1)^{m-1} e^{(2-n) t} is smooth.
    let upper = theta.ln();
    let integrand = |t: f64| (2.0 * t).exp_m1().powi(m as i32 - 1) * ((2.0 - n as f64) * t).exp();
    let rough = GaussLegendre::new(NonZeroUsize::new(16).expect("nonzero")).integrate(0.0, upper, integrand);
    if !(rough > 0.0) {
        return Ok(k * r.powi(p) * rough.max(0.0));
    }
    let out = quadrature::integrate(integrand, 0.0, upper, 1e-3 * KERNEL_REL_TOL * rough);
    if !(out.error_estimate <= KERNEL_REL_TOL * out.integral.abs()) {
        return Err(Error::Numerical(format!(
            "Boggio quadrature error estimate {:e} above tolerance for integral {:e}",
            out.error_estimate, out.integral
        )));
    }
    Ok(k * r.powi(p) * out.integral)
}

/// `f(r) = Σ c_k r^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialPolynomial {
    pub coefficients: Vec<f64>,
}

impl RadialPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }
}

/// `∫_B G(x, y) f(|y|) dy` over the unit ball in dimension 2 or 3.
///
/// Polar coordinates are centred at `x`, which absorbs the kernel singularity
/// into the radial Jacobian. Angular resolution doubles until two successive
/// values agree to the relative target.
pub fn ball_solution(n: usize, m: usize, f: &RadialPolynomial, x: &[f64]) -> Result<f64> {
    if !(2..=3).contains(&n) {
        return Err(Error::Capability(format!("ball solutions are computed for n = 2, 3 only, got {n}")));
    }
    BallKernelQuery::new(n, m, x, x).validate()?;
    if f.is_zero() {
        return Ok(0.0);
    }
    let x2 = norm2(x);
    let ray = |omega: &[f64]| -> Result<f64> {
        let b: f64 = x.iter().zip(omega).map(|(a, o)| a * o).sum();
        let reach = -b + (b * b + 1.0 - x2).sqrt();
        let value = |rho: f64| -> f64 {
            if rho <= 0.0 {
                return 0.0;
            }
            let y: Vec<f64> = x.iter().zip(omega).map(|(a, o)| a + rho * o).collect();
            let y2 = norm2(&y);
            if y2 >= 1.0 {
                return 0.0;
            }
            let g = boggio_from_parts(n, m, rho * rho, (1.0 - x2) * (1.0 - y2)).unwrap_or(f64::NAN);
            g * f.eval(y2.sqrt()) * rho.powi(n as i32 - 1)
        };
        let rough = GaussLegendre::new(NonZeroUsize::new(24).expect("nonzero")).integrate(0.0, reach, value);
        let out = quadrature::integrate(value, 0.0, reach, 1e-3 * SOLUTION_REL_TOL * rough.abs().max(f64::MIN_POSITIVE));
        if !out.integral.is_finite() {
            return Err(Error::Numerical("radial quadrature produced a non-finite value".into()));
        }
        Ok(out.integral)
    };

    let angular = |k: usize| -> Result<f64> {
        match n {
            2 => {
                let mut sum = 0.0;
                for i in 0..k {
                    let phi = 2.0 * PI * (i as f64 + 0.5) / k as f64;
                    sum += ray(&[phi.cos(), phi.sin()])?;
                }
                Ok(sum * 2.0 * PI / k as f64)
            }
            _ => {
                let gl = GaussLegendre::new(NonZeroUsize::new(k / 2).expect("nonzero"));
                let mut err = None;
                let total = gl.integrate(-1.0, 1.0, |c| {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    let mut sum = 0.0;
                    for i in 0..k {
                        let phi = 2.0 * PI * (i as f64 + 0.5) / k as f64;
                        match ray(&[s * phi.cos(), s * phi.sin(), c]) {
                            Ok(v) => sum += v,
                            Err(e) => err = Some(e),
                        }
                    }
                    sum * 2.0 * PI / k as f64
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            }
        }
    };

    let mut k = 8;
    let mut previous = angular(k)?;
    while k < MAX_ANGULAR {
        k *= 2;
        let current = angular(k)?;
        if (current - previous).abs() <= SOLUTION_REL_TOL * current.abs() {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Numerical(format!("ball solution did not converge with {MAX_ANGULAR} angular nodes")))
}
