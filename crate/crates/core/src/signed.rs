//! The signed decomposition `u = u⊕ - u⊖` with `u⊕ = 𝓗f⁺ + 𝓓f⁻` and
//! `u⊖ = 𝓗f⁻ + 𝓓f⁺`.

use serde::Serialize;

use crate::discretization::{solve, DiscreteOperator, WeightFunction};
use crate::domain::{ensure_domain, GridFunction};
use crate::error::{Error, Result};
use crate::green::{GreenColumns, KernelEstimate};
use crate::linalg::dot;

pub const SIGN_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SignedSource {
    pub f_plus: GridFunction,
    pub f_minus: GridFunction,
}

impl SignedSource {
    pub fn split(f: &GridFunction) -> Self {
        Self {
            f_plus: f.map(|v| v.max(0.0)),
            f_minus: f.map(|v| (-v).max(0.0)),
        }
    }

    pub fn combined(&self) -> Result<GridFunction> {
        self.f_plus.zip_with(&self.f_minus, |a, b| a - b)
    }
}

pub fn split_source(f: &GridFunction) -> SignedSource {
    SignedSource::split(f)
}

/// `𝓓f = c2 w ∫ w f`.
pub fn apply_d(est: &KernelEstimate, w: &WeightFunction, f: &GridFunction) -> Result<GridFunction> {
    ensure_domain(w.domain(), f.domain())?;
    let moment = w.domain().cell_volume() * dot(w.values(), f.values());
    Ok(w.w.scaled(est.c2_used * moment))
}

/// `𝓗f = ∫ (G + c2 w ⊗ w) f`.
pub fn apply_h<G: GreenColumns + ?Sized>(
    green: &G,
    est: &KernelEstimate,
    w: &WeightFunction,
    f: &GridFunction,
) -> Result<GridFunction> {
    ensure_domain(green.domain(), f.domain())?;
    let gf = green.apply(f.values())?;
    let d = apply_d(est, w, f)?;
    GridFunction::new(f.domain().clone(), gf.iter().zip(d.values()).map(|(a, b)| a + b).collect())
}

#[derive(Clone, Debug)]
pub struct SignedSolution {
    pub u: GridFunction,
    pub u_oplus: GridFunction,
    pub u_ominus: GridFunction,
    pub kernel_estimate: KernelEstimate,
    /// `max |u - (u⊕ - u⊖)|`.
    pub residual: f64,
}

/// Worst values of the decomposition invariants, each relative to `‖u‖∞`
/// through the reported scale.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecompositionReport {
    pub scale: f64,
    pub residual: f64,
    pub min_oplus: f64,
    pub min_ominus: f64,
    /// Smallest of `u⊕ - u⁺` and `u⊖ - u⁻` over all points.
    pub chain_slack: f64,
}

impl SignedSolution {
    pub fn report(&self) -> DecompositionReport {
        let mut chain_slack = f64::INFINITY;
        for ((&u, &p), &q) in self.u.values().iter().zip(self.u_oplus.values()).zip(self.u_ominus.values()) {
            chain_slack = chain_slack.min(p - u.max(0.0)).min(q - (-u).max(0.0));
        }
        DecompositionReport {
            scale: self.u.max_abs(),
            residual: self.residual,
            min_oplus: self.u_oplus.min(),
            min_ominus: self.u_ominus.min(),
            chain_slack,
        }
    }

    /// First violated invariant, if any.
    pub fn check(&self) -> Result<()> {
        let scale = self.u.max_abs();
        let sign_floor = -SIGN_TOL * scale;
        let u = self.u.values();
        let (p, q) = (self.u_oplus.values(), self.u_ominus.values());
        for i in 0..u.len() {
            let fail = |invariant: &'static str, detail: String| Error::Decomposition { invariant, index: i, detail };
            let r = (u[i] - (p[i] - q[i])).abs();
            if !(r <= RESIDUAL_TOL * scale) {
                return Err(fail("u = u⊕ - u⊖", format!("u = {:e}, u⊕ = {:e}, u⊖ = {:e}", u[i], p[i], q[i])));
            }
            if !(p[i] >= sign_floor) {
                return Err(fail("u⊕ >= 0", format!("u⊕ = {:e}, scale = {scale:e}", p[i])));
            }
            if !(q[i] >= sign_floor) {
                return Err(fail("u⊖ >= 0", format!("u⊖ = {:e}, scale = {scale:e}", q[i])));
            }
            if !(p[i] - u[i].max(0.0) >= sign_floor) {
                return Err(fail("u⁺ <= u⊕", format!("u = {:e}, u⊕ = {:e}", u[i], p[i])));
            }
            if !(q[i] - (-u[i]).max(0.0) >= sign_floor) {
                return Err(fail("u⁻ <= u⊖", format!("u = {:e}, u⊖ = {:e}", u[i], q[i])));
            }
        }
        Ok(())
    }
}

/// Builds the decomposition without checking its invariants.
pub fn decompose_unchecked<G: GreenColumns + ?Sized>(
    op: &DiscreteOperator,
    green: &G,
    est: &KernelEstimate,
    w: &WeightFunction,
    f: &GridFunction,
) -> Result<SignedSolution> {
    ensure_domain(op.domain(), green.domain())?;
    ensure_domain(op.domain(), w.domain())?;
    ensure_domain(op.domain(), f.domain())?;
    if est.m != op.m() || w.m != op.m() || green.m() != op.m() {
        return Err(Error::Configuration("operator, Green function, estimate and weight disagree on m".into()));
    }
    let u = solve(op, f)?;
    let src = SignedSource::split(f);
    let (hp, hm) = (apply_h(green, est, w, &src.f_plus)?, apply_h(green, est, w, &src.f_minus)?);
    let (dp, dm) = (apply_d(est, w, &src.f_plus)?, apply_d(est, w, &src.f_minus)?);
    let u_oplus = hp.zip_with(&dm, |a, b| a + b)?;
    let u_ominus = hm.zip_with(&dp, |a, b| a + b)?;
    let residual = u
        .values()
        .iter()
        .zip(u_oplus.values().iter().zip(u_ominus.values()))
        .fold(0.0f64, |acc, (a, (p, q))| acc.max((a - (p - q)).abs()));
    Ok(SignedSolution {
        u,
        u_oplus,
        u_ominus,
        kernel_estimate: est.clone(),
        residual,
    })
}

pub fn signed_decompose<G: GreenColumns + ?Sized>(
    op: &DiscreteOperator,
    green: &G,
    est: &KernelEstimate,
    w: &WeightFunction,
    f: &GridFunction,
) -> Result<SignedSolution> {
    let sol = decompose_unchecked(op, green, est, w, f)?;
    sol.check()?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_operator, boundary_weight};
    use crate::domain::{build_domain, DomainSpec, GridDomain};
    use crate::green::{estimate_sandwich_constants, green_matrix, GreenMatrix, SandwichOptions};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::{Arc, OnceLock};

    struct Setup {
        domain: Arc<GridDomain>,
        op: DiscreteOperator,
        g: GreenMatrix,
        w: WeightFunction,
        est: KernelEstimate,
    }

    fn setup(spec: DomainSpec, m: usize) -> Setup {
        let domain = build_domain(&spec).unwrap();
        let op = assemble_operator(&domain, m).unwrap();
        let g = green_matrix(&op).unwrap();
        let w = boundary_weight(&domain, m).unwrap();
        let est = estimate_sandwich_constants(&g, &w, &SandwichOptions::default()).unwrap();
        Setup { domain, op, g, w, est }
    }

    fn plate() -> &'static Setup {
        static CELL: OnceLock<Setup> = OnceLock::new();
        CELL.get_or_init(|| setup(DomainSpec::rectangle(5.0, 1.0, 40), 2))
    }

    fn disk() -> &'static Setup {
        static CELL: OnceLock<Setup> = OnceLock::new();
        CELL.get_or_init(|| setup(DomainSpec::disk(1.0, 16), 2))
    }

    fn random(d: &Arc<GridDomain>, rng: &mut ChaCha8Rng, lo: f64) -> GridFunction {
        GridFunction::new(d.clone(), (0..d.len()).map(|_| rng.random_range(lo..1.0)).collect()).unwrap()
    }

    #[test]
    fn split_example() {
        let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 4)).unwrap();
        let mut v = vec![0.0; 9];
        v[..3].copy_from_slice(&[1.0, -2.0, 0.0]);
        let s = split_source(&GridFunction::new(d, v).unwrap());
        assert_eq!(&s.f_plus.values()[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&s.f_minus.values()[..3], &[0.0, 2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn split_reconstructs(values in proptest::collection::vec(-10.0f64..10.0, 9)) {
            let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 4)).unwrap();
            let f = GridFunction::new(d, values).unwrap();
            let s = split_source(&f);
            let back = s.combined().unwrap();
            prop_assert_eq!(back.values(), f.values());
            for (a, b) in s.f_plus.values().iter().zip(s.f_minus.values()) {
                prop_assert!(*a >= 0.0 && *b >= 0.0 && a.min(*b) == 0.0);
            }
        }
    }

    #[test]
    fn d_of_weight_is_weight_times_l2_norm() {
        let s = plate();
        let d = apply_d(&s.est, &s.w, &s.w.w).unwrap();
        let l2 = s.domain.cell_volume() * s.w.values().iter().map(|v| v * v).sum::<f64>();
        for (a, b) in d.values().iter().zip(s.w.values()) {
            assert!((a - s.est.c2_used * l2 * b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
        let zero = apply_d(&s.est, &s.w, &GridFunction::zeros(s.domain.clone())).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn h_minus_d_is_green_action() {
        let s = plate();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random(&s.domain, &mut rng, -1.0);
        let h = apply_h(&s.g, &s.est, &s.w, &f).unwrap();
        let d = apply_d(&s.est, &s.w, &f).unwrap();
        let g = s.g.apply(f.values()).unwrap();
        let u = solve(&s.op, &f).unwrap();
        let scale = u.max_abs();
        for i in 0..f.len() {
            let hd = h.values()[i] - d.values()[i];
            assert!((hd - g[i]).abs() <= 1e-12 * scale);
            assert!((hd - u.values()[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn h_and_d_preserve_sign() {
        let s = plate();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f = random(&s.domain, &mut rng, 0.0);
            let h = apply_h(&s.g, &s.est, &s.w, &f).unwrap();
            let d = apply_d(&s.est, &s.w, &f).unwrap();
            assert!(h.min() >= 0.0 && d.min() >= 0.0);
        }
    }

    #[test]
    fn mixed_sign_plate_decomposition() {
        let s = plate();
        assert!(s.est.c2_used > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f = random(&s.domain, &mut rng, -1.0);
            let sol = signed_decompose(&s.op, &s.g, &s.est, &s.w, &f).unwrap();
            let r = sol.report();
            assert!(r.residual <= 1e-10 * r.scale);
            assert!(r.min_oplus >= -1e-12 * r.scale && r.min_ominus >= -1e-12 * r.scale);
            assert!(r.chain_slack >= -1e-12 * r.scale);
        }
    }

    #[test]
    fn nonnegative_source_on_disk() {
        let s = disk();
        assert_eq!(s.est.c2_used, 0.0);
        let f = GridFunction::constant(s.domain.clone(), 1.0);
        let sol = signed_decompose(&s.op, &s.g, &s.est, &s.w, &f).unwrap();
        assert!(sol.u_ominus.values().iter().all(|&v| v == 0.0));
        for (a, b) in sol.u_oplus.values().iter().zip(sol.u.values()) {
            assert!((a - b).abs() <= 1e-12 * sol.u.max_abs());
        }
    }

    #[test]
    fn nonpositive_source_gives_multiple_of_weight() {
        let s = plate();
        let f = GridFunction::from_fn(s.domain.clone(), |p| -(1.0 + p[0]));
        let sol = signed_decompose(&s.op, &s.g, &s.est, &s.w, &f).unwrap();
        let ratio = sol.u_oplus.values()[0] / s.w.values()[0];
        assert!(ratio > 0.0);
        for (a, b) in sol.u_oplus.values().iter().zip(s.w.values()) {
            assert!((a - ratio * b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn decomposition_is_positively_homogeneous() {
        let s = plate();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random(&s.domain, &mut rng, -1.0);
        let a = signed_decompose(&s.op, &s.g, &s.est, &s.w, &f).unwrap();
        let b = signed_decompose(&s.op, &s.g, &s.est, &s.w, &f.scaled(4.0)).unwrap();
        for i in 0..f.len() {
            assert_eq!(b.u_oplus.values()[i], 4.0 * a.u_oplus.values()[i]);
            assert_eq!(b.u_ominus.values()[i], 4.0 * a.u_ominus.values()[i]);
        }
    }

    #[test]
    fn missing_correction_is_reported() {
        let s = plate();
        let broken = s.est.with_c2_used(0.0);
        // A source concentrated where the Green function is most negative.
        let pair = s.est.c2_pair.unwrap();
        let mut v = vec![0.0; s.domain.len()];
        v[pair.j] = 1.0;
        let f = GridFunction::new(s.domain.clone(), v).unwrap();
        assert!(matches!(
            signed_decompose(&s.op, &s.g, &broken, &s.w, &f),
            Err(Error::Decomposition { .. })
        ));
    }
}
