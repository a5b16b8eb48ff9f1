//! Discrete Lebesgue and Sobolev-type norms.

use crate::domain::{GridFunction, Lattice};
use crate::error::{Error, Result};

/// `(h^n Σ |f_i|^p)^{1/p}`, or `max |f_i|` for `p = ∞`.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    lp_of(f.values().iter().copied(), f.domain().cell_volume(), p)
}

fn lp_of(values: impl Iterator<Item = f64>, volume: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p norms need p >= 1, got {p}")));
    }
    if p == f64::INFINITY {
        return Ok(values.fold(0.0, |m, v| m.max(v.abs())));
    }
    let sum: f64 = if p == 1.0 {
        values.map(f64::abs).sum()
    } else if p == 2.0 {
        values.map(|v| v * v).sum()
    } else {
        values.map(|v| v.abs().powf(p)).sum()
    };
    Ok((volume * sum).powf(1.0 / p))
}

/// `q = np / (n - 2mp)`.
pub fn sobolev_exponent(n: usize, m: usize, p: f64) -> Result<f64> {
    let denominator = n as f64 - 2.0 * m as f64 * p;
    if !(p >= 1.0) || !(denominator > 0.0) {
        return Err(Error::Capability(format!(
            "p = {p} is not subcritical for n = {n}, m = {m} (needs 1 <= p < n/2m)"
        )));
    }
    Ok(n as f64 * p / denominator)
}

pub const MAX_DERIVATIVE_ORDER: usize = 4;

/// Multi-indices of total order `k` in `dim` variables.
fn multi_indices(dim: usize, k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let c = k - a - b;
            if (dim < 3 && c > 0) || (dim < 2 && b > 0) {
                continue;
            }
            out.push([a, b, c]);
        }
    }
    out
}

/// One-dimensional central difference weights for derivative order `k <= 4`,
/// as `(offset, weight * h^k)`.
fn central_weights(k: usize) -> &'static [(i64, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
    }
}

/// Sum of the `L^p` norms of all central-difference partial derivatives of
/// order `0..=order`, evaluated at the points whose stencil block of
/// half-width `ceil(order / 2)` lies entirely in the interior.
pub fn discrete_derivative_norm(f: &GridFunction, order: usize, p: f64) -> Result<f64> {
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::Capability(format!(
            "derivatives up to order {MAX_DERIVATIVE_ORDER} are available, got {order}"
        )));
    }
    let domain = f.domain();
    let dim = domain.dimension();
    let h = domain.h();
    let reach = order.div_ceil(2) as i64;
    let inner: Vec<usize> = (0..domain.len())
        .filter(|&i| block_inside(domain, domain.lattice(i), reach, dim))
        .collect();
    let values = f.values();
    let mut total = 0.0;
    for k in 0..=order {
        for alpha in multi_indices(dim, k) {
            let scale = h.powi(-(k as i32));
            let derivative = inner.iter().map(|&i| {
                let base = domain.lattice(i);
                let mut acc = 0.0;
                for &(ox, wx) in central_weights(alpha[0]) {
                    for &(oy, wy) in central_weights(alpha[1]) {
                        for &(oz, wz) in central_weights(alpha[2]) {
                            let l = [base[0] + ox, base[1] + oy, base[2] + oz];
                            let j = domain.index_of(l).expect("stencil inside the interior block");
                            acc += wx * wy * wz * values[j];
                        }
                    }
                }
                acc * scale
            });
            total += lp_of(derivative, domain.cell_volume(), p)?;
        }
    }
    Ok(total)
}

fn block_inside(domain: &crate::domain::GridDomain, l: Lattice, reach: i64, dim: usize) -> bool {
    let r = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
    for dx in r(0) {
        for dy in r(1) {
            for dz in r(2) {
                if domain.index_of([l[0] + dx, l[1] + dy, l[2] + dz]).is_none() {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_norms() {
        let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 64)).unwrap();
        let one = GridFunction::constant(d.clone(), 1.0);
        let l2 = lp_norm(&one, 2.0).unwrap();
        // 63² interior nodes of area h² each.
        assert!((l2 - 63.0 / 64.0).abs() < 1e-12);
        let c = GridFunction::constant(d, 3.0);
        assert!((lp_norm(&c, 3.0).unwrap() - 3.0 * (63.0f64 / 64.0).powf(2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(lp_norm(&c, f64::INFINITY).unwrap(), 3.0);
        assert!(matches!(lp_norm(&c, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn triangle_and_holder_inequalities() {
        let d = build_domain(&DomainSpec::rectangle(2.0, 1.0, 16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let measure = d.len() as f64 * d.cell_volume();
        for _ in 0..20 {
            let f = GridFunction::new(d.clone(), (0..d.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let g = GridFunction::new(d.clone(), (0..d.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let fg = f.zip_with(&g, |a, b| a + b).unwrap();
            for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                assert!(lp_norm(&fg, p).unwrap() <= lp_norm(&f, p).unwrap() + lp_norm(&g, p).unwrap() + 1e-12);
            }
            let (p, r) = (1.2, 3.0);
            let bound = measure.powf(1.0 / p - 1.0 / r) * lp_norm(&f, r).unwrap();
            assert!(lp_norm(&f, p).unwrap() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sobolev_exponent_values() {
        assert!((sobolev_exponent(3, 1, 1.2).unwrap() - 6.0).abs() < 1e-12);
        assert!((sobolev_exponent(5, 2, 1.01).unwrap() - 5.05 / 0.96).abs() < 1e-12);
        assert!(matches!(sobolev_exponent(2, 2, 1.5), Err(Error::Capability(_))));
        assert!(matches!(sobolev_exponent(3, 1, 1.5), Err(Error::Capability(_))));
    }

    proptest! {
        #[test]
        fn sobolev_exponent_increases_with_p(a in 1.0f64..1.49, b in 1.0f64..1.49) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(lo < hi);
            prop_assert!(sobolev_exponent(3, 1, lo).unwrap() < sobolev_exponent(3, 1, hi).unwrap());
        }

        #[test]
        fn norms_are_homogeneous(scale in 0.1f64..10.0, p in 1.0f64..5.0) {
            let d = build_domain(&DomainSpec::disk(1.0, 12)).unwrap();
            let f = GridFunction::from_fn(d, |x| (3.0 * x[0]).sin() + x[1]);
            let a = lp_norm(&f.scaled(scale), p).unwrap();
            let b = scale * lp_norm(&f, p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn derivatives_of_simple_functions() {
        let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 16)).unwrap();
        let c = GridFunction::constant(d.clone(), 2.0);
        for order in 1..=4 {
            let full = discrete_derivative_norm(&c, order, 2.0).unwrap();
            // Only the order-0 term survives; it is the constant on the inner block.
            let reach = order.div_ceil(2) as f64;
            let side = 15.0 - 2.0 * reach;
            assert!((full - 2.0 * side / 16.0).abs() < 1e-12);
        }
        let x = GridFunction::from_fn(d.clone(), |p| p[0]);
        let mut zeroth_on_inner = 0.0;
        for (i, p) in d.points().iter().enumerate() {
            let l = d.lattice(i);
            if (2..=14).contains(&l[0]) && (2..=14).contains(&l[1]) {
                zeroth_on_inner += p[0] * p[0];
            }
        }
        let zeroth_on_inner = (zeroth_on_inner * d.cell_volume()).sqrt();
        // Inner block for order 2 has 13 x 13 nodes; first derivative is 1, second vanishes.
        let first = (13.0 * 13.0 * d.cell_volume()).sqrt();
        let order2_total = discrete_derivative_norm(&x, 2, 2.0).unwrap();
        assert!((order2_total - zeroth_on_inner - first).abs() < 1e-12);
        assert_eq!(discrete_derivative_norm(&x, 0, 2.0).unwrap(), lp_norm(&x, 2.0).unwrap());
        assert!(matches!(discrete_derivative_norm(&x, 5, 2.0), Err(Error::Capability(_))));
    }

    #[test]
    fn fourth_differences_are_exact_for_quartics() {
        let d = build_domain(&DomainSpec::rectangle(1.0, 1.0, 16)).unwrap();
        let f = GridFunction::from_fn(d.clone(), |p| p[0].powi(4));
        let inf = |order| discrete_derivative_norm(&f, order, f64::INFINITY).unwrap();
        // The pure fourth derivative is 24 everywhere; differences are exact.
        let fourth_term = inf(4) - inf(3);
        assert!((fourth_term - 24.0).abs() < 1e-8);
    }
}
