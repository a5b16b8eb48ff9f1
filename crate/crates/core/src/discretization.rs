//! Dirichlet discretizations of `(-Δ)^m` for `m = 1, 2`, the torsion function
//! and the boundary weight `w = e1^m`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::domain::{ensure_domain, GridDomain, GridFunction, Lattice};
use crate::error::{Error, Result};
use crate::linalg::{norm2, CsrMatrix, EnvelopeCholesky};

pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Sparse symmetric positive definite matrix for `(-Δ)^m` together with its
/// Cholesky factor. Immutable once built, so it can be shared across threads.
#[derive(Debug)]
pub struct DiscreteOperator {
    domain: Arc<GridDomain>,
    m: usize,
    matrix: CsrMatrix,
    factor: EnvelopeCholesky,
}

/// Assembles and factors the operator.
///
/// `m = 1` is the 5-point (7-point in 3D) Laplacian. Where an arm of the
/// stencil leaves the interior, the exterior value is extrapolated linearly
/// through zero at the boundary crossing, which only touches the diagonal and
/// keeps the matrix a symmetric M-matrix. On rectangles and boxes every arm
/// ends on a boundary node and the plain stencil remains.
///
/// `m = 2` is assembled in energy form `A = B^T W B`, where each row of `B`
/// evaluates the 5-point Laplacian at an interior node or at a non-interior
/// neighbour of one, ghost values come from [`GridDomain::clamped_ghost`], and
/// `W` holds the fraction of each node's cell inside the domain. On rectangles
/// this is exactly the 13-point bilaplacian with clamped ghost reflection.
pub fn assemble_operator(domain: &Arc<GridDomain>, m: usize) -> Result<DiscreteOperator> {
    let rows = match m {
        1 => laplacian_rows(domain),
        2 => bilaplacian_rows(domain)?,
        _ => {
            return Err(Error::Capability(format!(
                "grid operators exist for m = 1 and m = 2 only, got m = {m}"
            )))
        }
    };
    let matrix = CsrMatrix::from_rows(rows);
    let asym = matrix.asymmetry();
    if asym > 1e-14 {
        return Err(Error::Assembly(format!("assembled matrix is not symmetric (defect {asym:e})")));
    }
    let factor = EnvelopeCholesky::factor(&matrix)?;
    Ok(DiscreteOperator {
        domain: domain.clone(),
        m,
        matrix,
        factor,
    })
}

fn neighbours(l: Lattice, dim: usize) -> impl Iterator<Item = (usize, i64, Lattice)> {
    (0..dim).flat_map(move |axis| {
        [-1i64, 1].into_iter().map(move |dir| {
            let mut n = l;
            n[axis] += dir;
            (axis, dir, n)
        })
    })
}

fn laplacian_rows(domain: &GridDomain) -> Vec<BTreeMap<usize, f64>> {
    let dim = domain.dimension();
    let inv_h2 = 1.0 / (domain.h() * domain.h());
    (0..domain.len())
        .map(|i| {
            let mut row = BTreeMap::new();
            let mut diag = 2.0 * dim as f64;
            for (axis, dir, n) in neighbours(domain.lattice(i), dim) {
                match domain.index_of(n) {
                    Some(j) => {
                        row.insert(j, -inv_h2);
                    }
                    None => {
                        let theta = domain.arm_fraction(i, axis, dir);
                        diag += (1.0 - theta) / theta;
                    }
                }
            }
            row.insert(i, diag * inv_h2);
            row
        })
        .collect()
}

fn bilaplacian_rows(domain: &GridDomain) -> Result<Vec<BTreeMap<usize, f64>>> {
    let dim = domain.dimension();
    let inv_h2 = 1.0 / (domain.h() * domain.h());

    let mut nodes: Vec<Lattice> = (0..domain.len()).map(|i| domain.lattice(i)).collect();
    let mut outer: Vec<Lattice> = (0..domain.len())
        .flat_map(|i| neighbours(domain.lattice(i), dim).map(|(_, _, n)| n))
        .filter(|&n| domain.index_of(n).is_none())
        .collect();
    outer.sort_unstable();
    outer.dedup();
    nodes.extend(outer);

    let mut ghosts: BTreeMap<Lattice, Vec<(usize, f64)>> = BTreeMap::new();
    let mut rows = vec![BTreeMap::new(); domain.len()];
    for q in nodes {
        let weight = domain.cell_fraction(q);
        if weight == 0.0 {
            continue;
        }
        let mut b: BTreeMap<usize, f64> = BTreeMap::new();
        let stencil = std::iter::once((q, -2.0 * dim as f64)).chain(neighbours(q, dim).map(|(_, _, n)| (n, 1.0)));
        for (node, c) in stencil {
            if !ghosts.contains_key(&node) {
                ghosts.insert(node, domain.clamped_ghost(node)?);
            }
            for &(k, v) in &ghosts[&node] {
                *b.entry(k).or_insert(0.0) += c * v * inv_h2;
            }
        }
        for (&i, &bi) in &b {
            for (&j, &bj) in &b {
                *rows[i].entry(j).or_insert(0.0) += weight * bi * bj;
            }
        }
    }
    Ok(rows)
}

impl DiscreteOperator {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn factor(&self) -> &EnvelopeCholesky {
        &self.factor
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        ensure_domain(&self.domain, u.domain())?;
        GridFunction::new(self.domain.clone(), self.matrix.matvec(u.values()))
    }

    /// Solves `A u = f` and returns `(u, relative residual)`.
    pub fn solve_values(&self, f: &[f64]) -> Result<(Vec<f64>, f64)> {
        if f.len() != self.domain.len() {
            return Err(Error::Domain(format!(
                "right-hand side has {} values, operator has {} unknowns",
                f.len(),
                self.domain.len()
            )));
        }
        let fnorm = norm2(f);
        if fnorm == 0.0 {
            return Ok((vec![0.0; f.len()], 0.0));
        }
        let mut u = f.to_vec();
        self.factor.solve_in_place(&mut u);
        let mut residual = self.residual(&u, f, fnorm);
        if residual > SOLVE_RESIDUAL_TOL {
            let mut r: Vec<f64> = self.matrix.matvec(&u).iter().zip(f).map(|(au, fi)| fi - au).collect();
            self.factor.solve_in_place(&mut r);
            u.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
            residual = self.residual(&u, f, fnorm);
        }
        if residual > SOLVE_RESIDUAL_TOL {
            return Err(Error::Numerical(format!(
                "relative residual {residual:e} exceeds {SOLVE_RESIDUAL_TOL:e}"
            )));
        }
        Ok((u, residual))
    }

    fn residual(&self, u: &[f64], f: &[f64], fnorm: f64) -> f64 {
        let au = self.matrix.matvec(u);
        let r: Vec<f64> = au.iter().zip(f).map(|(a, b)| a - b).collect();
        norm2(&r) / fnorm
    }

    /// Column `j` of `A^{-1}`.
    pub fn solve_unit(&self, j: usize, out: &mut [f64]) {
        self.factor.solve_unit(j, out);
    }
}

pub fn solve(op: &DiscreteOperator, f: &GridFunction) -> Result<GridFunction> {
    ensure_domain(op.domain(), f.domain())?;
    let (u, _) = op.solve_values(f.values())?;
    GridFunction::new(op.domain().clone(), u)
}

/// Solution of `-Δ e1 = 1` with zero boundary values.
pub fn torsion_function(domain: &Arc<GridDomain>) -> Result<GridFunction> {
    torsion_with(&assemble_operator(domain, 1)?)
}

/// Torsion function from an already assembled `m = 1` operator.
pub fn torsion_with(laplacian: &DiscreteOperator) -> Result<GridFunction> {
    if laplacian.m() != 1 {
        return Err(Error::Capability("the torsion function needs the m = 1 operator".into()));
    }
    let one = GridFunction::constant(laplacian.domain().clone(), 1.0);
    let e1 = solve(laplacian, &one)?;
    if let Some((index, &value)) = e1.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::PositivityViolation { index, value });
    }
    Ok(e1)
}

/// `w = e1^m` with the extremes of `w / d^m` over the interior points.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    pub e1: GridFunction,
    pub w: GridFunction,
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
}

impl WeightFunction {
    pub fn from_torsion(e1: GridFunction, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Capability("the weight needs m >= 1".into()));
        }
        let w = e1.map(|v| v.powi(m as i32));
        let d = e1.domain().distances();
        let (c1, c2) = w
            .values()
            .iter()
            .zip(d)
            .map(|(wi, di)| wi / di.powi(m as i32))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        Ok(Self { e1, w, m, c1, c2 })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        self.w.domain()
    }

    pub fn values(&self) -> &[f64] {
        self.w.values()
    }
}

pub fn boundary_weight(domain: &Arc<GridDomain>, m: usize) -> Result<WeightFunction> {
    WeightFunction::from_torsion(torsion_function(domain)?, m)
}
