//! Discrete Green kernels, the reference kernel `H`, the Riesz kernel and the
//! sandwich constants `c1 H <= G + c2 w(x) w(y) <= c3 H`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{DiscreteOperator, WeightFunction};
use crate::domain::{distance, ensure_domain, GridDomain, Point};
use crate::error::{Error, Result};

/// Largest interior point count for which the Green matrix is stored densely.
pub const DENSE_CAP: usize = 4096;

pub const C2_SAFETY: f64 = 1.05;

/// Column access to the kernel-scaled discrete Green function `h^{-n} A^{-1}`.
pub trait GreenColumns: Sync {
    fn domain(&self) -> &Arc<GridDomain>;

    fn m(&self) -> usize;

    /// Writes column `j` into `out`.
    fn column(&self, j: usize, out: &mut [f64]);

    /// Columns a kernel scan must visit so that every pair is covered up to
    /// symmetry.
    fn scan_columns(&self) -> Vec<usize>;

    /// `h^n G f`, the quadrature of `∫ G(x, y) f(y) dy`.
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>>;

    fn len(&self) -> usize {
        self.domain().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense symmetric Green matrix, row-major.
#[derive(Clone, Debug)]
pub struct GreenMatrix {
    domain: Arc<GridDomain>,
    m: usize,
    entries: Vec<f64>,
    asymmetry: f64,
}

pub fn green_matrix(op: &DiscreteOperator) -> Result<GreenMatrix> {
    let domain = op.domain().clone();
    let n = domain.len();
    if n > DENSE_CAP {
        return Err(Error::CapacityExceeded { n, cap: DENSE_CAP });
    }
    let scale = 1.0 / domain.cell_volume();
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        op.solve_unit(j, col);
        col.iter_mut().for_each(|v| *v *= scale);
    });

    let largest = entries.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (entries[i * n + j], entries[j * n + i]);
            defect = defect.max((a - b).abs());
            let mean = 0.5 * (a + b);
            entries[i * n + j] = mean;
            entries[j * n + i] = mean;
        }
    }
    let asymmetry = if largest > 0.0 { defect / largest } else { 0.0 };
    if asymmetry > 1e-8 {
        return Err(Error::Consistency(format!("Green matrix asymmetry {asymmetry:e} exceeds 1e-8")));
    }
    Ok(GreenMatrix {
        domain,
        m: op.m(),
        entries,
        asymmetry,
    })
}

impl GreenMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.domain.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.domain.len();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Relative asymmetry of the raw inverse before averaging with its transpose.
    pub fn asymmetry_defect(&self) -> f64 {
        self.asymmetry
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl GreenColumns for GreenMatrix {
    fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    fn m(&self) -> usize {
        self.m
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(j));
    }

    fn scan_columns(&self) -> Vec<usize> {
        (0..self.domain.len()).collect()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(&self.domain, f)?;
        let vol = self.domain.cell_volume();
        Ok((0..self.domain.len())
            .into_par_iter()
            .map(|i| vol * crate::linalg::dot(self.row(i), f))
            .collect())
    }
}

/// Green columns computed on demand from the factorization. Used when the
/// dense matrix would exceed [`DENSE_CAP`] or only a symmetric subset of
/// columns is needed.
#[derive(Clone, Debug)]
pub struct StreamingGreen {
    op: Arc<DiscreteOperator>,
}

impl StreamingGreen {
    pub fn new(op: Arc<DiscreteOperator>) -> Self {
        Self { op }
    }

    pub fn operator(&self) -> &Arc<DiscreteOperator> {
        &self.op
    }
}

impl GreenColumns for StreamingGreen {
    fn domain(&self) -> &Arc<GridDomain> {
        self.op.domain()
    }

    fn m(&self) -> usize {
        self.op.m()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        self.op.solve_unit(j, out);
        let scale = 1.0 / self.op.domain().cell_volume();
        out.iter_mut().for_each(|v| *v *= scale);
    }

    fn scan_columns(&self) -> Vec<usize> {
        self.op.domain().symmetry_representatives()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.op.domain(), f)?;
        Ok(self.op.solve_values(f)?.0)
    }
}

fn check_len(domain: &GridDomain, f: &[f64]) -> Result<()> {
    if f.len() != domain.len() {
        return Err(Error::Domain(format!("expected {} values, got {}", domain.len(), f.len())));
    }
    Ok(())
}

/// `H(x, y)` from boundary distances `dx`, `dy` and separation `r`.
pub fn kernel_h(n: usize, m: usize, r: f64, dx: f64, dy: f64) -> f64 {
    let dd = dx * dy;
    let (n, m) = (n as i32, m as i32);
    if r == 0.0 {
        return if n >= 2 * m {
            f64::INFINITY
        } else {
            (dx * dx).powf(f64::from(m) - f64::from(n) / 2.0)
        };
    }
    let q = dd / (r * r);
    match n.cmp(&(2 * m)) {
        std::cmp::Ordering::Greater => r.powi(2 * m - n) * q.min(1.0).powi(m),
        std::cmp::Ordering::Equal => q.powi(m).ln_1p(),
        std::cmp::Ordering::Less => dd.powf(f64::from(m) - f64::from(n) / 2.0) * q.min(1.0).powf(f64::from(n) / 2.0),
    }
}

pub fn reference_kernel_h(domain: &GridDomain, m: usize, x: &Point, y: &Point) -> Result<f64> {
    let dx = domain.distance_to_boundary(x)?;
    let dy = domain.distance_to_boundary(y)?;
    let n = domain.dimension();
    let r = distance(x, y, n);
    if r == 0.0 {
        // Both arguments are the same point, so use one distance for both.
        return Ok(kernel_h(n, m, 0.0, dx, dx));
    }
    Ok(kernel_h(n, m, r, dx, dy))
}

/// `Γ(n/2 - m) / (π^{n/2} 4^m Γ(m))`.
pub fn riesz_constant(n: usize, m: usize) -> Result<f64> {
    if m == 0 || n <= 2 * m {
        return Err(Error::Capability(format!("the Riesz kernel needs n > 2m, got n = {n}, m = {m}")));
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(libm::tgamma(nf / 2.0 - mf) / (std::f64::consts::PI.powf(nf / 2.0) * 4f64.powf(mf) * libm::tgamma(mf)))
}

pub fn riesz_kernel(n: usize, m: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    let c = riesz_constant(n, m)?;
    if x.len() < n || y.len() < n {
        return Err(Error::Domain(format!("points need {n} coordinates")));
    }
    let r = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Domain("the Riesz kernel is singular at x = y".into()));
    }
    Ok(c * r.powi(2 * m as i32 - n as i32))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointPair {
    pub i: usize,
    pub j: usize,
    pub x: Point,
    pub y: Point,
}

#[derive(Clone, Copy, Debug)]
pub struct SandwichOptions {
    /// Pairs closer than this are excluded from the ratio extremes; `None`
    /// means `2h`.
    pub exclusion_radius: Option<f64>,
    /// Correction used when no negative entry is found.
    pub c2_floor: f64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self {
            exclusion_radius: None,
            c2_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelEstimate {
    pub m: usize,
    pub c2_star: f64,
    pub c2_used: f64,
    pub c1_hat: f64,
    pub c3_hat: f64,
    pub c2_pair: Option<PointPair>,
    pub c1_pair: PointPair,
    pub c3_pair: PointPair,
    pub exclusion_radius: f64,
    /// Pairs entering the ratio extremes (scanned columns only).
    pub pairs: usize,
    /// Smallest off-diagonal entry of `G + c2_used w ⊗ w`.
    pub min_corrected_offdiag: f64,
    /// Largest `(G + c2_used w w) / |x - y|^{2m-n}` over admissible pairs, for `n > 2m`.
    pub riesz_ratio_max: Option<f64>,
}

impl KernelEstimate {
    /// The same estimate with a different correction constant, as used by
    /// checks that deliberately break the decomposition.
    pub fn with_c2_used(&self, c2_used: f64) -> Self {
        Self { c2_used, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug)]
struct Extreme {
    value: f64,
    pair: Option<(usize, usize)>,
}

impl Extreme {
    fn low() -> Self {
        Self { value: f64::INFINITY, pair: None }
    }

    fn high() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            pair: None,
        }
    }

    fn take_min(&mut self, value: f64, pair: (usize, usize)) {
        if value < self.value {
            *self = Self { value, pair: Some(pair) };
        }
    }

    fn take_max(&mut self, value: f64, pair: (usize, usize)) {
        if value > self.value {
            *self = Self { value, pair: Some(pair) };
        }
    }

    fn merge_min(&mut self, other: Self) {
        if other.value < self.value {
            *self = other;
        }
    }

    fn merge_max(&mut self, other: Self) {
        if other.value > self.value {
            *self = other;
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ScanStats {
    negative: Extreme,
    ratio_min: Extreme,
    ratio_max: Extreme,
    riesz_max: Extreme,
    offdiag_min: Extreme,
    pairs: usize,
}

impl ScanStats {
    fn empty() -> Self {
        Self {
            negative: Extreme::high(),
            ratio_min: Extreme::low(),
            ratio_max: Extreme::high(),
            riesz_max: Extreme::high(),
            offdiag_min: Extreme::low(),
            pairs: 0,
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.negative.merge_max(o.negative);
        self.ratio_min.merge_min(o.ratio_min);
        self.ratio_max.merge_max(o.ratio_max);
        self.riesz_max.merge_max(o.riesz_max);
        self.offdiag_min.merge_min(o.offdiag_min);
        self.pairs += o.pairs;
        self
    }
}

fn scan<G: GreenColumns + ?Sized>(green: &G, w: &[f64], c: f64, exclusion: f64) -> Result<ScanStats> {
    let domain = green.domain();
    let n = domain.dimension();
    let m = green.m();
    let points = domain.points();
    let d = domain.distances();
    let riesz_power = (n > 2 * m).then(|| 2 * m as i32 - n as i32);
    let columns = green.scan_columns();
    let per_column: Vec<Result<ScanStats>> = columns
        .par_iter()
        .map_init(
            || vec![0.0; domain.len()],
            |col, &j| {
                green.column(j, col);
                let mut s = ScanStats::empty();
                for (i, &g) in col.iter().enumerate() {
                    let ww = w[i] * w[j];
                    s.negative.take_max(-g / ww, (i, j));
                    if i == j {
                        continue;
                    }
                    let corrected = g + c * ww;
                    s.offdiag_min.take_min(corrected, (i, j));
                    let r = distance(&points[i], &points[j], n);
                    if r < exclusion {
                        continue;
                    }
                    let h = kernel_h(n, m, r, d[i], d[j]);
                    if !(h > 0.0) || !h.is_finite() {
                        return Err(Error::Internal(format!("reference kernel H = {h:e} at pair ({i}, {j})")));
                    }
                    let ratio = corrected / h;
                    s.ratio_min.take_min(ratio, (i, j));
                    s.ratio_max.take_max(ratio, (i, j));
                    if let Some(p) = riesz_power {
                        s.riesz_max.take_max(corrected / r.powi(p), (i, j));
                    }
                    s.pairs += 1;
                }
                Ok(s)
            },
        )
        .collect();
    let mut total = ScanStats::empty();
    for s in per_column {
        total = total.merge(s?);
    }
    Ok(total)
}

pub fn estimate_sandwich_constants<G: GreenColumns + ?Sized>(
    green: &G,
    weight: &WeightFunction,
    options: &SandwichOptions,
) -> Result<KernelEstimate> {
    let domain = green.domain();
    ensure_domain(domain, weight.domain())?;
    if weight.m != green.m() {
        return Err(Error::Configuration(format!(
            "weight has m = {}, Green function has m = {}",
            weight.m,
            green.m()
        )));
    }
    if !(options.c2_floor >= 0.0) {
        return Err(Error::Configuration("c2 floor must be nonnegative".into()));
    }
    let exclusion = options.exclusion_radius.unwrap_or(2.0 * domain.h());
    if !(exclusion >= 0.0) {
        return Err(Error::Configuration("exclusion radius must be nonnegative".into()));
    }
    let w = weight.values();

    let mut stats = scan(green, w, options.c2_floor, exclusion)?;
    let c2_star = stats.negative.value.max(0.0);
    let c2_used = if c2_star > 0.0 { C2_SAFETY * c2_star } else { options.c2_floor };
    if c2_used != options.c2_floor {
        let negative = stats.negative;
        stats = scan(green, w, c2_used, exclusion)?;
        stats.negative = negative;
    }
    if stats.pairs == 0 {
        return Err(Error::Configuration(format!(
            "no point pairs at distance >= {exclusion}; reduce the exclusion radius or refine the grid"
        )));
    }

    let pair = |p: Option<(usize, usize)>| {
        p.map(|(i, j)| PointPair {
            i,
            j,
            x: domain.point(i),
            y: domain.point(j),
        })
    };
    let missing = || Error::Internal("ratio extreme without a pair".into());
    Ok(KernelEstimate {
        m: green.m(),
        c2_star,
        c2_used,
        c1_hat: stats.ratio_min.value,
        c3_hat: stats.ratio_max.value,
        c2_pair: if c2_star > 0.0 { pair(stats.negative.pair) } else { None },
        c1_pair: pair(stats.ratio_min.pair).ok_or_else(missing)?,
        c3_pair: pair(stats.ratio_max.pair).ok_or_else(missing)?,
        exclusion_radius: exclusion,
        pairs: stats.pairs,
        min_corrected_offdiag: stats.offdiag_min.value,
        riesz_ratio_max: stats.riesz_max.pair.map(|_| stats.riesz_max.value),
    })
}

/// Dense Green matrix when it fits under the cap, streamed columns otherwise.
pub fn green_columns(op: Arc<DiscreteOperator>) -> Result<Box<dyn GreenColumns + Send>> {
    if op.domain().len() <= DENSE_CAP {
        Ok(Box::new(green_matrix(&op)?))
    } else {
        Ok(Box::new(StreamingGreen::new(op)))
    }
}
