//! Uniform lattice discretizations of bounded domains.
//!
//! Rectangles and boxes use vertex-centered lattices: node `l` sits at `l * h`
//! and nodes with an index on `0` or `cells` lie on the boundary, so the
//! interior points are `1..cells` along each axis. Disks use a lattice
//! symmetric about the center; a node belongs to the interior when its
//! distance to the circle is at least `h / 2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];
pub type Lattice = [i64; 3];

pub const MIN_CELLS: usize = 4;

const UNSET: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Rectangle { lx: f64, ly: f64 },
    Disk { radius: f64 },
    Box3d { lx: f64, ly: f64, lz: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub shape: Shape,
    /// Cells along the first axis (rectangle, box) or across the diameter (disk).
    pub cells: usize,
}

impl DomainSpec {
    pub fn rectangle(lx: f64, ly: f64, cells: usize) -> Self {
        Self {
            shape: Shape::Rectangle { lx, ly },
            cells,
        }
    }

    pub fn disk(radius: f64, cells: usize) -> Self {
        Self {
            shape: Shape::Disk { radius },
            cells,
        }
    }

    pub fn box3d(lx: f64, ly: f64, lz: f64, cells: usize) -> Self {
        Self {
            shape: Shape::Box3d { lx, ly, lz },
            cells,
        }
    }

    pub fn with_cells(&self, cells: usize) -> Self {
        Self {
            shape: self.shape.clone(),
            cells,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.shape {
            Shape::Rectangle { .. } | Shape::Disk { .. } => 2,
            Shape::Box3d { .. } => 3,
        }
    }

    /// Short human-readable label, e.g. `rectangle(5,1)`.
    pub fn label(&self) -> String {
        match self.shape {
            Shape::Rectangle { lx, ly } => format!("rectangle({lx},{ly})"),
            Shape::Disk { radius } => format!("disk({radius})"),
            Shape::Box3d { lx, ly, lz } => format!("box3d({lx},{ly},{lz})"),
        }
    }

    fn lengths(&self) -> Vec<f64> {
        match self.shape {
            Shape::Rectangle { lx, ly } => vec![lx, ly],
            Shape::Disk { radius } => vec![2.0 * radius, 2.0 * radius],
            Shape::Box3d { lx, ly, lz } => vec![lx, ly, lz],
        }
    }

    /// Validates the spec and returns `(h, cells per axis)`.
    pub fn validate(&self) -> Result<(f64, [usize; 3])> {
        let lengths = self.lengths();
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Validation(format!(
                "{}: lengths must be finite and positive, got {bad}",
                self.label()
            )));
        }
        if self.cells < MIN_CELLS {
            return Err(Error::Validation(format!(
                "{}: cells = {} is below the minimum of {MIN_CELLS}",
                self.label(),
                self.cells
            )));
        }
        let h = lengths[0] / self.cells as f64;
        let mut per_axis = [0usize; 3];
        for (axis, &len) in lengths.iter().enumerate() {
            let exact = len / h;
            let rounded = exact.round();
            if (exact - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(Error::Validation(format!(
                    "{}: length {len} along axis {axis} is not a multiple of h = {h}",
                    self.label()
                )));
            }
            let n = rounded as usize;
            if n < MIN_CELLS {
                return Err(Error::Validation(format!(
                    "{}: only {n} cells along axis {axis}, need at least {MIN_CELLS}",
                    self.label()
                )));
            }
            per_axis[axis] = n;
        }
        Ok((h, per_axis))
    }
}

/// A bounded domain sampled on a uniform lattice.
#[derive(Debug)]
pub struct GridDomain {
    spec: DomainSpec,
    h: f64,
    dim: usize,
    extent: [usize; 3],
    points: Vec<Point>,
    lattice: Vec<Lattice>,
    distances: Vec<f64>,
    index: Vec<u32>,
}

pub fn build_domain(spec: &DomainSpec) -> Result<Arc<GridDomain>> {
    GridDomain::new(spec).map(Arc::new)
}

impl GridDomain {
    pub fn new(spec: &DomainSpec) -> Result<Self> {
        let (h, extent) = spec.validate()?;
        let dim = spec.dimension();
        let mut domain = GridDomain {
            spec: spec.clone(),
            h,
            dim,
            extent,
            points: Vec::new(),
            lattice: Vec::new(),
            distances: Vec::new(),
            index: vec![UNSET; (extent[0] + 1) * (extent[1] + 1) * (extent[2] + 1)],
        };
        // Lexicographic enumeration: the last axis varies fastest.
        for i in 0..=extent[0] as i64 {
            for j in 0..=extent[1] as i64 {
                for k in 0..=extent[2] as i64 {
                    let l = [i, j, k];
                    let p = domain.coordinate(l);
                    let inside = match spec.shape {
                        Shape::Rectangle { .. } | Shape::Box3d { .. } => {
                            (0..dim).all(|a| l[a] >= 1 && l[a] < extent[a] as i64)
                        }
                        Shape::Disk { .. } => -domain.signed_distance(&p) >= 0.5 * h,
                    };
                    if inside {
                        let slot = domain.slot(l).expect("lattice node inside the box");
                        domain.index[slot] = domain.points.len() as u32;
                        domain.points.push(p);
                        domain.lattice.push(l);
                        domain.distances.push(-domain.signed_distance(&p));
                    }
                }
            }
        }
        if domain.points.is_empty() {
            return Err(Error::Validation(format!(
                "{} with {} cells has no interior points",
                spec.label(),
                spec.cells
            )));
        }
        Ok(domain)
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Number of interior points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn lattice(&self, i: usize) -> Lattice {
        self.lattice[i]
    }

    /// Distance to the boundary of every interior point, in interior order.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Cells per axis (unused axes are zero).
    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    /// `h^n`, the volume of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn measure(&self) -> f64 {
        match self.spec.shape {
            Shape::Rectangle { lx, ly } => lx * ly,
            Shape::Disk { radius } => std::f64::consts::PI * radius * radius,
            Shape::Box3d { lx, ly, lz } => lx * ly * lz,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.spec.shape {
            Shape::Rectangle { lx, ly } => lx.hypot(ly),
            Shape::Disk { radius } => 2.0 * radius,
            Shape::Box3d { lx, ly, lz } => (lx * lx + ly * ly + lz * lz).sqrt(),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)` of the domain.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self.spec.shape {
            Shape::Rectangle { lx, ly } => ([0.0; 3], [lx, ly, 0.0]),
            Shape::Disk { radius } => ([-radius, -radius, 0.0], [radius, radius, 0.0]),
            Shape::Box3d { lx, ly, lz } => ([0.0; 3], [lx, ly, lz]),
        }
    }

    pub fn coordinate(&self, l: Lattice) -> Point {
        let mut p = [0.0; 3];
        match self.spec.shape {
            Shape::Rectangle { .. } | Shape::Box3d { .. } => {
                for a in 0..self.dim {
                    p[a] = l[a] as f64 * self.h;
                }
            }
            Shape::Disk { .. } => {
                // Exactly antisymmetric about the center for either parity of cells.
                let cells = self.spec.cells as i64;
                for a in 0..self.dim {
                    p[a] = (2 * l[a] - cells) as f64 * (0.5 * self.h);
                }
            }
        }
        p
    }

    fn slot(&self, l: Lattice) -> Option<usize> {
        let [nx, ny, nz] = self.extent;
        let bounds = [nx as i64, ny as i64, nz as i64];
        if (0..3).any(|a| l[a] < 0 || l[a] > bounds[a]) {
            return None;
        }
        Some(((l[0] as usize) * (ny + 1) + l[1] as usize) * (nz + 1) + l[2] as usize)
    }

    /// Interior index of a lattice node, or `None` for exterior nodes.
    pub fn index_of(&self, l: Lattice) -> Option<usize> {
        self.slot(l)
            .map(|s| self.index[s])
            .filter(|&v| v != UNSET)
            .map(|v| v as usize)
    }

    /// Distance from `p` to the boundary; negative inside, positive outside.
    pub fn signed_distance(&self, p: &Point) -> f64 {
        match self.spec.shape {
            Shape::Disk { radius } => norm(p, self.dim) - radius,
            Shape::Rectangle { lx, ly } => box_signed_distance(p, &[lx, ly], 2),
            Shape::Box3d { lx, ly, lz } => box_signed_distance(p, &[lx, ly, lz], 3),
        }
    }

    pub fn distance_to_boundary(&self, p: &Point) -> Result<f64> {
        let s = self.signed_distance(p);
        if s > 1e-12 * self.diameter() {
            return Err(Error::Domain(format!(
                "point {:?} lies outside {}",
                &p[..self.dim],
                self.spec.label()
            )));
        }
        Ok((-s).max(0.0))
    }

    /// Distance from interior point `i` along `dir * e_axis` to the boundary, in units of `h`.
    pub fn arm_fraction(&self, i: usize, axis: usize, dir: i64) -> f64 {
        let p = self.points[i];
        match self.spec.shape {
            Shape::Rectangle { .. } | Shape::Box3d { .. } => {
                let l = self.lattice[i][axis] + dir;
                let to_wall = if dir > 0 {
                    self.extent[axis] as i64 - self.lattice[i][axis]
                } else {
                    self.lattice[i][axis]
                };
                debug_assert!(l >= 0 && to_wall >= 1);
                to_wall as f64
            }
            Shape::Disk { radius } => {
                let pa = dir as f64 * p[axis];
                let r2 = p[..self.dim].iter().map(|x| x * x).sum::<f64>();
                let t = -pa + (pa * pa + radius * radius - r2).sqrt();
                t / self.h
            }
        }
    }

    /// Point at the same depth as `p` on the inner side of the boundary.
    fn mirror_point(&self, p: &Point, s: f64) -> Point {
        match self.spec.shape {
            Shape::Disk { radius } => {
                let r = norm(p, self.dim);
                let scale = (radius - s.abs()) / r;
                let mut q = [0.0; 3];
                for a in 0..self.dim {
                    q[a] = p[a] * scale;
                }
                q
            }
            Shape::Rectangle { lx, ly } => box_mirror(p, &[lx, ly], 2),
            Shape::Box3d { lx, ly, lz } => box_mirror(p, &[lx, ly, lz], 3),
        }
    }

    /// Interior node closest to `q`, searching the lattice neighborhood of `q`.
    pub fn nearest_interior(&self, q: &Point) -> Option<usize> {
        let origin = self.coordinate([0, 0, 0]);
        let mut center = [0i64; 3];
        for a in 0..self.dim {
            center[a] = ((q[a] - origin[a]) / self.h).round() as i64;
        }
        let reach = 3i64;
        let range = |a: usize| {
            if a < self.dim {
                -reach..=reach
            } else {
                0..=0
            }
        };
        let mut best: Option<(f64, usize)> = None;
        for di in range(0) {
            for dj in range(1) {
                for dk in range(2) {
                    let l = [center[0] + di, center[1] + dj, center[2] + dk];
                    if let Some(idx) = self.index_of(l) {
                        let dist = distance(&self.points[idx], q, self.dim);
                        if best.map_or(true, |(b, bi)| dist < b || (dist == b && idx < bi)) {
                            best = Some((dist, idx));
                        }
                    }
                }
            }
        }
        best.map(|(_, idx)| idx)
    }

    /// Linear combination of interior values standing in for the value at a
    /// non-interior lattice node under clamped conditions. The profile near the
    /// boundary is `u ~ c s^2` in the signed distance `s`, so the node takes the
    /// value of the interior node nearest its mirror point, rescaled by
    /// `(s / d_partner)^2`. Nodes on the boundary map to zero.
    pub fn clamped_ghost(&self, l: Lattice) -> Result<Vec<(usize, f64)>> {
        if let Some(i) = self.index_of(l) {
            return Ok(vec![(i, 1.0)]);
        }
        let p = self.coordinate(l);
        let s = self.signed_distance(&p);
        if s.abs() <= 1e-12 * self.h {
            return Ok(Vec::new());
        }
        let q = self.mirror_point(&p, s);
        let partner = self.nearest_interior(&q).ok_or_else(|| {
            Error::Assembly(format!("no interior partner near ghost node {l:?}"))
        })?;
        let ratio = s / self.distances[partner];
        Ok(vec![(partner, ratio * ratio)])
    }

    /// Fraction of the lattice cell centered at node `l` that lies inside the domain.
    pub fn cell_fraction(&self, l: Lattice) -> f64 {
        let p = self.coordinate(l);
        let h = self.h;
        match self.spec.shape {
            Shape::Rectangle { lx, ly } => interval_fraction(p[0], lx, h) * interval_fraction(p[1], ly, h),
            Shape::Box3d { lx, ly, lz } => {
                interval_fraction(p[0], lx, h) * interval_fraction(p[1], ly, h) * interval_fraction(p[2], lz, h)
            }
            Shape::Disk { radius } => {
                let r = norm(&p, 2);
                let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
                if r + half_diag <= radius {
                    return 1.0;
                }
                if r - half_diag >= radius {
                    return 0.0;
                }
                const SUB: usize = 32;
                let mut inside = 0usize;
                for a in 0..SUB {
                    let x = p[0] + ((a as f64 + 0.5) / SUB as f64 - 0.5) * h;
                    for b in 0..SUB {
                        let y = p[1] + ((b as f64 + 0.5) / SUB as f64 - 0.5) * h;
                        if x * x + y * y < radius * radius {
                            inside += 1;
                        }
                    }
                }
                inside as f64 / (SUB * SUB) as f64
            }
        }
    }

    /// Interior indices whose lattice coordinates lie in a fundamental region of
    /// the lattice symmetry group (axis reflections, and permutations of axes
    /// with identical extent). Every pair of interior points is mapped onto a
    /// pair with its second member in this set by some symmetry.
    pub fn symmetry_representatives(&self) -> Vec<usize> {
        let lengths = self.spec.lengths();
        let swappable = |a: usize, b: usize| self.extent[a] == self.extent[b] && lengths[a] == lengths[b];
        (0..self.len())
            .filter(|&i| {
                let l = self.lattice[i];
                let folded = (0..self.dim).all(|a| 2 * l[a] <= self.extent[a] as i64);
                let sorted = (0..self.dim).all(|a| ((a + 1)..self.dim).all(|b| !swappable(a, b) || l[a] <= l[b]));
                folded && sorted
            })
            .collect()
    }
}

fn norm(p: &Point, dim: usize) -> f64 {
    p[..dim].iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(p: &Point, q: &Point, dim: usize) -> f64 {
    (0..dim).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>().sqrt()
}

fn box_signed_distance(p: &Point, lengths: &[f64], dim: usize) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::INFINITY;
    for a in 0..dim {
        let below = -p[a];
        let above = p[a] - lengths[a];
        let excess = below.max(above);
        if excess > 0.0 {
            outside += excess * excess;
        }
        inside = inside.min(p[a].min(lengths[a] - p[a]));
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        -inside.max(0.0)
    }
}

fn box_mirror(p: &Point, lengths: &[f64], dim: usize) -> Point {
    let mut q = *p;
    for a in 0..dim {
        if p[a] < 0.0 {
            q[a] = -p[a];
        } else if p[a] > lengths[a] {
            q[a] = 2.0 * lengths[a] - p[a];
        }
    }
    q
}

fn interval_fraction(x: f64, len: f64, h: f64) -> f64 {
    let lo = (x - 0.5 * h).max(0.0);
    let hi = (x + 0.5 * h).min(len);
    ((hi - lo) / h).clamp(0.0, 1.0)
}

/// Values sampled at the interior points of a domain, extended by zero outside.
#[derive(Clone, Debug)]
pub struct GridFunction {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Domain(format!(
                "grid function has {} values but the domain has {} interior points",
                values.len(),
                domain.len()
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.len();
        Self {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn constant(domain: Arc<GridDomain>, value: f64) -> Self {
        let n = domain.len();
        Self {
            domain,
            values: vec![value; n],
        }
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&Point) -> f64) -> Self {
        let values = domain.points().iter().map(f).collect();
        Self { domain, values }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_domain(other)?;
        Ok(Self {
            domain: self.domain.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn ensure_same_domain(&self, other: &GridFunction) -> Result<()> {
        ensure_domain(&self.domain, &other.domain)
    }
}

pub(crate) fn ensure_domain(a: &Arc<GridDomain>, b: &Arc<GridDomain>) -> Result<()> {
    if Arc::ptr_eq(a, b) || (a.spec == b.spec && a.len() == b.len()) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "grid functions live on different domains ({} with {} points vs {} with {} points)",
            a.spec.label(),
            a.len(),
            b.spec.label(),
            b.len()
        )))
    }
}
