//! Bounded 2D domains on uniform masked grids, and the Green operator of
//! the Dirichlet Laplacian: grid solves, pointwise kernel values G(x,y),
//! the regular part h(x,y), and the Robin function H(x) = h(x,x).

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use crate::geom::Point;
use crate::poisson::PoissonSolver;

static GRID_ID: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("resolution {resolution} gives {cells} cells across the smallest diameter; need at least 16")]
    ResolutionTooCoarse { resolution: f64, cells: f64 },
    #[error("mask is empty: no cell center lies inside the geometry")]
    EmptyMask,
    #[error("masked region is not 4-connected ({reached} of {total} cells reachable)")]
    Disconnected { reached: usize, total: usize },
    #[error("point ({0}, {1}) is outside the domain")]
    PointOutside(f64, f64),
    #[error("green_point requires x != y (logarithmic singularity)")]
    CoincidentPoints,
    #[error("finite-difference stencil at ({0}, {1}) leaves the domain")]
    StencilOutside(f64, f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("analytic backend requires a disc geometry")]
    BackendNeedsDisc,
    #[error("non-finite value in input field")]
    NonFinite,
}

/// Domain geometry used to build the cell mask.
#[derive(Debug, Clone, serde::Serialize)]
pub enum Geometry {
    Disc { center: Point, radius: f64 },
    Rectangle { width: f64, height: f64 },
    /// Caller-supplied mask; geometry queries fall back to mask-based tests.
    Custom,
}

impl Geometry {
    fn smallest_diameter(&self) -> f64 {
        match self {
            Geometry::Disc { radius, .. } => 2.0 * radius,
            Geometry::Rectangle { width, height } => width.min(*height),
            Geometry::Custom => f64::NAN,
        }
    }

    fn contains(&self, p: Point) -> bool {
        match self {
            Geometry::Disc { center, radius } => p.dist(*center) < *radius,
            Geometry::Rectangle { width, height } => {
                p.x > 0.0 && p.x < *width && p.y > 0.0 && p.y < *height
            }
            Geometry::Custom => true,
        }
    }
}

/// Immutable uniform grid with a cell-center-in-domain mask.
///
/// Cell (i, j) has its center at `origin + ((i+1/2) h, (j+1/2) h)`. Masked
/// cells are stored row-major (j outer, i inner); all per-cell fields index
/// into that ordering.
pub struct DomainGrid {
    id: u64,
    nx: usize,
    ny: usize,
    spacing: f64,
    origin: Point,
    geometry: Geometry,
    cell_of: Vec<u32>,
    cells: Vec<(u32, u32)>,
}

const NO_CELL: u32 = u32::MAX;

/// Builds an immutable masked grid for the given geometry.
///
/// `resolution` is in cells per unit length; the mask keeps exactly the
/// cells whose centers lie strictly inside the geometry.
pub fn build_domain(geometry: Geometry, resolution: f64) -> Result<Arc<DomainGrid>, DomainError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(DomainError::DegenerateGeometry(format!(
            "resolution = {resolution}"
        )));
    }
    match &geometry {
        Geometry::Disc { radius, .. } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(DomainError::DegenerateGeometry(format!("radius = {radius}")));
            }
        }
        Geometry::Rectangle { width, height } => {
            if !(width.is_finite() && *width > 0.0 && height.is_finite() && *height > 0.0) {
                return Err(DomainError::DegenerateGeometry(format!(
                    "width = {width}, height = {height}"
                )));
            }
        }
        Geometry::Custom => {
            return Err(DomainError::DegenerateGeometry(
                "custom geometry must be built with DomainGrid::from_mask".into(),
            ))
        }
    }
    let cells_across = geometry.smallest_diameter() * resolution;
    if cells_across < 16.0 {
        return Err(DomainError::ResolutionTooCoarse { resolution, cells: cells_across });
    }

    let h = 1.0 / resolution;
    let (origin, nx, ny) = match &geometry {
        Geometry::Disc { center, radius } => {
            let n = (2.0 * radius * resolution).ceil() as usize;
            let half = 0.5 * n as f64 * h;
            (Point::new(center.x - half, center.y - half), n, n)
        }
        Geometry::Rectangle { width, height } => (
            Point::ZERO,
            (width * resolution).round().max(1.0) as usize,
            (height * resolution).round().max(1.0) as usize,
        ),
        Geometry::Custom => unreachable!(),
    };

    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = Point::new(
                origin.x + (i as f64 + 0.5) * h,
                origin.y + (j as f64 + 0.5) * h,
            );
            mask[j * nx + i] = geometry.contains(c);
        }
    }
    DomainGrid::finish(nx, ny, h, origin, geometry, mask)
}

impl DomainGrid {
    /// Builds a grid from a caller-supplied mask (row-major, j outer).
    pub fn from_mask(
        nx: usize,
        ny: usize,
        spacing: f64,
        origin: Point,
        mask: Vec<bool>,
    ) -> Result<Arc<DomainGrid>, DomainError> {
        if nx == 0 || ny == 0 || mask.len() != nx * ny || !(spacing > 0.0) {
            return Err(DomainError::DegenerateGeometry(format!(
                "mask {nx}x{ny} with spacing {spacing}"
            )));
        }
        DomainGrid::finish(nx, ny, spacing, origin, Geometry::Custom, mask)
    }

    fn finish(
        nx: usize,
        ny: usize,
        spacing: f64,
        origin: Point,
        geometry: Geometry,
        mask: Vec<bool>,
    ) -> Result<Arc<DomainGrid>, DomainError> {
        let mut cell_of = vec![NO_CELL; nx * ny];
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if mask[j * nx + i] {
                    cell_of[j * nx + i] = cells.len() as u32;
                    cells.push((i as u32, j as u32));
                }
            }
        }
        if cells.is_empty() {
            return Err(DomainError::EmptyMask);
        }

        let grid = DomainGrid {
            id: GRID_ID.fetch_add(1, Ordering::Relaxed),
            nx,
            ny,
            spacing,
            origin,
            geometry,
            cell_of,
            cells,
        };
        let reached = grid.flood_count();
        if reached != grid.cells.len() {
            return Err(DomainError::Disconnected { reached, total: grid.cells.len() });
        }
        Ok(Arc::new(grid))
    }

    fn flood_count(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for nb in self.neighbors(k).into_iter().flatten() {
                if !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    stack.push(nb);
                }
            }
        }
        count
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Number of masked cells.
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Discrete domain area: masked cell count times h^2.
    pub fn area(&self) -> f64 {
        self.cells.len() as f64 * self.spacing * self.spacing
    }

    pub fn diameter(&self) -> f64 {
        match &self.geometry {
            Geometry::Disc { radius, .. } => 2.0 * radius,
            Geometry::Rectangle { width, height } => width.hypot(*height),
            Geometry::Custom => {
                (self.nx as f64 * self.spacing).hypot(self.ny as f64 * self.spacing)
            }
        }
    }

    pub fn cell_center(&self, k: usize) -> Point {
        let (i, j) = self.cells[k];
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing,
            self.origin.y + (j as f64 + 0.5) * self.spacing,
        )
    }

    pub fn cell_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nx || j >= self.ny {
            return None;
        }
        match self.cell_of[j * self.nx + i] {
            NO_CELL => None,
            k => Some(k as usize),
        }
    }

    /// Masked cell containing the point, if any.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let i = ((p.x - self.origin.x) / self.spacing).floor();
        let j = ((p.y - self.origin.y) / self.spacing).floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        self.cell_index(i as usize, j as usize)
    }

    /// West/east/south/north masked neighbors of cell k.
    pub fn neighbors(&self, k: usize) -> [Option<usize>; 4] {
        let (i, j) = self.cells[k];
        let (i, j) = (i as usize, j as usize);
        [
            if i > 0 { self.cell_index(i - 1, j) } else { None },
            self.cell_index(i + 1, j),
            if j > 0 { self.cell_index(i, j - 1) } else { None },
            self.cell_index(i, j + 1),
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        match &self.geometry {
            Geometry::Custom => self.locate(p).is_some(),
            g => g.contains(p),
        }
    }

    /// Distance from p to the domain boundary (zero or negative outside).
    /// Custom masks use a conservative cell-based estimate.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        match &self.geometry {
            Geometry::Disc { center, radius } => radius - p.dist(*center),
            Geometry::Rectangle { width, height } => {
                p.x.min(width - p.x).min(p.y).min(height - p.y)
            }
            Geometry::Custom => {
                if self.locate(p).is_none() {
                    return 0.0;
                }
                // Expand rings of cells until an unmasked one shows up.
                let ci = ((p.x - self.origin.x) / self.spacing).floor() as i64;
                let cj = ((p.y - self.origin.y) / self.spacing).floor() as i64;
                let max_r = self.nx.max(self.ny) as i64;
                for r in 1..=max_r {
                    let mut all_masked = true;
                    for dj in -r..=r {
                        for di in -r..=r {
                            if di.abs() != r && dj.abs() != r {
                                continue;
                            }
                            let (i, j) = (ci + di, cj + dj);
                            let masked = i >= 0
                                && j >= 0
                                && self.cell_index(i as usize, j as usize).is_some();
                            if !masked {
                                all_masked = false;
                            }
                        }
                    }
                    if !all_masked {
                        return ((r - 1).max(0)) as f64 * self.spacing;
                    }
                }
                max_r as f64 * self.spacing
            }
        }
    }

    /// Bilinear interpolation weights on the four cell centers around p,
    /// restricted to masked cells and renormalized to unit total.
    pub fn bilinear_stencil(&self, p: Point) -> Option<[(usize, f64); 4]> {
        let h = self.spacing;
        let gx = (p.x - self.origin.x) / h - 0.5;
        let gy = (p.y - self.origin.y) / h - 0.5;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let fx = gx - i0;
        let fy = gy - j0;
        let mut out = [(0usize, 0.0f64); 4];
        let mut total = 0.0;
        let mut n = 0;
        for (di, dj, w) in [
            (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
            (1.0, 0.0, fx * (1.0 - fy)),
            (0.0, 1.0, (1.0 - fx) * fy),
            (1.0, 1.0, fx * fy),
        ] {
            let (ii, jj) = (i0 + di, j0 + dj);
            if ii < 0.0 || jj < 0.0 {
                continue;
            }
            if let Some(k) = self.cell_index(ii as usize, jj as usize) {
                out[n] = (k, w);
                total += w;
                n += 1;
            }
        }
        if n == 0 || total <= 0.0 {
            return None;
        }
        for slot in out.iter_mut().take(n) {
            slot.1 /= total;
        }
        let first = out[0].0;
        for slot in out.iter_mut().skip(n) {
            *slot = (first, 0.0);
        }
        Some(out)
    }
}

impl std::fmt::Debug for DomainGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainGrid")
            .field("shape", &(self.nx, self.ny))
            .field("spacing", &self.spacing)
            .field("geometry", &self.geometry)
            .field("n_cells", &self.cells.len())
            .finish()
    }
}

/// Per-masked-cell scalar data bound to its grid.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<DomainGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<DomainGrid>) -> Self {
        let n = grid.n_cells();
        ScalarField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<DomainGrid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|k| f(grid.cell_center(k))).collect();
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<DomainGrid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_cells(), "value vector must match grid");
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.grid.id == other.grid.id
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid inner product with cell-area weight h^2.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        let h2 = self.grid.spacing * self.grid.spacing;
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * h2
    }

    /// Integral of the field: cell sum times h^2.
    pub fn integral(&self) -> f64 {
        let h2 = self.grid.spacing * self.grid.spacing;
        self.values.iter().sum::<f64>() * h2
    }

    pub fn l1_norm(&self) -> f64 {
        let h2 = self.grid.spacing * self.grid.spacing;
        self.values.iter().map(|v| v.abs()).sum::<f64>() * h2
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear sample; cells outside the mask contribute the Dirichlet
    /// value zero, points outside the grid sample to zero.
    pub fn sample(&self, p: Point) -> f64 {
        let h = self.grid.spacing;
        let gx = (p.x - self.grid.origin.x) / h - 0.5;
        let gy = (p.y - self.grid.origin.y) / h - 0.5;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let fx = gx - i0;
        let fy = gy - j0;
        let mut acc = 0.0;
        for (di, dj, w) in [
            (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
            (1.0, 0.0, fx * (1.0 - fy)),
            (0.0, 1.0, (1.0 - fx) * fy),
            (1.0, 1.0, fx * fy),
        ] {
            let (ii, jj) = (i0 + di, j0 + dj);
            if ii < 0.0 || jj < 0.0 {
                continue;
            }
            if let Some(k) = self.grid.cell_index(ii as usize, jj as usize) {
                acc += w * self.values[k];
            }
        }
        acc
    }
}

/// Stream function values on a grid; zero Dirichlet data outside the mask.
#[derive(Clone)]
pub struct StreamField {
    pub field: ScalarField,
}

impl StreamField {
    pub fn grid(&self) -> &Arc<DomainGrid> {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn sample(&self, p: Point) -> f64 {
        self.field.sample(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum GreenBackend {
    AnalyticDisc,
    FiniteDifference,
}

/// Green operator of -Laplace with zero Dirichlet data on a DomainGrid.
///
/// Grid applies always go through the cached sparse factorization of the
/// discrete Dirichlet Laplacian, so energies and multiplier solves stay
/// mutually consistent. The backend tag selects how pointwise kernel
/// values (G, h, H and their gradients) are evaluated: closed-form images
/// on a disc, or discrete column solves plus interpolation.
pub struct GreenOperator {
    grid: Arc<DomainGrid>,
    backend: GreenBackend,
    poisson: OnceLock<PoissonSolver>,
}

impl GreenOperator {
    /// Default backend: analytic on discs, finite-difference otherwise.
    pub fn new(grid: Arc<DomainGrid>) -> Self {
        let backend = match grid.geometry() {
            Geometry::Disc { .. } => GreenBackend::AnalyticDisc,
            _ => GreenBackend::FiniteDifference,
        };
        GreenOperator { grid, backend, poisson: OnceLock::new() }
    }

    pub fn with_backend(grid: Arc<DomainGrid>, backend: GreenBackend) -> Result<Self, DomainError> {
        if backend == GreenBackend::AnalyticDisc && !matches!(grid.geometry(), Geometry::Disc { .. })
        {
            return Err(DomainError::BackendNeedsDisc);
        }
        Ok(GreenOperator { grid, backend, poisson: OnceLock::new() })
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn backend(&self) -> GreenBackend {
        self.backend
    }

    fn solver(&self) -> &PoissonSolver {
        self.poisson.get_or_init(|| PoissonSolver::new(&self.grid))
    }

    fn disc(&self) -> Option<(Point, f64)> {
        match self.grid.geometry() {
            Geometry::Disc { center, radius } => Some((*center, *radius)),
            _ => None,
        }
    }

    fn require_inside(&self, p: Point) -> Result<(), DomainError> {
        if !self.grid.contains(p) {
            return Err(DomainError::PointOutside(p.x, p.y));
        }
        Ok(())
    }

    /// Solves the discrete -Laplace u = source with zero Dirichlet data.
    pub fn apply(&self, source: &ScalarField) -> Result<StreamField, DomainError> {
        if source.grid().id != self.grid.id {
            return Err(DomainError::GridMismatch);
        }
        if !source.is_finite() {
            return Err(DomainError::NonFinite);
        }
        let values = self.solver().solve(source.values());
        Ok(StreamField { field: ScalarField::from_values(self.grid.clone(), values) })
    }

    /// G(x, y): method-of-images closed form on the analytic-disc backend,
    /// one interpolated column solve on the finite-difference backend.
    pub fn green_point(&self, x: Point, y: Point) -> Result<f64, DomainError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        if x == y {
            return Err(DomainError::CoincidentPoints);
        }
        match self.backend {
            GreenBackend::AnalyticDisc => {
                let (c, r) = self.disc().expect("analytic backend implies disc");
                Ok(disc_green(c, r, x, y))
            }
            GreenBackend::FiniteDifference => {
                let col = self.green_column(y)?;
                Ok(col.sample(x))
            }
        }
    }

    /// Discrete Green column: stream field of a unit point mass at y.
    pub fn green_column(&self, y: Point) -> Result<StreamField, DomainError> {
        self.require_inside(y)?;
        let stencil = self
            .grid
            .bilinear_stencil(y)
            .ok_or(DomainError::PointOutside(y.x, y.y))?;
        let h2 = self.grid.spacing * self.grid.spacing;
        let mut rhs = vec![0.0; self.grid.n_cells()];
        for (k, w) in stencil {
            rhs[k] += w / h2;
        }
        let values = self.solver().solve(&rhs);
        Ok(StreamField { field: ScalarField::from_values(self.grid.clone(), values) })
    }

    /// Regular part h(x, y) = -(1/2pi) ln|x-y| - G(x, y), smooth across
    /// x = y; the finite-difference diagonal uses Richardson extrapolation
    /// of offset evaluations.
    pub fn regular_part(&self, x: Point, y: Point) -> Result<f64, DomainError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        match self.backend {
            GreenBackend::AnalyticDisc => {
                let (c, r) = self.disc().expect("analytic backend implies disc");
                Ok(disc_regular_part(c, r, x, y))
            }
            GreenBackend::FiniteDifference => {
                if x == y {
                    return self.fd_regular_diagonal(x);
                }
                let g = self.green_point(x, y)?;
                Ok(-(x.dist(y)).ln() / (2.0 * PI) - g)
            }
        }
    }

    fn fd_regular_diagonal(&self, x: Point) -> Result<f64, DomainError> {
        let h = self.grid.spacing;
        for dir in [
            Point::new(1.0, 0.0),
            Point::new(-1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, -1.0),
        ] {
            let near = x + dir * (2.0 * h);
            let far = x + dir * (4.0 * h);
            if self.grid.contains(near) && self.grid.contains(far) {
                let h2v = self.regular_part(x, near)?;
                let h4v = self.regular_part(x, far)?;
                return Ok(2.0 * h2v - h4v);
            }
        }
        Err(DomainError::StencilOutside(x.x, x.y))
    }

    /// Robin function H(x) = h(x, x).
    pub fn robin(&self, x: Point) -> Result<f64, DomainError> {
        self.regular_part(x, x)
    }

    /// Gradient of the Robin function; closed form on the disc, central
    /// differences with step max(2h, 1e-4 diam) otherwise.
    pub fn robin_grad(&self, x: Point) -> Result<Point, DomainError> {
        self.require_inside(x)?;
        match self.backend {
            GreenBackend::AnalyticDisc => {
                let (c, r) = self.disc().expect("analytic backend implies disc");
                Ok(disc_grad1_regular(c, r, x, x) * 2.0)
            }
            GreenBackend::FiniteDifference => {
                let h = self.grid.spacing;
                if self.grid.boundary_distance(x) < h {
                    return Err(DomainError::StencilOutside(x.x, x.y));
                }
                let step = (2.0 * h).max(1e-4 * self.grid.diameter());
                let ex = Point::new(step, 0.0);
                let ey = Point::new(0.0, step);
                let gx = (self.robin(x + ex)? - self.robin(x - ex)?) / (2.0 * step);
                let gy = (self.robin(x + ey)? - self.robin(x - ey)?) / (2.0 * step);
                Ok(Point::new(gx, gy))
            }
        }
    }

    /// Gradient of G(x, y) in the first slot.
    pub fn grad1_green(&self, x: Point, y: Point) -> Result<Point, DomainError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        if x == y {
            return Err(DomainError::CoincidentPoints);
        }
        match self.backend {
            GreenBackend::AnalyticDisc => {
                let (c, r) = self.disc().expect("analytic backend implies disc");
                let d = x - y;
                let free = d * (-1.0 / (2.0 * PI * d.norm_sq()));
                Ok(free - disc_grad1_regular(c, r, x, y))
            }
            GreenBackend::FiniteDifference => {
                let step = (2.0 * self.grid.spacing).max(1e-4 * self.grid.diameter());
                let ex = Point::new(step, 0.0);
                let ey = Point::new(0.0, step);
                let gx = (self.green_point(x + ex, y)? - self.green_point(x - ex, y)?)
                    / (2.0 * step);
                let gy = (self.green_point(x + ey, y)? - self.green_point(x - ey, y)?)
                    / (2.0 * step);
                Ok(Point::new(gx, gy))
            }
        }
    }

    /// Gradient of h(x, y) in the first slot; x = y allowed.
    pub fn grad1_regular(&self, x: Point, y: Point) -> Result<Point, DomainError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        match self.backend {
            GreenBackend::AnalyticDisc => {
                let (c, r) = self.disc().expect("analytic backend implies disc");
                Ok(disc_grad1_regular(c, r, x, y))
            }
            GreenBackend::FiniteDifference => {
                let step = (2.0 * self.grid.spacing).max(1e-4 * self.grid.diameter());
                let ex = Point::new(step, 0.0);
                let ey = Point::new(0.0, step);
                let gx = (self.regular_part(x + ex, y)? - self.regular_part(x - ex, y)?)
                    / (2.0 * step);
                let gy = (self.regular_part(x + ey, y)? - self.regular_part(x - ey, y)?)
                    / (2.0 * step);
                Ok(Point::new(gx, gy))
            }
        }
    }
}

// Method-of-images closed forms for the disc of radius r centered at c.
//
// With x' = (x-c)/r, y' = (y-c)/r and t(x', y') = |y'| |x' - y'/|y'|^2|
// = sqrt(|x'|^2 |y'|^2 - 2 x'.y' + 1):
//   G(x, y) = (1/2pi) ln( r t / |x-y| ),  h(x, y) = -(1/2pi) ln( r t ).
// The sqrt form of t is smooth across x = y and at y = c.

fn disc_images_t(c: Point, r: f64, x: Point, y: Point) -> (Point, Point, f64) {
    let xp = (x - c) / r;
    let yp = (y - c) / r;
    let t2 = xp.norm_sq() * yp.norm_sq() - 2.0 * xp.dot(yp) + 1.0;
    (xp, yp, t2.max(0.0).sqrt())
}

fn disc_green(c: Point, r: f64, x: Point, y: Point) -> f64 {
    let (_, _, t) = disc_images_t(c, r, x, y);
    (r * t / x.dist(y)).ln() / (2.0 * PI)
}

fn disc_regular_part(c: Point, r: f64, x: Point, y: Point) -> f64 {
    let (_, _, t) = disc_images_t(c, r, x, y);
    -(r * t).ln() / (2.0 * PI)
}

fn disc_grad1_regular(c: Point, r: f64, x: Point, y: Point) -> Point {
    let (xp, yp, t) = disc_images_t(c, r, x, y);
    // grad_x h = -(1/2pi r) (|y'|^2 x' - y') / t^2
    (xp * yp.norm_sq() - yp) * (-1.0 / (2.0 * PI * r * t * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_disc(resolution: f64) -> Arc<DomainGrid> {
        build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, resolution).unwrap()
    }

    #[test]
    fn disc_mask_area_consistent() {
        let grid = unit_disc(64.0);
        let expected = PI; // r = 1
        let got = grid.area();
        assert!(
            (got - expected).abs() / expected < 0.02,
            "disc area {got} vs {expected}"
        );
        // count matches pi r^2 / h^2 within 2%
        let h = grid.spacing();
        assert!((grid.n_cells() as f64 - PI / (h * h)).abs() < 0.02 * PI / (h * h));
    }

    #[test]
    fn rectangle_mask_is_total() {
        let grid = build_domain(Geometry::Rectangle { width: 2.0, height: 1.0 }, 64.0).unwrap();
        assert_eq!(grid.shape(), (128, 64));
        assert_eq!(grid.n_cells(), 128 * 64);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let err = build_domain(Geometry::Disc { center: Point::ZERO, radius: 0.0 }, 64.0)
            .unwrap_err();
        assert!(err.to_string().contains("radius"), "{err}");
        let err = build_domain(Geometry::Rectangle { width: -1.0, height: 1.0 }, 64.0)
            .unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn coarse_resolution_rejected() {
        let err =
            build_domain(Geometry::Disc { center: Point::ZERO, radius: 0.1 }, 64.0).unwrap_err();
        assert!(matches!(err, DomainError::ResolutionTooCoarse { .. }), "{err}");
    }

    #[test]
    fn masked_centers_strictly_inside() {
        let grid = unit_disc(32.0);
        for k in 0..grid.n_cells() {
            assert!(grid.cell_center(k).norm() < 1.0);
        }
    }

    #[test]
    fn images_green_matches_reference_values() {
        let grid = unit_disc(32.0);
        let op = GreenOperator::new(grid);
        let x = Point::new(0.5, 0.0);
        let y = Point::new(-0.5, 0.0);
        let g = op.green_point(x, y).unwrap();
        assert!((g - (1.25f64).ln() / (2.0 * PI)).abs() < 1e-14);
        // h at the origin diagonal is zero, robin at (0.5, 0) is known
        assert!(op.robin(Point::ZERO).unwrap().abs() < 1e-14);
        let want = -(0.75f64).ln() / (2.0 * PI);
        assert!((op.robin(x).unwrap() - want).abs() < 1e-14);
        assert!((want - 0.045786).abs() < 1e-6);
    }

    #[test]
    fn images_green_symmetric_and_boundary_decaying() {
        let grid = unit_disc(32.0);
        let op = GreenOperator::new(grid);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = Point::new(rnd() * 1.6 - 0.8, rnd() * 1.6 - 0.8);
            let y = Point::new(rnd() * 1.6 - 0.8, rnd() * 1.6 - 0.8);
            if x.norm() >= 0.9 || y.norm() >= 0.9 || x.dist(y) < 1e-3 {
                continue;
            }
            let a = op.green_point(x, y).unwrap();
            let b = op.green_point(y, x).unwrap();
            assert!((a - b).abs() <= 1e-10, "symmetry failed: {a} vs {b}");
        }
        // G(x, y) -> 0 monotonically as y -> boundary along a radius
        let x = Point::new(0.2, 0.1);
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let t = 0.9 + 0.0099 * i as f64;
            let y = Point::new(0.0, t);
            let g = op.green_point(x, y).unwrap();
            assert!(g > 0.0 && g < prev, "not monotone at t={t}: {g} vs {prev}");
            prev = g;
        }
    }

    #[test]
    fn robin_monotone_along_ray() {
        let grid = unit_disc(32.0);
        let op = GreenOperator::new(grid);
        let h0 = op.robin(Point::ZERO).unwrap();
        let h5 = op.robin(Point::new(0.5, 0.0)).unwrap();
        let h9 = op.robin(Point::new(0.9, 0.0)).unwrap();
        assert!(h9 > h5 && h5 > h0);
        // gradient points radially outward at (0.5, 0), vanishes at 0
        let g = op.robin_grad(Point::new(0.5, 0.0)).unwrap();
        assert!(g.x > 0.0 && g.y.abs() < 1e-14);
        let g0 = op.robin_grad(Point::ZERO).unwrap();
        assert!(g0.norm() < 1e-14);
    }

    #[test]
    fn point_outside_and_coincident_rejected() {
        let grid = unit_disc(32.0);
        let op = GreenOperator::new(grid);
        let inside = Point::new(0.1, 0.2);
        assert!(matches!(
            op.green_point(inside, Point::new(1.5, 0.0)),
            Err(DomainError::PointOutside(..))
        ));
        assert!(matches!(
            op.green_point(inside, inside),
            Err(DomainError::CoincidentPoints)
        ));
    }
}
