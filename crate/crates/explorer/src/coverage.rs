//! State-space coverage scoring over a bounded objective space.
//!
//! The score is the integral, over the objective bounds, of the pointwise
//! maximum of isotropic Gaussian kernels centered at the projections of
//! visited states. The field keeps a running max per integration node, so
//! score and occupancy queries never rescan the visited-state set.
//!
//! Integration uses the midpoint rule on a uniform cell lattice up to three
//! dimensions and quasi-random (Halton) Monte Carlo above that.

use crate::error::{Error, Result};
use crate::scalar::{fromf, is_finite, tof, Real};
use crate::types::State;

/// Number of Halton nodes used for four and more objective dimensions.
pub const HALTON_SAMPLES: usize = 200_000;

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Grid resolution defaults per objective dimension count.
pub fn default_cells_per_dim(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 128,
        _ => 48,
    }
}

/// Bounded objective space: which state coordinates are measured, the
/// per-dimension bounds, and the kernel width.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpace<T: Real> {
    projection: Vec<usize>,
    bounds: Vec<(T, T)>,
    sigma: T,
    cells_per_dim: usize,
}

impl<T: Real> ObjectiveSpace<T> {
    pub fn new(
        projection: Vec<usize>,
        bounds: Vec<(T, T)>,
        sigma: T,
        cells_per_dim: usize,
    ) -> Result<Self> {
        if projection.is_empty() {
            return Err(Error::Config("objective space needs at least one dimension".into()));
        }
        if projection.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                context: "objective projection vs bounds",
                expected: projection.len(),
                actual: bounds.len(),
            });
        }
        for &(lo, hi) in &bounds {
            if !(is_finite(lo) && is_finite(hi) && lo < hi) {
                return Err(Error::Config("objective bounds must satisfy low < high".into()));
            }
        }
        if !(is_finite(sigma) && sigma > T::zero()) {
            return Err(Error::Config("kernel sigma must be positive".into()));
        }
        if cells_per_dim < 10 {
            return Err(Error::Config("cells_per_dim must be at least 10".into()));
        }
        Ok(Self {
            projection,
            bounds,
            sigma,
            cells_per_dim,
        })
    }

    /// Builds a space with `sigma` = 3% of the smallest bound width and the
    /// default grid resolution for its dimension.
    pub fn with_defaults(projection: Vec<usize>, bounds: Vec<(T, T)>) -> Result<Self> {
        let min_width = bounds
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a });
        let sigma = min_width * fromf(0.03);
        let cells = default_cells_per_dim(projection.len());
        Self::new(projection, bounds, sigma, cells)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn projection(&self) -> &[usize] {
        &self.projection
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    /// Peak density of the kernel: `(2 pi sigma^2)^(-dim/2)`.
    pub fn kernel_peak(&self) -> T {
        let two_pi_var = fromf::<T>(2.0 * std::f64::consts::PI) * self.sigma * self.sigma;
        let exponent = -(self.dim() as i32);
        two_pi_var.powf(fromf(0.5 * exponent as f64))
    }

    /// Selects the projected coordinates of a state, in order, unscaled.
    pub fn project(&self, state: &State<T>) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.projection.len());
        for &idx in &self.projection {
            let v = state.values().get(idx).ok_or(Error::ProjectionIndex {
                index: idx,
                dim: state.dim(),
            })?;
            out.push(*v);
        }
        Ok(out)
    }

    pub fn in_bounds(&self, point: &[T]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.bounds.iter())
                .all(|(&p, &(lo, hi))| p >= lo && p <= hi)
    }

    fn volume(&self) -> T {
        self.bounds
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .fold(T::one(), |a, b| a * b)
    }
}

#[derive(Debug, Clone)]
enum FieldNodes<T: Real> {
    /// Uniform cell lattice; `values` is row-major over cell indices.
    Lattice { values: Vec<T> },
    /// Halton nodes for high-dimensional spaces. Projected insertions are
    /// kept so occupancy queries can evaluate the exact kernel max.
    Halton {
        nodes: Vec<T>,
        values: Vec<T>,
        inserted: Vec<Vec<T>>,
    },
}

/// Running max-kernel field over the objective space.
#[derive(Debug, Clone)]
pub struct OccupancyField<T: Real> {
    space: ObjectiveSpace<T>,
    nodes: FieldNodes<T>,
    inserted_count: usize,
}

impl<T: Real> OccupancyField<T> {
    pub fn new(space: ObjectiveSpace<T>) -> Self {
        let dim = space.dim();
        let nodes = if dim <= 3 {
            let total = space.cells_per_dim().pow(dim as u32);
            FieldNodes::Lattice {
                values: vec![T::zero(); total],
            }
        } else {
            let mut nodes = Vec::with_capacity(HALTON_SAMPLES * dim);
            for i in 0..HALTON_SAMPLES {
                for (d, &(lo, hi)) in space.bounds().iter().enumerate() {
                    let u = radical_inverse((i + 1) as u64, HALTON_PRIMES[d % HALTON_PRIMES.len()]);
                    nodes.push(lo + (hi - lo) * fromf(u));
                }
            }
            FieldNodes::Halton {
                nodes,
                values: vec![T::zero(); HALTON_SAMPLES],
                inserted: Vec::new(),
            }
        };
        Self {
            space,
            nodes,
            inserted_count: 0,
        }
    }

    pub fn space(&self) -> &ObjectiveSpace<T> {
        &self.space
    }

    pub fn inserted_count(&self) -> usize {
        self.inserted_count
    }

    /// Absorbs the projections of `states`, max-updating every node.
    ///
    /// States projecting outside the bounds are legal; they contribute only
    /// their kernel tail inside the bounds.
    pub fn insert_states(&mut self, states: &[State<T>]) -> Result<()> {
        if states.is_empty() {
            return Err(Error::EmptyData("states to insert"));
        }
        let projected: Vec<Vec<T>> = states
            .iter()
            .map(|s| self.space.project(s))
            .collect::<Result<_>>()?;
        for mu in &projected {
            self.insert_point(mu);
        }
        self.inserted_count += states.len();
        Ok(())
    }

    fn insert_point(&mut self, mu: &[T]) {
        let sigma = self.space.sigma();
        let inv_two_var = T::one() / (fromf::<T>(2.0) * sigma * sigma);
        let norm1d = T::one() / (sigma * fromf::<T>((2.0 * std::f64::consts::PI).sqrt()));
        let dim = self.space.dim();
        let cells = self.space.cells_per_dim();
        match &mut self.nodes {
            FieldNodes::Lattice { values } => {
                // Separable kernel: per-dimension 1D tables, then an outer
                // product sweep. O(dim*cells) exps per state instead of
                // O(cells^dim).
                let mut tables: Vec<Vec<T>> = Vec::with_capacity(dim);
                for (d, &(lo, hi)) in self.space.bounds().iter().enumerate() {
                    let width = (hi - lo) / fromf(cells as f64);
                    let mut table = Vec::with_capacity(cells);
                    for i in 0..cells {
                        let center = lo + width * fromf(i as f64 + 0.5);
                        let diff = center - mu[d];
                        table.push(norm1d * (-(diff * diff) * inv_two_var).exp());
                    }
                    tables.push(table);
                }
                let mut scratch: Vec<T> = vec![T::one()];
                for table in &tables {
                    let mut next = Vec::with_capacity(scratch.len() * cells);
                    for &p in &scratch {
                        for &t in table {
                            next.push(p * t);
                        }
                    }
                    scratch = next;
                }
                for (v, k) in values.iter_mut().zip(scratch.iter()) {
                    if *k > *v {
                        *v = *k;
                    }
                }
            }
            FieldNodes::Halton {
                nodes,
                values,
                inserted,
            } => {
                let peak = self.space.kernel_peak();
                for (j, value) in values.iter_mut().enumerate() {
                    let node = &nodes[j * dim..(j + 1) * dim];
                    let mut d2 = T::zero();
                    for d in 0..dim {
                        let diff = node[d] - mu[d];
                        d2 += diff * diff;
                    }
                    let k = peak * (-d2 * inv_two_var).exp();
                    if k > *value {
                        *value = k;
                    }
                }
                inserted.push(mu.to_vec());
            }
        }
    }

    /// Midpoint-rule (or quasi-Monte-Carlo) approximation of the coverage
    /// integral. Zero when nothing has been inserted.
    pub fn coverage_score(&self) -> T {
        match &self.nodes {
            FieldNodes::Lattice { values } => {
                let cells = self.space.cells_per_dim();
                let cell_volume = self.space.volume()
                    / fromf::<T>((cells as f64).powi(self.space.dim() as i32));
                values.iter().copied().sum::<T>() * cell_volume
            }
            FieldNodes::Halton { values, .. } => {
                let node_volume = self.space.volume() / fromf(HALTON_SAMPLES as f64);
                values.iter().copied().sum::<T>() * node_volume
            }
        }
    }

    /// Normalized kernel height at a point: 0 = unexplored, approaching 1 at
    /// a visited state's projection.
    pub fn occupancy_at(&self, point: &[T]) -> Result<T> {
        if point.len() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                context: "occupancy query",
                expected: self.space.dim(),
                actual: point.len(),
            });
        }
        for (d, (&p, &(lo, hi))) in point.iter().zip(self.space.bounds().iter()).enumerate() {
            if p < lo || p > hi {
                return Err(Error::OutOfBounds { dim: d });
            }
        }
        match &self.nodes {
            FieldNodes::Lattice { values } => {
                let cells = self.space.cells_per_dim();
                let mut flat = 0usize;
                for (&p, &(lo, hi)) in point.iter().zip(self.space.bounds().iter()) {
                    let width = (hi - lo) / fromf(cells as f64);
                    let idx = (tof((p - lo) / width).floor() as usize).min(cells - 1);
                    flat = flat * cells + idx;
                }
                let occ = values[flat] / self.space.kernel_peak();
                Ok(if occ > T::one() { T::one() } else { occ })
            }
            FieldNodes::Halton { inserted, .. } => {
                // Exact kernel-height ratio over the insertions; the Halton
                // nodes only serve the integral.
                let sigma = self.space.sigma();
                let inv_two_var = T::one() / (fromf::<T>(2.0) * sigma * sigma);
                let mut best = T::zero();
                for mu in inserted {
                    let mut d2 = T::zero();
                    for (a, b) in point.iter().zip(mu.iter()) {
                        let diff = *a - *b;
                        d2 += diff * diff;
                    }
                    let occ = (-d2 * inv_two_var).exp();
                    if occ > best {
                        best = occ;
                    }
                }
                Ok(best)
            }
        }
    }

    /// Iterates integration nodes as (coordinates, value) pairs, in a fixed
    /// deterministic order. Used by the snapshot export.
    pub fn nodes(&self) -> Vec<(Vec<T>, T)> {
        match &self.nodes {
            FieldNodes::Lattice { values } => {
                let cells = self.space.cells_per_dim();
                let dim = self.space.dim();
                let mut out = Vec::with_capacity(values.len());
                for (flat, &v) in values.iter().enumerate() {
                    let mut idx = flat;
                    let mut coords = vec![T::zero(); dim];
                    for d in (0..dim).rev() {
                        let i = idx % cells;
                        idx /= cells;
                        let (lo, hi) = self.space.bounds()[d];
                        let width = (hi - lo) / fromf(cells as f64);
                        coords[d] = lo + width * fromf(i as f64 + 0.5);
                    }
                    out.push((coords, v));
                }
                out
            }
            FieldNodes::Halton { nodes, values, .. } => {
                let dim = self.space.dim();
                values
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (nodes[j * dim..(j + 1) * dim].to_vec(), v))
                    .collect()
            }
        }
    }

    /// Replaces node values from a snapshot (resume support). The snapshot
    /// must come from a field with the same space.
    pub fn restore_values(&mut self, restored: Vec<T>, inserted_count: usize) -> Result<()> {
        let values = match &mut self.nodes {
            FieldNodes::Lattice { values } => values,
            FieldNodes::Halton { values, .. } => values,
        };
        if restored.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "field snapshot size",
                expected: values.len(),
                actual: restored.len(),
            });
        }
        *values = restored;
        self.inserted_count = inserted_count;
        Ok(())
    }
}

/// Van der Corput radical inverse in the given base.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space_1d(sigma: f64, cells: usize) -> ObjectiveSpace<f64> {
        ObjectiveSpace::new(vec![0], vec![(0.0, 100.0)], sigma, cells).unwrap()
    }

    fn s(v: f64) -> State<f64> {
        State::new(vec![v]).unwrap()
    }

    #[test]
    fn project_selects_coordinates() {
        let space =
            ObjectiveSpace::new(vec![2, 3], vec![(-1.0, 1.0), (-1.0, 1.0)], 0.06, 32).unwrap();
        let state = State::new(vec![15.0, 0.0, 7.0, -2.0]).unwrap();
        assert_eq!(space.project(&state).unwrap(), vec![7.0, -2.0]);

        let full = ObjectiveSpace::new(
            vec![0, 1, 2],
            vec![(-10.0, 10.0); 3],
            0.6,
            16,
        )
        .unwrap();
        let pm = State::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(full.project(&pm).unwrap(), vec![1.0, 2.0, 3.0]);

        let one = space_1d(3.0, 256);
        assert_eq!(one.project(&s(20.0)).unwrap(), vec![20.0]);
    }

    #[test]
    fn project_rejects_bad_index() {
        let space = ObjectiveSpace::new(vec![5], vec![(0.0, 1.0)], 0.03, 16).unwrap();
        let state = State::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            space.project(&state),
            Err(Error::ProjectionIndex { index: 5, dim: 2 })
        ));
    }

    #[test]
    fn space_validation() {
        assert!(ObjectiveSpace::new(vec![0], vec![(1.0, 0.0)], 3.0, 256).is_err());
        assert!(ObjectiveSpace::new(vec![0], vec![(0.0, 1.0)], 0.0, 256).is_err());
        assert!(ObjectiveSpace::new(vec![0], vec![(0.0, 1.0)], 0.1, 5).is_err());
        assert!(ObjectiveSpace::new(vec![0, 1], vec![(0.0, 1.0)], 0.1, 16).is_err());
    }

    #[test]
    fn default_sigma_is_three_percent_of_min_width() {
        let space =
            ObjectiveSpace::with_defaults(vec![0, 1], vec![(0.0, 100.0), (0.0, 50.0)]).unwrap();
        assert_relative_eq!(space.sigma(), 1.5, epsilon = 1e-12);
        assert_eq!(space.cells_per_dim(), 128);
    }

    #[test]
    fn single_insert_sets_every_cell_to_its_kernel_value() {
        let space = space_1d(3.0, 64);
        let mut field = OccupancyField::new(space.clone());
        field.insert_states(&[s(20.0)]).unwrap();
        let sigma = 3.0f64;
        for (coords, v) in field.nodes() {
            let d = coords[0] - 20.0;
            let expected =
                (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            assert_relative_eq!(v, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn duplicate_insert_leaves_field_unchanged() {
        let mut field = OccupancyField::new(space_1d(3.0, 256));
        field.insert_states(&[s(20.0), s(60.0)]).unwrap();
        let before = field.coverage_score();
        field.insert_states(&[s(20.0)]).unwrap();
        let after = field.coverage_score();
        assert!((after - before).abs() < 1e-12);
        assert_eq!(field.inserted_count(), 3);
    }

    #[test]
    fn kernel_value_between_two_distant_states() {
        // Unit check of the kernel itself at the geometry quoted for the
        // midpoint between insertions at 20 and 60 with sigma = 3.
        let sigma = 3.0f64;
        let kernel = |d: f64| {
            (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        assert_relative_eq!(kernel(20.0), 2.9164e-11, max_relative = 1e-3);

        // The grid value at the cell containing 40 sits in the same decade.
        let mut field = OccupancyField::new(space_1d(3.0, 256));
        field.insert_states(&[s(20.0), s(60.0)]).unwrap();
        let occ = field.occupancy_at(&[40.0]).unwrap();
        let value = occ * field.space().kernel_peak();
        assert!(value > 1e-11 && value < 9e-11, "midpoint cell value {value}");
    }

    #[test]
    fn empty_field_scores_zero() {
        let field = OccupancyField::new(space_1d(3.0, 256));
        assert_eq!(field.coverage_score(), 0.0);
        assert_eq!(field.occupancy_at(&[50.0]).unwrap(), 0.0);
    }

    #[test]
    fn occupancy_peaks_at_inserted_state() {
        let mut field = OccupancyField::new(space_1d(3.0, 256));
        field.insert_states(&[s(20.0)]).unwrap();
        let occ = field.occupancy_at(&[20.0]).unwrap();
        assert!(occ > 0.99, "occupancy at insertion {occ}");
    }

    #[test]
    fn occupancy_one_sigma_away() {
        let mut field = OccupancyField::new(space_1d(3.0, 2560));
        field.insert_states(&[s(20.0)]).unwrap();
        let occ = field.occupancy_at(&[23.0]).unwrap();
        assert_relative_eq!(occ, (-0.5f64).exp(), epsilon = 2e-3);
    }

    #[test]
    fn occupancy_out_of_bounds_errors() {
        let field = OccupancyField::new(space_1d(3.0, 256));
        assert!(matches!(
            field.occupancy_at(&[150.0]),
            Err(Error::OutOfBounds { dim: 0 })
        ));
    }

    #[test]
    fn score_monotone_under_insertions() {
        let mut field = OccupancyField::new(space_1d(3.0, 128));
        let mut prev = 0.0;
        for i in 0..40 {
            let x = (i as f64 * 37.0) % 100.0;
            field.insert_states(&[s(x)]).unwrap();
            let score = field.coverage_score();
            assert!(score >= prev - 1e-9, "score decreased: {prev} -> {score}");
            prev = score;
        }
    }

    #[test]
    fn diminishing_similarity() {
        let sigma = 3.0;
        let base = 40.0;
        let mut prev = -1.0;
        for k in 0..=12 {
            let delta = sigma * k as f64 * 0.5;
            let mut field = OccupancyField::new(space_1d(sigma, 256));
            field.insert_states(&[s(base), s(base + delta)]).unwrap();
            let score = field.coverage_score();
            assert!(
                score >= prev - 1e-9,
                "score not non-decreasing in separation at delta={delta}"
            );
            prev = score;
        }
    }

    #[test]
    fn halton_field_integral_of_single_kernel_near_one() {
        let space = ObjectiveSpace::new(
            vec![0, 1, 2, 3],
            vec![(-10.0, 10.0); 4],
            1.0,
            16,
        )
        .unwrap();
        let mut field = OccupancyField::new(space);
        field
            .insert_states(&[State::new(vec![0.0, 0.0, 0.0, 0.0]).unwrap()])
            .unwrap();
        let score = field.coverage_score();
        assert!((score - 1.0).abs() < 0.01, "4D kernel mass {score}");
        // Exact occupancy in Halton mode.
        let occ = field.occupancy_at(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(occ, (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn f32_field_matches_f64_coarsely() {
        let space =
            ObjectiveSpace::<f32>::new(vec![0], vec![(0.0, 100.0)], 3.0, 128).unwrap();
        let mut field = OccupancyField::new(space);
        field
            .insert_states(&[State::new(vec![20.0f32]).unwrap(), State::new(vec![60.0f32]).unwrap()])
            .unwrap();
        assert!((field.coverage_score() - 2.0).abs() < 0.05);
    }
}
