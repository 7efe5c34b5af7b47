//! Sampling-region boundaries: a box bound over training data plus one
//! convex region per cluster, with point-containment queries in arbitrary
//! dimension.
//!
//! Containment is a distance-to-hull test computed by Wolfe's min-norm-point
//! algorithm over the generator set (V-representation only); facet
//! enumeration is never needed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{fromf, tof, Real};

/// Generators kept per region after farthest-point thinning.
const MAX_GENERATORS: usize = 512;

/// Axis-aligned box over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBound<T: Real> {
    lows: Vec<T>,
    highs: Vec<T>,
}

impl<T: Real> BoxBound<T> {
    pub fn from_bounds(bounds: &[(T, T)]) -> Result<Self> {
        let (lows, highs): (Vec<T>, Vec<T>) = bounds.iter().copied().unzip();
        if lows.iter().zip(&highs).any(|(l, h)| l > h) {
            return Err(Error::InvalidRegion("box min exceeds max".into()));
        }
        Ok(Self { lows, highs })
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn lows(&self) -> &[T] {
        &self.lows
    }

    pub fn highs(&self) -> &[T] {
        &self.highs
    }

    /// True when some dimension has zero width.
    pub fn degenerate(&self) -> bool {
        self.lows.iter().zip(&self.highs).any(|(l, h)| l == h)
    }

    pub fn contains_point(&self, p: &[T]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    pub fn volume(&self) -> T {
        self.lows
            .iter()
            .zip(&self.highs)
            .map(|(&l, &h)| h - l)
            .fold(T::one(), |a, b| a * b)
    }
}

/// Per-dimension min/max over `points`, each side inflated outward by
/// `margin * (max - min)`.
pub fn box_bound<T: Real>(points: &[Vec<T>], margin: T) -> Result<BoxBound<T>> {
    let first = points.first().ok_or(Error::EmptyData("box bound points"))?;
    let dim = first.len();
    let mut lows = first.clone();
    let mut highs = first.clone();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "box bound points",
                expected: dim,
                actual: p.len(),
            });
        }
        for d in 0..dim {
            if p[d] < lows[d] {
                lows[d] = p[d];
            }
            if p[d] > highs[d] {
                highs[d] = p[d];
            }
        }
    }
    for d in 0..dim {
        let inflate = margin * (highs[d] - lows[d]);
        lows[d] -= inflate;
        highs[d] += inflate;
    }
    let bound = BoxBound { lows, highs };
    if bound.degenerate() {
        log::warn!("box bound is degenerate (zero width in some dimension)");
    }
    Ok(bound)
}

/// Convex hull of a cluster's points, represented by its generators.
#[derive(Debug, Clone)]
pub struct ConvexRegion<T: Real> {
    generators: Vec<Vec<T>>,
    dim: usize,
    degenerate: bool,
}

impl<T: Real> ConvexRegion<T> {
    pub fn new(points: &[Vec<T>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyData("region points"))?;
        let dim = first.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "region points",
                expected: dim,
                actual: points.iter().find(|p| p.len() != dim).unwrap().len(),
            });
        }
        let generators = thin_farthest_point(points, MAX_GENERATORS);
        let degenerate = affine_rank(&generators) < dim;
        Ok(Self {
            generators,
            dim,
            degenerate,
        })
    }

    pub fn generators(&self) -> &[Vec<T>] {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the generators do not span the full dimension (the region
    /// is a lower-dimensional set such as a segment).
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    /// Euclidean distance from `point` to the convex hull of the generators.
    pub fn distance(&self, point: &[T]) -> Result<T> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "region containment query",
                expected: self.dim,
                actual: point.len(),
            });
        }
        Ok(min_norm_distance(&self.generators, point))
    }

    /// True iff the distance from `point` to the hull is at most `eps`.
    pub fn contains(&self, point: &[T], eps: T) -> Result<bool> {
        Ok(self.distance(point)? <= eps)
    }
}

/// One region per cluster. Clusters with fewer than `dim + 1` points yield
/// degenerate regions that contain only points within tolerance of their
/// generators' hull.
pub fn build_regions<T: Real>(clusters: &[Vec<Vec<T>>]) -> Result<Vec<ConvexRegion<T>>> {
    if clusters.is_empty() {
        return Err(Error::EmptyData("clusters"));
    }
    clusters.iter().map(|c| ConvexRegion::new(c)).collect()
}

/// Greedy farthest-point subsample, keeping at most `cap` points.
fn thin_farthest_point<T: Real>(points: &[Vec<T>], cap: usize) -> Vec<Vec<T>> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let dim = points[0].len();
    let n = points.len();
    let inv_n = T::one() / fromf(n as f64);
    let mut centroid = vec![T::zero(); dim];
    for p in points {
        for d in 0..dim {
            centroid[d] += p[d] * inv_n;
        }
    }
    let dist2 = |a: &[T], b: &[T]| -> T {
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum()
    };
    let start = (0..n)
        .max_by(|&i, &j| {
            tof(dist2(&points[i], &centroid))
                .partial_cmp(&tof(dist2(&points[j], &centroid)))
                .unwrap()
        })
        .unwrap();
    let mut chosen = vec![start];
    let mut min_d2: Vec<T> = points.iter().map(|p| dist2(p, &points[start])).collect();
    while chosen.len() < cap {
        let mut best = 0;
        for i in 1..n {
            if min_d2[i] > min_d2[best] {
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..n {
            let d = dist2(&points[i], &points[best]);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Rank of the affine span of `points`.
fn affine_rank<T: Real>(points: &[Vec<T>]) -> usize {
    if points.len() < 2 {
        return 0;
    }
    let dim = points[0].len();
    let base = &points[0];
    let mat = DMatrix::<T>::from_fn(points.len() - 1, dim, |r, c| points[r + 1][c] - base[c]);
    let svd = mat.svd(false, false);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| if b > a { b } else { a });
    if smax == T::zero() {
        return 0;
    }
    let tol = smax * fromf::<T>(points.len().max(dim) as f64) * T::default_epsilon();
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Distance from `point` to the convex hull of `generators` via Wolfe's
/// min-norm-point algorithm on the translated set.
fn min_norm_distance<T: Real>(generators: &[Vec<T>], point: &[T]) -> T {
    let dim = point.len();
    let q: Vec<Vec<T>> = generators
        .iter()
        .map(|g| g.iter().zip(point.iter()).map(|(&a, &b)| a - b).collect())
        .collect();
    let k = q.len();
    let norm2 = |v: &[T]| -> T { v.iter().map(|&x| x * x).sum() };
    let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum() };

    let scale = q
        .iter()
        .map(|v| norm2(v))
        .fold(T::one(), |a, b| if b > a { b } else { a });
    let eps_opt = scale * fromf::<T>(1e-12);
    let eps_zero = fromf::<T>(1e-12);

    let start = (0..k)
        .min_by(|&i, &j| tof(norm2(&q[i])).partial_cmp(&tof(norm2(&q[j]))).unwrap())
        .unwrap();
    let mut support = vec![start];
    let mut lambda = vec![T::one()];
    let mut x = q[start].clone();

    let max_major = 8 * (k + dim) + 32;
    for _ in 0..max_major {
        let xx = norm2(&x);
        // Linear minimization oracle over the generators.
        let j = (0..k)
            .min_by(|&a, &b| tof(dot(&x, &q[a])).partial_cmp(&tof(dot(&x, &q[b]))).unwrap())
            .unwrap();
        if dot(&x, &q[j]) >= xx - eps_opt {
            break;
        }
        if support.contains(&j) {
            break;
        }
        support.push(j);
        lambda.push(T::zero());

        // Minor cycle: move to the affine minimizer, dropping support points
        // whose coefficient would go negative.
        loop {
            let alpha = match affine_minimizer(&q, &support) {
                Some(a) => a,
                None => {
                    support.pop();
                    lambda.pop();
                    break;
                }
            };
            if alpha.iter().all(|&a| a >= -eps_zero) {
                lambda = alpha
                    .iter()
                    .map(|&a| if a < T::zero() { T::zero() } else { a })
                    .collect();
                break;
            }
            let mut theta = T::one();
            for (&l, &a) in lambda.iter().zip(alpha.iter()) {
                if a < l {
                    let denom = l - a;
                    if denom > T::zero() {
                        let t = l / denom;
                        if a < T::zero() && t < theta {
                            theta = t;
                        }
                    }
                }
            }
            for (l, &a) in lambda.iter_mut().zip(alpha.iter()) {
                *l = (T::one() - theta) * *l + theta * a;
            }
            let mut idx = 0;
            while idx < support.len() {
                if lambda[idx] <= eps_zero {
                    lambda.remove(idx);
                    support.remove(idx);
                } else {
                    idx += 1;
                }
            }
            if support.is_empty() {
                return T::zero();
            }
        }
        // Renormalize and recombine.
        let total: T = lambda.iter().copied().sum();
        if total > T::zero() {
            for l in lambda.iter_mut() {
                *l /= total;
            }
        }
        x = vec![T::zero(); dim];
        for (&s_idx, &l) in support.iter().zip(lambda.iter()) {
            for d in 0..dim {
                x[d] += q[s_idx][d] * l;
            }
        }
    }
    norm2(&x).sqrt()
}

/// Minimizer of `|sum a_i q_i|^2` subject to `sum a_i = 1` over the support
/// set, via the KKT system. `None` when the system is singular.
fn affine_minimizer<T: Real>(q: &[Vec<T>], support: &[usize]) -> Option<Vec<T>> {
    let k = support.len();
    let mut m = DMatrix::<T>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = q[support[a]]
                .iter()
                .zip(q[support[b]].iter())
                .map(|(&x, &y)| x * y)
                .sum();
        }
        m[(a, k)] = T::one();
        m[(k, a)] = T::one();
    }
    let mut rhs = nalgebra::DVector::<T>::zeros(k + 1);
    rhs[k] = T::one();
    let lu = m.full_piv_lu();
    let sol = lu.solve(&rhs)?;
    let alpha: Vec<T> = sol.iter().take(k).copied().collect();
    if alpha.iter().any(|a| !crate::scalar::is_finite(*a)) {
        return None;
    }
    Some(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> ConvexRegion<f64> {
        ConvexRegion::new(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn box_bound_min_max() {
        let b = box_bound(&[vec![0.0, 0.0], vec![1.0, 2.0]], 0.0).unwrap();
        assert_eq!(b.lows(), &[0.0, 0.0]);
        assert_eq!(b.highs(), &[1.0, 2.0]);
        assert!(!b.degenerate());
    }

    #[test]
    fn box_bound_single_point_is_degenerate() {
        let b = box_bound(&[vec![3.0, -1.0]], 0.0).unwrap();
        assert!(b.degenerate());
        assert_eq!(b.lows(), b.highs());
    }

    #[test]
    fn box_bound_margin_inflates_each_side() {
        let b = box_bound(&[vec![0.0, 0.0], vec![10.0, 10.0]], 0.1).unwrap();
        assert_relative_eq!(b.lows()[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(b.highs()[0], 11.0, epsilon = 1e-12);
        assert_relative_eq!(b.lows()[1], -1.0, epsilon = 1e-12);
        assert_relative_eq!(b.highs()[1], 11.0, epsilon = 1e-12);
    }

    #[test]
    fn box_bound_empty_errors() {
        assert!(matches!(
            box_bound::<f64>(&[], 0.0),
            Err(Error::EmptyData(_))
        ));
    }

    #[test]
    fn unit_square_containment() {
        let region = unit_square();
        assert!(region.contains(&[0.5, 0.5], 1e-9).unwrap());
        assert!(!region.contains(&[2.0, 2.0], 1e-9).unwrap());
    }

    #[test]
    fn boundary_distance_accuracy() {
        let region = unit_square();
        let eps = 1e-6;
        // Point eps/2 outside the right edge: distance eps/2 <= eps.
        assert!(region.contains(&[1.0 + eps / 2.0, 0.5], eps).unwrap());
        let d = region.distance(&[1.0 + eps / 2.0, 0.5]).unwrap();
        assert_relative_eq!(d, eps / 2.0, max_relative = 1e-6);
        // And clearly outside at 2 eps.
        assert!(!region.contains(&[1.0 + 2.0 * eps, 0.5], eps).unwrap());
    }

    #[test]
    fn generators_contained_in_own_region() {
        let pts = vec![
            vec![0.3, -0.7, 1.1],
            vec![2.0, 0.1, 0.4],
            vec![-1.5, 0.9, 2.2],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
        ];
        let region = ConvexRegion::new(&pts).unwrap();
        for p in &pts {
            assert!(region.contains(p, 1e-9).unwrap(), "generator {p:?} not contained");
        }
    }

    #[test]
    fn collinear_cluster_is_degenerate_segment() {
        let region = ConvexRegion::new(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
        ])
        .unwrap();
        assert!(region.degenerate());
        // On the segment.
        assert!(region.contains(&[0.5, 0.5], 1e-9).unwrap());
        // Off the segment by a perpendicular offset.
        assert!(!region.contains(&[0.5, 0.6], 1e-3).unwrap());
        let d = region.distance(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(d, (0.5f64).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn two_separated_blobs_leave_midpoint_uncovered() {
        let a: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let b: Vec<Vec<f64>> = a.iter().map(|p| vec![p[0] + 10.0, p[1]]).collect();
        let regions = build_regions(&[a, b]).unwrap();
        assert_eq!(regions.len(), 2);
        let mid = [5.5, 0.5];
        for r in &regions {
            assert!(!r.contains(&mid, 1e-6).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let region = unit_square();
        assert!(matches!(
            region.contains(&[0.5], 1e-9),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn thinning_caps_generators_and_keeps_extremes() {
        let mut pts = Vec::new();
        for i in 0..2000 {
            let t = i as f64 / 1999.0;
            pts.push(vec![t.cos() * (1.0 + 0.1 * (i % 7) as f64 / 7.0), t.sin()]);
        }
        let region = ConvexRegion::new(&pts).unwrap();
        assert!(region.generators().len() <= 512);
    }

    #[test]
    fn free_space_exists_between_hulls_and_box() {
        let a: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1])
            .collect();
        let b: Vec<Vec<f64>> = a.iter().map(|p| vec![p[0] + 5.0, p[1] + 5.0]).collect();
        let all: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
        let bound = box_bound(&all, 0.05).unwrap();
        let regions = build_regions(&[a, b]).unwrap();
        // Deterministic lattice probe of the box.
        let mut inside_union = 0;
        let mut total = 0;
        for i in 0..40 {
            for j in 0..40 {
                let p = [
                    bound.lows()[0]
                        + (bound.highs()[0] - bound.lows()[0]) * (i as f64 + 0.5) / 40.0,
                    bound.lows()[1]
                        + (bound.highs()[1] - bound.lows()[1]) * (j as f64 + 0.5) / 40.0,
                ];
                total += 1;
                if regions.iter().any(|r| r.contains(&p, 1e-9).unwrap()) {
                    inside_union += 1;
                }
            }
        }
        let frac = inside_union as f64 / total as f64;
        assert!(frac < 0.5, "union covers too much of the box: {frac}");
    }
}
