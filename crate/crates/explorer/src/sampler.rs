//! Coverage-guided rejection sampling of target states.
//!
//! Proposals are uniform in a sampling box; a proposal is rejected when it
//! falls inside an excluded convex region, and otherwise accepted with
//! probability `1 - occupancy`, steering targets toward unexplored space.

use rand::Rng;

use crate::coverage::OccupancyField;
use crate::error::{Error, Result};
use crate::geometry::{BoxBound, ConvexRegion};
use crate::scalar::{fromf, tof, Real};

/// Containment tolerance used for region exclusion.
const REGION_EPS: f64 = 1e-9;

/// What to do when every attempt is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Return the region-feasible attempt with minimum occupancy.
    BestOfAttempts,
    /// Fail with a sampling-exhausted error.
    Error,
}

#[derive(Debug, Clone)]
pub struct SamplerParams {
    pub max_attempts: usize,
    pub fallback: Fallback,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            max_attempts: 1000,
            fallback: Fallback::BestOfAttempts,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws a target point: uniform in `bx`, outside every excluded region,
/// accepted with probability `1 - occupancy` at the draw.
///
/// Points outside the field's bounds count as unexplored (occupancy zero).
/// Deterministic for a fixed RNG state.
pub fn sample_target<T: Real, R: Rng>(
    bx: &BoxBound<T>,
    excluded: &[ConvexRegion<T>],
    field: &OccupancyField<T>,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Vec<T>> {
    params.validate()?;
    let dim = bx.dim();
    if bx
        .lows()
        .iter()
        .zip(bx.highs())
        .any(|(&lo, &hi)| !(hi > lo))
    {
        return Err(Error::InvalidRegion(
            "sampling box must have positive width in every dimension".into(),
        ));
    }
    if dim != field.space().dim() {
        return Err(Error::DimensionMismatch {
            context: "sampling box vs objective space",
            expected: field.space().dim(),
            actual: dim,
        });
    }
    let eps = fromf::<T>(REGION_EPS);
    let mut best: Option<(Vec<T>, f64)> = None;
    for _ in 0..params.max_attempts {
        let point: Vec<T> = bx
            .lows()
            .iter()
            .zip(bx.highs())
            .map(|(&lo, &hi)| lo + (hi - lo) * fromf(rng.random::<f64>()))
            .collect();
        // Region exclusion first; only feasible proposals consume an
        // acceptance draw.
        let mut inside_region = false;
        for region in excluded {
            if region.contains(&point, eps)? {
                inside_region = true;
                break;
            }
        }
        if inside_region {
            continue;
        }
        let occ = if field.space().in_bounds(&point) {
            tof(field.occupancy_at(&point)?)
        } else {
            0.0
        };
        if best.as_ref().map_or(true, |(_, b)| occ < *b) {
            best = Some((point.clone(), occ));
        }
        if rng.random::<f64>() >= occ {
            return Ok(point);
        }
    }
    match (params.fallback, best) {
        (Fallback::BestOfAttempts, Some((point, _))) => Ok(point),
        _ => Err(Error::SamplingExhausted {
            attempts: params.max_attempts,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::ObjectiveSpace;
    use crate::types::State;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn field_1d(sigma: f64) -> OccupancyField<f64> {
        OccupancyField::new(ObjectiveSpace::new(vec![0], vec![(0.0, 100.0)], sigma, 256).unwrap())
    }

    fn bx(lo: f64, hi: f64) -> BoxBound<f64> {
        BoxBound::from_bounds(&[(lo, hi)]).unwrap()
    }

    #[test]
    fn empty_field_returns_first_draw() {
        let field = field_1d(3.0);
        let params = SamplerParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let first = bx(0.0, 100.0).lows()[0] + 100.0 * {
            let mut probe = ChaCha20Rng::seed_from_u64(1);
            probe.random::<f64>()
        };
        let p = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut rng).unwrap();
        assert_eq!(p[0], first);
    }

    #[test]
    fn saturated_field_falls_back_to_best_attempt() {
        let mut field = field_1d(40.0);
        // A wide kernel saturates the whole 1D box.
        for x in [10.0, 30.0, 50.0, 70.0, 90.0] {
            field.insert_states(&[State::new(vec![x]).unwrap()]).unwrap();
        }
        let params = SamplerParams {
            max_attempts: 50,
            fallback: Fallback::BestOfAttempts,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let p = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut rng).unwrap();
        assert!(p[0] >= 0.0 && p[0] <= 100.0);

        let strict = SamplerParams {
            max_attempts: 50,
            fallback: Fallback::Error,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        // With error fallback the saturated field usually still accepts
        // eventually (occupancy < 1 between kernels), so force failure with
        // a fully-excluding region instead.
        let everything = crate::geometry::ConvexRegion::new(&[vec![-10.0], vec![110.0]]).unwrap();
        let err = sample_target(&bx(0.0, 100.0), &[everything], &field, &strict, &mut rng);
        assert!(matches!(err, Err(Error::SamplingExhausted { .. })));
    }

    #[test]
    fn excluded_regions_never_sampled() {
        let field = field_1d(3.0);
        let region = ConvexRegion::new(&[vec![40.0], vec![60.0]]).unwrap();
        let params = SamplerParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_target(&bx(0.0, 100.0), &[region.clone()], &field, &params, &mut rng)
                .unwrap();
            assert!(p[0] < 40.0 || p[0] > 60.0, "sampled inside excluded region: {}", p[0]);
            assert!(p[0] >= 0.0 && p[0] <= 100.0);
        }
    }

    #[test]
    fn dense_left_half_pushes_samples_right() {
        let mut field = field_1d(3.0);
        let states: Vec<State<f64>> = (0..500)
            .map(|i| State::new(vec![i as f64 * 0.1]).unwrap())
            .collect();
        field.insert_states(&states).unwrap();
        let params = SamplerParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut right = 0usize;
        let total = 10_000;
        for _ in 0..total {
            let p = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut rng).unwrap();
            if p[0] > 50.0 {
                right += 1;
            }
        }
        let frac = right as f64 / total as f64;
        assert!(frac > 0.9, "right-half fraction {frac}");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut field = field_1d(3.0);
        field
            .insert_states(&[State::new(vec![30.0]).unwrap()])
            .unwrap();
        let params = SamplerParams::default();
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        let pa = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut a).unwrap();
        let pb = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn degenerate_box_rejected() {
        let field = field_1d(3.0);
        let params = SamplerParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let degenerate = BoxBound::from_bounds(&[(5.0, 5.0)]).unwrap();
        assert!(matches!(
            sample_target(&degenerate, &[], &field, &params, &mut rng),
            Err(Error::InvalidRegion(_))
        ));
    }

    /// Chi-squared goodness-of-fit of the empirical sample density against
    /// `1 - occupancy` restricted to the box.
    #[test]
    fn sample_density_proportional_to_one_minus_occupancy() {
        let mut field = field_1d(8.0);
        for x in [20.0, 30.0, 70.0] {
            field.insert_states(&[State::new(vec![x]).unwrap()]).unwrap();
        }
        let params = SamplerParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(12345);
        let bins = 20usize;
        let draws = 50_000usize;
        let mut counts = vec![0usize; bins];
        for _ in 0..draws {
            let p = sample_target(&bx(0.0, 100.0), &[], &field, &params, &mut rng).unwrap();
            let b = ((p[0] / 100.0) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        // Expected bin masses by fine quadrature of (1 - occupancy).
        let quad = 4000usize;
        let mut masses = vec![0.0f64; bins];
        for q in 0..quad {
            let x = 100.0 * (q as f64 + 0.5) / quad as f64;
            let w = 1.0 - field.occupancy_at(&[x]).unwrap();
            masses[(q * bins) / quad] += w;
        }
        let total_mass: f64 = masses.iter().sum();
        let mut chi2 = 0.0;
        for b in 0..bins {
            let expected = draws as f64 * masses[b] / total_mass;
            let diff = counts[b] as f64 - expected;
            chi2 += diff * diff / expected;
        }
        // 19 degrees of freedom, p = 0.01 critical value.
        assert!(chi2 < 36.19, "chi-squared statistic {chi2}");
    }
}
