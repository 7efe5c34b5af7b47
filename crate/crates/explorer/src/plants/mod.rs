//! Executable systems under test behind a uniform plant interface.

pub mod acas;
pub mod kinematic_car;
pub mod nnet;
pub mod point_mass;

use crate::coverage::ObjectiveSpace;
use crate::error::{Error, Result};
use crate::scalar::{fromf, is_finite, Real};
use crate::types::{ControlInput, State};

pub use acas::{Advisory, AcasConfig, AcasPlant, AcasScenario, AdvisorySelection};
pub use kinematic_car::KinematicCarPlant;
pub use nnet::{parse_nnet, NNetNetwork};
pub use point_mass::PointMassPlant;

/// Static description of a plant: dimensions, input box, step size, initial
/// state, and the default objective space for coverage measurement.
#[derive(Debug, Clone)]
pub struct PlantSpec<T: Real> {
    pub n: usize,
    pub w: usize,
    pub input_bounds: Vec<(T, T)>,
    pub dt: T,
    pub x0: State<T>,
    pub objective: ObjectiveSpace<T>,
}

impl<T: Real> PlantSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.x0.dim() != self.n {
            return Err(Error::DimensionMismatch {
                context: "plant initial state",
                expected: self.n,
                actual: self.x0.dim(),
            });
        }
        if self.input_bounds.len() != self.w {
            return Err(Error::DimensionMismatch {
                context: "plant input bounds",
                expected: self.w,
                actual: self.input_bounds.len(),
            });
        }
        for &(lo, hi) in &self.input_bounds {
            if !(is_finite(lo) && is_finite(hi) && lo < hi) {
                return Err(Error::Config("plant input bounds must be finite with low < high".into()));
            }
        }
        if !(is_finite(self.dt) && self.dt > T::zero()) {
            return Err(Error::Config("plant dt must be positive".into()));
        }
        Ok(())
    }
}

/// A simulate-able system under test: a single-step transition function
/// behind its spec.
pub trait Plant<T: Real> {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &PlantSpec<T>;
    fn step(&self, x: &State<T>, u: &ControlInput<T>) -> Result<State<T>>;
}

/// Classical 4th-order Runge-Kutta step with the input held constant.
pub fn step_rk4<T: Real, F>(dynamics: F, x: &[T], u: &[T], dt: T) -> Result<Vec<T>>
where
    F: Fn(&[T], &[T]) -> Vec<T>,
{
    let add_scaled = |base: &[T], k: &[T], scale: T| -> Vec<T> {
        base.iter()
            .zip(k.iter())
            .map(|(&b, &v)| b + v * scale)
            .collect()
    };
    let half = dt * fromf::<T>(0.5);
    let k1 = dynamics(x, u);
    let k2 = dynamics(&add_scaled(x, &k1, half), u);
    let k3 = dynamics(&add_scaled(x, &k2, half), u);
    let k4 = dynamics(&add_scaled(x, &k3, dt), u);
    let sixth = dt / fromf::<T>(6.0);
    let two = fromf::<T>(2.0);
    let next: Vec<T> = (0..x.len())
        .map(|i| x[i] + (k1[i] + two * k2[i] + two * k3[i] + k4[i]) * sixth)
        .collect();
    if next.iter().any(|v| !is_finite(*v)) {
        return Err(Error::NonFinite("integration step"));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_constant_field_leaves_state_unchanged() {
        let next = step_rk4(|x, _| vec![0.0; x.len()], &[1.0, -2.0], &[], 0.1).unwrap();
        assert_eq!(next, vec![1.0, -2.0]);
    }

    #[test]
    fn rk4_is_exact_on_constant_derivative() {
        let next = step_rk4(|_, u| vec![u[0]], &[1.0], &[2.0], 0.1).unwrap();
        assert_relative_eq!(next[0], 1.2, epsilon = 1e-15);
    }

    #[test]
    fn rk4_matches_exponential_growth() {
        let next = step_rk4(|x, _| vec![x[0]], &[1.0], &[], 0.1).unwrap();
        assert!((next[0] - (0.1f64).exp()).abs() < 1e-7, "rk4 {}", next[0]);
    }

    #[test]
    fn rk4_rejects_non_finite_derivative() {
        let err = step_rk4(|_, _| vec![f64::NAN], &[1.0], &[], 0.1);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rk4_generic_at_f32() {
        let next = step_rk4(|x, _| vec![x[0]], &[1.0f32], &[], 0.1f32).unwrap();
        assert!((next[0] - 0.1f32.exp()).abs() < 1e-5);
    }
}
