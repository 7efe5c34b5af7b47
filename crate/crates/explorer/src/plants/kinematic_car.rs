//! Kinematic single-track car: velocity, orientation, and planar position
//! driven by acceleration and normalized steering rate.

use crate::coverage::ObjectiveSpace;
use crate::error::{Error, Result};
use crate::scalar::{fromf, Real};
use crate::types::{ControlInput, State};

use super::{step_rk4, Plant, PlantSpec};

/// Continuous dynamics: state `(v, phi, x, y)`, inputs `(accel, steer)`.
pub fn kinematic_car_derivative<T: Real>(x: &[T], u: &[T]) -> Vec<T> {
    vec![u[0], u[1], x[0] * x[1].cos(), x[0] * x[1].sin()]
}

/// Kinematic car with the standard input constraints: acceleration within
/// +-9.81 m/s^2 and steering rate within +-0.4 rad/s, starting at 15 m/s.
#[derive(Debug, Clone)]
pub struct KinematicCarPlant<T: Real> {
    spec: PlantSpec<T>,
}

impl<T: Real> KinematicCarPlant<T> {
    pub fn new() -> Self {
        let objective = ObjectiveSpace::with_defaults(
            vec![2, 3],
            vec![(fromf(-600.0), fromf(600.0)), (fromf(-600.0), fromf(600.0))],
        )
        .expect("static objective space is valid");
        let spec = PlantSpec {
            n: 4,
            w: 2,
            input_bounds: vec![
                (fromf(-9.81), fromf(9.81)),
                (fromf(-0.4), fromf(0.4)),
            ],
            dt: fromf(0.1),
            x0: State::new(vec![fromf(15.0), T::zero(), T::zero(), T::zero()])
                .expect("initial state is finite"),
            objective,
        };
        Self { spec }
    }
}

impl<T: Real> Default for KinematicCarPlant<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Plant<T> for KinematicCarPlant<T> {
    fn name(&self) -> &'static str {
        "kinematic_car"
    }

    fn spec(&self) -> &PlantSpec<T> {
        &self.spec
    }

    fn step(&self, x: &State<T>, u: &ControlInput<T>) -> Result<State<T>> {
        if x.dim() != self.spec.n {
            return Err(Error::DimensionMismatch {
                context: "car state",
                expected: self.spec.n,
                actual: x.dim(),
            });
        }
        if u.dim() != self.spec.w {
            return Err(Error::DimensionMismatch {
                context: "car input",
                expected: self.spec.w,
                actual: u.dim(),
            });
        }
        // Out-of-bounds inputs are clamped; the MPC projection should make
        // this unreachable.
        let mut clamped = u.values().to_vec();
        for (d, v) in clamped.iter_mut().enumerate() {
            let (lo, hi) = self.spec.input_bounds[d];
            if *v < lo || *v > hi {
                log::warn!("car input component {d} out of bounds; clamping");
                *v = if *v < lo { lo } else { hi };
            }
        }
        let next = step_rk4(kinematic_car_derivative, x.values(), &clamped, self.spec.dt)?;
        State::new(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derivative_at_initial_set_is_straight_line() {
        let d = kinematic_car_derivative(&[15.0, 0.0, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(d, vec![0.0, 0.0, 15.0, 0.0]);
    }

    #[test]
    fn derivative_heading_up() {
        let d = kinematic_car_derivative(
            &[15.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            &[0.0, 0.0],
        );
        assert_relative_eq!(d[2], 0.0, epsilon = 1e-12);
        assert_relative_eq!(d[3], 15.0, epsilon = 1e-12);
    }

    #[test]
    fn coasting_ten_steps_travels_fifteen_meters() {
        let plant = KinematicCarPlant::<f64>::new();
        let mut x = plant.spec().x0.clone();
        let u = ControlInput::new(vec![0.0, 0.0]).unwrap();
        for _ in 0..10 {
            x = plant.step(&x, &u).unwrap();
        }
        assert_relative_eq!(x.values()[2], 15.0, epsilon = 1e-9);
        assert_relative_eq!(x.values()[3], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn speed_invariant_without_acceleration() {
        let plant = KinematicCarPlant::<f64>::new();
        let mut x = plant.spec().x0.clone();
        let u = ControlInput::new(vec![0.0, 0.3]).unwrap();
        for _ in 0..100 {
            x = plant.step(&x, &u).unwrap();
            assert!((x.values()[0] - 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_input_is_clamped() {
        let plant = KinematicCarPlant::<f64>::new();
        let x = plant.spec().x0.clone();
        let wild = ControlInput::new(vec![100.0, 0.0]).unwrap();
        let tame = ControlInput::new(vec![9.81, 0.0]).unwrap();
        assert_eq!(
            plant.step(&x, &wild).unwrap(),
            plant.step(&x, &tame).unwrap()
        );
    }
}
