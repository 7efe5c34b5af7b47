//! 3D point mass with exact discrete position updates.

use crate::coverage::ObjectiveSpace;
use crate::error::{Error, Result};
use crate::scalar::{fromf, Real};
use crate::types::{ControlInput, State};

use super::{Plant, PlantSpec};

/// Exact discrete update: position plus velocity input, componentwise.
pub fn point_mass_step<T: Real>(x: &[T], v: &[T]) -> Vec<T> {
    x.iter().zip(v.iter()).map(|(&a, &b)| a + b).collect()
}

/// Point mass starting at the origin with per-component velocity inputs.
#[derive(Debug, Clone)]
pub struct PointMassPlant<T: Real> {
    spec: PlantSpec<T>,
}

impl<T: Real> PointMassPlant<T> {
    /// Velocity bounds of one unit per step, a (-100, 100)^3 objective box
    /// over the full state, and the default kernel width.
    pub fn new() -> Self {
        let bounds = vec![(fromf(-100.0), fromf(100.0)); 3];
        let objective = ObjectiveSpace::with_defaults(vec![0, 1, 2], bounds)
            .expect("static objective space is valid");
        let spec = PlantSpec {
            n: 3,
            w: 3,
            input_bounds: vec![(fromf(-1.0), fromf(1.0)); 3],
            dt: T::one(),
            x0: State::new(vec![T::zero(); 3]).expect("zero state is finite"),
            objective,
        };
        Self { spec }
    }
}

impl<T: Real> Default for PointMassPlant<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Plant<T> for PointMassPlant<T> {
    fn name(&self) -> &'static str {
        "point_mass"
    }

    fn spec(&self) -> &PlantSpec<T> {
        &self.spec
    }

    fn step(&self, x: &State<T>, u: &ControlInput<T>) -> Result<State<T>> {
        if x.dim() != self.spec.n || u.dim() != self.spec.w {
            return Err(Error::DimensionMismatch {
                context: "point mass step",
                expected: self.spec.n,
                actual: x.dim(),
            });
        }
        State::new(point_mass_step(x.values(), u.values()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_moves_by_velocity() {
        assert_eq!(point_mass_step(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn three_steps_accumulate() {
        let mut x = vec![0.0, 0.0, 0.0];
        for _ in 0..3 {
            x = point_mass_step(&x, &[1.0, 0.0, 0.0]);
        }
        assert_eq!(x, vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_velocity_is_fixed_point() {
        let x = vec![4.0, -1.0, 2.5];
        assert_eq!(point_mass_step(&x, &[0.0, 0.0, 0.0]), x);
    }

    #[test]
    fn plant_interface_round_trip() {
        let plant = PointMassPlant::<f64>::new();
        plant.spec().validate().unwrap();
        let x = plant.spec().x0.clone();
        let u = ControlInput::new(vec![0.5, -0.5, 1.0]).unwrap();
        let next = plant.step(&x, &u).unwrap();
        assert_eq!(next.values(), &[0.5, -0.5, 1.0]);
    }
}
