//! Shared domain types: states, inputs, data traces, and the trajectory
//! normalization helpers used by clustering and model fitting.
//!
//! All types are immutable values after construction and safe to share
//! read-only across workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{fromf, is_finite, Real};

/// A plant state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T: Real> {
    values: Vec<T>,
}

impl<T: Real> State<T> {
    /// Builds a state, rejecting non-finite entries.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !is_finite(*v)) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// One control input applied for a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput<T: Real> {
    values: Vec<T>,
}

impl<T: Real> ControlInput<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !is_finite(*v)) {
            return Err(Error::NonFinite("control input"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// A non-empty input sequence with uniform component dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector<T: Real> {
    inputs: Vec<ControlInput<T>>,
}

impl<T: Real> InputVector<T> {
    pub fn new(inputs: Vec<ControlInput<T>>) -> Result<Self> {
        let first = inputs.first().ok_or(Error::EmptyData("input vector"))?;
        let w = first.dim();
        for u in &inputs {
            if u.dim() != w {
                return Err(Error::DimensionMismatch {
                    context: "input vector",
                    expected: w,
                    actual: u.dim(),
                });
            }
        }
        Ok(Self { inputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[ControlInput<T>] {
        &self.inputs
    }

    pub fn into_inputs(self) -> Vec<ControlInput<T>> {
        self.inputs
    }
}

/// How a trace was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceOrigin {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "coverage-guided")]
    CoverageGuided,
}

/// One simulation run: a state trajectory plus the input sequence that
/// produced it.
///
/// Inputs are stored as a plain sequence rather than an [`InputVector`] so a
/// run that terminates at step zero (target already met) is representable.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTrace<T: Real> {
    states: Vec<State<T>>,
    inputs: Vec<ControlInput<T>>,
    dt: T,
    seed: u64,
    origin: TraceOrigin,
}

impl<T: Real> DataTrace<T> {
    pub fn new(
        states: Vec<State<T>>,
        inputs: Vec<ControlInput<T>>,
        dt: T,
        seed: u64,
        origin: TraceOrigin,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyData("trace states"));
        }
        if states.len() != inputs.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "trace states vs inputs",
                expected: inputs.len() + 1,
                actual: states.len(),
            });
        }
        if dt <= T::zero() || !is_finite(dt) {
            return Err(Error::Config("trace dt must be positive".into()));
        }
        let n = states[0].dim();
        if states.iter().any(|s| s.dim() != n) {
            return Err(Error::InconsistentTraces("mixed state dimensions in one trace"));
        }
        if let Some(first) = inputs.first() {
            let w = first.dim();
            if inputs.iter().any(|u| u.dim() != w) {
                return Err(Error::InconsistentTraces("mixed input dimensions in one trace"));
            }
        }
        Ok(Self {
            states,
            inputs,
            dt,
            seed,
            origin,
        })
    }

    pub fn states(&self) -> &[State<T>] {
        &self.states
    }

    pub fn inputs(&self) -> &[ControlInput<T>] {
        &self.inputs
    }

    /// Number of steps (transitions); states are `steps() + 1`.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.dim())
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin(&self) -> TraceOrigin {
        self.origin
    }
}

/// Linear interpolation of a state sequence at equally spaced fractional
/// indices, preserving the endpoints exactly.
///
/// When `points` equals the source length the sequence is returned unchanged
/// (the fractional indices land on integers).
pub fn resample_states<T: Real>(states: &[State<T>], points: usize) -> Result<Vec<State<T>>> {
    if states.len() < 2 {
        return Err(Error::DegenerateTrace("resampling needs at least 2 states"));
    }
    assert!(points >= 2, "resample points must be >= 2");
    let last = states.len() - 1;
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        if i == 0 {
            out.push(states[0].clone());
            continue;
        }
        if i == points - 1 {
            out.push(states[last].clone());
            continue;
        }
        let pos = fromf::<T>((i * last) as f64) / fromf::<T>((points - 1) as f64);
        let lo = tof_floor(pos).min(last - 1);
        let frac = pos - fromf::<T>(lo as f64);
        if frac == T::zero() {
            out.push(states[lo].clone());
            continue;
        }
        let a = states[lo].values();
        let b = states[lo + 1].values();
        let vals: Vec<T> = a
            .iter()
            .zip(b.iter())
            .map(|(&x, &y)| x + (y - x) * frac)
            .collect();
        out.push(State::new(vals)?);
    }
    Ok(out)
}

fn tof_floor<T: Real>(x: T) -> usize {
    crate::scalar::tof(x).floor() as usize
}

/// Resamples the state trajectory of a trace; see [`resample_states`].
pub fn resample_trajectory<T: Real>(trace: &DataTrace<T>, points: usize) -> Result<Vec<State<T>>> {
    resample_states(trace.states(), points)
}

/// Concatenates state vectors in time order into one flat feature vector.
pub fn flatten_trajectory<T: Real>(states: &[State<T>]) -> Result<Vec<T>> {
    let first = states.first().ok_or(Error::EmptyData("trajectory"))?;
    let n = first.dim();
    let mut flat = Vec::with_capacity(states.len() * n);
    for s in states {
        if s.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "flatten trajectory",
                expected: n,
                actual: s.dim(),
            });
        }
        flat.extend_from_slice(s.values());
    }
    Ok(flat)
}

/// Inverse of [`flatten_trajectory`] for a known state dimension.
pub fn unflatten_trajectory<T: Real>(flat: &[T], n: usize) -> Result<Vec<State<T>>> {
    if n == 0 || flat.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "unflatten trajectory",
            expected: n.max(1),
            actual: flat.len(),
        });
    }
    flat.chunks(n).map(|c| State::new(c.to_vec())).collect()
}
