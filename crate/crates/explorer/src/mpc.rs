//! Model predictive control on the lifted linear surrogate: plan a
//! box-constrained input sequence minimizing the distance of the projected
//! terminal state to a target, applied in receding horizon against the true
//! plant.
//!
//! The cost is convex quadratic in the stacked inputs, solved by projected
//! gradient descent with backtracking; the projection makes box feasibility
//! a hard guarantee.

use nalgebra::{DMatrix, DVector};

use crate::coverage::ObjectiveSpace;
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;
use crate::plants::Plant;
use crate::scalar::{fromf, is_finite, Real};
use crate::types::{ControlInput, DataTrace, InputVector, State, TraceOrigin};

#[derive(Debug, Clone)]
pub struct MpcParams<T: Real> {
    /// Planning horizon in steps.
    pub horizon: usize,
    /// Per-component input bounds.
    pub input_lows: Vec<T>,
    pub input_highs: Vec<T>,
    /// Weight of the input-effort term.
    pub effort_weight: T,
    pub pgd_iterations: usize,
    /// Replan every this many applied steps.
    pub replan_every: usize,
    /// Stop the receding-horizon loop when the projected state is within
    /// this distance of the target. Zero disables early stopping in
    /// practice, keeping trace lengths budget-exact.
    pub target_tolerance: T,
}

impl<T: Real> MpcParams<T> {
    /// Defaults with the given input box.
    pub fn new(input_lows: Vec<T>, input_highs: Vec<T>) -> Result<Self> {
        let params = Self {
            horizon: 15,
            input_lows,
            input_highs,
            effort_weight: fromf(1e-4),
            pgd_iterations: 100,
            replan_every: 1,
            target_tolerance: T::zero(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("mpc horizon must be at least 1".into()));
        }
        if self.replan_every < 1 {
            return Err(Error::Config("replan_every must be at least 1".into()));
        }
        if self.effort_weight < T::zero() || !is_finite(self.effort_weight) {
            return Err(Error::Config("effort weight must be non-negative".into()));
        }
        if self.input_lows.len() != self.input_highs.len() {
            return Err(Error::DimensionMismatch {
                context: "mpc input bounds",
                expected: self.input_lows.len(),
                actual: self.input_highs.len(),
            });
        }
        for (&lo, &hi) in self.input_lows.iter().zip(&self.input_highs) {
            if !(is_finite(lo) && is_finite(hi) && lo <= hi) {
                return Err(Error::Config("mpc input bounds must be finite with low <= high".into()));
            }
        }
        if self.target_tolerance < T::zero() {
            return Err(Error::Config("target tolerance must be non-negative".into()));
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        self.input_lows.len()
    }
}

/// Precomputed terminal-state map: `terminal = p + sum_i C_i u_i`.
struct TerminalMap<T: Real> {
    p: DVector<T>,
    c: Vec<DMatrix<T>>, // per-step n_obj x w blocks
}

fn build_terminal_map<T: Real>(
    model: &KoopmanModel<T>,
    g0: &DVector<T>,
    space: &ObjectiveSpace<T>,
    horizon: usize,
) -> TerminalMap<T> {
    let n_obj = space.dim();
    // A^H g0 by repeated matvec.
    let mut ag = g0.clone();
    for _ in 0..horizon {
        ag = model.a() * ag;
    }
    let select = |m: &DMatrix<T>| -> DMatrix<T> {
        DMatrix::from_fn(n_obj, m.ncols(), |r, c| m[(space.projection()[r], c)])
    };
    // V_k = A^k B; C_i = select(V_{H-1-i}).
    let mut v = model.b_in().clone();
    let mut selected = vec![select(&v)];
    for _ in 1..horizon {
        v = model.a() * v;
        selected.push(select(&v));
    }
    let p = DVector::from_fn(n_obj, |r, _| ag[space.projection()[r]]);
    let c = (0..horizon).map(|i| selected[horizon - 1 - i].clone()).collect();
    TerminalMap { p, c }
}

fn objective<T: Real>(
    map: &TerminalMap<T>,
    target: &DVector<T>,
    effort: T,
    u: &[DVector<T>],
) -> T {
    let mut terminal = map.p.clone();
    for (c, ui) in map.c.iter().zip(u) {
        terminal += c * ui;
    }
    let residual = terminal - target;
    let mut j = residual.norm_squared();
    for ui in u {
        j += effort * ui.norm_squared();
    }
    j
}

fn gradient<T: Real>(
    map: &TerminalMap<T>,
    target: &DVector<T>,
    effort: T,
    u: &[DVector<T>],
) -> Vec<DVector<T>> {
    let mut terminal = map.p.clone();
    for (c, ui) in map.c.iter().zip(u) {
        terminal += c * ui;
    }
    let residual = terminal - target;
    let two = fromf::<T>(2.0);
    map.c
        .iter()
        .zip(u)
        .map(|(c, ui)| c.transpose() * &residual * two + ui * (two * effort))
        .collect()
}

fn clamp_inputs<T: Real>(u: &mut [DVector<T>], lows: &[T], highs: &[T]) {
    for ui in u.iter_mut() {
        for d in 0..ui.len() {
            if ui[d] < lows[d] {
                ui[d] = lows[d];
            } else if ui[d] > highs[d] {
                ui[d] = highs[d];
            }
        }
    }
}

/// Squared spectral norm of the stacked per-step blocks, estimated by power
/// iteration on `C^T C`.
fn stacked_operator_norm2<T: Real>(c: &[DMatrix<T>]) -> T {
    let w = c[0].ncols();
    let h = c.len();
    if w == 0 {
        return T::zero();
    }
    let dim = h * w;
    let mut v = DVector::from_element(dim, T::one() / fromf::<T>((dim as f64).sqrt()));
    let mut norm2 = T::zero();
    for _ in 0..20 {
        // y = C v (n_obj), then z = C^T y.
        let mut y = DVector::zeros(c[0].nrows());
        for (i, ci) in c.iter().enumerate() {
            let vi = v.rows(i * w, w).into_owned();
            y += ci * vi;
        }
        let mut z = DVector::zeros(dim);
        for (i, ci) in c.iter().enumerate() {
            let zi = ci.transpose() * &y;
            for d in 0..w {
                z[i * w + d] = zi[d];
            }
        }
        let zn = z.norm();
        if zn == T::zero() {
            return T::zero();
        }
        norm2 = zn; // |C^T C v| -> largest eigenvalue of C^T C = sigma_max^2
        v = z / zn;
    }
    norm2
}

/// Plans a box-feasible input sequence of length `horizon` approximately
/// minimizing the terminal distance to `target` plus an effort penalty.
///
/// Deterministic: projected gradient descent from `U = 0` with backtracking
/// line search.
pub fn plan<T: Real>(
    model: &KoopmanModel<T>,
    g0: &DVector<T>,
    target: &[T],
    space: &ObjectiveSpace<T>,
    params: &MpcParams<T>,
) -> Result<InputVector<T>> {
    params.validate()?;
    if target.len() != space.dim() {
        return Err(Error::DimensionMismatch {
            context: "mpc target",
            expected: space.dim(),
            actual: target.len(),
        });
    }
    if g0.len() != model.lifted_dim() {
        return Err(Error::DimensionMismatch {
            context: "mpc lifted state",
            expected: model.lifted_dim(),
            actual: g0.len(),
        });
    }
    let w = model.input_dim();
    if params.input_dim() != w {
        return Err(Error::DimensionMismatch {
            context: "mpc input bounds",
            expected: w,
            actual: params.input_dim(),
        });
    }
    let h = params.horizon;
    let tmap = build_terminal_map(model, g0, space, h);
    let target_v = DVector::from_row_slice(target);
    let effort = params.effort_weight;

    let mut u: Vec<DVector<T>> = (0..h).map(|_| DVector::zeros(w)).collect();
    if w == 0 {
        return InputVector::new(u.iter().map(|_| ControlInput::new(vec![]).unwrap()).collect());
    }

    let sigma2 = stacked_operator_norm2(&tmap.c);
    let curvature = sigma2 + effort;
    let alpha0 = if curvature > T::zero() {
        T::one() / curvature
    } else {
        // Constant objective; any feasible point is optimal.
        clamp_inputs(&mut u, &params.input_lows, &params.input_highs);
        return InputVector::new(
            u.into_iter()
                .map(|ui| ControlInput::new(ui.as_slice().to_vec()).unwrap())
                .collect(),
        );
    };

    clamp_inputs(&mut u, &params.input_lows, &params.input_highs);
    let mut j = objective(&tmap, &target_v, effort, &u);
    let mut alpha = alpha0;
    let half = fromf::<T>(0.5);
    for _ in 0..params.pgd_iterations {
        let grad = gradient(&tmap, &target_v, effort, &u);
        // Backtracking on the projection arc with the standard quadratic
        // upper-bound acceptance rule.
        alpha = if alpha * fromf::<T>(2.0) < alpha0 {
            alpha * fromf::<T>(2.0)
        } else {
            alpha0
        };
        let mut accepted = false;
        for _ in 0..60 {
            let mut u_next: Vec<DVector<T>> = u
                .iter()
                .zip(&grad)
                .map(|(ui, gi)| ui - gi * alpha)
                .collect();
            clamp_inputs(&mut u_next, &params.input_lows, &params.input_highs);
            let j_next = objective(&tmap, &target_v, effort, &u_next);
            let mut lin = T::zero();
            let mut dist2 = T::zero();
            for ((gi, un), uo) in grad.iter().zip(&u_next).zip(&u) {
                let diff = un - uo;
                lin += gi.dot(&diff);
                dist2 += diff.norm_squared();
            }
            if j_next <= j + lin + dist2 / (fromf::<T>(2.0) * alpha) {
                let moved = dist2.sqrt();
                u = u_next;
                j = j_next;
                accepted = true;
                if moved <= fromf::<T>(1e-14) * (T::one() + j.sqrt()) {
                    return finish_plan(u);
                }
                break;
            }
            alpha *= half;
        }
        if !accepted {
            break;
        }
    }
    finish_plan(u)
}

fn finish_plan<T: Real>(u: Vec<DVector<T>>) -> Result<InputVector<T>> {
    InputVector::new(
        u.into_iter()
            .map(|ui| ControlInput::new(ui.as_slice().to_vec()).unwrap())
            .collect(),
    )
}

/// Receding-horizon simulation against the true plant: at each step the
/// true state is lifted, a fresh plan is computed, and only the first input
/// is applied.
///
/// Stops after `steps` plant steps or when the projected state reaches the
/// target tolerance. `trace_seed` is recorded in the returned trace.
pub fn run_mpc_simulation<T: Real>(
    plant: &dyn Plant<T>,
    model: &KoopmanModel<T>,
    x0: &State<T>,
    target: &[T],
    steps: usize,
    params: &MpcParams<T>,
    space: &ObjectiveSpace<T>,
    trace_seed: u64,
) -> Result<DataTrace<T>> {
    if plant.spec().n != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "plant vs model state dimension",
            expected: plant.spec().n,
            actual: model.state_dim(),
        });
    }
    if plant.spec().w != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "plant vs model input dimension",
            expected: plant.spec().w,
            actual: model.input_dim(),
        });
    }
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut inputs = Vec::new();
    let mut plan_buffer: Vec<ControlInput<T>> = Vec::new();
    let mut buffer_pos = 0usize;
    for step in 0..steps {
        let projected = space.project(&x)?;
        let dist = projected
            .iter()
            .zip(target)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        if dist <= params.target_tolerance {
            break;
        }
        if buffer_pos == 0 || buffer_pos >= params.replan_every || buffer_pos >= plan_buffer.len() {
            let g0 = model.map().lift(&x)?;
            plan_buffer = plan(model, &g0, target, space, params)?.into_inputs();
            buffer_pos = 0;
        }
        let u = plan_buffer[buffer_pos].clone();
        buffer_pos += 1;
        x = plant.step(&x, &u).map_err(|e| Error::PlantStep {
            step,
            source: Box::new(e),
        })?;
        states.push(x.clone());
        inputs.push(u);
    }
    DataTrace::new(states, inputs, plant.spec().dt, trace_seed, TraceOrigin::CoverageGuided)
}
