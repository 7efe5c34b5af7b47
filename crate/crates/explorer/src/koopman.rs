//! Data-driven surrogate modeling: random Fourier feature observables,
//! extended dynamic mode decomposition of the lifted linear dynamics, and a
//! grid-search hyperparameter tuner.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{fromf, is_finite, tof, Real};
use crate::types::{ControlInput, DataTrace, State};

/// Observable map: identity coordinates followed by random Fourier features.
///
/// The feature parameters are reproducible from the seed: frequencies are
/// drawn row-major (feature by feature) as i.i.d. Gaussians with standard
/// deviation `1/lengthscale`, then phases uniform in `[0, 2*pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableMap<T: Real> {
    n: usize,
    m_rff: usize,
    frequencies: DMatrix<T>,
    phases: DVector<T>,
    lengthscale: T,
    seed: u64,
}

impl<T: Real> ObservableMap<T> {
    pub fn new(n: usize, m_rff: usize, lengthscale: T, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        if !(is_finite(lengthscale) && lengthscale > T::zero()) {
            return Err(Error::Config("lengthscale must be positive".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut freq = Vec::with_capacity(m_rff * n);
        for _ in 0..m_rff * n {
            let z: f64 = rng.sample(StandardNormal);
            freq.push(fromf::<T>(z) / lengthscale);
        }
        let mut phases = Vec::with_capacity(m_rff);
        for _ in 0..m_rff {
            phases.push(fromf::<T>(rng.random::<f64>() * 2.0 * std::f64::consts::PI));
        }
        Ok(Self {
            n,
            m_rff,
            frequencies: DMatrix::from_row_slice(m_rff, n, &freq),
            phases: DVector::from_vec(phases),
            lengthscale,
            seed,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn feature_count(&self) -> usize {
        self.m_rff
    }

    /// Total lifted dimension `n + m_rff`.
    pub fn lifted_dim(&self) -> usize {
        self.n + self.m_rff
    }

    pub fn lengthscale(&self) -> T {
        self.lengthscale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Lifts a state: `[x; sqrt(2/m_rff) * cos(W x + phi)]`. The first `n`
    /// entries are the state itself, so read-out is coordinate selection.
    pub fn lift(&self, x: &State<T>) -> Result<DVector<T>> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch {
                context: "observable lift",
                expected: self.n,
                actual: x.dim(),
            });
        }
        let mut g = DVector::zeros(self.lifted_dim());
        for (i, &v) in x.values().iter().enumerate() {
            g[i] = v;
        }
        if self.m_rff > 0 {
            let xv = DVector::from_row_slice(x.values());
            let arg = &self.frequencies * &xv + &self.phases;
            let scale = (fromf::<T>(2.0) / fromf::<T>(self.m_rff as f64)).sqrt();
            for i in 0..self.m_rff {
                g[self.n + i] = scale * arg[i].cos();
            }
        }
        Ok(g)
    }
}

/// Lifted linear dynamics `g(x+) = A g(x) + B u` with the observable map
/// needed to lift any state.
#[derive(Debug, Clone)]
pub struct KoopmanModel<T: Real> {
    a: DMatrix<T>,
    b_in: DMatrix<T>,
    map: ObservableMap<T>,
    reg: T,
    val_rmse: Option<T>,
}

impl<T: Real> KoopmanModel<T> {
    pub fn from_parts(
        a: DMatrix<T>,
        b_in: DMatrix<T>,
        map: ObservableMap<T>,
        reg: T,
        val_rmse: Option<T>,
    ) -> Result<Self> {
        let m = map.lifted_dim();
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "koopman A matrix",
                expected: m,
                actual: a.nrows().max(a.ncols()),
            });
        }
        if b_in.nrows() != m {
            return Err(Error::DimensionMismatch {
                context: "koopman B matrix rows",
                expected: m,
                actual: b_in.nrows(),
            });
        }
        if a.iter().chain(b_in.iter()).any(|v| !is_finite(*v)) {
            return Err(Error::NonFinite("koopman model matrices"));
        }
        Ok(Self {
            a,
            b_in,
            map,
            reg,
            val_rmse,
        })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b_in(&self) -> &DMatrix<T> {
        &self.b_in
    }

    pub fn map(&self) -> &ObservableMap<T> {
        &self.map
    }

    pub fn reg(&self) -> T {
        self.reg
    }

    pub fn val_rmse(&self) -> Option<T> {
        self.val_rmse
    }

    pub fn state_dim(&self) -> usize {
        self.map.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.b_in.ncols()
    }

    pub fn lifted_dim(&self) -> usize {
        self.map.lifted_dim()
    }

    /// Open-loop rollout in lifted space; state k is the identity block of
    /// the lifted vector. Returns `inputs.len() + 1` states.
    pub fn predict(&self, x0: &State<T>, inputs: &[ControlInput<T>]) -> Result<Vec<State<T>>> {
        let n = self.state_dim();
        let w = self.input_dim();
        let mut g = self.map.lift(x0)?;
        let mut out = Vec::with_capacity(inputs.len() + 1);
        out.push(x0.clone());
        for u in inputs {
            if u.dim() != w {
                return Err(Error::DimensionMismatch {
                    context: "predict input",
                    expected: w,
                    actual: u.dim(),
                });
            }
            let mut next = &self.a * &g;
            if w > 0 {
                let uv = DVector::from_row_slice(u.values());
                next += &self.b_in * uv;
            }
            g = next;
            out.push(State::new(g.as_slice()[..n].to_vec())?);
        }
        Ok(out)
    }
}

fn check_trace_consistency<T: Real>(traces: &[DataTrace<T>], n: usize) -> Result<(usize, T)> {
    let first = traces.first().ok_or(Error::EmptyData("training traces"))?;
    if first.state_dim() != n {
        return Err(Error::DimensionMismatch {
            context: "trace state dimension",
            expected: n,
            actual: first.state_dim(),
        });
    }
    let w = first.input_dim();
    let dt = first.dt();
    for t in traces {
        if t.state_dim() != n {
            return Err(Error::InconsistentTraces("mixed state dimensions"));
        }
        if t.input_dim() != w && t.steps() > 0 {
            return Err(Error::InconsistentTraces("mixed input dimensions"));
        }
        if t.dt() != dt {
            return Err(Error::InconsistentTraces("mixed time steps"));
        }
    }
    Ok((w, dt))
}

/// Ridge least-squares EDMD over all consecutive snapshot pairs.
///
/// Solves `min |G+ - [A B] [G; U]|^2 + reg |[A B]|^2` via the normal
/// equations.
pub fn fit_edmd<T: Real>(
    traces: &[DataTrace<T>],
    map: &ObservableMap<T>,
    reg: T,
) -> Result<KoopmanModel<T>> {
    let n = map.state_dim();
    let (w, _dt) = check_trace_consistency(traces, n)?;
    let m = map.lifted_dim();
    let pairs: usize = traces.iter().map(|t| t.steps()).sum();
    if pairs < m + w {
        return Err(Error::UnderdeterminedFit {
            pairs,
            unknowns: m + w,
        });
    }
    if !(is_finite(reg) && reg >= T::zero()) {
        return Err(Error::Config("ridge coefficient must be non-negative".into()));
    }

    let mut z = DMatrix::<T>::zeros(m + w, pairs);
    let mut gp = DMatrix::<T>::zeros(m, pairs);
    let mut col = 0;
    for trace in traces {
        let mut lifted_prev = map.lift(&trace.states()[0])?;
        for k in 0..trace.steps() {
            let lifted_next = map.lift(&trace.states()[k + 1])?;
            for r in 0..m {
                z[(r, col)] = lifted_prev[r];
            }
            for (r, &u) in trace.inputs()[k].values().iter().enumerate() {
                z[(m + r, col)] = u;
            }
            for r in 0..m {
                gp[(r, col)] = lifted_next[r];
            }
            lifted_prev = lifted_next;
            col += 1;
        }
    }

    let mut gram = &z * z.transpose();
    for i in 0..m + w {
        gram[(i, i)] += reg;
    }
    let rhs = &z * gp.transpose(); // (m+w) x m, equals (Gp Z^T)^T
    let kt = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular EDMD normal equations".into()))?,
    };
    let k = kt.transpose();
    let a = k.columns(0, m).into_owned();
    let b_in = k.columns(m, w).into_owned();
    KoopmanModel::from_parts(a, b_in, map.clone(), reg, None)
}

/// Hyperparameter grid for [`tune`].
#[derive(Debug, Clone)]
pub struct TuneGrid<T: Real> {
    pub m_rff: Vec<usize>,
    /// Multipliers of the mean per-dimension standard deviation of the
    /// training states.
    pub lengthscale_factors: Vec<T>,
    pub regs: Vec<T>,
}

impl<T: Real> Default for TuneGrid<T> {
    fn default() -> Self {
        Self {
            m_rff: vec![0, 40, 100, 200],
            lengthscale_factors: vec![fromf(0.5), fromf(1.0), fromf(2.0), fromf(5.0)],
            regs: vec![fromf(1e-6), fromf(1e-3), fromf(1e-1)],
        }
    }
}

/// Validation horizon used by the tuner.
const TUNE_HORIZON: usize = 10;

/// Open-loop prediction RMSE over non-overlapping windows of `horizon`
/// steps. `None` when prediction diverges.
pub fn open_loop_rmse<T: Real>(
    model: &KoopmanModel<T>,
    traces: &[DataTrace<T>],
    horizon: usize,
) -> Option<T> {
    let mut total = T::zero();
    let mut count = 0usize;
    for trace in traces {
        let h = horizon.min(trace.steps());
        if h == 0 {
            continue;
        }
        let mut start = 0;
        while start + h <= trace.steps() {
            let pred = model
                .predict(&trace.states()[start], &trace.inputs()[start..start + h])
                .ok()?;
            for j in 1..=h {
                for (p, t) in pred[j]
                    .values()
                    .iter()
                    .zip(trace.states()[start + j].values())
                {
                    let e = *p - *t;
                    total += e * e;
                }
            }
            count += h * trace.state_dim();
            start += h;
        }
    }
    if count == 0 {
        return None;
    }
    let rmse = (total / fromf(count as f64)).sqrt();
    is_finite(rmse).then_some(rmse)
}

/// Mean per-dimension standard deviation of all states in `traces`.
fn mean_state_std<T: Real>(traces: &[DataTrace<T>]) -> T {
    let n = traces[0].state_dim();
    let count: usize = traces.iter().map(|t| t.states().len()).sum();
    let inv = T::one() / fromf(count as f64);
    let mut mean = vec![T::zero(); n];
    for t in traces {
        for s in t.states() {
            for (d, &v) in s.values().iter().enumerate() {
                mean[d] += v * inv;
            }
        }
    }
    let mut var = vec![T::zero(); n];
    for t in traces {
        for s in t.states() {
            for (d, &v) in s.values().iter().enumerate() {
                let e = v - mean[d];
                var[d] += e * e * inv;
            }
        }
    }
    let sum: T = var.iter().map(|&v| v.sqrt()).sum();
    sum / fromf(n as f64)
}

/// Grid-search tuner: 75/25 train/validation split by trace (seeded
/// shuffle), fits every grid point on the training split and scores
/// 10-step open-loop RMSE on validation.
///
/// Ties (within `1e-9` relative) are broken toward smaller `m_rff`, then
/// larger `reg`.
pub fn tune<T: Real>(
    traces: &[DataTrace<T>],
    grid: &TuneGrid<T>,
    seed: u64,
) -> Result<KoopmanModel<T>> {
    if traces.len() < 4 {
        return Err(Error::InsufficientData {
            have: traces.len(),
            need: 4,
        });
    }
    if grid.m_rff.is_empty() || grid.lengthscale_factors.is_empty() || grid.regs.is_empty() {
        return Err(Error::Config("tune grid must be non-empty".into()));
    }
    let n = traces[0].state_dim();
    check_trace_consistency(traces, n)?;

    let mut order: Vec<usize> = (0..traces.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_val = (traces.len() / 4).max(1);
    let val: Vec<DataTrace<T>> = order[..n_val].iter().map(|&i| traces[i].clone()).collect();
    let train: Vec<DataTrace<T>> = order[n_val..].iter().map(|&i| traces[i].clone()).collect();

    let base_std = {
        let s = mean_state_std(&train);
        if is_finite(s) && s > T::zero() {
            s
        } else {
            T::one()
        }
    };

    struct Candidate<T: Real> {
        m_rff: usize,
        reg: T,
        rmse: T,
        model: KoopmanModel<T>,
    }
    let mut candidates: Vec<Candidate<T>> = Vec::new();
    for &m_rff in &grid.m_rff {
        // The lengthscale is irrelevant without Fourier features; evaluate
        // one representative factor.
        let ls_factors: &[T] = if m_rff == 0 {
            &grid.lengthscale_factors[..1]
        } else {
            &grid.lengthscale_factors
        };
        for &factor in ls_factors {
            let lengthscale = factor * base_std;
            let map = ObservableMap::new(n, m_rff, lengthscale, seed)?;
            for &reg in &grid.regs {
                let model = match fit_edmd(&train, &map, reg) {
                    Ok(m) => m,
                    Err(Error::UnderdeterminedFit { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if let Some(rmse) = open_loop_rmse(&model, &val, TUNE_HORIZON) {
                    candidates.push(Candidate {
                        m_rff,
                        reg,
                        rmse,
                        model,
                    });
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::Numerical(
            "no tuning candidate produced a finite validation error".into(),
        ));
    }
    let best_rmse = candidates
        .iter()
        .map(|c| tof(c.rmse))
        .fold(f64::INFINITY, f64::min);
    let tie_band = best_rmse + (1e-9 * best_rmse).max(1e-12);
    let winner = candidates
        .into_iter()
        .filter(|c| tof(c.rmse) <= tie_band)
        .min_by(|a, b| {
            a.m_rff
                .cmp(&b.m_rff)
                .then(tof(b.reg).partial_cmp(&tof(a.reg)).unwrap())
        })
        .unwrap();
    let rmse = winner.rmse;
    let mut model = winner.model;
    model.val_rmse = Some(rmse);
    Ok(model)
}
