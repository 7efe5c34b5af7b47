//! Two-phase orchestration: iterative coverage-guided model training and
//! MPC-based test-case generation with coverage accounting.
//!
//! Everything is a pure function of (configuration, seed): per-trace and
//! per-sample RNG streams are derived from the master seed, so reruns are
//! byte-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::coverage::{ObjectiveSpace, OccupancyField};
use crate::error::{Error, Result};
use crate::geometry::{box_bound, build_regions, BoxBound, ConvexRegion};
use crate::koopman::{tune, KoopmanModel, TuneGrid};
use crate::mpc::{run_mpc_simulation, MpcParams};
use crate::plants::Plant;
use crate::refine::{refine_training_data, Refined, RefineParams};
use crate::sampler::{sample_target, SamplerParams};
use crate::trace_io;
use crate::types::{ControlInput, DataTrace, TraceOrigin};

/// How sampling regions are built during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// One convex hull per cluster (the default).
    MultiHull,
    /// A single hull over all refined training data.
    SingleHull,
    /// Box bound only, no hull exclusion.
    FixedBox,
}

/// MPC settings independent of the plant's input box.
#[derive(Debug, Clone)]
pub struct MpcSettings {
    pub horizon: usize,
    pub effort_weight: f64,
    pub pgd_iterations: usize,
    pub replan_every: usize,
    pub target_tolerance: f64,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon: 15,
            effort_weight: 1e-4,
            pgd_iterations: 100,
            replan_every: 1,
            target_tolerance: 0.0,
        }
    }
}

impl MpcSettings {
    pub fn to_params(&self, plant: &dyn Plant<f64>) -> Result<MpcParams<f64>> {
        let (lows, highs): (Vec<f64>, Vec<f64>) =
            plant.spec().input_bounds.iter().copied().unzip();
        let params = MpcParams {
            horizon: self.horizon,
            input_lows: lows,
            input_highs: highs,
            effort_weight: self.effort_weight,
            pgd_iterations: self.pgd_iterations,
            replan_every: self.replan_every,
            target_tolerance: self.target_tolerance,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Parameters of the training phase.
#[derive(Debug, Clone)]
pub struct TrainParams {
    /// Training iterations.
    pub iterations: usize,
    /// Simulations per iteration.
    pub sim_count: usize,
    /// Initial cluster count; grows by one per iteration.
    pub cluster_count: usize,
    /// Per-cluster selection rate.
    pub rate: f64,
    pub resample_points: usize,
    /// Steps per generated trace.
    pub trace_steps: usize,
    /// Box inflation around training data.
    pub box_margin: f64,
    pub bound_mode: BoundMode,
    pub sampler: SamplerParams,
    pub mpc: MpcSettings,
    pub tune_grid: TuneGrid<f64>,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(seed: u64) -> Self {
        Self {
            iterations: 4,
            sim_count: 20,
            cluster_count: 5,
            rate: 0.5,
            resample_points: 50,
            trace_steps: 100,
            box_margin: 0.05,
            bound_mode: BoundMode::MultiHull,
            sampler: SamplerParams::default(),
            mpc: MpcSettings::default(),
            tune_grid: TuneGrid::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.sim_count < self.cluster_count {
            return Err(Error::Config(
                "sim_count must be at least the cluster count".into(),
            ));
        }
        if self.trace_steps < 1 {
            return Err(Error::Config("trace_steps must be at least 1".into()));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config("selection rate must be in (0, 1]".into()));
        }
        if self.box_margin < 0.0 {
            return Err(Error::Config("box margin must be non-negative".into()));
        }
        self.sampler.validate()?;
        Ok(())
    }
}

mod stream {
    pub const RANDOM_TRACE: u64 = 1;
    pub const REFINE: u64 = 2;
    pub const TUNE: u64 = 3;
    pub const TRAIN_SAMPLE: u64 = 4;
    pub const TEST_CASE: u64 = 5;
}

/// Independent RNG stream seed for (master seed, domain, index).
fn stream_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut z = seed
        ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates `count` traces with inputs drawn i.i.d. uniform over the
/// plant's input box.
pub fn generate_random_traces(
    plant: &dyn Plant<f64>,
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<DataTrace<f64>>> {
    if count < 1 {
        return Err(Error::Config("random trace count must be at least 1".into()));
    }
    let spec = plant.spec();
    let mut traces = Vec::with_capacity(count);
    for i in 0..count {
        let trace_seed = stream_seed(seed, stream::RANDOM_TRACE, i as u64);
        let mut rng = ChaCha20Rng::seed_from_u64(trace_seed);
        let mut x = spec.x0.clone();
        let mut states = vec![x.clone()];
        let mut inputs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let u = ControlInput::new(
                spec.input_bounds
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                    .collect(),
            )?;
            x = plant.step(&x, &u)?;
            states.push(x.clone());
            inputs.push(u);
        }
        traces.push(DataTrace::new(
            states,
            inputs,
            spec.dt,
            trace_seed,
            TraceOrigin::Random,
        )?);
    }
    Ok(traces)
}

/// Coverage score of a trace set on a fresh field.
pub fn score_traces(space: &ObjectiveSpace<f64>, traces: &[DataTrace<f64>]) -> Result<f64> {
    let mut field = OccupancyField::new(space.clone());
    for t in traces {
        field.insert_states(t.states())?;
    }
    Ok(field.coverage_score())
}

/// Per-iteration training report.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iteration: usize,
    pub cluster_count: usize,
    /// Traces entering refinement.
    pub pool_size: usize,
    pub selected_count: usize,
    /// Coverage score of the refined training set on a fresh field.
    pub training_score: f64,
    pub val_rmse: Option<f64>,
    /// Targets sampled for the coverage-guided simulations.
    pub targets: Vec<Vec<f64>>,
    pub assignments: Vec<(usize, usize)>,
    pub box_bound: BoxBound<f64>,
    pub regions: Vec<ConvexRegion<f64>>,
}

/// Output of the training phase.
pub struct TrainOutput {
    pub model: KoopmanModel<f64>,
    pub refined: Refined<f64>,
    /// The occupancy field accumulated over all coverage-guided traces;
    /// carried into test generation.
    pub field: OccupancyField<f64>,
    pub reports: Vec<IterationReport>,
}

/// Iterative coverage-guided model training.
///
/// Iteration `i` refines the union of the previous selection and the
/// previous iteration's coverage-guided traces with `cluster_count + i`
/// clusters, tunes a surrogate on the selection, rebuilds the sampling
/// region, and generates `sim_count` new traces by MPC toward targets
/// sampled against the occupancy field.
pub fn train_model(
    plant: &dyn Plant<f64>,
    space: &ObjectiveSpace<f64>,
    params: &TrainParams,
) -> Result<TrainOutput> {
    params.validate()?;
    let mpc_params = params.mpc.to_params(plant)?;
    let mut field = OccupancyField::new(space.clone());
    let mut reports = Vec::with_capacity(params.iterations);

    let mut previous_selected: Vec<DataTrace<f64>> = Vec::new();
    let mut new_traces =
        generate_random_traces(plant, params.sim_count, params.trace_steps, params.seed)?;
    let mut result: Option<(KoopmanModel<f64>, Refined<f64>)> = None;

    for iteration in 0..params.iterations {
        let wrap = |e: Error| -> Error {
            Error::Numerical(format!("training iteration {iteration}: {e}"))
        };
        let pool: Vec<DataTrace<f64>> = previous_selected
            .iter()
            .cloned()
            .chain(new_traces.drain(..))
            .collect();
        let k = params.cluster_count + iteration;
        let refine_params = RefineParams {
            k,
            rate: params.rate,
            resample_points: params.resample_points,
            seed: stream_seed(params.seed, stream::REFINE, iteration as u64),
        };
        let refined = refine_training_data(&pool, &refine_params).map_err(wrap)?;
        let training_score = score_traces(space, &refined.selected)?;

        let model = tune(
            &refined.selected,
            &params.tune_grid,
            stream_seed(params.seed, stream::TUNE, iteration as u64),
        )
        .map_err(wrap)?;

        // Sampling region from the refined clusters, projected into the
        // objective space.
        let cluster_points: Vec<Vec<Vec<f64>>> = refined
            .clusters
            .iter()
            .map(|members| {
                members
                    .iter()
                    .flat_map(|&m| refined.selected[m].states())
                    .map(|s| space.project(s))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let all_points: Vec<Vec<f64>> = cluster_points.iter().flatten().cloned().collect();
        let bx = box_bound(&all_points, params.box_margin)?;
        let regions = match params.bound_mode {
            BoundMode::MultiHull => build_regions(&cluster_points)?,
            BoundMode::SingleHull => build_regions(std::slice::from_ref(&all_points))?,
            BoundMode::FixedBox => Vec::new(),
        };

        let mut targets = Vec::with_capacity(params.sim_count);
        for sim in 0..params.sim_count {
            let sim_seed = stream_seed(
                params.seed,
                stream::TRAIN_SAMPLE,
                (iteration as u64) << 32 | sim as u64,
            );
            let mut rng = ChaCha20Rng::seed_from_u64(sim_seed);
            let target =
                sample_target(&bx, &regions, &field, &params.sampler, &mut rng).map_err(wrap)?;
            let trace = run_mpc_simulation(
                plant,
                &model,
                &plant.spec().x0,
                &target,
                params.trace_steps,
                &mpc_params,
                space,
                sim_seed,
            )
            .map_err(wrap)?;
            field.insert_states(trace.states())?;
            targets.push(target);
            new_traces.push(trace);
        }

        reports.push(IterationReport {
            iteration,
            cluster_count: k,
            pool_size: pool.len(),
            selected_count: refined.selected.len(),
            training_score,
            val_rmse: model.val_rmse(),
            targets,
            assignments: refined.assignments.clone(),
            box_bound: bx,
            regions,
        });
        previous_selected = refined.selected.clone();
        result = Some((model, refined));
    }

    let (model, refined) = result.expect("at least one training iteration");
    Ok(TrainOutput {
        model,
        refined,
        field,
        reports,
    })
}

/// One generated test case.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub target: Vec<f64>,
    pub trace: DataTrace<f64>,
}

/// Test-generation output: the cases, the running score after each case,
/// and the final field score.
#[derive(Debug, Clone)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
    pub incremental_scores: Vec<f64>,
    pub final_score: f64,
}

/// MPC-based test-case generation. Targets are drawn from the full
/// objective bounds (no hull exclusion) against `field`, which accumulates
/// every generated trace.
pub fn generate_test_cases(
    plant: &dyn Plant<f64>,
    space: &ObjectiveSpace<f64>,
    model: &KoopmanModel<f64>,
    field: &mut OccupancyField<f64>,
    count: usize,
    params: &TrainParams,
) -> Result<TestSuite> {
    let mpc_params = params.mpc.to_params(plant)?;
    let bx = BoxBound::from_bounds(space.bounds())?;
    let mut cases = Vec::with_capacity(count);
    let mut incremental_scores = Vec::with_capacity(count);
    for case in 0..count {
        let case_seed = stream_seed(params.seed, stream::TEST_CASE, case as u64);
        let mut rng = ChaCha20Rng::seed_from_u64(case_seed);
        let target = sample_target(&bx, &[], field, &params.sampler, &mut rng)?;
        let trace = run_mpc_simulation(
            plant,
            model,
            &plant.spec().x0,
            &target,
            params.trace_steps,
            &mpc_params,
            space,
            case_seed,
        )?;
        field.insert_states(trace.states())?;
        incremental_scores.push(field.coverage_score());
        cases.push(TestCase { target, trace });
    }
    Ok(TestSuite {
        final_score: field.coverage_score(),
        cases,
        incremental_scores,
    })
}

/// Scores of one method over the comparison seeds.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: &'static str,
    /// `(seed, score)` per run.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

impl MethodResult {
    fn from_scores(method: &'static str, per_seed: Vec<(u64, f64)>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|(_, s)| s).sum::<f64>() / n;
        // Population standard deviation: a single seed reports zero spread.
        let var = per_seed
            .iter()
            .map(|(_, s)| (s - mean) * (s - mean))
            .sum::<f64>()
            / n;
        Self {
            method,
            per_seed,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Comparison of coverage-guided against uniform-random test generation.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub methods: Vec<MethodResult>,
    /// Plant steps issued per method per seed (budget-fairness witness).
    pub steps_per_method: Vec<(&'static str, usize)>,
}

/// Runs both methods with identical test-case count and trace length for
/// every seed, scoring each method's test traces on a fresh field.
pub fn compare_methods(
    plant: &dyn Plant<f64>,
    space: &ObjectiveSpace<f64>,
    base_params: &TrainParams,
    test_cases: usize,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if seeds.is_empty() {
        return Err(Error::Config("comparison needs at least one seed".into()));
    }
    let mut cg_scores = Vec::with_capacity(seeds.len());
    let mut random_scores = Vec::with_capacity(seeds.len());
    let mut cg_steps = 0usize;
    let mut random_steps = 0usize;
    for &seed in seeds {
        let mut params = base_params.clone();
        params.seed = seed;
        let mut training = train_model(plant, space, &params)?;
        let suite = generate_test_cases(
            plant,
            space,
            &training.model,
            &mut training.field,
            test_cases,
            &params,
        )?;
        let cg_traces: Vec<DataTrace<f64>> =
            suite.cases.iter().map(|c| c.trace.clone()).collect();
        cg_steps = cg_traces.iter().map(|t| t.steps()).sum();
        cg_scores.push((seed, score_traces(space, &cg_traces)?));

        let random = generate_random_traces(
            plant,
            test_cases,
            params.trace_steps,
            stream_seed(seed, stream::RANDOM_TRACE, u64::MAX),
        )?;
        random_steps = random.iter().map(|t| t.steps()).sum();
        random_scores.push((seed, score_traces(space, &random)?));
    }
    Ok(ComparisonReport {
        methods: vec![
            MethodResult::from_scores("coverage-guided", cg_scores),
            MethodResult::from_scores("random", random_scores),
        ],
        steps_per_method: vec![("coverage-guided", cg_steps), ("random", random_steps)],
    })
}

/// Writes a suite's traces into a directory using the standard trace file
/// format, returning the file names.
pub fn write_suite_traces(dir: &std::path::Path, suite: &TestSuite) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(suite.cases.len());
    for (i, case) in suite.cases.iter().enumerate() {
        let name = format!("case_{i:04}.csv");
        trace_io::write_trace_csv(&dir.join(&name), &case.trace)?;
        names.push(name);
    }
    Ok(names)
}
