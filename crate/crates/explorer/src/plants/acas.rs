//! Two-aircraft ACAS Xu encounter with Dubins dynamics: the ownship follows
//! neural-network advisories, the intruder's turn rate is the controlled
//! input.
//!
//! The plant state vector is fully Markov:
//! `[x_own, y_own, h_own, x_int, y_int, h_int, advisory_index, phase]`,
//! where `phase` is the time since the last advisory query.

use crate::coverage::ObjectiveSpace;
use crate::error::{Error, Result};
use crate::scalar::{fromf, tof, Real};
use crate::types::{ControlInput, State};

use super::nnet::{parse_nnet, NNetNetwork};
use super::{step_rk4, Plant, PlantSpec};

/// Ownship advisory, ordered as the network output indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advisory {
    ClearOfConflict,
    WeakLeft,
    WeakRight,
    StrongLeft,
    StrongRight,
}

impl Advisory {
    pub const ALL: [Advisory; 5] = [
        Advisory::ClearOfConflict,
        Advisory::WeakLeft,
        Advisory::WeakRight,
        Advisory::StrongLeft,
        Advisory::StrongRight,
    ];

    pub fn index(self) -> usize {
        match self {
            Advisory::ClearOfConflict => 0,
            Advisory::WeakLeft => 1,
            Advisory::WeakRight => 2,
            Advisory::StrongLeft => 3,
            Advisory::StrongRight => 4,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Config(format!("advisory index {index} out of range")))
    }

    /// Commanded ownship turn rate in degrees per second (left positive).
    pub fn turn_rate_deg(self) -> f64 {
        match self {
            Advisory::ClearOfConflict => 0.0,
            Advisory::WeakLeft => 1.5,
            Advisory::WeakRight => -1.5,
            Advisory::StrongLeft => 3.0,
            Advisory::StrongRight => -3.0,
        }
    }

    pub fn turn_rate_rad(self) -> f64 {
        self.turn_rate_deg().to_radians()
    }

    /// Left/right mirror image (used by symmetry checks).
    pub fn mirrored(self) -> Self {
        match self {
            Advisory::ClearOfConflict => Advisory::ClearOfConflict,
            Advisory::WeakLeft => Advisory::WeakRight,
            Advisory::WeakRight => Advisory::WeakLeft,
            Advisory::StrongLeft => Advisory::StrongRight,
            Advisory::StrongRight => Advisory::StrongLeft,
        }
    }
}

/// Whether the advisory is the minimum- or maximum-score network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvisorySelection {
    MinScore,
    MaxScore,
}

/// One network per previous advisory (time-to-separation index fixed at
/// zero).
#[derive(Debug, Clone)]
pub struct AcasNetworks<T: Real> {
    networks: [Option<NNetNetwork<T>>; 5],
}

impl<T: Real> AcasNetworks<T> {
    pub fn new(networks: [Option<NNetNetwork<T>>; 5]) -> Self {
        Self { networks }
    }

    pub fn get(&self, advisory: Advisory) -> Result<&NNetNetwork<T>> {
        self.networks[advisory.index()]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no network configured for advisory {advisory:?}")))
    }
}

/// Encounter configuration knobs.
#[derive(Debug, Clone)]
pub struct AcasConfig<T: Real> {
    /// Seconds between advisory queries.
    pub advisory_period: T,
    pub selection: AdvisorySelection,
    /// Interpret the bearing formula with a doubled arctangent
    /// (tan-half-angle reading) instead of as printed.
    pub double_theta_arctan: bool,
    /// Intruder turn-rate bounds (radians per second).
    pub intruder_turn_bounds: (T, T),
}

impl<T: Real> Default for AcasConfig<T> {
    fn default() -> Self {
        let three_deg = fromf::<T>(3.0f64.to_radians());
        Self {
            advisory_period: T::one(),
            selection: AdvisorySelection::MinScore,
            double_theta_arctan: false,
            intruder_turn_bounds: (-three_deg, three_deg),
        }
    }
}

/// Kinematic encounter state.
#[derive(Debug, Clone, PartialEq)]
pub struct AcasScenario<T: Real> {
    /// Ownship `(x, y, heading)`.
    pub own: [T; 3],
    /// Intruder `(x, y, heading)`.
    pub intruder: [T; 3],
    pub v_own: T,
    pub v_int: T,
    pub a_prev: Advisory,
    /// Seconds since the last advisory query.
    pub phase: T,
}

/// Network-input geometry: distance, bearing to intruder relative to
/// ownship heading, and relative heading.
///
/// The bearing uses the arctangent form as printed, `atan(dy / (dx + rho))`,
/// with the directly-behind singularity resolved to `sign(dy) * pi/2`
/// (`pi` when `dy = 0`); the doubled form is available behind
/// [`AcasConfig::double_theta_arctan`].
pub fn encounter_geometry<T: Real>(
    own: &[T; 3],
    intruder: &[T; 3],
    double_theta: bool,
) -> (T, T, T) {
    let dx = intruder[0] - own[0];
    let dy = intruder[1] - own[1];
    let rho = (dx * dx + dy * dy).sqrt();
    let denom = dx + rho;
    let pi = T::pi();
    let half_pi = pi / fromf::<T>(2.0);
    let theta_raw = if denom == T::zero() {
        if dy > T::zero() {
            half_pi
        } else if dy < T::zero() {
            -half_pi
        } else if double_theta {
            // Half-angle of the directly-behind bearing; doubling below
            // restores pi.
            half_pi
        } else {
            pi
        }
    } else {
        (dy / denom).atan()
    };
    let theta_raw = if double_theta {
        theta_raw * fromf::<T>(2.0)
    } else {
        theta_raw
    };
    let theta = theta_raw - own[2];
    let psi = intruder[2] - own[2];
    (rho, theta, psi)
}

/// Queries the advisory network selected by the previous advisory.
pub fn nn_advisory<T: Real>(
    networks: &AcasNetworks<T>,
    rho: T,
    theta: T,
    psi: T,
    v_own: T,
    v_int: T,
    a_prev: Advisory,
    selection: AdvisorySelection,
) -> Result<Advisory> {
    let net = networks.get(a_prev)?;
    let scores = net.eval(&[rho, theta, psi, v_own, v_int])?;
    if scores.len() != 5 {
        return Err(Error::Config(format!(
            "advisory network must output 5 scores, got {}",
            scores.len()
        )));
    }
    let mut best = 0usize;
    for i in 1..scores.len() {
        let better = match selection {
            AdvisorySelection::MinScore => scores[i] < scores[best],
            AdvisorySelection::MaxScore => scores[i] > scores[best],
        };
        if better {
            best = i;
        }
    }
    Advisory::from_index(best)
}

fn dubins_derivative<T: Real>(state: &[T], params: &[T]) -> Vec<T> {
    // params = [speed, turn_rate]
    vec![
        params[0] * state[2].cos(),
        params[0] * state[2].sin(),
        params[1],
    ]
}

/// Advances the encounter by one integration step of `dt` seconds.
///
/// Both aircraft integrate Dubins dynamics; at every advisory-period
/// boundary the geometry is recomputed and the network queried.
pub fn dubins_encounter_step<T: Real>(
    scenario: &AcasScenario<T>,
    intruder_turn: T,
    dt: T,
    networks: &AcasNetworks<T>,
    config: &AcasConfig<T>,
) -> Result<AcasScenario<T>> {
    let (lo, hi) = config.intruder_turn_bounds;
    let mut u = intruder_turn;
    if u < lo || u > hi {
        log::warn!("intruder turn rate out of bounds; clamping");
        u = if u < lo { lo } else { hi };
    }
    let own_rate = fromf::<T>(scenario.a_prev.turn_rate_rad());
    let own =
        step_rk4(dubins_derivative, &scenario.own, &[scenario.v_own, own_rate], dt)?;
    let intruder =
        step_rk4(dubins_derivative, &scenario.intruder, &[scenario.v_int, u], dt)?;
    let own = [own[0], own[1], own[2]];
    let intruder = [intruder[0], intruder[1], intruder[2]];

    let mut phase = scenario.phase + dt;
    let mut a_prev = scenario.a_prev;
    // Advisory boundary: tolerate float accumulation within half a step.
    if phase >= config.advisory_period - dt / fromf::<T>(2.0) {
        let (rho, theta, psi) = encounter_geometry(&own, &intruder, config.double_theta_arctan);
        a_prev = nn_advisory(
            networks,
            rho,
            theta,
            psi,
            scenario.v_own,
            scenario.v_int,
            a_prev,
            config.selection,
        )?;
        phase = T::zero();
    }
    Ok(AcasScenario {
        own,
        intruder,
        v_own: scenario.v_own,
        v_int: scenario.v_int,
        a_prev,
        phase,
    })
}

/// ACAS Xu encounter behind the plant interface. The single input is the
/// intruder turn rate; the ownship is autonomous under its advisories.
pub struct AcasPlant<T: Real> {
    spec: PlantSpec<T>,
    networks: AcasNetworks<T>,
    config: AcasConfig<T>,
    initial: AcasScenario<T>,
}

/// Embedded hand-constructed stub networks (one per previous advisory).
const STUB_NNETS: [&str; 5] = [
    include_str!("../../assets/acas_stub/a0.nnet"),
    include_str!("../../assets/acas_stub/a1.nnet"),
    include_str!("../../assets/acas_stub/a2.nnet"),
    include_str!("../../assets/acas_stub/a3.nnet"),
    include_str!("../../assets/acas_stub/a4.nnet"),
];

impl<T: Real> AcasPlant<T> {
    /// Default encounter: ownship at the origin heading +x at 200 ft/s,
    /// intruder 8000 ft ahead heading back at 185 ft/s.
    pub fn default_scenario() -> AcasScenario<T> {
        AcasScenario {
            own: [T::zero(), T::zero(), T::zero()],
            intruder: [fromf(8000.0), T::zero(), T::pi()],
            v_own: fromf(200.0),
            v_int: fromf(185.0),
            a_prev: Advisory::ClearOfConflict,
            phase: T::zero(),
        }
    }

    pub fn new(
        networks: AcasNetworks<T>,
        config: AcasConfig<T>,
        initial: AcasScenario<T>,
        dt: T,
    ) -> Result<Self> {
        let objective = ObjectiveSpace::with_defaults(
            vec![3, 4],
            vec![
                (fromf(-20000.0), fromf(20000.0)),
                (fromf(-20000.0), fromf(20000.0)),
            ],
        )?;
        let spec = PlantSpec {
            n: 8,
            w: 1,
            input_bounds: vec![config.intruder_turn_bounds],
            dt,
            x0: encode_scenario(&initial)?,
            objective,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            networks,
            config,
            initial,
        })
    }

    /// Plant backed by the embedded stub networks.
    pub fn with_stub_networks() -> Result<Self> {
        let mut nets: [Option<NNetNetwork<T>>; 5] = [None, None, None, None, None];
        for (i, text) in STUB_NNETS.iter().enumerate() {
            nets[i] = Some(parse_nnet(text)?);
        }
        Self::new(
            AcasNetworks::new(nets),
            AcasConfig::default(),
            Self::default_scenario(),
            fromf(0.1),
        )
    }

    /// Loads five NNet files named by previous-advisory index.
    pub fn from_network_dir(dir: &std::path::Path) -> Result<Self> {
        let mut nets: [Option<NNetNetwork<T>>; 5] = [None, None, None, None, None];
        for (i, slot) in nets.iter_mut().enumerate() {
            let path = dir.join(format!("a{i}.nnet"));
            let text = std::fs::read_to_string(&path)?;
            *slot = Some(parse_nnet(&text)?);
        }
        Self::new(
            AcasNetworks::new(nets),
            AcasConfig::default(),
            Self::default_scenario(),
            fromf(0.1),
        )
    }

    pub fn initial_scenario(&self) -> &AcasScenario<T> {
        &self.initial
    }

    pub fn networks(&self) -> &AcasNetworks<T> {
        &self.networks
    }

    pub fn config(&self) -> &AcasConfig<T> {
        &self.config
    }
}

/// Packs a scenario into the plant state vector.
pub fn encode_scenario<T: Real>(s: &AcasScenario<T>) -> Result<State<T>> {
    State::new(vec![
        s.own[0],
        s.own[1],
        s.own[2],
        s.intruder[0],
        s.intruder[1],
        s.intruder[2],
        fromf(s.a_prev.index() as f64),
        s.phase,
    ])
}

/// Inverse of [`encode_scenario`].
pub fn decode_scenario<T: Real>(
    state: &State<T>,
    v_own: T,
    v_int: T,
) -> Result<AcasScenario<T>> {
    if state.dim() != 8 {
        return Err(Error::DimensionMismatch {
            context: "acas state vector",
            expected: 8,
            actual: state.dim(),
        });
    }
    let v = state.values();
    let advisory_index = tof(v[6]).round();
    if !(0.0..=4.0).contains(&advisory_index) {
        return Err(Error::Config(format!(
            "advisory code {advisory_index} out of range"
        )));
    }
    Ok(AcasScenario {
        own: [v[0], v[1], v[2]],
        intruder: [v[3], v[4], v[5]],
        v_own,
        v_int,
        a_prev: Advisory::from_index(advisory_index as usize)?,
        phase: v[7],
    })
}

impl<T: Real> Plant<T> for AcasPlant<T> {
    fn name(&self) -> &'static str {
        "acas_xu"
    }

    fn spec(&self) -> &PlantSpec<T> {
        &self.spec
    }

    fn step(&self, x: &State<T>, u: &ControlInput<T>) -> Result<State<T>> {
        if u.dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "acas input",
                expected: 1,
                actual: u.dim(),
            });
        }
        let scenario = decode_scenario(x, self.initial.v_own, self.initial.v_int)?;
        let next = dubins_encounter_step(
            &scenario,
            u.values()[0],
            self.spec.dt,
            &self.networks,
            &self.config,
        )?;
        encode_scenario(&next)
    }
}
