//! Synthetic multi-electrode voltage traces with injected artifacts.
//!
//! A trace starts in nominally pure water. Each droplet event steps the
//! solution to a new strength instantaneously; the electrode array sees the
//! Nikolsky-Eisenman potential of that solution plus a damped-oscillation
//! kinetic transient, linear crosstalk between electrodes and Gaussian noise.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chem::{
    nikolsky_eisenman, ActivityModel, BaseComposition, DilutionSchedule, ElectrodeSpec,
    ExponentConvention, IonRegistry, IonSpecies, PhysicalConstants, SolutionComposition,
    DEFAULT_TEMPERATURE,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropletEvent<S> {
    /// Seconds from the start of the trace.
    pub time: S,
    /// Steady-state strength after the event, as a multiple of the base recipe.
    pub target_multiple: S,
    /// Volts.
    pub kinetic_amplitude: S,
    /// Seconds.
    pub kinetic_tau: S,
    /// rad/s.
    pub kinetic_omega: S,
}

/// Which solutes the beaker receives.
#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    /// Every ion of the base recipe.
    Mixture,
    /// Only the named ion (one-salt calibration series).
    SingleIon(IonSpecies),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<S> {
    /// Channel order of every voltage and concentration vector.
    pub electrodes: Vec<ElectrodeSpec<S>>,
    pub events: Vec<DropletEvent<S>>,
    /// Row-major square gain matrix with a zero diagonal.
    pub crosstalk: Vec<Vec<S>>,
    pub noise_sd: S,
    pub sample_rate: S,
    pub duration: S,
    pub settle_time: S,
    pub seed: u64,
    pub solution: Solution,
    pub base: BaseComposition<S>,
    pub temperature: S,
    /// Concentration (mmol/L) every ion has in "pure" water. Enters the
    /// electrode potentials only; ground-truth labels exclude it.
    pub background: S,
    pub activity: ActivityModel<S>,
    pub constants: PhysicalConstants<S>,
}

impl<S: Scalar> SimConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let n = self.electrodes.len();
        if n == 0 {
            return Err(Error::domain("simulation needs at least one electrode"));
        }
        if self.crosstalk.len() != n || self.crosstalk.iter().any(|row| row.len() != n) {
            return Err(Error::domain(format!("crosstalk matrix must be {n}x{n}")));
        }
        if (0..n).any(|i| self.crosstalk[i][i] != S::zero()) {
            return Err(Error::domain("crosstalk matrix diagonal must be exactly zero"));
        }
        if !(self.noise_sd >= S::zero()) {
            return Err(Error::domain("noise_sd must be >= 0"));
        }
        if !(self.sample_rate > S::zero()) {
            return Err(Error::domain("sample_rate must be positive"));
        }
        if !(self.duration >= S::zero()) || !(self.settle_time >= S::zero()) {
            return Err(Error::domain("duration and settle_time must be >= 0"));
        }
        if !(self.background >= S::zero()) {
            return Err(Error::domain("background concentration must be >= 0"));
        }
        for ev in &self.events {
            if !(ev.time >= S::zero()) {
                return Err(Error::domain("event times must be >= 0"));
            }
            if !(ev.kinetic_tau > S::zero()) {
                return Err(Error::domain("kinetic_tau must be positive"));
            }
            if !(ev.target_multiple >= S::zero()) {
                return Err(Error::domain("event target multiple must be >= 0"));
            }
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::domain("events must be sorted by time"));
        }
        if let Solution::SingleIon(ion) = &self.solution {
            if self.base.base(ion).is_none() {
                return Err(Error::domain(format!("single-ion solute {ion} missing from base recipe")));
            }
        }
        Ok(())
    }

    /// Stable identifier of the configuration (FNV-1a of its debug form).
    pub fn digest(&self) -> String {
        let mut h = FnvHasher::default();
        h.write(format!("{self:?}").as_bytes());
        format!("{:016x}", h.finish())
    }

    fn ions(&self) -> Vec<IonSpecies> {
        let mut ions: Vec<IonSpecies> = self.base.entries().iter().map(|(i, _)| i.clone()).collect();
        for e in &self.electrodes {
            if !ions.contains(e.target()) {
                ions.push(e.target().clone());
            }
        }
        ions
    }

    /// Ground-truth composition at a given strength.
    pub fn composition_at(&self, multiple: S) -> Result<SolutionComposition<S>> {
        match &self.solution {
            Solution::Mixture => self.base.composition(multiple, self.temperature),
            Solution::SingleIon(ion) => self.base.single_ion(ion, multiple, self.temperature),
        }
    }

    /// Artifact-free electrode potentials for a ground-truth composition.
    pub fn clean_voltages(&self, truth: &SolutionComposition<S>) -> Result<Vec<S>> {
        let seen = truth.plus_background(&self.ions(), self.background);
        self.electrodes
            .iter()
            .map(|e| clean_voltage(e, &seen, &self.activity, &self.constants))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample<S> {
    pub time: S,
    pub voltages: Vec<S>,
    pub true_concentrations: Vec<S>,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<S> {
    pub samples: Vec<TraceSample<S>>,
    pub config_digest: String,
}

impl<S: Scalar> Trace<S> {
    pub fn new(samples: Vec<TraceSample<S>>, config_digest: impl Into<String>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::domain("trace time stamps must be strictly increasing"));
        }
        Ok(Trace {
            samples,
            config_digest: config_digest.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A exp(-d/tau) cos(omega d) for d = t - event.time >= 0, zero before the event.
pub fn kinetic_offset<S: Scalar>(t: S, event: &DropletEvent<S>) -> S {
    let d = t - event.time;
    if d < S::zero() {
        return S::zero();
    }
    event.kinetic_amplitude * (-d / event.kinetic_tau).exp() * (event.kinetic_omega * d).cos()
}

/// Artifact-free potential of one electrode; identical to the chemistry forward model.
pub fn clean_voltage<S: Scalar>(
    electrode: &ElectrodeSpec<S>,
    composition: &SolutionComposition<S>,
    activity_model: &ActivityModel<S>,
    constants: &PhysicalConstants<S>,
) -> Result<S> {
    nikolsky_eisenman(electrode, composition, activity_model, constants)
}

/// raw + G (raw - baseline).
pub fn apply_crosstalk<S: Scalar>(raw: &[S], baseline: &[S], gains: &[Vec<S>]) -> Result<Vec<S>> {
    let n = raw.len();
    if baseline.len() != n || gains.len() != n || gains.iter().any(|row| row.len() != n) {
        return Err(Error::domain(format!(
            "crosstalk dimension mismatch: raw {n}, baseline {}, gains {}x{}",
            baseline.len(),
            gains.len(),
            gains.first().map_or(0, |r| r.len())
        )));
    }
    Ok((0..n)
        .map(|i| {
            let leak: S = (0..n).map(|j| gains[i][j] * (raw[j] - baseline[j])).sum();
            raw[i] + leak
        })
        .collect())
}

/// Generates one trace. A pure function of `config` including its seed.
pub fn simulate<S: Scalar>(config: &SimConfig<S>) -> Result<Trace<S>> {
    config.validate()?;
    let n_samples = (config.duration * config.sample_rate)
        .floor()
        .to_usize()
        .ok_or_else(|| Error::domain("duration * sample_rate is not a valid sample count"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let water = config.composition_at(S::zero())?;
    let baseline = config.clean_voltages(&water)?;

    // Steady-state levels only change at events, so evaluate them once per segment.
    let mut levels = Vec::with_capacity(config.events.len() + 1);
    levels.push((truth_vector(config, &water), baseline.clone()));
    for ev in &config.events {
        let comp = config.composition_at(ev.target_multiple)?;
        levels.push((truth_vector(config, &comp), config.clean_voltages(&comp)?));
    }

    let mut samples = Vec::with_capacity(n_samples);
    let mut current = 0usize;
    for k in 0..n_samples {
        let t = S::lit(k as f64) / config.sample_rate;
        while current < config.events.len() && config.events[current].time <= t {
            current += 1;
        }
        let last_event = current.checked_sub(1).map(|i| &config.events[i]);
        let (truth, clean) = &levels[current];

        let kinetic = last_event.map_or(S::zero(), |ev| kinetic_offset(t, ev));
        let raw: Vec<S> = clean.iter().map(|v| *v + kinetic).collect();
        let mut voltages = apply_crosstalk(&raw, &baseline, &config.crosstalk)?;
        for v in voltages.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += config.noise_sd * S::lit(z);
        }
        let since = t - last_event.map_or(S::zero(), |ev| ev.time);
        samples.push(TraceSample {
            time: t,
            voltages,
            true_concentrations: truth.clone(),
            stable: since >= config.settle_time,
        });
    }
    Trace::new(samples, config.digest())
}

fn truth_vector<S: Scalar>(config: &SimConfig<S>, comp: &SolutionComposition<S>) -> Vec<S> {
    config
        .electrodes
        .iter()
        .map(|e| comp.concentration(e.target()).unwrap_or_else(S::zero))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolKind {
    /// One-salt dilution series for calibrating the named electrode.
    SingleSolvent(IonSpecies),
    Mixture,
}

/// Parameters of the bench protocol: a 10-step dilution series repeated
/// several times with independent noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig<S> {
    pub registry: IonRegistry,
    /// Standard potentials in registry order, volts.
    pub e0: Vec<S>,
    pub base: BaseComposition<S>,
    pub steps: usize,
    pub repeats: usize,
    pub first_event_time: S,
    pub event_interval: S,
    pub sample_rate: S,
    pub settle_time: S,
    pub noise_sd: S,
    pub kinetic_amplitude: S,
    pub kinetic_tau: S,
    pub kinetic_omega: S,
    pub crosstalk_gain: S,
    pub selectivity_same_sign: S,
    pub selectivity_opposite_sign: S,
    pub exponent: ExponentConvention,
    pub temperature: S,
    pub background: S,
    pub initial_volume_ml: S,
    pub dose_volume_ml: S,
    pub strength: S,
    pub seed: u64,
}

impl<S: Scalar> Default for ProtocolConfig<S> {
    fn default() -> Self {
        ProtocolConfig {
            registry: IonRegistry::default(),
            e0: [0.20, 0.15, 0.25, 0.18].map(S::lit).to_vec(),
            base: BaseComposition::yamazaki(),
            steps: 10,
            repeats: 10,
            first_event_time: S::lit(30.0),
            event_interval: S::lit(240.0),
            sample_rate: S::lit(1.0),
            settle_time: S::lit(60.0),
            noise_sd: S::lit(0.002),
            kinetic_amplitude: S::lit(0.05),
            kinetic_tau: S::lit(3.0),
            kinetic_omega: S::lit(1.5),
            crosstalk_gain: S::lit(0.02),
            selectivity_same_sign: S::lit(0.05),
            selectivity_opposite_sign: S::lit(0.01),
            exponent: ExponentConvention::PaperLiteral,
            temperature: S::lit(DEFAULT_TEMPERATURE),
            background: S::lit(1e-5),
            initial_volume_ml: S::lit(1000.0),
            dose_volume_ml: S::lit(10.0),
            strength: S::lit(100.0),
            seed: 42,
        }
    }
}

impl<S: Scalar> ProtocolConfig<S> {
    /// Each step adds one stock per solute: one for a single-solvent series,
    /// one per base-recipe salt for the mixture.
    pub fn schedule(&self, kind: &ProtocolKind) -> DilutionSchedule<S> {
        let stocks = match kind {
            ProtocolKind::SingleSolvent(_) => 1.0,
            ProtocolKind::Mixture => 3.0,
        };
        DilutionSchedule {
            initial_volume_ml: self.initial_volume_ml,
            addition_volume_ml: self.dose_volume_ml * S::lit(stocks),
            dose_volume_ml: self.dose_volume_ml,
            strength: self.strength,
        }
    }

    pub fn events(&self, kind: &ProtocolKind) -> Result<Vec<DropletEvent<S>>> {
        let multiples = self.schedule(kind).header_multiples(self.steps)?;
        Ok(multiples
            .into_iter()
            .enumerate()
            .map(|(i, m)| DropletEvent {
                time: self.first_event_time + S::lit(i as f64) * self.event_interval,
                target_multiple: m,
                kinetic_amplitude: self.kinetic_amplitude,
                kinetic_tau: self.kinetic_tau,
                kinetic_omega: self.kinetic_omega,
            })
            .collect())
    }

    pub fn duration(&self) -> S {
        self.first_event_time + S::lit(self.steps as f64) * self.event_interval
    }

    /// Electrode array; interference is switched off for single-solvent runs.
    pub fn electrodes(&self, kind: &ProtocolKind) -> Result<Vec<ElectrodeSpec<S>>> {
        if self.e0.len() != self.registry.len() {
            return Err(Error::domain(format!(
                "{} standard potentials for {} electrodes",
                self.e0.len(),
                self.registry.len()
            )));
        }
        let ions = self.registry.ions();
        ions.iter()
            .zip(&self.e0)
            .map(|(target, e0)| {
                let mut e = ElectrodeSpec::new(target.clone(), *e0).with_exponent(self.exponent);
                if *kind == ProtocolKind::Mixture {
                    for other in ions.iter().filter(|o| *o != target) {
                        let k = if target.charge().signum() == other.charge().signum() {
                            self.selectivity_same_sign
                        } else {
                            self.selectivity_opposite_sign
                        };
                        e.set_selectivity(other.clone(), k)?;
                    }
                }
                Ok(e)
            })
            .collect()
    }

    pub fn sim_config(&self, kind: &ProtocolKind, repeat: usize) -> Result<SimConfig<S>> {
        let electrodes = self.electrodes(kind)?;
        let n = electrodes.len();
        let gain = match kind {
            ProtocolKind::Mixture => self.crosstalk_gain,
            ProtocolKind::SingleSolvent(_) => S::zero(),
        };
        let crosstalk = (0..n)
            .map(|i| (0..n).map(|j| if i == j { S::zero() } else { gain }).collect())
            .collect();
        let solution = match kind {
            ProtocolKind::Mixture => Solution::Mixture,
            ProtocolKind::SingleSolvent(ion) => Solution::SingleIon(ion.clone()),
        };
        Ok(SimConfig {
            electrodes,
            events: self.events(kind)?,
            crosstalk,
            noise_sd: self.noise_sd,
            sample_rate: self.sample_rate,
            duration: self.duration(),
            settle_time: self.settle_time,
            seed: self.seed.wrapping_add(repeat as u64),
            solution,
            base: self.base.clone(),
            temperature: self.temperature,
            background: self.background,
            activity: ActivityModel::ideal(),
            constants: PhysicalConstants::default(),
        })
    }
}

/// Runs `config.repeats` traces of the given protocol; repeat `r` uses seed `seed + r`.
pub fn run_experiment_protocol<S: Scalar>(
    kind: &ProtocolKind,
    config: &ProtocolConfig<S>,
) -> Result<Vec<Trace<S>>> {
    (0..config.repeats)
        .map(|r| simulate(&config.sim_config(kind, r)?))
        .collect()
}
