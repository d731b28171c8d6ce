//! Ions, solution states and the electrochemical forward model.
//!
//! Concentrations are carried in mmol/L throughout; activities are
//! dimensionless and computed from mol/L. Membrane potentials are in volts.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Room temperature used by the default experiment, in kelvin.
pub const DEFAULT_TEMPERATURE: f64 = 298.15;

/// An ion species with its signed charge number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IonSpecies {
    name: String,
    charge: i32,
}

impl IonSpecies {
    pub fn new(name: impl Into<String>, charge: i32) -> Result<Self> {
        let name = name.into();
        if charge == 0 {
            return Err(Error::domain(format!("ion {name}: charge must be nonzero")));
        }
        if name.is_empty() {
            return Err(Error::domain("ion name must not be empty"));
        }
        Ok(IonSpecies { name, charge })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn charge(&self) -> i32 {
        self.charge
    }

    pub fn potassium() -> Self {
        IonSpecies::new("K", 1).unwrap()
    }

    pub fn calcium() -> Self {
        IonSpecies::new("Ca", 2).unwrap()
    }

    pub fn nitrate() -> Self {
        IonSpecies::new("NO3", -1).unwrap()
    }

    pub fn ammonium() -> Self {
        IonSpecies::new("NH4", 1).unwrap()
    }
}

impl fmt::Display for IonSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordered set of ions with unique names.
///
/// The default registry holds the four electrode-measured ions in canonical
/// channel order: K, Ca, NO3, NH4.
#[derive(Debug, Clone, PartialEq)]
pub struct IonRegistry {
    ions: Vec<IonSpecies>,
}

impl IonRegistry {
    pub fn new(ions: Vec<IonSpecies>) -> Result<Self> {
        for (i, a) in ions.iter().enumerate() {
            if ions[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::domain(format!("duplicate ion name {}", a.name)));
            }
        }
        Ok(IonRegistry { ions })
    }

    pub fn ions(&self) -> &[IonSpecies] {
        &self.ions
    }

    pub fn len(&self) -> usize {
        self.ions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ions.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&IonSpecies> {
        self.ions.iter().find(|ion| ion.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.ions.iter().position(|ion| ion.name == name)
    }
}

impl Default for IonRegistry {
    fn default() -> Self {
        IonRegistry {
            ions: vec![
                IonSpecies::potassium(),
                IonSpecies::calcium(),
                IonSpecies::nitrate(),
                IonSpecies::ammonium(),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<S> {
    /// Molar gas constant, J/(mol K).
    pub gas_constant: S,
    /// Faraday constant, C/mol.
    pub faraday: S,
}

impl<S: Scalar> PhysicalConstants<S> {
    pub fn new(gas_constant: S, faraday: S) -> Result<Self> {
        if !(gas_constant > S::zero() && faraday > S::zero()) {
            return Err(Error::domain("physical constants must be strictly positive"));
        }
        Ok(PhysicalConstants {
            gas_constant,
            faraday,
        })
    }

    /// RT/(zF) in volts.
    pub fn nernst_slope(&self, temperature: S, charge: i32) -> S {
        self.gas_constant * temperature / (S::lit(charge as f64) * self.faraday)
    }
}

impl<S: Scalar> Default for PhysicalConstants<S> {
    fn default() -> Self {
        PhysicalConstants {
            gas_constant: S::lit(8.314462618),
            faraday: S::lit(96485.33212),
        }
    }
}

/// Per-ion concentrations (mmol/L) at a temperature (K).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionComposition<S> {
    concentrations: BTreeMap<IonSpecies, S>,
    temperature: S,
}

impl<S: Scalar> SolutionComposition<S> {
    pub fn new(temperature: S) -> Result<Self> {
        if !(temperature > S::zero()) {
            return Err(Error::domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(SolutionComposition {
            concentrations: BTreeMap::new(),
            temperature,
        })
    }

    pub fn with(mut self, ion: IonSpecies, mmol_per_l: S) -> Result<Self> {
        self.set(ion, mmol_per_l)?;
        Ok(self)
    }

    pub fn set(&mut self, ion: IonSpecies, mmol_per_l: S) -> Result<()> {
        if !(mmol_per_l >= S::zero()) || !mmol_per_l.is_finite() {
            return Err(Error::domain(format!(
                "concentration of {ion} must be finite and >= 0, got {mmol_per_l}"
            )));
        }
        self.concentrations.insert(ion, mmol_per_l);
        Ok(())
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }

    pub fn concentration(&self, ion: &IonSpecies) -> Option<S> {
        self.concentrations.get(ion).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IonSpecies, S)> {
        self.concentrations.iter().map(|(k, v)| (k, *v))
    }

    /// Adds `mmol_per_l` to every listed ion; used for the trace-level
    /// background of nominally pure water.
    pub fn plus_background(&self, ions: &[IonSpecies], mmol_per_l: S) -> Self {
        let mut out = self.clone();
        for ion in ions {
            let c = out.concentration(ion).unwrap_or_else(S::zero);
            out.concentrations.insert(ion.clone(), c + mmol_per_l);
        }
        out
    }
}

/// Activity coefficients; ions without an entry are ideal (gamma = 1).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivityModel<S> {
    gamma: BTreeMap<String, S>,
}

impl<S: Scalar> ActivityModel<S> {
    pub fn ideal() -> Self {
        ActivityModel {
            gamma: BTreeMap::new(),
        }
    }

    pub fn with_gamma(mut self, ion: &IonSpecies, gamma: S) -> Result<Self> {
        if !(gamma > S::zero()) {
            return Err(Error::domain(format!(
                "activity coefficient for {ion} must be positive"
            )));
        }
        self.gamma.insert(ion.name().to_owned(), gamma);
        Ok(self)
    }

    pub fn gamma(&self, ion: &IonSpecies) -> S {
        self.gamma.get(ion.name()).copied().unwrap_or_else(S::one)
    }
}

/// Molar chemical potential of an ion and its standard-state reference, J/mol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemicalPotentialSpec<S> {
    pub mu: S,
    pub mu_standard: S,
}

/// How the interfering-ion activity is raised inside the logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentConvention {
    /// a_i^{z_i}, with the interferer's signed charge as exponent.
    #[default]
    PaperLiteral,
    /// a_i^{z/z_i}, the textbook Nikolsky-Eisenman exponent.
    ChargeRatio,
}

impl ExponentConvention {
    pub fn exponent(self, target_charge: i32, interferer_charge: i32) -> f64 {
        match self {
            ExponentConvention::PaperLiteral => interferer_charge as f64,
            ExponentConvention::ChargeRatio => target_charge as f64 / interferer_charge as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExponentConvention::PaperLiteral => "paper_literal",
            ExponentConvention::ChargeRatio => "charge_ratio",
        }
    }
}

impl std::str::FromStr for ExponentConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_literal" => Ok(ExponentConvention::PaperLiteral),
            "charge_ratio" => Ok(ExponentConvention::ChargeRatio),
            other => Err(Error::Config(format!(
                "unknown exponent convention {other:?} (expected paper_literal or charge_ratio)"
            ))),
        }
    }
}

/// Exponential calibration curve C = a * exp(b V).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration<S> {
    /// mmol/L
    pub a: S,
    /// 1/V
    pub b: S,
}

impl<S: Scalar> Calibration<S> {
    pub fn new(a: S, b: S) -> Result<Self> {
        if !(a > S::zero()) || !b.is_finite() {
            return Err(Error::domain(format!(
                "calibration needs a > 0 and finite b, got a={a}, b={b}"
            )));
        }
        Ok(Calibration { a, b })
    }

    pub fn concentration(&self, voltage: S) -> S {
        self.a * (self.b * voltage).exp()
    }
}

/// Physical description of one ion-selective electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSpec<S> {
    target: IonSpecies,
    /// Standard potential offset, volts.
    pub e0: S,
    selectivity: BTreeMap<IonSpecies, S>,
    pub exponent: ExponentConvention,
    calibration: Option<Calibration<S>>,
}

impl<S: Scalar> ElectrodeSpec<S> {
    pub fn new(target: IonSpecies, e0: S) -> Self {
        ElectrodeSpec {
            target,
            e0,
            selectivity: BTreeMap::new(),
            exponent: ExponentConvention::default(),
            calibration: None,
        }
    }

    pub fn target(&self) -> &IonSpecies {
        &self.target
    }

    pub fn with_selectivity(mut self, interferer: IonSpecies, k: S) -> Result<Self> {
        self.set_selectivity(interferer, k)?;
        Ok(self)
    }

    pub fn set_selectivity(&mut self, interferer: IonSpecies, k: S) -> Result<()> {
        if interferer.name() == self.target.name() {
            return Err(Error::domain(format!(
                "electrode {} cannot list its own ion as an interferer",
                self.target
            )));
        }
        if !(k >= S::zero()) {
            return Err(Error::domain(format!(
                "selectivity coefficient {}/{interferer} must be >= 0",
                self.target
            )));
        }
        self.selectivity.insert(interferer, k);
        Ok(())
    }

    pub fn clear_selectivity(&mut self) {
        self.selectivity.clear();
    }

    pub fn selectivity(&self) -> impl Iterator<Item = (&IonSpecies, S)> {
        self.selectivity.iter().map(|(k, v)| (k, *v))
    }

    pub fn with_exponent(mut self, exponent: ExponentConvention) -> Self {
        self.exponent = exponent;
        self
    }

    pub fn calibration(&self) -> Option<Calibration<S>> {
        self.calibration
    }

    pub fn set_calibration(&mut self, calibration: Calibration<S>) {
        self.calibration = Some(calibration);
    }
}

/// Activity a = gamma * C, with C converted from mmol/L to mol/L.
pub fn activity<S: Scalar>(
    composition: &SolutionComposition<S>,
    model: &ActivityModel<S>,
    ion: &IonSpecies,
) -> Result<S> {
    let c = composition
        .concentration(ion)
        .ok_or_else(|| Error::domain(format!("ion {ion} not present in composition")))?;
    Ok(model.gamma(ion) * c / S::lit(1000.0))
}

/// a = exp((mu - mu_standard) / RT).
pub fn activity_from_potential<S: Scalar>(
    spec: &ChemicalPotentialSpec<S>,
    temperature: S,
    gas_constant: S,
) -> Result<S> {
    if !(temperature > S::zero()) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(((spec.mu - spec.mu_standard) / (gas_constant * temperature)).exp())
}

/// Membrane potential of `electrode` in `composition`:
/// E0 + RT/(zF) * ln(a + sum_i k_i a_i^p_i).
///
/// Interferers missing from the composition have zero activity.
pub fn nikolsky_eisenman<S: Scalar>(
    electrode: &ElectrodeSpec<S>,
    composition: &SolutionComposition<S>,
    activity_model: &ActivityModel<S>,
    constants: &PhysicalConstants<S>,
) -> Result<S> {
    let target = electrode.target();
    let z = target.charge();
    let mut argument = match composition.concentration(target) {
        Some(_) => activity(composition, activity_model, target)?,
        None => S::zero(),
    };
    for (ion, k) in electrode.selectivity() {
        if k == S::zero() {
            continue;
        }
        let a_i = match composition.concentration(ion) {
            Some(_) => activity(composition, activity_model, ion)?,
            None => S::zero(),
        };
        let p = electrode.exponent.exponent(z, ion.charge());
        let term = if p.fract() == 0.0 {
            a_i.powi(p as i32)
        } else {
            a_i.powf(S::lit(p))
        };
        argument += k * term;
    }
    if !(argument > S::zero()) || !argument.is_finite() {
        return Err(Error::domain(format!(
            "electrode {target}: logarithm argument {argument} is not a positive finite number"
        )));
    }
    let slope = constants.nernst_slope(composition.temperature(), z);
    Ok(electrode.e0 + slope * argument.ln())
}

/// C = a exp(b V) using the electrode's fitted calibration.
pub fn calibration_forward<S: Scalar>(electrode: &ElectrodeSpec<S>, voltage: S) -> Result<S> {
    electrode
        .calibration()
        .map(|cal| cal.concentration(voltage))
        .ok_or_else(|| Error::State(format!("electrode {} is not calibrated", electrode.target())))
}

/// Serial addition of stock solution into an initially pure volume.
///
/// Every addition delivers `dose_volume_ml` of `strength`-fold stock for
/// each ion while the beaker grows by `addition_volume_ml`. The single-solvent
/// series adds one 10 mL stock per step; the mixture adds three 10 mL
/// stocks (30 mL) per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilutionSchedule<S> {
    pub initial_volume_ml: S,
    pub addition_volume_ml: S,
    pub dose_volume_ml: S,
    pub strength: S,
}

impl<S: Scalar> DilutionSchedule<S> {
    pub fn single_solvent() -> Self {
        DilutionSchedule {
            initial_volume_ml: S::lit(1000.0),
            addition_volume_ml: S::lit(10.0),
            dose_volume_ml: S::lit(10.0),
            strength: S::lit(100.0),
        }
    }

    pub fn mixture() -> Self {
        DilutionSchedule {
            addition_volume_ml: S::lit(30.0),
            ..Self::single_solvent()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_volume_ml,
            self.addition_volume_ml,
            self.dose_volume_ml,
            self.strength,
        ]
        .iter()
        .all(|v| *v > S::zero());
        if !positive {
            return Err(Error::domain("dilution volumes and strength must be positive"));
        }
        if self.dose_volume_ml > self.addition_volume_ml {
            return Err(Error::domain(
                "dose volume cannot exceed the volume added per step",
            ));
        }
        Ok(())
    }

    /// Multiple of the base concentration after `n` additions.
    pub fn multiple(&self, n: i64) -> Result<S> {
        self.validate()?;
        if n < 0 {
            return Err(Error::domain(format!("addition count must be >= 0, got {n}")));
        }
        let n = S::lit(n as f64);
        Ok(self.strength * n * self.dose_volume_ml
            / (self.initial_volume_ml + n * self.addition_volume_ml))
    }

    /// Multiples after 1..=steps additions.
    pub fn header_multiples(&self, steps: usize) -> Result<Vec<S>> {
        (1..=steps as i64).map(|n| self.multiple(n)).collect()
    }
}

/// Dilution multiple with a dose equal to the per-step addition volume.
pub fn dilution_multiple<S: Scalar>(n: i64, v_add: S, v0: S, strength: S) -> Result<S> {
    DilutionSchedule {
        initial_volume_ml: v0,
        addition_volume_ml: v_add,
        dose_volume_ml: v_add,
        strength,
    }
    .multiple(n)
}

/// Base recipe in mmol/L at multiple 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseComposition<S> {
    entries: Vec<(IonSpecies, S)>,
}

impl<S: Scalar> BaseComposition<S> {
    pub fn new(entries: Vec<(IonSpecies, S)>) -> Result<Self> {
        for (ion, c) in &entries {
            if !(*c >= S::zero()) {
                return Err(Error::domain(format!("base concentration of {ion} must be >= 0")));
            }
        }
        Ok(BaseComposition { entries })
    }

    /// Four-ion subset of Yamazaki's lettuce solution.
    pub fn yamazaki() -> Self {
        BaseComposition {
            entries: vec![
                (IonSpecies::potassium(), S::lit(4.0)),
                (IonSpecies::calcium(), S::lit(1.0)),
                (IonSpecies::nitrate(), S::lit(4.0)),
                (IonSpecies::ammonium(), S::lit(0.5)),
            ],
        }
    }

    pub fn entries(&self) -> &[(IonSpecies, S)] {
        &self.entries
    }

    pub fn base(&self, ion: &IonSpecies) -> Option<S> {
        self.entries.iter().find(|(i, _)| i == ion).map(|(_, c)| *c)
    }

    pub fn composition(&self, multiple: S, temperature: S) -> Result<SolutionComposition<S>> {
        if !(multiple >= S::zero()) {
            return Err(Error::domain(format!("multiple must be >= 0, got {multiple}")));
        }
        let mut out = SolutionComposition::new(temperature)?;
        for (ion, base) in &self.entries {
            out.set(ion.clone(), *base * multiple)?;
        }
        Ok(out)
    }

    /// Solution containing only `ion` from the recipe (single-solvent runs).
    pub fn single_ion(
        &self,
        ion: &IonSpecies,
        multiple: S,
        temperature: S,
    ) -> Result<SolutionComposition<S>> {
        let mut out = self.composition(S::zero(), temperature)?;
        let base = self
            .base(ion)
            .ok_or_else(|| Error::domain(format!("ion {ion} not in base composition")))?;
        if !(multiple >= S::zero()) {
            return Err(Error::domain(format!("multiple must be >= 0, got {multiple}")));
        }
        out.set(ion.clone(), base * multiple)?;
        Ok(out)
    }
}

/// Four-ion Yamazaki solution at `multiple` times the base strength, 298.15 K.
pub fn yamazaki_composition<S: Scalar>(multiple: S) -> Result<SolutionComposition<S>> {
    BaseComposition::yamazaki().composition(multiple, S::lit(DEFAULT_TEMPERATURE))
}

/// Default selectivity coefficient for an electrode/interferer charge pairing.
pub fn default_selectivity(target: &IonSpecies, interferer: &IonSpecies, same_sign: f64, opposite_sign: f64) -> f64 {
    if target.charge().signum() == interferer.charge().signum() {
        same_sign
    } else {
        opposite_sign
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pure(ion: IonSpecies, c: f64) -> SolutionComposition<f64> {
        SolutionComposition::new(DEFAULT_TEMPERATURE).unwrap().with(ion, c).unwrap()
    }

    #[test]
    fn ion_invariants() {
        assert!(IonSpecies::new("X", 0).is_err());
        let dup = IonRegistry::new(vec![IonSpecies::potassium(), IonSpecies::potassium()]);
        assert!(dup.is_err());
        let reg = IonRegistry::default();
        let charges: Vec<i32> = reg.ions().iter().map(|i| i.charge()).collect();
        assert_eq!(charges, vec![1, 2, -1, 1]);
        assert_eq!(reg.index_of("NO3"), Some(2));
    }

    #[test]
    fn activity_examples() {
        let k = IonSpecies::potassium();
        let ideal = ActivityModel::<f64>::ideal();
        assert_eq!(activity(&pure(k.clone(), 1000.0), &ideal, &k).unwrap(), 1.0);
        assert_eq!(activity(&pure(k.clone(), 0.0), &ideal, &k).unwrap(), 0.0);
        let model = ActivityModel::ideal().with_gamma(&k, 0.9).unwrap();
        assert_relative_eq!(
            activity(&pure(k.clone(), 3.8835), &model, &k).unwrap(),
            0.00349515,
            max_relative = 1e-12
        );
        let err = activity(&pure(k, 1.0), &ideal, &IonSpecies::calcium());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn activity_from_potential_examples() {
        let r = 8.314462618;
        let t = 298.15;
        let spec = |d: f64| ChemicalPotentialSpec { mu: 10.0 + d, mu_standard: 10.0 };
        assert_eq!(activity_from_potential(&spec(0.0), t, r).unwrap(), 1.0);
        assert_relative_eq!(
            activity_from_potential(&spec(r * t), t, r).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            activity_from_potential(&spec(-r * t * 2f64.ln()), t, r).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        assert!(activity_from_potential(&spec(0.0), 0.0, r).is_err());
    }

    #[test]
    fn nikolsky_eisenman_examples() {
        let c = PhysicalConstants::<f64>::default();
        let ideal = ActivityModel::ideal();
        let k = IonSpecies::potassium();

        let e = ElectrodeSpec::new(k.clone(), 0.123);
        let v = nikolsky_eisenman(&e, &pure(k.clone(), 1000.0), &ideal, &c).unwrap();
        assert_eq!(v, 0.123);

        let e = ElectrodeSpec::new(k.clone(), 0.0);
        let v = nikolsky_eisenman(&e, &pure(k.clone(), 1000.0 * std::f64::consts::E), &ideal, &c)
            .unwrap();
        // R*T/F at 298.15 K.
        assert_relative_eq!(v, 8.314462618 * 298.15 / 96485.33212, max_relative = 1e-12);
        assert_relative_eq!(v, 0.025693, epsilon = 5e-7);

        let na = IonSpecies::new("Na", 1).unwrap();
        let e = ElectrodeSpec::new(k.clone(), 0.0).with_selectivity(na.clone(), 0.5).unwrap();
        let comp = pure(k.clone(), 500.0).with(na, 1000.0).unwrap();
        let v = nikolsky_eisenman(&e, &comp, &ideal, &c).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn nikolsky_eisenman_rejects_nonpositive_argument() {
        let c = PhysicalConstants::<f64>::default();
        let e = ElectrodeSpec::new(IonSpecies::ammonium(), 0.1);
        let err = nikolsky_eisenman(&e, &pure(IonSpecies::ammonium(), 0.0), &ActivityModel::ideal(), &c)
            .unwrap_err();
        assert!(err.to_string().contains("NH4"));
    }

    #[test]
    fn negative_exponent_interferer_at_zero_is_domain_error() {
        let c = PhysicalConstants::<f64>::default();
        let e = ElectrodeSpec::new(IonSpecies::potassium(), 0.1)
            .with_selectivity(IonSpecies::nitrate(), 0.01)
            .unwrap();
        let comp = pure(IonSpecies::potassium(), 1.0).with(IonSpecies::nitrate(), 0.0).unwrap();
        assert!(nikolsky_eisenman(&e, &comp, &ActivityModel::ideal(), &c).is_err());
    }

    #[test]
    fn exponent_conventions() {
        assert_eq!(ExponentConvention::PaperLiteral.exponent(1, 2), 2.0);
        assert_eq!(ExponentConvention::ChargeRatio.exponent(1, 2), 0.5);
        assert_eq!(ExponentConvention::ChargeRatio.exponent(2, -1), -2.0);
        assert_eq!("charge_ratio".parse::<ExponentConvention>().unwrap(), ExponentConvention::ChargeRatio);
        assert!("nope".parse::<ExponentConvention>().is_err());
    }

    #[test]
    fn electrode_invariants() {
        let k = IonSpecies::potassium();
        assert!(ElectrodeSpec::new(k.clone(), 0.0).with_selectivity(k.clone(), 0.1).is_err());
        assert!(ElectrodeSpec::new(k, 0.0).with_selectivity(IonSpecies::calcium(), -0.1).is_err());
        assert!(Calibration::new(0.0, 1.0).is_err());
    }

    #[test]
    fn calibration_forward_examples() {
        let mut e = ElectrodeSpec::<f64>::new(IonSpecies::nitrate(), 0.0);
        assert!(matches!(calibration_forward(&e, 0.0), Err(Error::State(_))));
        e.set_calibration(Calibration::new(73.727, -5.748).unwrap());
        assert_eq!(calibration_forward(&e, 0.0).unwrap(), 73.727);
        e.set_calibration(Calibration::new(1.0, 0.0).unwrap());
        assert_eq!(calibration_forward(&e, 0.37).unwrap(), 1.0);
        e.set_calibration(Calibration::new(2.0, 1.0).unwrap());
        assert_relative_eq!(calibration_forward(&e, 1.0).unwrap(), 5.43656365691809, max_relative = 1e-14);
    }

    #[test]
    fn dilution_examples() {
        assert_eq!(dilution_multiple(0, 10.0, 1000.0, 100.0).unwrap(), 0.0);
        assert!((dilution_multiple(1, 10.0f64, 1000.0, 100.0).unwrap() - 0.990).abs() < 5e-4);
        let mix = DilutionSchedule::<f64>::mixture();
        assert!((mix.multiple(10).unwrap() - 7.692).abs() < 5e-4);
        assert!(dilution_multiple(-1, 10.0, 1000.0, 100.0).is_err());
        assert!(dilution_multiple(1, 0.0, 1000.0, 100.0).is_err());
    }

    #[test]
    fn yamazaki_examples() {
        let zero = yamazaki_composition(0.0f64).unwrap();
        assert!(zero.iter().all(|(_, c)| c == 0.0));
        let one = yamazaki_composition(1.0f64).unwrap();
        let got: Vec<f64> = IonRegistry::default()
            .ions()
            .iter()
            .map(|i| one.concentration(i).unwrap())
            .collect();
        assert_eq!(got, vec![4.0, 1.0, 4.0, 0.5]);
        let c = yamazaki_composition(0.971f64).unwrap();
        assert_relative_eq!(c.concentration(&IonSpecies::potassium()).unwrap(), 3.884, max_relative = 1e-12);
        assert!(yamazaki_composition(-0.5f64).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let c = PhysicalConstants::<f32>::default();
        let k = IonSpecies::potassium();
        let e = ElectrodeSpec::new(k.clone(), 0.0f32);
        let comp = SolutionComposition::new(298.15f32).unwrap().with(k, 1000.0 * std::f32::consts::E).unwrap();
        let v = nikolsky_eisenman(&e, &comp, &ActivityModel::ideal(), &c).unwrap();
        assert!((v - 0.025693).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn zero_selectivity_is_pure_nernst(a in 1e-6f64..=10.0, e0 in -0.5f64..0.5, zi in 0usize..4) {
            let ion = IonRegistry::default().ions()[zi].clone();
            let consts = PhysicalConstants::<f64>::default();
            let mut e = ElectrodeSpec::new(ion.clone(), e0);
            for other in IonRegistry::default().ions() {
                if other != &ion {
                    e.set_selectivity(other.clone(), 0.0).unwrap();
                }
            }
            let comp = yamazaki_composition(1.0).unwrap().with(ion.clone(), a * 1000.0).unwrap();
            let got = nikolsky_eisenman(&e, &comp, &ActivityModel::ideal(), &consts).unwrap();
            let want = e0 + consts.nernst_slope(298.15, ion.charge()) * a.ln();
            prop_assert!((got - want).abs() <= 1e-15 * (1.0 + want.abs()) * 4.0);
        }

        #[test]
        fn monotone_in_target_activity(a1 in 1e-5f64..5.0, ratio in 1.001f64..100.0, zi in 0usize..4) {
            let reg = IonRegistry::default();
            let ion = reg.ions()[zi].clone();
            let consts = PhysicalConstants::<f64>::default();
            let mut e = ElectrodeSpec::new(ion.clone(), 0.2);
            for other in reg.ions() {
                if other != &ion {
                    e.set_selectivity(other.clone(), default_selectivity(&ion, other, 0.05, 0.01)).unwrap();
                }
            }
            let base = yamazaki_composition(1.0).unwrap();
            let lo = base.clone().with(ion.clone(), a1 * 1000.0).unwrap();
            let hi = base.with(ion.clone(), a1 * ratio * 1000.0).unwrap();
            let ideal = ActivityModel::ideal();
            let v_lo = nikolsky_eisenman(&e, &lo, &ideal, &consts).unwrap();
            let v_hi = nikolsky_eisenman(&e, &hi, &ideal, &consts).unwrap();
            if ion.charge() > 0 { prop_assert!(v_hi > v_lo); } else { prop_assert!(v_hi < v_lo); }
        }

        #[test]
        fn dilution_increasing_and_bounded(n in 0i64..500, mixture in any::<bool>()) {
            let s = if mixture { DilutionSchedule::<f64>::mixture() } else { DilutionSchedule::single_solvent() };
            let m0 = s.multiple(n).unwrap();
            let m1 = s.multiple(n + 1).unwrap();
            prop_assert!(m1 > m0);
            prop_assert!(m1 < s.strength);
        }

        #[test]
        fn calibration_log_affine(a in 1e-3f64..100.0, b in -20.0f64..20.0, v in -0.5f64..0.5, d in 0.01f64..0.3) {
            prop_assume!(b.abs() > 1e-3);
            let mut e = ElectrodeSpec::new(IonSpecies::potassium(), 0.0);
            e.set_calibration(Calibration::new(a, b).unwrap());
            let [c0, c1, c2] = [v, v + d, v + 2.0 * d].map(|x| calibration_forward(&e, x).unwrap());
            prop_assert_eq!(c1 > c0, b > 0.0);
            let (l0, l1, l2) = (c0.ln(), c1.ln(), c2.ln());
            prop_assert!(((l1 - l0) - (l2 - l1)).abs() < 1e-9 * (1.0 + l2.abs()));
        }

        #[test]
        fn standard_potential_gives_unit_activity(mu in -1e5f64..1e5, t in 1.0f64..1000.0) {
            let spec = ChemicalPotentialSpec { mu, mu_standard: mu };
            prop_assert_eq!(activity_from_potential(&spec, t, 8.314462618).unwrap(), 1.0);
        }
    }
}
