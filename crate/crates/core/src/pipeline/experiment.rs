//! The full synthetic experiment: calibrate each electrode on single-salt
//! dilution series, simulate the mixture protocol, train the network and score
//! it against the ten-point calibration and quadratic baselines.

use ndarray::{Array2, ArrayView2};

use crate::calibrate::{
    calibrated_electrodes, fit_quadratic, predict_quadratic, ten_point_calibration, CalibrationFit,
    QuadraticModel,
};
use crate::chem::IonSpecies;
use crate::error::{Error, Result};
use crate::metrics::{per_sample_mape, report, summarize_distribution_at, DistributionSummary, EvalReport};
use crate::nn::{train, Dataset, History, NetworkModel};
use crate::sim::{run_experiment_protocol, ProtocolKind, Trace};

use super::config::{EvalSettings, PipelineConfig};
use super::data::{build_dataset, calibrate_from_traces, split, SplitSpec};

pub const TEN_POINT: &str = "ten_point";
pub const QUADRATIC: &str = "quadratic";
pub const PROPOSED: &str = "proposed";

/// Single-solvent traces for every ion in the registry, keyed by ion.
pub fn single_solvent_traces(config: &PipelineConfig) -> Result<Vec<(IonSpecies, Vec<Trace<f64>>)>> {
    config
        .sim
        .registry
        .ions()
        .iter()
        .map(|ion| {
            let traces = run_experiment_protocol(&ProtocolKind::SingleSolvent(ion.clone()), &config.sim)?;
            Ok((ion.clone(), traces))
        })
        .collect()
}

pub fn mixture_traces(config: &PipelineConfig) -> Result<Vec<Trace<f64>>> {
    run_experiment_protocol(&ProtocolKind::Mixture, &config.sim)
}

/// One exponential fit per electrode from its own single-salt series.
pub fn calibrate_all(config: &PipelineConfig) -> Result<Vec<CalibrationFit<f64>>> {
    let ions = config.sim.registry.ions();
    single_solvent_traces(config)?
        .into_iter()
        .map(|(ion, traces)| {
            let channel = ions.iter().position(|i| *i == ion).expect("ion from registry");
            calibrate_from_traces(&traces, &ion, channel, config.calib.floor)
        })
        .collect()
}

/// Ten-point baseline: each channel's own calibration curve, row by row.
pub fn ten_point_predict(
    channels: &[IonSpecies],
    fits: &[CalibrationFit<f64>],
    inputs: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let electrodes = calibrated_electrodes(channels, fits)?;
    let mut out = Array2::zeros(inputs.dim());
    for (row, mut dst) in inputs.rows().into_iter().zip(out.rows_mut()) {
        let c = ten_point_calibration(&electrodes, &row.to_vec())?;
        dst.assign(&ndarray::Array1::from(c));
    }
    Ok(out)
}

pub fn quadratic_predict(model: &QuadraticModel<f64>, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((inputs.nrows(), model.coefficients.len()));
    for (row, mut dst) in inputs.rows().into_iter().zip(out.rows_mut()) {
        dst.assign(&ndarray::Array1::from(predict_quadratic(model, &row.to_vec())?));
    }
    Ok(out)
}

/// Pooled metrics plus the per-sample MAPE distribution.
pub fn score(
    method: &str,
    truth: ArrayView2<'_, f64>,
    pred: ArrayView2<'_, f64>,
    settings: &EvalSettings,
) -> Result<(EvalReport<f64>, DistributionSummary<f64>)> {
    let gt = truth.as_standard_layout();
    let pr = pred.as_standard_layout();
    let metrics = report(
        gt.as_slice().expect("standard layout"),
        pr.as_slice().expect("standard layout"),
    )?;
    if !metrics.mape_percent.is_finite() || !metrics.mse.is_finite() {
        return Err(Error::domain(format!("{method} predictions are not finite")));
    }
    let per_row = per_sample_mape(truth, pred)?;
    let dist = summarize_distribution_at(&per_row, settings.histogram_bins, settings.tail_threshold)?;
    Ok((EvalReport::new(method, metrics, &dist), dist))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub calibrations: Vec<CalibrationFit<f64>>,
    /// Mixture rows surviving the floor, before the split.
    pub rows: usize,
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub model: NetworkModel<f64>,
    pub history: History<f64>,
    /// ten_point, quadratic, proposed, in that order.
    pub reports: Vec<EvalReport<f64>>,
    pub network_distribution: DistributionSummary<f64>,
}

impl ExperimentOutcome {
    pub fn report(&self, method: &str) -> Option<&EvalReport<f64>> {
        self.reports.iter().find(|r| r.method == method)
    }
}

/// Mixture dataset after the floor filter, split per the config.
pub fn mixture_split(config: &PipelineConfig) -> Result<(usize, Dataset<f64>, Dataset<f64>)> {
    let traces = mixture_traces(config)?;
    let data = build_dataset(&traces, config.dataset.floor, config.dataset.stable_only)?;
    let spec = SplitSpec {
        test_fraction: config.dataset.test_fraction,
        seed: config.dataset.seed,
    };
    let (train_set, test_set) = split(&data, &spec)?;
    Ok((data.len(), train_set, test_set))
}

pub fn run_experiment(config: &PipelineConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let channels = config.sim.registry.ions().to_vec();
    let calibrations = calibrate_all(config)?;
    let (rows, train_set, test_set) = mixture_split(config)?;
    let settings = &config.eval;

    let ten = ten_point_predict(&channels, &calibrations, test_set.inputs())?;
    let (ten_report, _) = score(TEN_POINT, test_set.targets(), ten.view(), settings)?;

    let quad = fit_quadratic(&train_set)?;
    let quad_pred = quadratic_predict(&quad, test_set.inputs())?;
    let (quad_report, _) = score(QUADRATIC, test_set.targets(), quad_pred.view(), settings)?;

    let init = NetworkModel::initialize(
        train_set.input_dim(),
        &config.train.hidden,
        train_set.output_dim(),
        config.train.config.seed,
    )?;
    let (model, history) = train(init, &train_set, &test_set, &config.train.config)?;
    let pred = model.predict(test_set.inputs())?;
    let (net_report, dist) = score(PROPOSED, test_set.targets(), pred.view(), settings)?;

    Ok(ExperimentOutcome {
        calibrations,
        rows,
        train: train_set,
        test: test_set,
        model,
        history,
        reports: vec![ten_report, quad_report, net_report],
        network_distribution: dist,
    })
}
