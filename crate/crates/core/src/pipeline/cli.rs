//! `ise` command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::calibrate::fit_quadratic;
use crate::chem::IonRegistry;
use crate::error::{Error, Result};
use crate::metrics::{comparison_table, EvalReport};
use crate::nn::{self, train, History, NetworkModel};
use crate::scalar::Scalar;
use crate::sim::Trace;

use super::config::{parse_widths, PipelineConfig};
use super::data::{build_dataset, calibrate_from_traces, split, SplitSpec};
use super::experiment::{
    mixture_traces, quadratic_predict, run_experiment, score, single_solvent_traces, ten_point_predict, PROPOSED,
    QUADRATIC, TEN_POINT,
};
use super::files::{
    calibrations_to_csv, ingest_trace, predictions_to_csv, read_calibrations, read_dataset, read_voltages,
    upsert_calibration, write, write_dataset, write_trace,
};

#[derive(Debug, Parser)]
#[command(name = "ise", version, about = "Simulate, calibrate and correct ion-selective electrode signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate single-salt and mixture dilution traces.
    Simulate {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one electrode's exponential calibration from traces.
    Calibrate {
        #[arg(long)]
        traces: String,
        #[arg(long)]
        ion: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        floor: f64,
    },
    /// Assemble a dataset from traces and split it.
    Dataset {
        #[arg(long)]
        traces: String,
        #[arg(long, default_value_t = 1e-6)]
        floor: f64,
        #[arg(long, default_value_t = 0.2)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        stable_only: bool,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Train a network.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Hidden widths, e.g. 256,256,256,256.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Predict concentrations for voltage rows.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model and the baselines on a test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Calibration CSV for the ten-point baseline.
        #[arg(long)]
        baselines: Option<PathBuf>,
        /// Training set for the quadratic baseline.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "default")]
        config: String,
    },
    /// Combine report files into a comparison table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole experiment from one config.
    Run {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `dir/stem.tag.ext` next to `path`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn glob_paths(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::Config(format!("bad glob {pattern:?}: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| {
            let path = e.path().to_path_buf();
            Error::io(path, e.into())
        })?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::io(
            pattern,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no files match"),
        ));
    }
    Ok(paths)
}

fn ingest_all(pattern: &str) -> Result<Vec<Trace<f64>>> {
    glob_paths(pattern)?
        .iter()
        .map(|p| ingest_trace(p).map_err(|e| annotate(p, e)))
        .collect()
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

pub fn history_to_csv(h: &History<f64>) -> String {
    let mut out = String::from("epoch,train_mape,test_mape,lr\n");
    for e in &h.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.epoch,
            e.train_mape.to_text(),
            e.test_mape.to_text(),
            e.lr.to_text()
        );
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let ions = IonRegistry::default().ions().to_vec();
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            for (ion, traces) in single_solvent_traces(&cfg)? {
                for (r, t) in traces.iter().enumerate() {
                    write_trace(t, &ions, out.join(format!("single_{}_r{r:02}.csv", ion.name())))?;
                }
            }
            for (r, t) in mixture_traces(&cfg)?.iter().enumerate() {
                write_trace(t, &ions, out.join(format!("mixture_r{r:02}.csv")))?;
            }
        }
        Command::Calibrate { traces, ion, out, floor } => {
            let registry = IonRegistry::default();
            let species = registry
                .get(&ion)
                .ok_or_else(|| Error::Config(format!("unknown ion {ion:?}")))?
                .clone();
            let channel = registry.index_of(&ion).expect("ion is registered");
            let traces = ingest_all(&traces)?;
            let fit = calibrate_from_traces(&traces, &species, channel, floor)?;
            upsert_calibration(&out, fit)?;
        }
        Command::Dataset {
            traces,
            floor,
            split: fraction,
            seed,
            stable_only,
            out_train,
            out_test,
        } => {
            let traces = ingest_all(&traces)?;
            let data = build_dataset(&traces, floor, stable_only)?;
            let spec = SplitSpec {
                test_fraction: fraction,
                seed,
            };
            let (train_set, test_set) = split(&data, &spec)?;
            write_dataset(&train_set, &out_train)?;
            write_dataset(&test_set, &out_test)?;
        }
        Command::Train {
            train: train_path,
            test,
            arch,
            config,
            seed,
            out,
            history,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let hidden = match arch {
                Some(a) => parse_widths(&a)?,
                None => cfg.train.hidden.clone(),
            };
            let mut tc = cfg.train.config.clone();
            if let Some(s) = seed {
                tc.seed = s;
            }
            let train_set = read_dataset(&train_path)?;
            let test_set = read_dataset(&test)?;
            let init = NetworkModel::initialize(train_set.input_dim(), &hidden, train_set.output_dim(), tc.seed)?;
            let (model, hist) = train(init, &train_set, &test_set, &tc)?;
            nn::save(&model, &out)?;
            if let Some(h) = history {
                write(&h, &history_to_csv(&hist))?;
            }
        }
        Command::Infer { model, input, out } => {
            let model: NetworkModel<f64> = nn::load(&model)?;
            let x = read_voltages::<f64>(&input)?;
            let pred = model.predict(x.view())?;
            write(&out, &predictions_to_csv(&pred, &ions))?;
        }
        Command::Eval {
            model,
            test,
            baselines,
            train: train_path,
            report,
            config,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let model: NetworkModel<f64> = nn::load(&model)?;
            let test_set = read_dataset::<f64>(&test)?;
            let pred = model.predict(test_set.inputs())?;
            let (net, dist) = score(PROPOSED, test_set.targets(), pred.view(), &cfg.eval)?;
            write(&report, &net.to_text())?;
            let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            write(&report.with_file_name(format!("{stem}.hist.csv")), &dist.histogram.to_csv())?;
            if let Some(calib) = baselines {
                let fits = read_calibrations::<f64>(&calib)?;
                let ten = ten_point_predict(&ions, &fits, test_set.inputs())?;
                let (r, _) = score(TEN_POINT, test_set.targets(), ten.view(), &cfg.eval)?;
                write(&sibling(&report, TEN_POINT), &r.to_text())?;
            }
            if let Some(t) = train_path {
                let quad = fit_quadratic(&read_dataset::<f64>(&t)?)?;
                let qp = quadratic_predict(&quad, test_set.inputs())?;
                let (r, _) = score(QUADRATIC, test_set.targets(), qp.view(), &cfg.eval)?;
                write(&sibling(&report, QUADRATIC), &r.to_text())?;
            }
        }
        Command::Report { inputs, out } => {
            let mut rows = Vec::new();
            for p in &inputs {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let r = EvalReport::<f64>::parse(&text).map_err(|e| annotate(p, e))?;
                rows.push((r.method, r.metrics));
            }
            let table = comparison_table(&rows)?;
            write(&out, &table.to_csv())?;
            print!("{}", table.to_text());
        }
        Command::Run { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let outcome = run_experiment(&cfg)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            write(&out.join("calibration.csv"), &calibrations_to_csv(&outcome.calibrations))?;
            nn::save(&outcome.model, out.join("model.txt"))?;
            write(&out.join("history.csv"), &history_to_csv(&outcome.history))?;
            write(
                &out.join("histogram.csv"),
                &outcome.network_distribution.histogram.to_csv(),
            )?;
            let mut rows = Vec::new();
            for r in &outcome.reports {
                write(&out.join(format!("report.{}.txt", r.method)), &r.to_text())?;
                rows.push((r.method.clone(), r.metrics));
            }
            let table = comparison_table(&rows)?;
            write(&out.join("comparison.csv"), &table.to_csv())?;
            println!(
                "{} mixture rows ({} train, {} test), {} epochs",
                outcome.rows,
                outcome.train.len(),
                outcome.test.len(),
                outcome.history.epochs.len()
            );
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 validation or usage error, 2 I/O or parse error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/r.txt"), "hist"), PathBuf::from("out/r.hist.txt"));
        assert_eq!(sibling(Path::new("r"), "quadratic"), PathBuf::from("r.quadratic"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["ise", "frobnicate"]), 1);
        assert_eq!(cli_main(["ise", "simulate", "--bogus"]), 1);
        assert_eq!(cli_main(["ise", "--help"]), 0);
    }

    #[test]
    fn missing_input_exits_two() {
        assert_eq!(cli_main(["ise", "infer", "--model", "/nonexistent/m", "--in", "x", "--out", "y"]), 2);
    }
}
