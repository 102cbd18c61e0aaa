//! Command-line front end. `run` parses arguments, dispatches, writes outputs
//! and returns the process exit code: 0 success, 1 I/O failure, 2 invalid
//! input, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use rayon::prelude::*;

use crate::calibrate::{self, CalibError, ParameterSet, SimplexOptions};
use crate::config::{resolve, ConfigDocument, ConfigError, RunConfig};
use crate::engine::{
    preset, run_plan, run_scenario, EngineError, PresetName, ScenarioConfig, Table, TableCell,
    PRESET_NAMES,
};
use crate::gripper::{grasp_mode, jaw_range, Context, GripperError, ObjectKind};
use crate::output::{format_sig, series_csv, table_csv, OutputError, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "meta-actuator",
    version,
    about = "Dual-sided electrothermal actuator simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Reject unknown config sections and keys.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    strict: bool,
    /// Fitted-parameter fragment layered over every config.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its time series.
    Simulate { config: PathBuf },
    /// Run a named experiment preset.
    Preset {
        name: Option<String>,
        /// Print the preset names.
        #[arg(long)]
        list: bool,
        /// Scenario file supplying the device and parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the free parameters to a targets file.
    Calibrate {
        targets: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        max_iterations: usize,
    },
    /// Jaw range of a two-finger gripper and the grasp mode for an object.
    Gripper { config: PathBuf },
    /// Run one scenario per value of the swept key.
    Sweep { config: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::Engine(e) => e.into(),
            CalibError::NonFinite(_) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<GripperError> for CliError {
    fn from(e: GripperError) -> Self {
        match e {
            GripperError::Engine(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        match e {
            OutputError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load(cli: &Cli, config: Option<&Path>) -> Result<(ConfigDocument, RunConfig), CliError> {
    let mut doc = match config {
        Some(p) => ConfigDocument::parse(&read(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => ConfigDocument::default(),
    };
    if let Some(p) = &cli.params {
        let fragment = ConfigDocument::parse(&read(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        doc.layer(fragment);
    }
    let resolved = resolve(&doc, cli.strict)?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    Ok((doc, resolved))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { config } => {
            let (_, rc) = load(cli, Some(config))?;
            let records = run_scenario(&rc.scenario)?;
            let mut m = RunManifest::create(&cli.out)?;
            m.write(&format!("{}.csv", rc.scenario.name), &series_csv(&records)?)?;
            finish(m)
        }
        Command::Preset { list: true, .. } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Preset { name: None, .. } => Err(CliError::Input(format!(
            "missing preset name (one of {})",
            PRESET_NAMES.join(", ")
        ))),
        Command::Preset {
            name: Some(name),
            config,
            ..
        } => {
            let which: PresetName = name.parse()?;
            let (_, rc) = load(cli, config.as_deref())?;
            let outcome = run_plan(&preset(which, &rc.scenario)?)?;
            let mut m = RunManifest::create(&cli.out)?;
            m.write("summary.csv", &table_csv(&outcome.summary))?;
            let metrics = Table {
                columns: vec!["metric".into(), "value".into()],
                rows: outcome
                    .metrics
                    .iter()
                    .map(|(k, v)| vec![TableCell::Text(k.clone()), TableCell::Num(*v)])
                    .collect(),
            };
            m.write("metrics.csv", &table_csv(&metrics))?;
            for r in &outcome.runs {
                m.write(
                    &format!("{}.csv", r.meta.label),
                    &series_csv(&r.result.records)?,
                )?;
            }
            finish(m)
        }
        Command::Calibrate {
            targets,
            config,
            max_iterations,
        } => {
            let targets = calibrate::parse_targets(&read(targets)?)?;
            let (_, rc) = load(cli, config.as_deref())?;
            let opts = SimplexOptions {
                max_iterations: *max_iterations,
                ..Default::default()
            };
            let init = ParameterSet::from_config(&rc.scenario);
            let fit = calibrate::fit(&targets, &init, &rc.scenario, &opts)?;
            let mut m = RunManifest::create(&cli.out)?;
            m.write("fitted.cfg", &fit.params.to_fragment())?;
            let mut trace = String::from("iteration,best_objective\n");
            for (i, v) in fit.trace.iter().enumerate() {
                trace.push_str(&format!("{i},{}\n", format_sig(*v)));
            }
            m.write("trace.csv", &trace)?;
            let mut obs = String::from("name,simulated,target,unit,weight\n");
            for t in &targets {
                obs.push_str(&format!(
                    "{},{},{},{},{}\n",
                    t.observable.as_str(),
                    format_sig(fit.observables.get(t.observable)),
                    format_sig(t.value),
                    t.observable.unit(),
                    format_sig(t.weight)
                ));
            }
            m.write("observables.csv", &obs)?;
            println!(
                "objective {} after {} iterations{}",
                format_sig(fit.objective),
                fit.iterations,
                if fit.converged {
                    ""
                } else {
                    " (iteration limit)"
                }
            );
            finish(m)
        }
        Command::Gripper { config } => {
            let (_, rc) = load(cli, Some(config))?;
            let jaw = jaw_range(&rc.gripper, &rc.scenario)?;
            let mut table = Table {
                columns: [
                    "separation_mm",
                    "min_opening_mm",
                    "rest_opening_mm",
                    "max_opening_mm",
                    "object_kind",
                    "outer_width_mm",
                    "cavity_width_mm",
                    "tube_diameter_mm",
                    "mode",
                ]
                .map(String::from)
                .to_vec(),
                rows: Vec::new(),
            };
            let mut row = vec![
                TableCell::Num(rc.gripper.separation),
                TableCell::Num(jaw.min),
                TableCell::Num(jaw.rest),
                TableCell::Num(jaw.max),
            ];
            match &rc.object {
                Some(o) => row.extend([
                    TableCell::Text(
                        match o.kind {
                            ObjectKind::Solid => "solid",
                            ObjectKind::Hollow => "hollow",
                        }
                        .into(),
                    ),
                    TableCell::Num(o.outer_width),
                    o.cavity_width.into(),
                    match o.context {
                        Context::Tube(d) => TableCell::Num(d),
                        Context::Free => TableCell::Empty,
                    },
                    TableCell::Text(grasp_mode(&jaw, o).as_str().into()),
                ]),
                None => row.extend(std::iter::repeat_n(TableCell::Empty, 5)),
            }
            table.rows.push(row);
            let mut m = RunManifest::create(&cli.out)?;
            m.write("gripper.csv", &table_csv(&table))?;
            finish(m)
        }
        Command::Sweep { config } => {
            let (doc, rc) = load(cli, Some(config))?;
            let sweep = rc
                .sweep
                .ok_or_else(|| CliError::Input("[run] needs sweep_key and sweep_values".into()))?;
            let configs: Vec<ScenarioConfig> = sweep
                .values
                .iter()
                .map(|v| {
                    let mut d = doc.clone();
                    d.set(&sweep.section, &sweep.key, &v.to_string());
                    Ok(resolve(&d, cli.strict)?.scenario)
                })
                .collect::<Result<_, CliError>>()?;
            let results: Vec<_> = configs
                .par_iter()
                .map(run_scenario)
                .collect::<Result<_, EngineError>>()?;
            let mut m = RunManifest::create(&cli.out)?;
            let column = format!("{}.{}", sweep.section, sweep.key);
            let mut table = Table {
                columns: vec![
                    "index".into(),
                    column,
                    "file".into(),
                    "final_tip_disp_mm".into(),
                    "final_ref_disp_mm".into(),
                ],
                rows: Vec::new(),
            };
            for (k, (v, records)) in sweep.values.iter().zip(&results).enumerate() {
                let file = format!("{}_{k}.csv", rc.scenario.name);
                m.write(&file, &series_csv(records)?)?;
                let last = records.last();
                table.rows.push(vec![
                    TableCell::Num(k as f64),
                    TableCell::Num(*v),
                    TableCell::Text(file),
                    last.map(|r| r.tip_disp).into(),
                    last.map(|r| r.ref_disp).into(),
                ]);
            }
            m.write("summary.csv", &table_csv(&table))?;
            finish(m)
        }
    }
}

fn finish(m: RunManifest) -> Result<(), CliError> {
    let n = m.files.len();
    let dir = m.dir.clone();
    m.finish()?;
    println!("wrote {n} files to {}", dir.display());
    Ok(())
}
