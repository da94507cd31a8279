use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use log::info;
use serde::Serialize;
use stabletree::io::{read_dataset, read_schema, write_dataset, write_schema, Labels};
use stabletree::oracle::serve;
use stabletree::synth::{sample_synthetic, synthetic_schema};
use stabletree::{
    build_tree, fit_forest, mimic_accuracy, predictive_accuracy, stability_experiment, Dataset, Error, ExternalOracle,
    Forest, ForestConfig, MimicReport, Oracle, OracleHandle, Schema, Tolerance, Tree,
};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

pub fn run(cli: Cli) -> CliResult<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Simulate(a) => simulate(a, threads),
        Command::FitOracle(a) => fit_oracle(a, threads),
        Command::Distill(a) => distill(a, threads),
        Command::Evaluate(a) => evaluate(a, threads),
        Command::Stability(a) => stability(a, threads),
        Command::Export(a) => export(a),
        Command::ServeOracle(a) => serve_oracle(a),
    }
}

fn simulate(a: SimulateArgs, threads: Option<usize>) -> CliResult<()> {
    let mut rec = Recorder::new("simulate", threads);
    rec.seed(a.seed);
    rec.config(&serde_json::json!({ "n": a.n, "seed": a.seed }))?;
    rec.phase("sample");
    let data: Dataset = sample_synthetic(a.n, a.seed)?;
    rec.phase("write");
    write_dataset(&data, &a.out)?;
    rec.output(&a.out)?;
    if let Some(p) = &a.schema_out {
        write_schema(&synthetic_schema(), p)?;
        rec.output(p)?;
    }
    rec.finish(&a.out)?;
    info!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn fit_oracle(a: FitOracleArgs, threads: Option<usize>) -> CliResult<()> {
    let mut rec = Recorder::new("fit-oracle", threads);
    rec.phase("read");
    let schema = read_schema(&a.schema)?;
    rec.input(&a.schema)?;
    let data: Dataset = read_dataset(&a.data, &schema, Labels::Required)?;
    rec.input(&a.data)?;
    let cfg = ForestConfig {
        tree_count: a.trees,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        features_per_split: a.features_per_split,
        bootstrap: !a.no_bootstrap,
        seed: a.seed,
        allow_constant: a.allow_constant,
    };
    rec.seed(a.seed);
    rec.config(&cfg)?;
    rec.phase("fit");
    let forest = fit_forest(&data, &cfg)?;
    if let Some(oob) = forest.oob_accuracy() {
        info!("out-of-bag accuracy {oob:.4}");
    }
    rec.phase("write");
    let mut w = BufWriter::new(File::create(&a.out)?);
    forest.write_to(&mut w)?;
    w.flush()?;
    drop(w);
    rec.output(&a.out)?;
    rec.finish(&a.out)?;
    Ok(())
}

fn load_forest(path: &Path) -> CliResult<Forest> {
    let f = File::open(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(Forest::read_from(BufReader::new(f))?)
}

/// Opens the oracle and checks it against `schema`.
fn open_oracle(opts: &OracleOpts, schema: &Schema, rec: &mut Recorder) -> CliResult<OracleHandle<f64>> {
    match (&opts.source.oracle, &opts.source.external_oracle) {
        (Some(path), _) => {
            let forest = load_forest(path)?;
            rec.input(path)?;
            if forest.schema().digest() != schema.digest() {
                return Err(Error::Schema(format!(
                    "oracle {} was fitted on a different schema",
                    path.display()
                ))
                .into());
            }
            Ok(OracleHandle::Builtin(forest))
        }
        (None, Some(cmd)) => {
            if !(opts.oracle_timeout > 0.0 && opts.oracle_timeout.is_finite()) {
                return Err(CliError::Usage("--oracle-timeout must be a positive number of seconds".into()));
            }
            let timeout = Duration::from_secs_f64(opts.oracle_timeout);
            Ok(OracleHandle::External(ExternalOracle::spawn(cmd, schema.class_count(), timeout)?))
        }
        (None, None) => Err(CliError::Usage("one of --oracle or --external-oracle is required".into())),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)?;
    Ok(())
}

fn distill(a: DistillArgs, threads: Option<usize>) -> CliResult<()> {
    let mut rec = Recorder::new("distill", threads);
    let cfg = a.build.config();
    cfg.validate()?;
    rec.seed(cfg.seed);
    rec.config(&cfg)?;
    rec.phase("read");
    let schema = read_schema(&a.schema)?;
    rec.input(&a.schema)?;
    let data: Dataset = read_dataset(&a.data, &schema, Labels::Ignored)?;
    rec.input(&a.data)?;
    let oracle = open_oracle(&a.oracle, &schema, &mut rec)?;
    rec.phase("build");
    let tree = build_tree(&data, &oracle, &cfg)?;
    info!(
        "tree depth {} with {} internal nodes and {} leaves",
        tree.depth(),
        tree.internal_count(),
        tree.leaf_count()
    );
    rec.phase("write");
    write_text(&a.out, &tree.to_json()?)?;
    rec.output(&a.out)?;
    rec.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    mimic: MimicReport,
    /// Present when the test rows carry labels.
    tree_accuracy: Option<f64>,
    oracle_accuracy: Option<f64>,
}

fn evaluate(a: EvaluateArgs, threads: Option<usize>) -> CliResult<()> {
    let mut rec = Recorder::new("evaluate", threads);
    rec.phase("read");
    let tree = Tree::from_json(&fs::read_to_string(&a.tree)?)?;
    rec.input(&a.tree)?;
    let schema = tree.schema().clone();
    let data: Dataset = read_dataset(&a.data, &schema, Labels::Optional)?;
    rec.input(&a.data)?;
    let oracle = open_oracle(&a.oracle, &schema, &mut rec)?;
    rec.phase("evaluate");
    let mimic = mimic_accuracy(&tree, &oracle, data.rows())?;
    let (tree_accuracy, oracle_accuracy) = if data.labels().is_some() {
        (
            Some(predictive_accuracy(&tree, &data)?),
            Some(predictive_accuracy(&oracle as &dyn Oracle<f64>, &data)?),
        )
    } else {
        (None, None)
    };
    let report = EvaluationReport {
        mimic,
        tree_accuracy,
        oracle_accuracy,
    };
    rec.phase("write");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_text(&a.out, &text)?;
    rec.output(&a.out)?;
    rec.finish(&a.out)?;

    println!("test rows         {}", report.mimic.n_test);
    println!("class agreement   {:.4}", report.mimic.class_agreement);
    println!("mean L1 distance  {:.4}", report.mimic.l1_prob_diff);
    if let (Some(t), Some(o)) = (report.tree_accuracy, report.oracle_accuracy) {
        println!("tree accuracy     {t:.4}");
        println!("oracle accuracy   {o:.4}");
    }
    Ok(())
}

fn stability(a: StabilityArgs, threads: Option<usize>) -> CliResult<()> {
    if a.replicates < 2 {
        return Err(CliError::Usage(format!(
            "--replicates must be at least 2, got {}",
            a.replicates
        )));
    }
    let tolerance = match (a.tolerance_rel, a.tolerance_abs) {
        (_, Some(v)) => Tolerance::Absolute(v),
        (Some(v), None) => Tolerance::RelativeToRange(v),
        (None, None) => Tolerance::default(),
    };
    let mut rec = Recorder::new("stability", threads);
    let cfg = a.build.config();
    cfg.validate()?;
    rec.seed(cfg.seed);
    rec.config(&serde_json::json!({
        "build": cfg,
        "replicates": a.replicates,
        "depths": a.depths,
        "tolerance": tolerance,
    }))?;
    rec.phase("read");
    let schema = read_schema(&a.schema)?;
    rec.input(&a.schema)?;
    let data: Dataset = read_dataset(&a.data, &schema, Labels::Ignored)?;
    rec.input(&a.data)?;
    let oracle = open_oracle(&a.oracle, &schema, &mut rec)?;
    rec.phase("replicates");
    let report = stability_experiment(&data, &oracle, &cfg, a.replicates, &a.depths, tolerance)?;
    if report.failures() > 0 {
        log::warn!("{} of {} replicates failed", report.failures(), a.replicates);
    }
    rec.phase("write");
    write_text(&a.out, &report.to_json()?)?;
    rec.output(&a.out)?;
    if let Some(p) = &a.csv {
        let mut w = BufWriter::new(File::create(p)?);
        report.write_csv(&mut w)?;
        w.flush()?;
        drop(w);
        rec.output(p)?;
    }
    let table = report.to_text();
    if let Some(p) = &a.text {
        write_text(p, &table)?;
        rec.output(p)?;
    }
    rec.finish(&a.out)?;
    print!("{table}");
    Ok(())
}

fn export(a: ExportArgs) -> CliResult<()> {
    let tree = Tree::from_json(&fs::read_to_string(&a.tree)?)?;
    let text = match a.format {
        ExportFormat::Dot => tree.to_dot(),
        ExportFormat::Json => tree.to_json()?,
    };
    write_text(&a.out, &text)
}

fn serve_oracle(a: ServeOracleArgs) -> CliResult<()> {
    let forest = load_forest(&a.oracle)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(&forest, stdin.lock(), stdout.lock())?;
    Ok(())
}
