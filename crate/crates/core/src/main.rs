//! Command-line harness: dataset generation, identification, single-run
//! comparisons, Monte Carlo campaigns, and metric evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use vsn_sm::config::ExperimentConfig;
use vsn_sm::error::Result;
use vsn_sm::harness::{run_mc, run_single, McCampaign, SingleRunReport};
use vsn_sm::metrics::{kl_divergence, reconstruction_error};
use vsn_sm::model::StimulationModel;
use vsn_sm::observe::{generate_dataset, ObservationDataset};
use vsn_sm::pipeline::{identify, IdentificationReport, Method};

#[derive(Parser)]
#[command(
    name = "vsn-sm",
    about = "Stimulation-model identification for visual sensor networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method list from {gmm, vgmm, gmm-ae, vgmm-ae,
    /// gmm-dnn, vgmm-dnn}; overrides the configured one.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model and observation dataset.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        /// Reuse an existing model file instead of building one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run identification methods on an existing dataset.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file (.csv or .json).
        #[arg(long)]
        dataset: PathBuf,
        /// Ground-truth model file; when given, metrics are emitted too.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Single illustrative run: all configured methods on one dataset.
    Single {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo campaign over freshly drawn models.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of runs.
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
    /// Score a stored identification report against a ground-truth model.
    Metrics {
        /// Ground-truth model file.
        #[arg(long)]
        model: PathBuf,
        /// Identification report file.
        #[arg(long)]
        report: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, model } => cmd_gen(&common, model.as_deref()),
        Command::Identify {
            common,
            dataset,
            model,
        } => cmd_identify(&common, &dataset, model.as_deref()),
        Command::Single { common } => cmd_single(&common),
        Command::Mc { common, runs } => cmd_mc(&common, runs),
        Command::Metrics { model, report, out } => cmd_metrics(&model, &report, out.as_deref()),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(methods) = &common.methods {
        config.methods = methods
            .iter()
            .map(|name| Method::parse(name))
            .collect::<Result<_>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<StimulationModel> {
    let text = fs::read_to_string(path)?;
    let model: StimulationModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}

fn load_dataset(path: &Path) -> Result<ObservationDataset> {
    let dataset = if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path)?;
        serde_json::from_str::<ObservationDataset>(&text)?
    } else {
        let file = fs::File::open(path)?;
        ObservationDataset::read_csv(std::io::BufReader::new(file))?
    };
    dataset.validate()?;
    Ok(dataset)
}

fn cmd_gen(common: &CommonArgs, model_path: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let model = match model_path {
        Some(path) => load_model(path)?,
        None => config.build_model(config.seed)?,
    };
    for warning in model.validate()? {
        eprintln!("warning: {warning:?}");
    }
    let dataset = generate_dataset(&model, config.dataset_size, config.seed)?;
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("model.json"), &model)?;
    let mut csv = fs::File::create(common.out.join("dataset.csv"))?;
    dataset.write_csv(&mut csv)?;
    write_json(&common.out.join("dataset.json"), &dataset)?;
    println!(
        "wrote model.json, dataset.csv, dataset.json ({} observations) to {}",
        dataset.len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_identify(common: &CommonArgs, dataset_path: &Path, model_path: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let dataset = load_dataset(dataset_path)?;
    let truth = model_path.map(load_model).transpose()?;
    fs::create_dir_all(&common.out)?;
    for &method in &config.methods {
        let method_config = config.method_config(method, config.seed);
        let report = identify(&dataset, &method_config)?;
        write_json(
            &common.out.join(format!("report-{}.json", method.name())),
            &report,
        )?;
        match &truth {
            Some(model) => {
                let mut metrics = reconstruction_error(model, &report)?;
                metrics.d_kl = kl_divergence(model, &report, config.kl_convention);
                write_json(
                    &common.out.join(format!("metrics-{}.json", method.name())),
                    &metrics,
                )?;
                println!(
                    "{:9} m_hat {:2}  m_hat_eff {:2}  e_r {}  d_kl {}  ({:.1} ms)",
                    method.name(),
                    report.m_hat,
                    report.m_hat_eff,
                    sig3(metrics.e_r),
                    metrics.d_kl.map_or_else(|| "/".into(), sig3),
                    report.elapsed_ms
                );
            }
            None => println!(
                "{:9} m_hat {:2}  m_hat_eff {:2}  ({:.1} ms)",
                method.name(),
                report.m_hat,
                report.m_hat_eff,
                report.elapsed_ms
            ),
        }
    }
    println!("reports written to {}", common.out.display());
    Ok(())
}

fn cmd_single(common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let report = run_single(&config)?;
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("single_run.json"), &report)?;
    for outcome in &report.outcomes {
        write_json(
            &common.out.join(format!("report-{}.json", outcome.method)),
            &outcome.report,
        )?;
        write_weights_csv(
            &common.out.join(format!("weights-{}.csv", outcome.method)),
            &outcome.report,
        )?;
    }
    print_comparison_table(&report);
    println!("reports written to {}", common.out.display());
    Ok(())
}

fn print_comparison_table(report: &SingleRunReport) {
    println!(
        "seed {}  model {:016x}  D = {}",
        report.seed, report.model_fingerprint, report.dataset_len
    );
    println!(
        "{:<10} {:>6} {:>10} {:>9} {:>9}",
        "method", "m_hat", "m_hat_eff", "e_r", "d_kl"
    );
    for outcome in &report.outcomes {
        let m = &outcome.metrics;
        println!(
            "{:<10} {:>6} {:>10} {:>9} {:>9}",
            outcome.method,
            m.m_hat,
            m.m_hat_eff,
            sig3(m.e_r),
            m.d_kl.map_or_else(|| "/".into(), sig3),
        );
    }
}

fn cmd_mc(common: &CommonArgs, runs: usize) -> Result<()> {
    let config = load_config(common)?;
    let campaign = run_mc(&config, runs, config.seed)?;
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("campaign.json"), &campaign)?;
    write_campaign_tables(&common.out, &campaign)?;
    for agg in &campaign.aggregates {
        let median = median_from_ecdf(&agg.ecdf_e_r);
        println!(
            "{:9} runs {:3}  failures {}  median e_r {}  d_kl undefined {}",
            agg.method,
            campaign.n_runs,
            agg.failures,
            median.map_or_else(|| "/".into(), sig3),
            agg.d_kl_undefined
        );
    }
    println!(
        "campaign.json and aggregate tables written to {}",
        common.out.display()
    );
    Ok(())
}

fn median_from_ecdf(table: &[(f64, f64)]) -> Option<f64> {
    table.iter().find(|&&(_, f)| f >= 0.5).map(|&(v, _)| v)
}

fn cmd_metrics(model_path: &Path, report_path: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let text = fs::read_to_string(report_path)?;
    let report: IdentificationReport = serde_json::from_str(&text)?;
    let mut metrics = reconstruction_error(&model, &report)?;
    metrics.d_kl = kl_divergence(&model, &report, Default::default());
    let mut rendered = serde_json::to_string_pretty(&metrics)?;
    rendered.push('\n');
    match out {
        Some(path) => {
            fs::write(path, rendered)?;
            println!("metrics written to {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn write_weights_csv(path: &Path, report: &IdentificationReport) -> Result<()> {
    let mut text = String::from("stage,index,vertex,weight\n");
    for (i, (row, w)) in report.t_hat.iter().zip(&report.weights_raw).enumerate() {
        text.push_str(&format!("raw,{i},{},{w}\n", vertex_string(row)));
    }
    for (i, (row, w)) in report.t_hat_eff.iter().zip(&report.weights_eff).enumerate() {
        text.push_str(&format!("effective,{i},{},{w}\n", vertex_string(row)));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_campaign_tables(dir: &Path, campaign: &McCampaign) -> Result<()> {
    let mut hist = String::from("method,statistic,value,count\n");
    for agg in &campaign.aggregates {
        for &(value, count) in &agg.m_hat_histogram {
            hist.push_str(&format!("{},m_hat,{value},{count}\n", agg.method));
        }
        for &(value, count) in &agg.m_hat_eff_histogram {
            hist.push_str(&format!("{},m_hat_eff,{value},{count}\n", agg.method));
        }
    }
    fs::write(dir.join("histograms.csv"), hist)?;

    let mut table = String::from("method,metric,threshold,fraction\n");
    for agg in &campaign.aggregates {
        for &(threshold, fraction) in &agg.ecdf_e_r {
            table.push_str(&format!("{},e_r,{threshold},{fraction}\n", agg.method));
        }
        if let Some(ecdf) = &agg.ecdf_d_kl {
            for &(threshold, fraction) in ecdf {
                table.push_str(&format!("{},d_kl,{threshold},{fraction}\n", agg.method));
            }
        }
    }
    fs::write(dir.join("ecdf.csv"), table)?;
    Ok(())
}

fn vertex_string(row: &[u8]) -> String {
    row.iter().map(|&b| char::from(b'0' + b)).collect()
}

/// Three significant digits for human-facing tables.
fn sig3(value: f64) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}
