use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use shapchain::attribution::{AttributionMode, AttributionReport};
use shapchain::chart::render_report_svgs;
use shapchain::experiment::{
    render_outputs, replay, run_experiment, write_outputs, AllOrders, DatasetSpec,
    ExperimentConfig, Manifest, OrdersSpec, MANIFEST_FILE,
};
use shapchain::shapley::ShapleyMode;
use shapchain::{Error, ErrorCategory, Result};

#[derive(Parser)]
#[command(name = "shapchain", version, about = "Direct and indirect Shapley attributions for classifier chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit chains for each order, attribute the test split and write reports.
    Explain(ExplainArgs),
    /// Render one SVG bar chart per output from a report.
    Chart {
        /// Report JSON written by `explain`.
        report: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Re-run the configuration recorded in a manifest and compare hashes.
    Replay {
        manifest: PathBuf,
        /// Also write the regenerated files here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Absolute,
    Signed,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Sampled,
}

#[derive(clap::Args)]
struct ExplainArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file, or `xor` for the synthetic and/or/xor data.
    #[arg(long)]
    data: Option<String>,
    /// Comma-separated output columns of the CSV.
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<String>>,
    /// `all`, or orders separated by `;` with outputs separated by `,`.
    #[arg(long)]
    orders: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Sets every seed: data, split, training and Shapley sampling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    background_size: Option<usize>,
    #[arg(long)]
    explain_rows: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_orders(s: &str) -> OrdersSpec {
    if s.trim() == "all" {
        return OrdersSpec::All(AllOrders::All);
    }
    OrdersSpec::List(
        s.split(';')
            .map(|o| o.split(',').map(|n| n.trim().to_string()).collect())
            .collect(),
    )
}

fn build_config(a: &ExplainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::xor_default(),
    };
    match a.data.as_deref() {
        Some("xor") => {
            if !matches!(cfg.dataset, DatasetSpec::Xor { .. }) {
                cfg.dataset = ExperimentConfig::xor_default().dataset;
            }
        }
        Some(path) => match &mut cfg.dataset {
            DatasetSpec::Csv { path: p, .. } => *p = PathBuf::from(path),
            DatasetSpec::Xor { .. } => {
                let outputs = a.outputs.clone().ok_or_else(|| {
                    Error::config("--outputs", "required when --data names a CSV file")
                })?;
                cfg.dataset = DatasetSpec::Csv {
                    path: PathBuf::from(path),
                    outputs,
                    drop: Vec::new(),
                    discretize: Vec::new(),
                    binarize: Default::default(),
                    normalize: true,
                    subsample: None,
                    subsample_seed: 0,
                };
            }
        },
        None => {}
    }
    if let Some(outs) = &a.outputs {
        match &mut cfg.dataset {
            DatasetSpec::Csv { outputs, .. } => *outputs = outs.clone(),
            DatasetSpec::Xor { .. } => {
                return Err(Error::config("--outputs", "only applies to CSV data"));
            }
        }
    }
    if let Some(o) = &a.orders {
        cfg.orders = parse_orders(o);
    }
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Absolute => AttributionMode::Absolute,
            ModeArg::Signed => AttributionMode::Signed,
        };
    }
    if let Some(e) = a.estimator {
        cfg.shapley.mode = match e {
            EstimatorArg::Exact => ShapleyMode::Exact,
            EstimatorArg::Sampled => ShapleyMode::Sampled,
        };
    }
    if let Some(seed) = a.seed {
        match &mut cfg.dataset {
            DatasetSpec::Xor { seed: s, .. } => *s = seed,
            DatasetSpec::Csv { subsample_seed, .. } => *subsample_seed = seed,
        }
        cfg.split.seed = seed;
        cfg.train.seed = seed;
        cfg.shapley.seed = seed;
    }
    if let Some(p) = a.permutations {
        cfg.shapley.permutations = p;
    }
    if let Some(b) = a.background_size {
        cfg.shapley.background_size = b;
    }
    if a.explain_rows.is_some() {
        cfg.explain_rows = a.explain_rows;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let cfg = build_config(a)?;
    let out = run_experiment(&cfg)?;
    let files = render_outputs(&out)?;
    write_outputs(&cfg.out_dir, &files)?;
    for r in &out.per_order {
        let acc: Vec<String> = r
            .metrics
            .iter()
            .filter(|(k, _)| k.starts_with("test."))
            .map(|(k, v)| format!("{}={v:.4}", &k[5..]))
            .collect();
        println!("order {:<32} {}", r.label, acc.join(" "));
    }
    let inv = &out.invariants;
    println!(
        "invariants ok: z-sum {:.2e}, conservation {:.2e}, first-position {:.2e} over {} links",
        inv.z_sum_max_dev, inv.conservation_max_dev, inv.first_position_max_abs, inv.checked
    );
    println!("wrote {} files to {}", files.len(), cfg.out_dir.display());
    Ok(())
}

fn chart(report: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(report).map_err(|source| Error::Io {
        path: report.to_path_buf(),
        source,
    })?;
    let r = AttributionReport::from_json(&text)?;
    let svgs = render_report_svgs(&r)?;
    write_outputs(out_dir, &svgs.iter().cloned().collect())?;
    for (name, _) in &svgs {
        println!("{}", out_dir.join(name).display());
    }
    Ok(())
}

fn replay_cmd(path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let manifest = Manifest::from_json(&text)?;
    let (mut files, mismatched) = replay(&manifest)?;
    if let Some(dir) = out_dir {
        files.insert(MANIFEST_FILE.into(), text);
        write_outputs(dir, &files)?;
    }
    if !mismatched.is_empty() {
        return Err(Error::Numerical(format!(
            "replay differs from manifest in: {}",
            mismatched.join(", ")
        )));
    }
    println!("replay matches all {} recorded files", manifest.files.len());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Explain(a) => explain(a),
        Command::Chart { report, out_dir } => chart(report, out_dir),
        Command::Replay { manifest, out_dir } => replay_cmd(manifest, out_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
