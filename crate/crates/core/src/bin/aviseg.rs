use std::error::Error as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aviseg_core::dataset::{load_outputs, SyntheticSpec};
use aviseg_core::evaluation::feature_importance;
use aviseg_core::pipeline::{
    constraints_for, export_distance_matrix, file_token, fit_method, load_features, prepare, run_pipeline,
    segment_method, select_training, with_threads, write_synthetic, EngineerMode, Method, OutputDir,
    PipelineConfig, Prepared, EFFECTIVE_CONFIG,
};
use aviseg_core::{Error, Result};

#[derive(Parser)]
#[command(name = "aviseg", version, about = "Metric learning and output-homogeneous segmentation")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: encode, select training scope, learn, segment, evaluate.
    Run(Common),
    /// Encode the feature table and write encoded.csv.
    Encode(Common),
    /// Select minimax training prototypes.
    Prototypes(Common),
    /// Identify constraint sets for one output.
    Constraints {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<String>,
    },
    /// Fit one learner on one output.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        output: Option<String>,
    },
    /// Cluster the population under one method at every k.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "euclidean")]
        method: Method,
        #[arg(long)]
        output: Option<String>,
    },
    /// Score an id,cluster labels file against one output.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        output: Option<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the full pairwise distance matrix under one method.
    ExportDistances {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "euclidean")]
        method: Method,
        #[arg(long)]
        output: Option<String>,
    },
    /// Generate a synthetic population and a config that runs on it.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        /// Signal features as index:weight, comma separated.
        #[arg(long, default_value = "0:1,1:1,2:1")]
        signal: String,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 10.0)]
        intercept: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Outputs CSV.
    #[arg(long)]
    outputs: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = ["auto", "none", "all"])]
    engineer: Option<String>,
    /// Share of the population used as training prototypes.
    #[arg(long)]
    fraction: Option<f64>,
    /// Explicit training ids.
    #[arg(long, value_delimiter = ',')]
    training_ids: Option<Vec<String>>,
    #[arg(long)]
    tail: Option<f64>,
    #[arg(long)]
    rho_micro: Option<usize>,
    #[arg(long)]
    rho_macro: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Outputs to analyse (default: all).
    #[arg(long, value_delimiter = ',')]
    only_outputs: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    top_features: Option<usize>,
    /// Iteration cap for every learner.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    itml_gamma: Option<f64>,
    #[arg(long)]
    itml_select_gamma: bool,
    #[arg(long)]
    lmnn_mu: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let p = &mut cfg.paths;
        if let Some(v) = &self.features {
            p.features = v.clone();
        }
        if let Some(v) = &self.schema {
            p.schema = v.clone();
        }
        if let Some(v) = &self.outputs {
            p.outputs = v.clone();
        }
        if let Some(v) = &self.out_dir {
            p.out_dir = v.clone();
        }
        if let Some(v) = &self.engineer {
            cfg.dataset.engineer = match v.as_str() {
                "none" => EngineerMode::None,
                "all" => EngineerMode::All,
                _ => EngineerMode::Auto,
            };
        }
        if let Some(v) = self.fraction {
            cfg.training.fraction = v;
        }
        if let Some(v) = &self.training_ids {
            cfg.training.ids = v.clone();
        }
        if let Some(v) = self.tail {
            cfg.constraints.tail = v;
        }
        if let Some(v) = self.rho_micro {
            cfg.constraints.rho_micro = v;
        }
        if let Some(v) = self.rho_macro {
            cfg.constraints.rho_macro = v;
        }
        if let Some(v) = &self.ks {
            cfg.run.ks = v.clone();
        }
        if let Some(v) = &self.only_outputs {
            cfg.run.outputs = v.clone();
        }
        if let Some(v) = &self.methods {
            cfg.run.methods = v.clone();
        }
        if let Some(v) = self.threads {
            cfg.run.threads = v;
        }
        if let Some(v) = self.top_features {
            cfg.run.top_features = v;
        }
        if let Some(v) = self.max_iter {
            cfg.mmc.max_iter = v;
            cfg.itml.max_iter = v;
            cfg.lmnn.max_iter = v;
        }
        if let Some(v) = self.itml_gamma {
            cfg.itml.gamma = v;
        }
        if self.itml_select_gamma {
            cfg.itml.select_gamma = true;
        }
        if let Some(v) = self.lmnn_mu {
            cfg.lmnn.mu = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Open the output directory, record the effective config, run `f` and
/// commit its staged files.
fn staged(cfg: &PipelineConfig, f: impl FnOnce(&mut OutputDir) -> Result<()> + Send) -> Result<Vec<PathBuf>> {
    let mut dir = OutputDir::open(&cfg.paths.out_dir)?;
    dir.write_now(EFFECTIVE_CONFIG, &cfg.to_toml()?)?;
    with_threads(cfg.run.threads, || f(&mut dir))??;
    dir.commit()
}

fn pick_output(prep: &Prepared, output: Option<String>) -> Result<String> {
    match output {
        Some(o) => Ok(prep.output(&o)?.name.clone()),
        None if prep.outputs.len() == 1 => Ok(prep.outputs[0].name.clone()),
        None => Err(Error::Config("several outputs available; pass --output".into())),
    }
}

fn learner(method: Method) -> Result<aviseg_core::learners::Algorithm> {
    method
        .algorithm()
        .ok_or_else(|| Error::Config(format!("{method} is not a learner")))
}

fn execute(command: Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let outcome = run_pipeline(&cfg)?;
            for w in &outcome.report.win_loss {
                println!(
                    "{} vs euclidean on {} ({}): {} wins, {} losses, {} ties",
                    w.method, w.output, w.scope, w.wins, w.losses, w.ties
                );
            }
            Ok(outcome.files)
        }
        Command::Encode(common) => {
            let cfg = common.config()?;
            staged(&cfg, |dir| {
                let (_, fm) = load_features(&cfg)?;
                dir.stage("encoded.csv", &fm.to_csv())
            })
        }
        Command::Prototypes(common) => {
            let cfg = common.config()?;
            staged(&cfg, |dir| {
                let (_, fm) = load_features(&cfg)?;
                let (rows, selection) = select_training(&cfg, &fm)?;
                match selection {
                    Some((dend, protos)) => {
                        dir.stage("training.csv", &protos.to_csv(fm.ids()))?;
                        dir.stage("dendrogram_prototypes.txt", &dend.to_text(fm.ids()))
                    }
                    None => {
                        let ids: Vec<&str> = rows.iter().map(|&i| fm.ids()[i].as_str()).collect();
                        dir.stage("training.csv", &format!("id\n{}\n", ids.join("\n")))
                    }
                }
            })
        }
        Command::Constraints { common, output } => {
            let cfg = common.config()?;
            staged(&cfg, |dir| {
                let prep = prepare(&cfg)?;
                let output = pick_output(&prep, output)?;
                let cs = constraints_for(&cfg, &prep, &output)?;
                dir.stage(&format!("constraints_{}.csv", file_token(&output)), &cs.to_csv(&prep.training_ids()))
            })
        }
        Command::Fit { common, method, output } => {
            let cfg = common.config()?;
            let alg = learner(method)?;
            staged(&cfg, |dir| {
                let prep = prepare(&cfg)?;
                let output = pick_output(&prep, output)?;
                let cs = constraints_for(&cfg, &prep, &output)?;
                let (m, report) = fit_method(&cfg, &prep, &cs, alg)?;
                let tag = format!("{}_{}", method, file_token(&output));
                dir.stage(&format!("metric_{tag}.txt"), &m.to_text())?;
                dir.stage(&format!("fit_{tag}.txt"), &report.to_text())?;
                if method == Method::Mmc {
                    let fi = feature_importance(&m, prep.features.columns(), cfg.run.top_features)?;
                    dir.stage(&format!("feature_importance_{}.csv", file_token(&output)), &fi.to_csv(&output))?;
                }
                Ok(())
            })
        }
        Command::Segment { common, method, output } => {
            let cfg = common.config()?;
            staged(&cfg, |dir| {
                let prep = prepare(&cfg)?;
                let output = match method.algorithm() {
                    Some(_) => Some(pick_output(&prep, output)?),
                    None => None,
                };
                let (dend, cuts) = segment_method(&cfg, &prep, method, output.as_deref())?;
                let tag = match &output {
                    Some(o) => format!("{method}_{}", file_token(o)),
                    None => method.to_string(),
                };
                dir.stage(&format!("dendrogram_{tag}.txt"), &dend.to_text(prep.features.ids()))?;
                for c in &cuts {
                    dir.stage(&format!("labels_{tag}_k{}.csv", c.k), &c.to_csv(prep.features.ids()))?;
                }
                Ok(())
            })
        }
        Command::Evaluate { labels, outputs, output, out } => {
            let text = fs::read_to_string(&labels).map_err(|e| Error::Config(format!("{}: {e}", labels.display())))?;
            let all = load_outputs(&outputs)?;
            let y = match output {
                Some(name) => all
                    .into_iter()
                    .find(|o| o.name == name)
                    .ok_or_else(|| Error::Config(format!("unknown output {name:?}")))?,
                None if all.len() == 1 => all.into_iter().next().expect("one output"),
                None => return Err(Error::Config("several outputs available; pass --output".into())),
            };
            let result = aviseg_core::pipeline::evaluate_labels(&text, &y)?;
            match out {
                Some(p) => {
                    fs::write(&p, result).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    Ok(vec![p])
                }
                None => {
                    print!("{result}");
                    Ok(Vec::new())
                }
            }
        }
        Command::ExportDistances { common, method, output } => {
            let cfg = common.config()?;
            staged(&cfg, |dir| {
                let csv = export_distance_matrix(&cfg, method, output.as_deref())?;
                let name = match &output {
                    Some(o) if method.algorithm().is_some() => format!("distances_{method}_{}.csv", file_token(o)),
                    _ => format!("distances_{method}.csv"),
                };
                dir.stage(&name, &csv)
            })
        }
        Command::Synth {
            n,
            d,
            signal,
            noise,
            intercept,
            seed,
            out_dir,
        } => {
            let signal = parse_signal(&signal)?;
            let spec = SyntheticSpec::new(n, d, signal, noise, seed).with_intercept(intercept);
            let config = write_synthetic(&spec, &out_dir)?;
            Ok(["schema.txt", "features.csv", "outputs.csv"]
                .iter()
                .map(|f| out_dir.join(f))
                .chain([config])
                .collect())
        }
    }
}

fn parse_signal(text: &str) -> Result<Vec<(usize, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (i, w) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("signal entry {item:?} is not index:weight")))?;
            let i = i.trim().parse().map_err(|_| Error::Config(format!("bad index in {item:?}")))?;
            let w = w.trim().parse().map_err(|_| Error::Config(format!("bad weight in {item:?}")))?;
            Ok((i, w))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
