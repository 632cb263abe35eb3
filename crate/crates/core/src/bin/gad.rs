use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gad_core::autodiff::Activation;
use gad_core::data::{generate_synthetic, load_dataset, make_semi_split, save_dataset, SemiSplitParams, SyntheticSpec};
use gad_core::diagnostics::{anomalies_of, classify_density, k_hop_reachable_ratio};
use gad_core::encoders::EncoderKind;
use gad_core::experiment::{
    ablation_shuffle_ratio, grid_search, run_experiment, sweep_labeled_anomalies, DatasetSource,
    ExperimentConfig, Grid, Paradigm, SplitRegime,
};
use gad_core::graphlevel::{
    downsample_class, graphlevel_pipeline, GraphCollection, GraphLevelConfig, GraphMode, KEEP_FRACTION,
    TRAIN_RATIO,
};
use gad_core::pretrain::{DgiConfig, MaeConfig, Objective};
use gad_core::{Graph, Result};

#[derive(Parser)]
#[command(name = "gad", version, about = "Graph anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of one configuration.
    Run(ExperimentArgs),
    /// Grid search selected on validation AUPRC, then a full run of the winner.
    Grid {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// DGI shuffle-ratio ablation.
    AblateShuffle {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        ratios: Vec<f64>,
    },
    /// Detection AUROC and R_2 against the number of labeled anomalies.
    SweepLabels {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,5,20,100")]
        counts: Vec<usize>,
    },
    /// Graph statistics, density class and R_k for one semi split.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        n_anom: usize,
        #[arg(long, default_value_t = 80)]
        n_norm: usize,
        #[arg(long, default_value_t = 5)]
        max_k: usize,
    },
    /// Write a synthetic benchmark graph as edges/features/labels files.
    GenSynthetic {
        #[command(flatten)]
        synth: SynthArgs,
        /// Output directory for edges.txt, features.csv, labels.txt.
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
    },
    /// Graph-level detection on a manifest collection.
    GraphLevel(GraphLevelArgs),
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long = "synthetic-seed", default_value_t = 0)]
    synthetic_seed: u64,
    /// Feature shift of contextual anomalies.
    #[arg(long)]
    delta: Option<f64>,
    /// No injected signal: labels are a random subset.
    #[arg(long)]
    null_signal: bool,
}

impl SynthArgs {
    fn spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::sparse(self.nodes, self.synthetic_seed);
        if self.null_signal {
            spec = spec.null_signal();
        }
        if let Some(d) = self.delta {
            spec.delta = d;
        }
        spec
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Edge list; with --features and --labels replaces the synthetic graph.
    #[arg(long, requires_all = ["features", "labels"])]
    edges: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
}

impl DataArgs {
    fn source(&self) -> DatasetSource {
        match (&self.edges, &self.features, &self.labels) {
            (Some(e), Some(f), Some(l)) => DatasetSource::Files {
                edges: e.clone(),
                features: f.clone(),
                labels: l.clone(),
            },
            _ => DatasetSource::Synthetic(self.synth.spec()),
        }
    }

    fn explicit(&self) -> bool {
        self.edges.is_some()
            || self.synth.nodes != 2000
            || self.synth.synthetic_seed != 0
            || self.synth.delta.is_some()
            || self.synth.null_signal
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON ExperimentConfig; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trial t uses seed + t. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 10]
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory. [default: results]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paradigm: Option<Paradigm>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Labeled training anomalies of the semi split.
    #[arg(long, conflicts_with = "full_ratio")]
    n_anom: Option<usize>,
    #[arg(long, conflicts_with = "full_ratio")]
    n_norm: Option<usize>,
    /// Use the fully supervised split with this train ratio.
    #[arg(long)]
    full_ratio: Option<f64>,
    #[arg(long)]
    shuffle_ratio: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_k: Option<usize>,
    /// Concurrent trials; 0 = all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
            None => ExperimentConfig::default(),
        };
        if self.config.is_none() || self.data.explicit() {
            cfg.dataset = self.data.source();
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(seed => base_seed, trials => trials, out => out_dir, paradigm => paradigm,
             encoder => encoder, layers => num_layers, hidden => hidden_dim, epochs => epochs,
             pretrain_epochs => pretrain_epochs, lr => lr, shuffle_ratio => shuffle_ratio,
             mask_ratio => mask_ratio, gamma => gamma, max_k => max_k, workers => workers);
        if self.activation.is_some() {
            cfg.activation = self.activation;
        }
        if let Some(ratio) = self.full_ratio {
            cfg.split = SplitRegime::Full { ratio };
        } else if self.n_anom.is_some() || self.n_norm.is_some() {
            let (a, n) = match cfg.split {
                SplitRegime::Semi { n_anom, n_norm } => (n_anom, n_norm),
                SplitRegime::Full { .. } => (20, 80),
            };
            cfg.split = SplitRegime::Semi {
                n_anom: self.n_anom.unwrap_or(a),
                n_norm: self.n_norm.unwrap_or(n),
            };
        }
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Use the whole declared search space.
    #[arg(long)]
    full_space: bool,
    #[arg(long, value_delimiter = ',')]
    grid_encoder: Vec<EncoderKind>,
    #[arg(long, value_delimiter = ',')]
    grid_lr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_layers: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_activation: Vec<Activation>,
    /// Allow values outside the declared search space.
    #[arg(long)]
    override_search_space: bool,
}

impl GridArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let mut grid = if self.full_space {
            Grid::search_space()
        } else {
            cfg.grid.clone().unwrap_or_default()
        };
        if !self.grid_encoder.is_empty() {
            grid.encoder = self.grid_encoder.clone();
        }
        if !self.grid_hidden.is_empty() {
            grid.hidden_dim = self.grid_hidden.clone();
        }
        if !self.grid_layers.is_empty() {
            grid.num_layers = self.grid_layers.clone();
        }
        if !self.grid_lr.is_empty() {
            grid.lr = self.grid_lr.clone();
        }
        if !self.grid_activation.is_empty() {
            grid.activation = self.grid_activation.clone();
        }
        grid.override_search_space |= self.override_search_space;
        cfg.grid = Some(grid);
    }
}

#[derive(Args, Clone)]
struct GraphLevelArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Class whose graphs are downsampled into anomalies.
    #[arg(long, default_value_t = 0)]
    target_class: i64,
    #[arg(long, default_value_t = KEEP_FRACTION)]
    keep_fraction: f64,
    #[arg(long, default_value_t = TRAIN_RATIO)]
    train_ratio: f64,
    /// dgi, graphmae or end2end.
    #[arg(long, default_value = "dgi")]
    paradigm: Paradigm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Output directory for graph_level.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value = "gin")]
    encoder: EncoderKind,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn diagnose(graph: &Graph, seed: u64, n_anom: usize, n_norm: usize, max_k: usize) -> Result<()> {
    let stats = graph.stats()?;
    let density = classify_density(&stats);
    let split = make_semi_split(graph, SemiSplitParams::with_train(n_anom, n_norm), seed)?;
    let labeled = split.train_anomalies.clone();
    let unlabeled: Vec<usize> = anomalies_of(graph)
        .into_iter()
        .filter(|v| !labeled.contains(v))
        .collect();
    let report = k_hop_reachable_ratio(graph, &labeled, &unlabeled, max_k)?;
    print_json(&serde_json::json!({
        "stats": stats,
        "density_class": density,
        "R": report.ratios,
        "n_labeled": report.n_labeled,
        "n_unlabeled": report.n_unlabeled,
    }))
}

fn graph_level(args: &GraphLevelArgs) -> Result<bool> {
    let collection = GraphCollection::load_manifest(&args.manifest)?;
    let mode = match args.paradigm {
        Paradigm::Dgi => GraphMode::Pretrain {
            objective: Objective::Dgi(DgiConfig::default()),
        },
        Paradigm::GraphMae => GraphMode::Pretrain {
            objective: Objective::GraphMae(MaeConfig::default()),
        },
        Paradigm::End2End => GraphMode::End2End,
    };
    let cfg = GraphLevelConfig {
        encoder: args.encoder,
        num_layers: args.layers,
        hidden_dim: args.hidden,
        activation: if args.paradigm == Paradigm::Dgi {
            Activation::Prelu
        } else {
            Activation::Relu
        },
        epochs: args.epochs,
        pretrain_epochs: args.pretrain_epochs,
        lr: args.lr,
    };
    let mut rows = Vec::new();
    let mut ok = true;
    for t in 0..args.trials {
        let seed = args.seed.wrapping_add(t as u64);
        let run = downsample_class(&collection, args.target_class, args.keep_fraction, seed)
            .and_then(|c| graphlevel_pipeline(&c, &mode, args.train_ratio, &cfg, seed));
        match run {
            Ok(r) => {
                println!("trial {t}: test AUROC {:.4} AUPRC {:.4}", r.test_auroc, r.test_auprc);
                rows.push(vec![
                    t.to_string(),
                    seed.to_string(),
                    gad_core::io_util::fmt_f64(r.test_auroc),
                    gad_core::io_util::fmt_f64(r.test_auprc),
                ]);
            }
            Err(e) => {
                eprintln!("trial {t} failed: {e}");
                ok = false;
            }
        }
    }
    gad_core::io_util::write_csv_atomic(
        &args.out.join("graph_level.csv"),
        &["trial", "seed", "test_auroc", "test_auprc"],
        rows,
    )?;
    Ok(ok)
}

fn write_dataset(graph: &Graph, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    save_dataset(
        graph,
        &out.join("edges.txt"),
        &out.join("features.csv"),
        &out.join("labels.txt"),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let out = run_experiment(&args.config()?)?;
            println!("{}", out.dir.join("aggregate.json").display());
            print_json(&out.aggregate)?;
            Ok(out.all_succeeded())
        }
        Command::Grid { exp, grid } => {
            let mut cfg = exp.config()?;
            grid.apply(&mut cfg);
            let out = grid_search(&cfg)?;
            for line in &out.selection.trace {
                println!("{line}");
            }
            print_json(&out.selected.aggregate)?;
            Ok(out.selected.all_succeeded())
        }
        Command::AblateShuffle { exp, ratios } => {
            let cfg = exp.config()?;
            let rows = ablation_shuffle_ratio(&cfg, &ratios)?;
            print_json(&rows)?;
            Ok(rows.iter().all(|r| r.trials == cfg.trials))
        }
        Command::SweepLabels { exp, counts } => {
            let cfg = exp.config()?;
            let rows = sweep_labeled_anomalies(&cfg, &counts)?;
            print_json(&rows)?;
            Ok(rows.iter().all(|r| r.trials == cfg.trials))
        }
        Command::Diagnose {
            data,
            seed,
            n_anom,
            n_norm,
            max_k,
        } => {
            let graph = match data.source() {
                DatasetSource::Files {
                    edges,
                    features,
                    labels,
                } => load_dataset(&edges, &features, &labels)?,
                DatasetSource::Synthetic(spec) => generate_synthetic(&spec)?,
            };
            diagnose(&graph, seed, n_anom, n_norm, max_k)?;
            Ok(true)
        }
        Command::GenSynthetic { synth, out } => {
            write_dataset(&generate_synthetic(&synth.spec())?, &out)?;
            Ok(true)
        }
        Command::GraphLevel(args) => graph_level(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some trials failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
