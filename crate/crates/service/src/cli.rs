//! The `groupsense` command line.

use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupsense_core::chart::generate_random_chart;
use groupsense_core::diagnose::{enumerate_candidates, DEFAULT_EPSILON_LINE, DEFAULT_THRESHOLD};
use groupsense_core::model::ModelMetadata;
use groupsense_core::redesign::{landscape, search, SearchConfig, DEFAULT_PERMUTATION_BUDGET};
use groupsense_core::trainlab::ingest::{
    build_training_set, load_chart_dir, read_selections_file, selected_groups,
};
use groupsense_core::trainlab::oracle::{oracle_dataset, OracleConfig};
use groupsense_core::trainlab::{
    correlation_matrix, cross_validate, evaluate, shap_exact, split_dataset, synthesize_negatives,
    LabeledExample, LogisticParams, ModelSpec, TreeParams,
};
use groupsense_core::{
    default_model, diagnose, feature_vector, load_model, save_model, Chart, DiagnoseConfig,
    Feature, FeatureVector, Group, GroupingModel,
};
use serde::Serialize;

use crate::store::Store;

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "groupsense",
    version,
    about = "Predict, diagnose and redesign groupings in dot plots"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "GROUPSENSE_DATA_DIR", default_value = "groupsense-data")]
        data_dir: PathBuf,
    },
    /// Report which groups the model expects viewers to see.
    Diagnose {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON_LINE)]
        epsilon_line: f64,
    },
    /// Rank x-axis orders.
    Redesign {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Count orders by (violations, desired groups met).
    Landscape {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Fit a model and write its JSON document.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "custom")]
        name: String,
        #[arg(long, default_value = "1")]
        model_version: String,
        /// Where to write the model; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model on labeled data, or cross-validate a model spec.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Model document to score; the built-in model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Cross-validate the spec from --kind/--spec with this many folds instead.
        #[arg(long)]
        cv: Option<usize>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Attribute one group's prediction to its features.
    Shap {
        #[arg(long)]
        chart: PathBuf,
        /// Comma-separated member labels.
        #[arg(long)]
        group: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write synthesized negatives for a selection study as CSV.
    SynthNegatives {
        #[arg(long)]
        selections: PathBuf,
        #[arg(long)]
        charts: PathBuf,
    },
    /// Pairwise feature correlations over labeled data.
    Corr {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print a random chart.
    RandomChart {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Target {
    /// Chart JSON file.
    #[arg(long)]
    chart: PathBuf,
    /// A desired group as comma-separated labels; repeatable.
    #[arg(long)]
    desired: Vec<String>,
    /// Model document; the built-in model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON_LINE)]
    epsilon_line: f64,
    #[arg(long, default_value_t = DEFAULT_PERMUTATION_BUDGET as u64)]
    budget: u64,
    /// JSON file holding an array of label orders to restrict the search to.
    #[arg(long)]
    allow_list: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Generate this many oracle-labeled examples.
    #[arg(long, conflicts_with_all = ["selections", "charts"])]
    synthetic: Option<usize>,
    /// Points per synthetic chart.
    #[arg(long, default_value_t = 6)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Selection CSV (chart_id, participant_id, member_labels).
    #[arg(long, requires = "charts")]
    selections: Option<PathBuf>,
    /// Directory of chart JSON files named by chart id.
    #[arg(long, requires = "selections")]
    charts: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tree,
    Logistic,
    Cascade,
    SizeRouted,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, value_enum, default_value_t = Kind::Tree)]
    kind: Kind,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    /// Comma-separated features to train on; all when omitted.
    #[arg(long)]
    features: Option<String>,
    /// JSON model spec; overrides --kind, --max-depth and --features.
    #[arg(long)]
    spec: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve {
            host,
            port,
            data_dir,
        } => serve(&host, port, data_dir),
        Command::Diagnose {
            target,
            threshold,
            epsilon_line,
        } => {
            let (chart, desired, model) = target.load()?;
            let report = diagnose(
                &chart,
                &desired,
                &model,
                &DiagnoseConfig {
                    threshold,
                    epsilon_line,
                },
            )?;
            print_json(&report)
        }
        Command::Redesign {
            target,
            search: args,
            k,
        } => {
            let (chart, desired, model) = target.load()?;
            let config = args.config(k)?;
            let outcome = search(&chart, &desired, &model, &config, false, None)?;
            print_json(&serde_json::json!({
                "examined": outcome.examined,
                "model_version": model.version_label(),
                "results": outcome.results,
            }))
        }
        Command::Landscape {
            target,
            search: args,
        } => {
            let (chart, desired, model) = target.load()?;
            print_json(&landscape(&chart, &desired, &model, &args.config(1)?)?)
        }
        Command::Train {
            data,
            spec,
            name,
            model_version,
            out,
        } => {
            let (examples, provenance) = data.load()?;
            let spec = spec.resolve()?;
            let split = split_dataset(&examples, data.seed)?;
            let metadata = ModelMetadata {
                name,
                version: model_version,
                provenance,
            };
            let model = spec.fit_with(&split.train, metadata)?;
            let report = evaluate(&model, &split.test)?;
            eprintln!("test split: {}", serde_json::to_string(&report)?);
            let doc = save_model(&model);
            match out {
                Some(path) => write_file(&path, &doc),
                None => {
                    println!("{doc}");
                    Ok(())
                }
            }
        }
        Command::Evaluate {
            data,
            model,
            cv,
            spec,
        } => {
            let (examples, _) = data.load()?;
            let report = match cv {
                Some(k) => cross_validate(&spec.resolve()?, &examples, k, data.seed)?,
                None => evaluate(&load_model_arg(model.as_deref())?, &examples)?,
            };
            print_json(&report)
        }
        Command::Shap {
            chart,
            group,
            model,
        } => {
            let chart = read_chart(&chart)?;
            let model = load_model_arg(model.as_deref())?;
            let group = parse_group(&group);
            let instance = feature_vector(&chart, &group)?;
            let background = enumerate_candidates(&chart)?
                .iter()
                .map(|g| feature_vector(&chart, g))
                .collect::<Result<Vec<FeatureVector>, _>>()?;
            print_json(&shap_exact(
                &model,
                &instance,
                group.len(),
                chart.len(),
                &background,
            )?)
        }
        Command::SynthNegatives { selections, charts } => {
            let charts = load_chart_dir(&charts)?;
            let selected = selected_groups(&read_selections_file(&selections)?);
            let negatives = synthesize_negatives(&charts, &selected)?;
            write_examples_csv(&negatives)
        }
        Command::Corr { data } => {
            let (examples, _) = data.load()?;
            print_json(&correlation_matrix(&examples)?)
        }
        Command::RandomChart { n, seed } => print_json(&generate_random_chart(n, seed)?),
    }
}

impl Target {
    fn load(&self) -> Result<(Chart, Vec<Group>, GroupingModel), Box<dyn Error>> {
        let chart = read_chart(&self.chart)?;
        let desired = self.desired.iter().map(|d| parse_group(d)).collect();
        Ok((chart, desired, load_model_arg(self.model.as_deref())?))
    }
}

impl SearchArgs {
    fn config(&self, k: usize) -> Result<SearchConfig, Box<dyn Error>> {
        let allow_list = match &self.allow_list {
            Some(path) => Some(serde_json::from_str(&read_file(path)?)?),
            None => None,
        };
        Ok(SearchConfig {
            alpha: self.alpha,
            k,
            threshold: self.threshold,
            epsilon_line: self.epsilon_line,
            budget: u128::from(self.budget),
            allow_list,
        })
    }
}

impl DataArgs {
    fn load(&self) -> Result<(Vec<LabeledExample>, String), Box<dyn Error>> {
        match (self.synthetic, &self.selections, &self.charts) {
            (Some(n), _, _) => {
                let examples = oracle_dataset(n, self.points, self.seed, &OracleConfig::default())?;
                let provenance = format!(
                    "synthetic oracle labels: {n} groups from {}-point random charts, seed {}",
                    self.points, self.seed
                );
                Ok((examples, provenance))
            }
            (None, Some(selections), Some(charts)) => {
                let examples = build_training_set(
                    &load_chart_dir(charts)?,
                    &read_selections_file(selections)?,
                )?;
                let provenance = format!(
                    "participant selections from {} with synthesized negatives",
                    selections.display()
                );
                Ok((examples, provenance))
            }
            _ => Err("give either --synthetic N or --selections with --charts".into()),
        }
    }
}

impl SpecArgs {
    fn resolve(&self) -> Result<ModelSpec, Box<dyn Error>> {
        if let Some(path) = &self.spec {
            return Ok(serde_json::from_str(&read_file(path)?)?);
        }
        let features = match &self.features {
            Some(list) => list
                .split(',')
                .map(|f| f.trim().parse::<Feature>())
                .collect::<Result<Vec<_>, _>>()?,
            None => Feature::ALL.to_vec(),
        };
        let tree = || {
            ModelSpec::Tree(TreeParams {
                max_depth: self.max_depth,
                features: features.clone(),
                ..Default::default()
            })
        };
        Ok(match self.kind {
            Kind::Tree => tree(),
            Kind::Logistic => ModelSpec::Logistic(LogisticParams {
                features: features.clone(),
                ..Default::default()
            }),
            Kind::Cascade => ModelSpec::Cascade {
                max_depth: self.max_depth,
            },
            Kind::SizeRouted => ModelSpec::SizeRouted {
                edge: Box::new(tree()),
                intermediate: Box::new(tree()),
            },
        })
    }
}

fn parse_group(text: &str) -> Group {
    Group::new(
        text.split([',', ';'])
            .map(str::trim)
            .filter(|s| !s.is_empty()),
    )
}

fn read_file(path: &Path) -> Result<String, Box<dyn Error>> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn read_chart(path: &Path) -> Result<Chart, Box<dyn Error>> {
    let chart: Chart =
        serde_json::from_str(&read_file(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    chart
        .validate()
        .map_err(|e| format!("{}: {}: {e}", path.display(), e.path()))?;
    Ok(chart)
}

fn load_model_arg(path: Option<&Path>) -> Result<GroupingModel, Box<dyn Error>> {
    match path {
        Some(p) => Ok(load_model(&read_file(p)?).map_err(|e| format!("{}: {e}", p.display()))?),
        None => Ok(default_model().clone()),
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_examples_csv(examples: &[LabeledExample]) -> CliResult {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "chart_id,member_labels,label,{}",
        FeatureVector::CSV_HEADER
    )?;
    for e in examples {
        let members: Vec<&str> = e.group.members.iter().map(String::as_str).collect();
        writeln!(
            out,
            "{},{},{},{}",
            e.chart_id,
            members.join(";"),
            u8::from(e.label),
            e.features.to_csv_row()
        )?;
    }
    Ok(())
}

fn serve(host: &str, port: u16, data_dir: PathBuf) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let store = Arc::new(Store::open(&data_dir)?);
    let app = crate::api::router(store);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %data_dir.display(), "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
