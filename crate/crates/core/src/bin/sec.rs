use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use metacluster::bench::{
    dump_files, run_adversarial, run_fairness, run_sim1, run_sim2, AdversarialConfig,
    ExperimentReport, FairnessConfig, Sim1Config, Sim2Config,
};
use metacluster::collaborate::aggregate_predict;
use metacluster::dataset::{generate, read_features_csv, read_learners_csv, write_learners_csv, Scenario, SyntheticConfig};
use metacluster::models::MethodSpec;
use metacluster::pipeline::{run_sec, SavedClustering, SecConfig};
use metacluster::spectral::SelectionMethod;

#[derive(Parser)]
#[command(name = "sec", version, about = "Cluster learners by how well their models transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic learners as a CSV file.
    Simulate {
        /// TOML generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Learner CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV with the true cluster of every learner.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Cluster the learners in a CSV file.
    Cluster {
        /// Learner CSV (`learner_id,y,x1,...`).
        #[arg(long)]
        input: PathBuf,
        /// TOML settings; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated method ids, e.g. `lasso,forest`.
        #[arg(long)]
        menu: Option<String>,
        /// Fix the number of clusters instead of selecting it.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        selection: Option<SelectionArg>,
        /// Penalty weight for `--selection penalty`.
        #[arg(long)]
        lambda: Option<f64>,
        /// Fit on raw data instead of per-learner standardized data.
        #[arg(long)]
        no_standardize: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with the cluster ensembles of a saved clustering.
    Predict {
        /// `model.json` written by `cluster`.
        #[arg(long)]
        model: PathBuf,
        /// Feature CSV; a `learner_id` column routes rows to that learner's cluster.
        #[arg(long)]
        features: PathBuf,
        /// Cluster for rows without a `learner_id`.
        #[arg(long)]
        cluster: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark experiment.
    Bench {
        #[arg(value_enum)]
        experiment: Experiment,
        /// TOML experiment settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config (default 2024).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    TwoClusterLinear,
    BenchmarkPair,
    Fairness,
    Adversarial,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::TwoClusterLinear => Scenario::TwoClusterLinear,
            ScenarioArg::BenchmarkPair => Scenario::BenchmarkPair,
            ScenarioArg::Fairness => Scenario::Fairness,
            ScenarioArg::Adversarial => Scenario::Adversarial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Gap,
    Penalty,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Sim1,
    Sim2,
    Fairness,
    Adversarial,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn simulate(
    config: Option<PathBuf>,
    scenario: Option<ScenarioArg>,
    seed: Option<u64>,
    out: &Path,
    truth: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = match (&config, scenario) {
        (Some(p), _) => SyntheticConfig::from_toml_str(&read_text(p)?)?,
        (None, Some(s)) => SyntheticConfig::for_scenario(s.into()),
        (None, None) => SyntheticConfig::default(),
    };
    if let (Some(_), Some(s)) = (&config, scenario) {
        if cfg.scenario != Scenario::from(s) {
            bail!("--scenario disagrees with the scenario in the config file");
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = generate(&cfg)?;
    write_learners_csv(&data.learners, out)?;
    if let Some(path) = truth {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["learner_id", "cluster", "attacked", "sensitive"])?;
        for (i, d) in data.learners.iter().enumerate() {
            let s = data.sensitive.as_ref().map_or(String::new(), |s| s[i].to_string());
            w.write_record([
                d.learner_id().to_string(),
                data.labels[i].to_string(),
                data.attacked[i].to_string(),
                s,
            ])?;
        }
        w.flush()?;
    }
    log::info!("wrote {} learners to {}", data.learners.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cluster(
    input: &Path,
    config: Option<PathBuf>,
    menu: Option<String>,
    k: Option<usize>,
    selection: Option<SelectionArg>,
    lambda: Option<f64>,
    no_standardize: bool,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => toml::from_str::<SecConfig>(&read_text(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SecConfig::new(vec![MethodSpec::lasso(), MethodSpec::forest()]),
    };
    if let Some(m) = menu {
        cfg.menu = MethodSpec::parse_menu(&m)?;
    }
    if k.is_some() {
        cfg.k = k;
    }
    match selection {
        Some(SelectionArg::Gap) => cfg.selection.method = SelectionMethod::Gap,
        Some(SelectionArg::Penalty) => cfg.selection.method = SelectionMethod::Penalty,
        None => {}
    }
    if lambda.is_some() {
        cfg.selection.lambda_n = lambda;
    }
    if no_standardize {
        cfg.standardize = false;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let learners = read_learners_csv(input)?;
    let result = run_sec(&learners, &cfg)?;
    fs::create_dir_all(out)?;
    for (name, body) in dump_files(&result)? {
        fs::write(out.join(name), body)?;
    }
    result.to_saved().save(out.join("model.json"))?;
    println!("K = {}", result.clusters.k);
    for (c, members) in result.clusters.members().iter().enumerate() {
        let ids: Vec<String> = members
            .iter()
            .map(|&i| result.clusters.learner_ids[i].to_string())
            .collect();
        println!("cluster {c}: {}", ids.join(" "));
    }
    Ok(())
}

fn predict(model: &Path, features: &Path, cluster: Option<usize>, out: &Path) -> Result<()> {
    let saved = SavedClustering::load(model)?;
    let ensembles = saved.ensembles()?;
    let table = read_features_csv(features)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["row", "learner_id", "cluster", "prediction"])?;
    for (i, x) in table.features.rows().into_iter().enumerate() {
        let id = table.learner_ids.as_ref().map(|ids| ids[i]);
        let c = match (id, cluster) {
            (Some(id), _) => saved
                .cluster_of(id)
                .with_context(|| format!("row {}: learner {id} was not clustered", i + 1))?,
            (None, Some(c)) => c,
            (None, None) => bail!("features have no learner_id column; pass --cluster"),
        };
        let ens = ensembles
            .get(c)
            .with_context(|| format!("cluster {c} does not exist (K = {})", ensembles.len()))?;
        let y = aggregate_predict(ens, x)?;
        w.write_record([
            (i + 1).to_string(),
            id.map_or(String::new(), |id| id.to_string()),
            c.to_string(),
            y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn bench(
    experiment: Experiment,
    config: Option<PathBuf>,
    seed: Option<u64>,
    replications: Option<usize>,
    out: &Path,
) -> Result<()> {
    let text = config.as_deref().map(read_text).transpose()?;
    let report: ExperimentReport = match experiment {
        Experiment::Sim1 => {
            let mut cfg = text.map_or(Ok(Sim1Config::default()), |t| Sim1Config::from_toml_str(&t))?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.replications = replications.unwrap_or(cfg.replications);
            run_sim1(&cfg)?
        }
        Experiment::Sim2 => {
            let mut cfg = text.map_or(Ok(Sim2Config::default()), |t| Sim2Config::from_toml_str(&t))?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.replications = replications.unwrap_or(cfg.replications);
            run_sim2(&cfg)?
        }
        Experiment::Fairness => {
            let mut cfg =
                text.map_or(Ok(FairnessConfig::default()), |t| FairnessConfig::from_toml_str(&t))?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.replications = replications.unwrap_or(cfg.replications);
            run_fairness(&cfg)?
        }
        Experiment::Adversarial => {
            let mut cfg = text.map_or(Ok(AdversarialConfig::default()), |t| {
                AdversarialConfig::from_toml_str(&t)
            })?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.replications = replications.unwrap_or(cfg.replications);
            run_adversarial(&cfg)?
        }
    };
    report.write(out)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(report.summary().as_bytes())?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate {
            config,
            scenario,
            seed,
            out,
            truth,
        } => simulate(config, scenario, seed, &out, truth),
        Command::Cluster {
            input,
            config,
            menu,
            k,
            selection,
            lambda,
            no_standardize,
            seed,
            out,
        } => cluster(&input, config, menu, k, selection, lambda, no_standardize, seed, &out),
        Command::Predict {
            model,
            features,
            cluster: c,
            out,
        } => predict(&model, &features, c, &out),
        Command::Bench {
            experiment,
            config,
            seed,
            replications,
            out,
        } => bench(experiment, config, seed, replications, &out),
    }
}
