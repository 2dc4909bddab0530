use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use agrishare::data::{self, load_csv_any, write_csv, PartitionSpec};
use agrishare::eval::{
    self, power_analysis, sweep_epsilon, table4_experiment, utility_accuracy, Experiment, PowerConfig, SweepConfig,
    Table4Config, Table4Report, Table4Row, UtilityConfig,
};
use agrishare::federated::{
    self, accuracy_vs_epsilon_fl, personalized_training, FlRow, FlSweepConfig, PersonalizedConfig, Weighting,
};
use agrishare::ldp::{privatize_with_model, NoisyMatrix};
use agrishare::models::ClassifierKind;
use agrishare::par::parallel_map;
use agrishare::pca::{format_fingerprint, pca_fit, pca_transform, PcaModel, TransformedMatrix};
use agrishare::pipeline::{concat_noisy, Pipeline, PipelineConfig, DEFAULT_GLOBAL_FRACTION};
use agrishare::sandbox::{
    kmeans_fit, rank_collaborators, recommend_collaborators, AggregatedStore, ClusterModel, ParticipantShare,
    SimilarityMode,
};
use clap::Args;
use serde::Serialize;

use crate::config::Settings;
use crate::manifest::{RunManifest, MANIFEST_SUFFIX};
use crate::{CliError, Common, Stage};

/// Record the run, then hand back control for producing results.
fn start(
    command: &str,
    settings: &Settings,
    common: &Common,
    seeds: Vec<u64>,
    mut inputs: Vec<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    if let Some(c) = &common.config {
        inputs.push(c.clone());
    }
    let manifest = RunManifest::new(command, settings.resolved().clone(), seeds, &inputs)?;
    manifest.write(out)?;
    eprintln!("agrishare {command}: writing {}", out.display());
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).failed(),
        _ => Ok(()),
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).failed()
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).failed()? + "\n"))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn label_opt(label: &str) -> Option<&str> {
    if label.is_empty() {
        None
    } else {
        Some(label)
    }
}

fn file_stem(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Validation(format!("cannot derive a participant id from {}", path.display())))
}

fn parse<T: std::str::FromStr<Err = agrishare::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().invalid()
}

fn require_exists(paths: &[PathBuf]) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Validation(format!("input {} does not exist", p.display())));
        }
    }
    Ok(())
}

/// `id=path` or a bare path whose file stem becomes the id.
fn parse_keyed(entries: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    entries
        .iter()
        .map(|e| match e.split_once('=') {
            Some((id, path)) => Ok((id.to_owned(), PathBuf::from(path))),
            None => Ok((file_stem(Path::new(e))?, PathBuf::from(e))),
        })
        .collect()
}

fn load_model(path: &Path) -> Result<PcaModel, CliError> {
    PcaModel::load(path).invalid()
}

fn pipeline_config(
    s: &mut Settings,
    markets: Option<usize>,
    global_fraction: Option<f64>,
    k: Option<usize>,
    clusters: Option<usize>,
) -> Result<PipelineConfig, CliError> {
    let d = PipelineConfig::default();
    Ok(PipelineConfig {
        n_markets: s.get("markets", markets, d.n_markets)?,
        global_fraction: s.get("global-fraction", global_fraction, d.global_fraction)?,
        k: s.get("k", k, d.k)?,
        clusters: s.get("clusters", clusters, d.clusters)?,
        seed: 0,
    })
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// crop | market
    #[arg(long)]
    kind: Option<String>,
    /// Rows per crop (crop) or total rows (market).
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let kind = s.get("kind", a.kind, "crop".to_owned())?;
    let default_rows = if kind == "market" { 200 } else { 100 };
    let rows = s.get("rows", a.rows, default_rows)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out: PathBuf = s.require("out", a.out)?;
    let data = match kind.as_str() {
        "crop" => data::generate_synthetic_crop(rows, seed).invalid()?,
        "market" => data::generate_synthetic_market(rows, seed).invalid()?,
        other => return Err(CliError::Validation(format!("unknown kind {other:?} (expected crop|market)"))),
    };
    ensure_parent(&out)?;
    start("generate", &s, &a.common, vec![seed], vec![], &out)?;
    write_csv(&out, &data).failed()
}

#[derive(Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Label column ("" for none).
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    markets: Option<usize>,
    #[arg(long)]
    global_fraction: Option<f64>,
    /// Do not stratify by label.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn partition(a: PartitionArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input: PathBuf = s.require("input", a.input)?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let markets = s.get("markets", a.markets, 5usize)?;
    let global_fraction = s.get("global-fraction", a.global_fraction, DEFAULT_GLOBAL_FRACTION)?;
    let stratify = s.get("stratify", a.no_stratify.then_some(false), true)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out_dir: PathBuf = s.require("out-dir", a.out_dir)?;
    let data = load_csv_any(&input, label_opt(&label)).invalid()?;
    let spec = PartitionSpec::new(markets, global_fraction, seed, stratify && data.labels().is_some()).invalid()?;
    let (global, shards) = data::partition_markets(&data, &spec).invalid()?;
    ensure_dir(&out_dir)?;
    start("partition", &s, &a.common, vec![seed], vec![input], &out_dir)?;
    write_csv(out_dir.join("global.csv"), &global).failed()?;
    for (i, shard) in shards.iter().enumerate() {
        write_csv(out_dir.join(format!("market_{}.csv", i + 1)), shard).failed()?;
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainPcaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn train_pca(a: TrainPcaArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input: PathBuf = s.require("input", a.input)?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let k = s.get("k", a.k, agrishare::pipeline::DEFAULT_K)?;
    let out: PathBuf = s.require("out", a.out)?;
    let data = load_csv_any(&input, label_opt(&label)).invalid()?;
    if k == 0 || k > data.n_features() {
        return Err(CliError::Validation(format!("--k must be in 1..={}", data.n_features())));
    }
    ensure_parent(&out)?;
    start("train-pca", &s, &a.common, vec![], vec![input], &out)?;
    let model = pca_fit(&data, k).failed()?;
    model.save(&out).failed()
}

#[derive(Args)]
pub struct TransformArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// The participant's raw CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Participant id (defaults to the input file stem).
    #[arg(long)]
    participant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn transform(a: TransformArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let model_path: PathBuf = s.require("model", a.model)?;
    let input: PathBuf = s.require("input", a.input)?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let participant = s.get("participant", a.participant, file_stem(&input)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let model = load_model(&model_path)?;
    let data = load_csv_any(&input, label_opt(&label)).invalid()?.into_private(participant);
    if data.n_features() != model.d() {
        return Err(CliError::Validation(format!(
            "input has {} features, model expects {}",
            data.n_features(),
            model.d()
        )));
    }
    ensure_parent(&out)?;
    start("transform", &s, &a.common, vec![], vec![model_path, input], &out)?;
    pca_transform(&model, &data).failed()?.save(&out).failed()
}

#[derive(Args)]
pub struct PrivatizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Projected matrix written by `transform`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    participant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn privatize(a: PrivatizeArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let model_path: PathBuf = s.require("model", a.model)?;
    let input: PathBuf = s.require("input", a.input)?;
    let epsilon: f64 = s.require("epsilon", a.epsilon)?;
    let participant = s.get("participant", a.participant, file_stem(&input)?)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out: PathBuf = s.require("out", a.out)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Validation("--epsilon must be a positive number".into()));
    }
    let model = load_model(&model_path)?;
    let t = TransformedMatrix::load(&input).invalid()?;
    if t.model_fingerprint() != model.fingerprint() {
        return Err(CliError::Validation(format!(
            "{} was produced by model {}, not {}",
            input.display(),
            format_fingerprint(t.model_fingerprint()),
            format_fingerprint(model.fingerprint())
        )));
    }
    let noise_seed = Pipeline::noise_seed(seed, &participant);
    ensure_parent(&out)?;
    start("privatize", &s, &a.common, vec![seed, noise_seed], vec![model_path, input], &out)?;
    privatize_with_model(&model, &t, epsilon, noise_seed).failed()?.save(&out).failed()
}

#[derive(Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// `id=path` or `path` (id = file stem); repeatable.
    #[arg(long = "share")]
    shares: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn aggregate(a: AggregateArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let model_path: PathBuf = s.require("model", a.model)?;
    let shares = s.list("share", a.shares, vec![])?;
    let out_dir: PathBuf = s.require("out-dir", a.out_dir)?;
    if shares.is_empty() {
        return Err(CliError::Validation("at least one --share is required".into()));
    }
    let model = load_model(&model_path)?;
    let mut store = AggregatedStore::new(model.fingerprint());
    let mut inputs = vec![model_path];
    for (id, path) in parse_keyed(&shares)? {
        let m = NoisyMatrix::load(&path).invalid()?;
        store.submit_share(ParticipantShare::new(id, m).invalid()?).invalid()?;
        inputs.push(path);
    }
    ensure_dir(&out_dir)?;
    start("aggregate", &s, &a.common, vec![], inputs, &out_dir)?;
    store.save(&out_dir).failed()
}

#[derive(Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cluster(a: ClusterArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let store_dir: PathBuf = s.require("store", a.store)?;
    let clusters = s.get("clusters", a.clusters, agrishare::pipeline::DEFAULT_CLUSTERS)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out: PathBuf = s.require("out", a.out)?;
    let store = AggregatedStore::load(&store_dir).invalid()?;
    if clusters == 0 || clusters > store.total_rows() {
        return Err(CliError::Validation(format!("--clusters must be in 1..={}", store.total_rows())));
    }
    ensure_parent(&out)?;
    start("cluster", &s, &a.common, vec![seed], vec![store_dir], &out)?;
    kmeans_fit(&store, clusters, seed).failed()?.save(&out).failed()
}

#[derive(Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    cluster_model: Option<PathBuf>,
    /// Query point in component space, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    profile: Vec<f64>,
    /// Use the mean row of this noisy share as the query.
    #[arg(long)]
    query_share: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn recommend(a: RecommendArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let store_dir: PathBuf = s.require("store", a.store)?;
    let cm_path: PathBuf = s.require("cluster-model", a.cluster_model)?;
    let profile = s.list("profile", a.profile, vec![])?;
    let query_share: Option<PathBuf> = s.optional("query-share", a.query_share)?;
    let m = s.get("m", a.m, 5usize)?;
    let out: PathBuf = s.require("out", a.out)?;
    let store = AggregatedStore::load(&store_dir).invalid()?;
    let cm = ClusterModel::load(&cm_path).invalid()?;
    let mut inputs = vec![store_dir, cm_path];
    let query = match (profile.is_empty(), &query_share) {
        (false, None) => profile,
        (true, Some(p)) => {
            let share = NoisyMatrix::load(p).invalid()?;
            inputs.push(p.clone());
            let mut mean = vec![0.0; share.k()];
            for r in share.rows() {
                mean.iter_mut().zip(r).for_each(|(a, x)| *a += x);
            }
            mean.iter_mut().for_each(|a| *a /= share.n_rows().max(1) as f64);
            mean
        }
        _ => return Err(CliError::Validation("give exactly one of --profile or --query-share".into())),
    };
    if query.len() != cm.k() {
        return Err(CliError::Validation(format!("query has {} components, cluster model {}", query.len(), cm.k())));
    }
    ensure_parent(&out)?;
    start("recommend", &s, &a.common, vec![], inputs, &out)?;
    let rec = recommend_collaborators(&store, &cm, &query, m).failed()?;
    write_json(&out, &rec)
}

#[derive(Args)]
pub struct SimilarityArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    initiator: Option<String>,
    /// Number of participants to rank (default: all others).
    #[arg(long)]
    m: Option<usize>,
    /// profile | distribution
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Ranked {
    participant: String,
    distance: f64,
}

#[derive(Serialize)]
struct SimilarityDoc {
    initiator: String,
    mode: String,
    ranking: Vec<Ranked>,
}

pub fn similarity(a: SimilarityArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let store_dir: PathBuf = s.require("store", a.store)?;
    let initiator: String = s.require("initiator", a.initiator)?;
    let mode: SimilarityMode = parse(&s.get("mode", a.mode, "profile".to_owned())?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let store = AggregatedStore::load(&store_dir).invalid()?;
    store.share(&initiator).invalid()?;
    let m = s.get("m", a.m, store.n_participants().saturating_sub(1))?;
    ensure_parent(&out)?;
    start("similarity", &s, &a.common, vec![], vec![store_dir], &out)?;
    let ranking = data::audit::deny_raw_access(|| rank_collaborators(&store, &initiator, m, mode)).failed()?;
    let doc = SimilarityDoc {
        initiator,
        mode: mode.to_string(),
        ranking: ranking.into_iter().map(|(participant, distance)| Ranked { participant, distance }).collect(),
    };
    write_json(&out, &doc)
}

#[derive(Args)]
pub struct FedtrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    initiator: Option<String>,
    /// Raw market data as `id=path`; repeatable. Read only for client-local training.
    #[arg(long = "market")]
    markets: Vec<String>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    /// by-sample-count | uniform
    #[arg(long)]
    weighting: Option<String>,
    /// Train on collaborators only, without the initiator's own rows.
    #[arg(long)]
    exclude_initiator: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FedSummary {
    initiator: String,
    collaborators: Vec<String>,
    accuracy: f64,
    majority_baseline: f64,
}

fn personalized_settings(
    s: &mut Settings,
    seed: u64,
    rounds: Option<usize>,
    local_epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    hidden: Vec<usize>,
    weighting: Option<String>,
    exclude_initiator: bool,
    jobs: usize,
) -> Result<PersonalizedConfig, CliError> {
    let mut p = PersonalizedConfig::new(seed);
    p.fed.rounds = s.get("rounds", rounds, p.fed.rounds)?;
    p.fed.local_epochs = s.get("local-epochs", local_epochs, p.fed.local_epochs)?;
    p.fed.train_cfg.learning_rate = s.get("learning-rate", learning_rate, p.fed.train_cfg.learning_rate)?;
    p.fed.train_cfg.batch_size = s.get("batch-size", batch_size, p.fed.train_cfg.batch_size)?;
    p.hidden = s.list("hidden", hidden, p.hidden.clone())?;
    p.fed.weighting = parse::<Weighting>(&s.get("weighting", weighting, p.fed.weighting.to_string())?)?;
    p.include_initiator = !s.get("exclude-initiator", exclude_initiator.then_some(true), false)?;
    p.fed.jobs = jobs;
    if p.fed.rounds == 0 || p.fed.local_epochs == 0 || p.hidden.contains(&0) {
        return Err(CliError::Validation("rounds, local epochs and hidden sizes must be positive".into()));
    }
    p.fed.train_cfg.validate().invalid()?;
    Ok(p)
}

pub fn fedtrain(a: FedtrainArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let store_dir: PathBuf = s.require("store", a.store)?;
    let model_path: PathBuf = s.require("model", a.model)?;
    let initiator: String = s.require("initiator", a.initiator)?;
    let markets = s.list("market", a.markets, vec![])?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let m = s.get("m", a.m, 3usize)?;
    let mode: SimilarityMode = parse(&s.get("mode", a.mode, "profile".to_owned())?)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let jobs = s.get("jobs", a.common.jobs, 1usize)?;
    let mut cfg = personalized_settings(
        &mut s,
        seed,
        a.rounds,
        a.local_epochs,
        a.learning_rate,
        a.batch_size,
        a.hidden,
        a.weighting,
        a.exclude_initiator,
        jobs,
    )?;
    let out: PathBuf = s.require("out", a.out)?;

    let model = load_model(&model_path)?;
    let store = AggregatedStore::load(&store_dir).invalid()?;
    if store.model_fingerprint() != model.fingerprint() {
        return Err(CliError::Validation("store and model fingerprints differ".into()));
    }
    let keyed = parse_keyed(&markets)?;
    let paths: Vec<PathBuf> = keyed.iter().map(|(_, p)| p.clone()).collect();
    require_exists(&paths)?;
    let mut raw = BTreeMap::new();
    for (id, path) in &keyed {
        store.share(id).invalid()?;
        let d = load_csv_any(path, Some(&label)).invalid()?.into_private(id.clone());
        d.require_labels().invalid()?;
        raw.insert(id.clone(), d);
    }
    if !raw.contains_key(&initiator) {
        return Err(CliError::Validation(format!("no --market entry for initiator {initiator:?}")));
    }
    cfg.fed.input_scaling = Some(model.standardizer().clone());

    ensure_parent(&out)?;
    let mut inputs = vec![store_dir, model_path];
    inputs.extend(paths);
    start("fedtrain", &s, &a.common, vec![seed], inputs, &out)?;
    let result = personalized_training(&store, &initiator, &raw, m, mode, &cfg).failed()?;
    result.params.save(&out).failed()?;
    let mut rounds = String::from("round,accuracy,mean_client_loss\n");
    for r in &result.reports {
        let mean = r.per_client_loss.iter().sum::<f64>() / r.per_client_loss.len() as f64;
        let _ = writeln!(
            rounds,
            "{},{},{}",
            r.round,
            agrishare::num17::format(r.global_eval_accuracy),
            agrishare::num17::format(mean)
        );
    }
    write_text(&sibling(&out, ".rounds.csv"), &rounds)?;
    write_json(
        &sibling(&out, ".summary.json"),
        &FedSummary {
            initiator,
            collaborators: result.collaborators,
            accuracy: result.accuracy,
            majority_baseline: result.majority_baseline,
        },
    )
}

#[derive(Args)]
pub struct EvalPowerArgs {
    #[command(flatten)]
    common: Common,
    /// Sandbox store whose shares form the shared data.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Noisy share files forming the shared data (instead of --store).
    #[arg(long = "shared")]
    shared: Vec<PathBuf>,
    /// Pre-noise projections of members; repeatable.
    #[arg(long = "case")]
    case: Vec<PathBuf>,
    /// Projections of non-members; repeatable.
    #[arg(long = "control")]
    control: Vec<PathBuf>,
    #[arg(long)]
    fpr: Option<f64>,
    #[arg(long)]
    n_control: Option<usize>,
    #[arg(long)]
    n_case: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PowerDoc {
    epsilon: f64,
    fpr: f64,
    threshold: f64,
    power: f64,
    n_control: usize,
    n_case: usize,
}

fn load_transformed(paths: &[PathBuf]) -> Result<TransformedMatrix, CliError> {
    let parts = paths.iter().map(|p| TransformedMatrix::load(p).invalid()).collect::<Result<Vec<_>, _>>()?;
    TransformedMatrix::concat(&parts.iter().collect::<Vec<_>>()).invalid()
}

fn load_noisy(paths: &[PathBuf]) -> Result<NoisyMatrix, CliError> {
    let parts = paths.iter().map(|p| NoisyMatrix::load(p).invalid()).collect::<Result<Vec<_>, _>>()?;
    concat_noisy(&parts).invalid()
}

pub fn eval_power(a: EvalPowerArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let store_dir: Option<PathBuf> = s.optional("store", a.store)?;
    let shared_paths = s.list("shared", a.shared, vec![])?;
    let case_paths = s.list("case", a.case, vec![])?;
    let control_paths = s.list("control", a.control, vec![])?;
    let fpr = s.get("fpr", a.fpr, eval::DEFAULT_FPR)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out: PathBuf = s.require("out", a.out)?;
    if case_paths.is_empty() || control_paths.is_empty() {
        return Err(CliError::Validation("--case and --control are required".into()));
    }
    let mut inputs = Vec::new();
    let shared = match (&store_dir, shared_paths.is_empty()) {
        (Some(dir), true) => {
            let store = AggregatedStore::load(dir).invalid()?;
            inputs.push(dir.clone());
            let ids: Vec<String> = store.participant_ids().map(str::to_owned).collect();
            let parts = ids.iter().map(|id| store.share(id).cloned()).collect::<Result<Vec<_>, _>>().invalid()?;
            concat_noisy(&parts).invalid()?
        }
        (None, false) => {
            inputs.extend(shared_paths.iter().cloned());
            load_noisy(&shared_paths)?
        }
        _ => return Err(CliError::Validation("give exactly one of --store or --shared".into())),
    };
    let case = load_transformed(&case_paths)?;
    let control = load_transformed(&control_paths)?;
    inputs.extend(case_paths);
    inputs.extend(control_paths);
    let defaults = PowerConfig::for_pools(fpr, control.n_rows(), case.n_rows(), seed).invalid()?;
    let n_control = s.get("n-control", a.n_control, defaults.n_control)?;
    let n_case = s.get("n-case", a.n_case, defaults.n_case)?;
    let cfg = PowerConfig::new(fpr, n_control, n_case, seed).invalid()?;
    ensure_parent(&out)?;
    start("eval-power", &s, &a.common, vec![seed], inputs, &out)?;
    let r = power_analysis(&shared, &case, &control, &cfg).failed()?;
    write_json(
        &out,
        &PowerDoc { epsilon: r.epsilon, fpr, threshold: r.threshold, power: r.power, n_control: r.n_control, n_case: r.n_case },
    )
}

#[derive(Args)]
pub struct EvalUtilityArgs {
    #[command(flatten)]
    common: Common,
    /// Clean projections; repeatable, row-aligned with --noisy.
    #[arg(long = "clean")]
    clean: Vec<PathBuf>,
    #[arg(long = "noisy")]
    noisy: Vec<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    /// logreg | gnb | svm
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Train on noisy rows instead of clean ones.
    #[arg(long)]
    train_on_noisy: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct UtilityDoc {
    epsilon: f64,
    classifier: String,
    accuracy_noisy: f64,
    accuracy_clean: f64,
}

pub fn eval_utility(a: EvalUtilityArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let clean_paths = s.list("clean", a.clean, vec![])?;
    let noisy_paths = s.list("noisy", a.noisy, vec![])?;
    let clusters = s.get("clusters", a.clusters, agrishare::pipeline::DEFAULT_CLUSTERS)?;
    let kind: ClassifierKind = parse(&s.get("classifier", a.classifier, "logreg".to_owned())?)?;
    let test_fraction = s.get("test-fraction", a.test_fraction, eval::DEFAULT_TEST_FRACTION)?;
    let train_on_noisy = s.get("train-on-noisy", a.train_on_noisy.then_some(true), false)?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let out: PathBuf = s.require("out", a.out)?;
    if clean_paths.is_empty() || clean_paths.len() != noisy_paths.len() {
        return Err(CliError::Validation("give matching, non-empty --clean and --noisy lists".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CliError::Validation("--test-fraction must be in (0,1)".into()));
    }
    let clean = load_transformed(&clean_paths)?;
    let noisy = load_noisy(&noisy_paths)?;
    if clean.n_rows() != noisy.n_rows() || clean.model_fingerprint() != noisy.model_fingerprint() {
        return Err(CliError::Validation("clean and noisy inputs are not row-aligned under one model".into()));
    }
    if clusters < 2 || clusters > clean.n_rows() {
        return Err(CliError::Validation(format!("--clusters must be in 2..={}", clean.n_rows())));
    }
    let mut inputs = clean_paths;
    inputs.extend(noisy_paths);
    ensure_parent(&out)?;
    start("eval-utility", &s, &a.common, vec![seed], inputs, &out)?;
    let cm = eval::fit_clean_clusters(&clean, clusters, seed).failed()?;
    let cfg = UtilityConfig { test_fraction, seed, train_on_noisy };
    let r = utility_accuracy(&clean, &noisy, &cm, kind, &cfg).failed()?;
    write_json(
        &out,
        &UtilityDoc {
            epsilon: r.epsilon,
            classifier: r.classifier.to_string(),
            accuracy_noisy: r.accuracy_noisy,
            accuracy_clean: r.accuracy_clean,
        },
    )
}

#[derive(Args)]
pub struct Table4Args {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Seeds to run; the main table holds medians over them.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Same ε for every classifier (overrides the per-classifier values).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eps_logreg: Option<f64>,
    #[arg(long)]
    eps_gnb: Option<f64>,
    #[arg(long)]
    eps_svm: Option<f64>,
    #[arg(long)]
    markets: Option<usize>,
    #[arg(long)]
    global_fraction: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn median_table(reports: &[Table4Report]) -> Table4Report {
    let rows = reports[0]
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let col = |f: fn(&Table4Row) -> f64| eval::median(&reports.iter().map(|t| f(&t.rows[i])).collect::<Vec<_>>());
            Table4Row {
                classifier: r.classifier,
                epsilon: r.epsilon,
                acc_centralized: col(|r| r.acc_centralized),
                acc_aggregated: col(|r| r.acc_aggregated),
                acc_aggregated_clean: col(|r| r.acc_aggregated_clean),
            }
        })
        .collect();
    Table4Report { rows }
}

pub fn table4(a: Table4Args) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input: PathBuf = s.require("input", a.input)?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let seed = s.get("seed", a.common.seed, 0)?;
    let seeds = s.list("seeds", a.seeds, vec![seed])?;
    let common_eps: Option<f64> = s.optional("epsilon", a.epsilon)?;
    let mut epsilons = Vec::new();
    for ((kind, default), flag) in eval::TABLE4_EPSILONS.iter().zip([a.eps_logreg, a.eps_gnb, a.eps_svm]) {
        let e = s.get(&format!("eps-{kind}"), common_eps.or(flag), *default)?;
        if !(e > 0.0) {
            return Err(CliError::Validation(format!("ε for {kind} must be positive")));
        }
        epsilons.push((*kind, e));
    }
    let pipeline = pipeline_config(&mut s, a.markets, a.global_fraction, a.k, a.clusters)?;
    let jobs = s.get("jobs", a.common.jobs, 1usize)?;
    let out: PathBuf = s.require("out", a.out)?;
    if seeds.is_empty() {
        return Err(CliError::Validation("--seeds must not be empty".into()));
    }
    let data = load_csv_any(&input, Some(&label)).invalid()?;
    data.require_labels().invalid()?;
    ensure_parent(&out)?;
    start("table4", &s, &a.common, seeds.clone(), vec![input], &out)?;
    let reports = parallel_map(&seeds, jobs, |&seed| {
        let cfg = Table4Config {
            epsilons: epsilons.clone(),
            pipeline: PipelineConfig { seed, ..pipeline.clone() },
            ..Table4Config::new(seed)
        };
        table4_experiment(&data, &cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .failed()?;
    let mut runs = String::from("seed,classifier,epsilon,acc_centralized,acc_aggregated\n");
    for (seed, r) in seeds.iter().zip(&reports) {
        for row in &r.rows {
            let _ = writeln!(
                runs,
                "{seed},{},{},{},{}",
                row.classifier,
                row.epsilon,
                agrishare::num17::format(row.acc_centralized),
                agrishare::num17::format(row.acc_aggregated)
            );
        }
    }
    write_text(&out, &median_table(&reports).to_csv())?;
    write_text(&sibling(&out, ".runs.csv"), &runs)
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// power | utility | both | fl
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Classifiers for the utility experiment, comma-separated.
    #[arg(long, value_delimiter = ',')]
    classifiers: Vec<String>,
    #[arg(long)]
    fpr: Option<f64>,
    #[arg(long)]
    markets: Option<usize>,
    #[arg(long)]
    global_fraction: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    /// Federated experiment: initiating participant.
    #[arg(long)]
    initiator: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input: PathBuf = s.require("input", a.input)?;
    let label = s.get("label", a.label, "label".to_owned())?;
    let experiment = s.get("experiment", a.experiment, "both".to_owned())?;
    let epsilons = s.list("epsilons", a.epsilons, vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0])?;
    let seeds = s.list("seeds", a.seeds, vec![0, 1, 2, 3, 4])?;
    let pipeline = pipeline_config(&mut s, a.markets, a.global_fraction, a.k, a.clusters)?;
    let jobs = s.get("jobs", a.common.jobs, 1usize)?;
    if epsilons.is_empty() || seeds.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Validation("--epsilons and --seeds must be non-empty, ε positive".into()));
    }
    if experiment == "fl" {
        let initiator = s.get("initiator", a.initiator, agrishare::pipeline::market_id(0))?;
        let m = s.get("m", a.m, 3usize)?;
        let mode: SimilarityMode = parse(&s.get("mode", a.mode, "profile".to_owned())?)?;
        let rounds = a.rounds;
        let local_epochs = a.local_epochs;
        let template = personalized_settings(&mut s, 0, rounds, local_epochs, None, None, vec![], None, false, 1)?;
        let out_dir: PathBuf = s.require("out-dir", a.out_dir)?;
        let data = load_csv_any(&input, Some(&label)).invalid()?;
        data.require_labels().invalid()?;
        ensure_dir(&out_dir)?;
        start("sweep", &s, &a.common, seeds.clone(), vec![input], &out_dir)?;
        let per_seed = parallel_map(&seeds, jobs, |&seed| -> agrishare::Result<Vec<FlRow>> {
            let p = Pipeline::build(&data, &PipelineConfig { seed, ..pipeline.clone() })?;
            let mut personalized = PersonalizedConfig::new(seed);
            personalized.fed.rounds = template.fed.rounds;
            personalized.fed.local_epochs = template.fed.local_epochs;
            let cfg = FlSweepConfig { initiator: initiator.clone(), m, mode, personalized, noise_seed: seed };
            Ok(accuracy_vs_epsilon_fl(&p, &epsilons, &cfg)?
                .into_iter()
                .map(|(epsilon, accuracy)| FlRow { epsilon, seed, accuracy })
                .collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .failed()?;
        let mut rows: Vec<FlRow> = per_seed.into_iter().flatten().collect();
        rows.sort_by(|x, y| x.epsilon.total_cmp(&y.epsilon).then(x.seed.cmp(&y.seed)));
        write_text(&out_dir.join("fl.csv"), &federated::fl_rows_csv(&rows))?;
        return write_text(&out_dir.join("fl_median.dat"), &federated::fl_median_table(&rows));
    }

    let experiment: Experiment = parse(&experiment)?;
    let classifiers = s.list("classifiers", a.classifiers, vec!["logreg".to_owned()])?;
    let classifiers = classifiers.iter().map(|c| parse::<ClassifierKind>(c)).collect::<Result<Vec<_>, _>>()?;
    let fpr = s.get("fpr", a.fpr, eval::DEFAULT_FPR)?;
    let out_dir: PathBuf = s.require("out-dir", a.out_dir)?;
    PowerConfig::new(fpr, 1, 1, 0).invalid()?;
    let data = load_csv_any(&input, Some(&label)).invalid()?;
    ensure_dir(&out_dir)?;
    start("sweep", &s, &a.common, seeds.clone(), vec![input], &out_dir)?;
    let cfg = SweepConfig { epsilons, seeds, experiment, pipeline, fpr, classifiers, jobs };
    let r = sweep_epsilon(&data, &cfg).failed()?;
    if !r.power.is_empty() {
        write_text(&out_dir.join("power.csv"), &r.power_csv())?;
        write_text(&out_dir.join("power_median.dat"), &r.power_median_table())?;
    }
    if !r.utility.is_empty() {
        write_text(&out_dir.join("utility.csv"), &r.utility_csv())?;
        write_text(&out_dir.join("utility_median.dat"), &r.utility_median_table())?;
    }
    Ok(())
}

#[derive(Args)]
pub struct CheckArgs {
    /// Model every component-space artifact must match.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Artifacts: component CSVs, store directories, `*.manifest.json`.
    paths: Vec<PathBuf>,
}

fn fingerprint_of(path: &Path) -> Result<Option<u64>, CliError> {
    if path.is_dir() {
        return Ok(Some(AggregatedStore::load(path).invalid()?.model_fingerprint()));
    }
    let text = std::fs::read_to_string(path).invalid()?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(PcaModel::from_json(&text).ok().map(|m| m.fingerprint()));
    }
    if let Ok(n) = NoisyMatrix::from_csv_str(&text) {
        return Ok(Some(n.model_fingerprint()));
    }
    if let Ok(t) = TransformedMatrix::from_csv_str(&text) {
        return Ok(Some(t.model_fingerprint()));
    }
    Ok(None)
}

pub fn check(a: CheckArgs) -> Result<(), CliError> {
    let expected = match &a.model {
        Some(p) => Some(load_model(p)?.fingerprint()),
        None => None,
    };
    if a.paths.is_empty() {
        return Err(CliError::Validation("nothing to check".into()));
    }
    require_exists(&a.paths)?;
    let mut problems = Vec::new();
    let mut first_seen: Option<u64> = expected;
    for p in &a.paths {
        if p.to_string_lossy().ends_with(MANIFEST_SUFFIX) {
            let stale = RunManifest::load(p)?.stale_inputs();
            if stale.is_empty() {
                println!("ok {}", p.display());
            } else {
                problems.push(format!("{}: inputs changed since the run: {}", p.display(), stale.join(", ")));
            }
            continue;
        }
        match fingerprint_of(p)? {
            Some(fp) => {
                let want = *first_seen.get_or_insert(fp);
                if fp == want {
                    println!("ok {} {}", p.display(), format_fingerprint(fp));
                } else {
                    problems.push(format!(
                        "{}: fingerprint {} differs from {}",
                        p.display(),
                        format_fingerprint(fp),
                        format_fingerprint(want)
                    ));
                }
            }
            None => println!("skip {}", p.display()),
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(problems.join("; ")))
    }
}
