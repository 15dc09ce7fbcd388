//! `sipkit` command-line harness. Every subcommand reads its inputs from
//! files, writes its artifacts under `--out`, and derives all randomness
//! from `--seed`, so reruns produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sipkit::bench::{
    actor_covers, embed_actor, projection_training, run_experiment, strategy_sweep, ExperimentConfig, SweepConfig,
};
use sipkit::cluster::{accuse, agglomerate, LinkageKind};
use sipkit::dctdomain::decompress;
use sipkit::embedsim::{ChangeRateModel, Strategy};
use sipkit::ensemble::{li_ensemble_identify, wu_ensemble_identify, LiConfig, WuConfig};
use sipkit::features::{ActorImages, FeatureSet, Schema};
use sipkit::formats;
use sipkit::outlier::{lof_scores, SuspicionRanking, DEFAULT_K};
use sipkit::project::{apply_projection, fit, Method, ProjectionSpec};
use sipkit::seeds;
use sipkit::setdist::{actor_distance_matrix, normalize_columns, ColumnStats, DistanceMatrix, FeatureMatrix, SetMeasure};

#[derive(Parser)]
#[command(name = "sipkit", version, about = "Steganographer identification toolkit")]
struct Cli {
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "sipkit-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic cameras and their compressed covers.
    GenCovers(GenCovers),
    /// Simulate nsF5 embedding by guilty actors.
    Embed(Embed),
    /// Extract feature vectors from an image tree.
    Features(Features),
    /// Normalize features and compute the inter-actor distance matrix.
    Distances(Distances),
    /// Agglomerative clustering and accusation.
    DetectCluster(DetectCluster),
    /// Local outlier factor ranking.
    DetectLof(DetectLof),
    /// Crop-based clustering ensemble with majority voting.
    EnsembleLi(EnsembleLi),
    /// Feature-subsampling LOF ensemble with score fusion.
    EnsembleWu(EnsembleWu),
    /// Fit a projection on in-harness training data.
    ProjectFit(ProjectFit),
    /// Project a feature matrix onto a fitted basis.
    ProjectApply(ProjectApply),
    /// Run the seeded multi-trial benchmark.
    Bench,
    /// Average guilty rank over a strategy x payload grid.
    Sweep(Sweep),
}

#[derive(Args)]
struct GenCovers {
    #[arg(long)]
    actors: Option<usize>,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    quality: Option<u32>,
    /// Also write decompressed PGM images.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct Embed {
    /// Image tree written by gen-covers.
    #[arg(long)]
    covers: PathBuf,
    /// Comma-separated guilty actor ids.
    #[arg(long, value_delimiter = ',', required = true)]
    guilty: Vec<usize>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    payload: Option<f64>,
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long, value_parser = parse_change_model)]
    change_model: Option<ChangeRateModel>,
}

#[derive(Args)]
struct Features {
    /// Image tree (`actor<id>/img<j>.stca`).
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_parser = parse_schema)]
    schema: Option<Schema>,
}

#[derive(Args)]
struct Distances {
    /// `.stfm` or `.csv` feature matrix.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_parser = parse_measure, default_value = "linear-mmd")]
    measure: SetMeasure,
    /// Skip column normalization.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct DetectCluster {
    #[arg(long)]
    distances: PathBuf,
    #[arg(long, value_parser = parse_linkage, default_value = "single")]
    linkage: LinkageKind,
    /// Number of actors to accuse.
    #[arg(long, default_value_t = 1)]
    accuse: usize,
}

#[derive(Args)]
struct DetectLof {
    #[arg(long)]
    distances: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
}

#[derive(Args)]
struct EnsembleLi {
    #[arg(long)]
    images: PathBuf,
    #[arg(long, default_value_t = 48)]
    crop_height: usize,
    #[arg(long, default_value_t = 48)]
    crop_width: usize,
    #[arg(long, default_value_t = sipkit::ensemble::DEFAULT_SUBMODELS)]
    submodels: usize,
}

#[derive(Args)]
struct EnsembleWu {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    submodels: Option<usize>,
    /// Points per actor.
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_measure)]
    measure: Option<SetMeasure>,
    /// Use every feature in every sub-model.
    #[arg(long)]
    no_subsample: bool,
}

#[derive(Args)]
struct ProjectFit {
    #[arg(long, value_parser = parse_method, default_value = "cls")]
    method: Method,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct ProjectApply {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Normalization written by project-fit; without it the input is
    /// normalized on its own statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',')]
    payloads: Vec<f64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: sipkit::Error| e.to_string())
}

fn parse_linkage(s: &str) -> Result<LinkageKind, String> {
    s.parse().map_err(|e: sipkit::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sipkit::Error| e.to_string())
}

fn parse_schema(s: &str) -> Result<Schema, String> {
    Schema::parse(s).map_err(|e| e.to_string())
}

fn parse_measure(s: &str) -> Result<SetMeasure, String> {
    SetMeasure::parse(s).map_err(|e| e.to_string())
}

fn parse_change_model(s: &str) -> Result<ChangeRateModel, String> {
    match s {
        "entropy" => Ok(ChangeRateModel::Entropy),
        "uncoded" => Ok(ChangeRateModel::Uncoded),
        other => Err(format!("unknown change model {other:?} (entropy, uncoded)")),
    }
}

fn load_config(cli: &Cli, fallback: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => fallback,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write(out: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    let path = out.join(name);
    formats::write_file(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(out, name, s)
}

fn image_name(j: usize) -> String {
    format!("img{j:04}")
}

/// Writes `actor<id>/img<j>.stca` for every actor.
fn write_tree(dir: &Path, actors: &[ActorImages]) -> Result<()> {
    for a in actors {
        for (j, c) in a.images.iter().enumerate() {
            let path = dir.join(format!("actor{}", a.actor)).join(format!("{}.stca", image_name(j)));
            formats::write_file(&path, formats::encode_stca(c))?;
        }
    }
    Ok(())
}

fn read_tree(dir: &Path) -> Result<Vec<ActorImages>> {
    let mut actors = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name.strip_prefix("actor").and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let mut files: Vec<PathBuf> = fs::read_dir(entry.path())?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "stca"));
        files.sort();
        let images = files
            .iter()
            .map(|p| {
                let bytes = formats::read_file(p)?;
                formats::decode_stca(&bytes).with_context(|| format!("decoding {}", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        if images.is_empty() {
            bail!("{} holds no .stca images", entry.path().display());
        }
        actors.push(ActorImages { actor: id, images });
    }
    if actors.is_empty() {
        bail!("no actor<id> directories under {}", dir.display());
    }
    actors.sort_by_key(|a| a.actor);
    Ok(actors)
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = formats::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    let m = if path.extension().is_some_and(|e| e == "csv") {
        formats::parse_features_csv(std::str::from_utf8(&bytes)?)?
    } else {
        formats::decode_stfm(&bytes)?
    };
    Ok(m)
}

fn read_distances(path: &Path) -> Result<DistanceMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(formats::parse_distance_csv(&text)?)
}

fn feature_sets(m: &FeatureMatrix) -> Vec<FeatureSet> {
    let mut sets = m.to_sets();
    sets.sort_by_key(|s| s.actor);
    sets
}

#[derive(Serialize)]
struct AccusationReport {
    linkage: String,
    measure: String,
    c1: Vec<usize>,
    c2: Vec<usize>,
    accusation: sipkit::cluster::Accusation,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli.out.clone();
    match &cli.command {
        Command::GenCovers(a) => {
            let mut cfg = load_config(&cli, ExperimentConfig::default())?;
            cfg.actors = a.actors.unwrap_or(cfg.actors);
            cfg.images_per_actor = a.images.unwrap_or(cfg.images_per_actor);
            cfg.width = a.width.unwrap_or(cfg.width);
            cfg.height = a.height.unwrap_or(cfg.height);
            cfg.quality = a.quality.unwrap_or(cfg.quality);
            let sources = actor_covers(
                cfg.actors,
                cfg.images_per_actor,
                &cfg,
                seeds::derive(cfg.seed, "sources", &[]),
            )?;
            let (params, actors): (Vec<_>, Vec<_>) = sources.into_iter().unzip();
            let dir = out.join("covers");
            write_tree(&dir, &actors)?;
            if a.pgm {
                for actor in &actors {
                    for (j, c) in actor.images.iter().enumerate() {
                        let name = format!("covers/actor{}/{}.pgm", actor.actor, image_name(j));
                        write(&out, &name, formats::encode_pgm(&decompress(c)))?;
                    }
                }
            }
            write_json(&out, "covers/sources.json", &params)?;
            println!("{} actors x {} covers -> {}", cfg.actors, cfg.images_per_actor, dir.display());
        }
        Command::Embed(a) => {
            let mut cfg = load_config(&cli, ExperimentConfig::default())?;
            cfg.strategy = a.strategy.unwrap_or(cfg.strategy);
            cfg.payload = a.payload.unwrap_or(cfg.payload);
            cfg.proportion = a.proportion.unwrap_or(cfg.proportion);
            cfg.change_model = a.change_model.unwrap_or(cfg.change_model);
            let mut actors = read_tree(&a.covers)?;
            let embed_seed = seeds::derive(cfg.seed, "embedding", &[]);
            let mut manifest = String::new();
            for &g in &a.guilty {
                let Some(pos) = actors.iter().position(|x| x.actor == g) else {
                    bail!("no actor {g} under {}", a.covers.display());
                };
                let (stego, records) = embed_actor(
                    &actors[pos],
                    cfg.strategy,
                    cfg.payload,
                    cfg.proportion,
                    cfg.change_model,
                    seeds::derive(embed_seed, "actor", &[g as u64]),
                )?;
                actors[pos] = stego;
                for r in &records {
                    manifest.push_str(&r.to_json_line());
                    manifest.push('\n');
                }
            }
            write_tree(&out.join("stego"), &actors)?;
            write(&out, "embed_manifest.jsonl", &manifest)?;
            println!("embedded {} images -> {}", manifest.lines().count(), out.join("stego").display());
        }
        Command::Features(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let schema = a.schema.unwrap_or(cfg.schema);
            let actors = read_tree(&a.images)?;
            let sets = actors.iter().map(|x| x.extract(schema)).collect::<sipkit::Result<Vec<_>>>()?;
            let m = FeatureMatrix::from_sets(&sets)?;
            write(&out, "features.stfm", formats::encode_stfm(&m))?;
            write(&out, "features.csv", formats::features_csv(&m))?;
            println!("{} x {} {} features", m.rows(), m.cols(), schema.name());
        }
        Command::Distances(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let mut m = read_features(&a.features)?;
            if !a.raw {
                m = normalize_columns(&m)?;
            }
            let d = actor_distance_matrix(&feature_sets(&m), &a.measure, seeds::derive(cfg.seed, "distances", &[]))?;
            write(&out, "distances.csv", formats::distance_csv(&d))?;
            println!("{0} x {0} distance matrix ({1})", d.len(), d.measure());
        }
        Command::DetectCluster(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let d = read_distances(&a.distances)?;
            let tree = agglomerate(&d, a.linkage)?;
            let (c1, c2) = tree.final_two_clusters();
            let ids = |c: &[usize]| c.iter().map(|&i| d.labels()[i]).collect::<Vec<_>>();
            let (c1, c2) = (ids(&c1), ids(&c2));
            let accusation = accuse(&c1, &c2, a.accuse, &mut seeds::child_rng(cfg.seed, "accuse", &[]))?;
            write(&out, "dendrogram.csv", formats::dendrogram_csv(&tree, d.labels()))?;
            write(&out, "dendrogram.dot", formats::dendrogram_dot(&tree, d.labels()))?;
            println!("accused {:?}", accusation.accused);
            write_json(
                &out,
                "accusation.json",
                &AccusationReport {
                    linkage: a.linkage.to_string(),
                    measure: d.measure().to_string(),
                    c1,
                    c2,
                    accusation,
                },
            )?;
        }
        Command::DetectLof(a) => {
            let d = read_distances(&a.distances)?;
            let scores = lof_scores(&d, a.k)?;
            let ranking = SuspicionRanking::from_scores(d.labels(), &scores)?;
            write(&out, "ranking.csv", formats::ranking_csv(&ranking))?;
            println!("most suspicious: actor {}", ranking.entries[0].actor);
        }
        Command::EnsembleLi(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let li = LiConfig {
                crop_height: a.crop_height,
                crop_width: a.crop_width,
                submodels: a.submodels,
            };
            let actors = read_tree(&a.images)?;
            let manifest = li_ensemble_identify(&actors, &li, seeds::derive(cfg.seed, "detector", &[]))?;
            write_json(&out, "li_manifest.json", &manifest)?;
            println!("verdict: actor {}", manifest.verdict);
        }
        Command::EnsembleWu(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let base = WuConfig::default();
            let wu = WuConfig {
                submodels: a.submodels.unwrap_or(base.submodels),
                partitions: a.partitions.unwrap_or(base.partitions),
                lof_k: a.k.unwrap_or(base.lof_k),
                measure: a.measure.unwrap_or(base.measure),
                subsample: !a.no_subsample,
            };
            let m = read_features(&a.features)?;
            let manifest = wu_ensemble_identify(&feature_sets(&m), &wu, seeds::derive(cfg.seed, "detector", &[]))?;
            write_json(&out, "wu_manifest.json", &manifest)?;
            write(&out, "wu_ranking.csv", formats::ranking_csv(&manifest.ranking))?;
            println!("most suspicious: actor {}", manifest.ranking.entries[0].actor);
        }
        Command::ProjectFit(a) => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let spec = ProjectionSpec {
                method: a.method,
                k: a.k,
                lambda: a.lambda,
            };
            let (data, stats) = projection_training(&cfg)?;
            let basis = fit(&spec, &data)?;
            write(&out, "basis.stpb", formats::encode_stpb(&basis))?;
            write(&out, "basis.csv", formats::basis_csv(&basis))?;
            write_json(&out, "training_stats.json", &stats)?;
            println!("{} basis: {} x {}", basis.method.name(), basis.dim(), basis.k());
        }
        Command::ProjectApply(a) => {
            let basis = formats::decode_stpb(&formats::read_file(&a.basis)?)?;
            let m = read_features(&a.features)?;
            let z = match &a.stats {
                Some(p) => {
                    let stats: ColumnStats = serde_json::from_str(&fs::read_to_string(p)?)?;
                    stats.apply(&m)?
                }
                None => normalize_columns(&m)?,
            };
            let p = apply_projection(&z, &basis)?;
            write(&out, "projected.stfm", formats::encode_stfm(&p))?;
            write(&out, "projected.csv", formats::features_csv(&p))?;
            println!("projected {} rows onto {} directions", p.rows(), p.cols());
        }
        Command::Bench => {
            let cfg = load_config(&cli, ExperimentConfig::default())?;
            let report = run_experiment(&cfg)?;
            write_json(&out, "report.json", &report)?;
            write(&out, "trials.csv", report.trials_csv())?;
            match report.average_rank {
                Some(r) => println!("accuracy {:.3}, average guilty rank {r:.3}", report.accuracy),
                None => println!("accuracy {:.3}", report.accuracy),
            }
        }
        Command::Sweep(a) => {
            let defaults = SweepConfig::default();
            let base = load_config(&cli, defaults.base.clone())?;
            let sweep = SweepConfig {
                base,
                strategies: if a.strategies.is_empty() { defaults.strategies } else { a.strategies.clone() },
                payloads: if a.payloads.is_empty() { defaults.payloads } else { a.payloads.clone() },
            };
            let report = strategy_sweep(&sweep)?;
            write_json(&out, "sweep.json", &report)?;
            write(&out, "sweep_plot.csv", report.plot_csv())?;
            print!("{}", report.plot_csv());
        }
    }
    Ok(())
}
