//! Command-line pipeline: ingest → train-kge → train-policy → recommend
//! → evaluate, plus `explain` and the stage-skipping `pipeline` driver.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ekar::checkpoint;
use ekar::error::EkarError;
use ekar::eval::{self, ItemKnn, MetricReport};
use ekar::graph::{build_graph, EntityId, GraphInput, IntegratedGraph};
use ekar::inference::{self, RankStrategy};
use ekar::ingest;
use ekar::kge::{train_kge, KgeConfig, ScoreModel};
use ekar::trainer::{self, TrainConfig};
use ekar::{Result, RunConfig};

/// All keys accepted in a config file; the same names are honored as
/// environment overrides with the `EKAR_` prefix (e.g. `EKAR_SEED=7`).
const CONFIG_KEYS: &[&str] = &[
    "dim",
    "hidden",
    "max_len",
    "beam",
    "batch",
    "k",
    "action_dropout",
    "embed_dropout",
    "lr",
    "kge_lr",
    "epochs",
    "kge_epochs",
    "negatives",
    "max_fanout",
    "eval_every",
    "runs",
    "no_kg",
    "no_reward_shaping",
    "no_action_dropout",
    "freeze_embeddings",
    "baseline",
    "seed",
];

#[derive(Parser)]
#[command(
    name = "ekar",
    version,
    about = "Path-based explainable recommendation over a user-item-entity graph"
)]
struct Cli {
    /// `key = value` config file; CLI flags and EKAR_* env vars override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    dir: PathBuf,
    /// Master seed; stage and run seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct InputArgs {
    /// TSV of `user \t item` events.
    #[arg(long)]
    interactions: PathBuf,
    /// TSV of `head \t relation \t tail` KG triplets.
    #[arg(long)]
    triplets: Option<PathBuf>,
    /// TSV of `item \t entity` matches; unmatched items are dropped.
    #[arg(long)]
    matches: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split interactions 6:2:2 per user and persist the integrated graph.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        /// Output directory (defaults to --dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train DistMult embeddings on the integrated graph.
    TrainKge {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
    },
    /// Train the walking policy with REINFORCE.
    TrainPolicy {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        action_dropout: Option<f64>,
        #[arg(long)]
        embed_dropout: Option<f64>,
        /// Drop all KG edges from the graph (interactions only).
        #[arg(long)]
        no_kg: bool,
        /// Sparse {-1, 0, +1} terminal reward instead of the shaped one.
        #[arg(long)]
        no_reward_shaping: bool,
        /// Disable candidate masking during training.
        #[arg(long)]
        no_action_dropout: bool,
        /// Keep pre-trained embeddings fixed during policy training.
        #[arg(long)]
        freeze_embeddings: bool,
    },
    /// Beam-search top-K lists with explanation paths (JSON Lines).
    Recommend {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        beam: Option<usize>,
        /// `path` ranks by path log-probability, `reward` by shaped score.
        #[arg(long)]
        strategy: Option<String>,
        /// Output path (defaults to `<dir>/recommendations.jsonl`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HR@K / NDCG@K on the test split, plus a path-pattern table.
    Evaluate {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        /// ekar | ekar-star | itemknn | kge-rec
        #[arg(long, default_value = "ekar")]
        model: String,
    },
    /// Pretty-print one user's recommendation paths.
    Explain {
        /// User label as it appears in the interactions file.
        #[arg(long)]
        user: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Run every stage in order, skipping stages with up-to-date artifacts.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "ekar")]
        model: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    apply_env_overrides(&mut cfg)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let dir = cli.dir.clone();
    match cli.cmd {
        Cmd::Ingest { input, out } => {
            let out = out.unwrap_or(dir);
            stage_ingest(&cfg, &input, &out)
        }
        Cmd::TrainKge { dim, epochs, negatives, lr, dropout } => {
            override_usize(&mut cfg.dim, dim);
            override_usize(&mut cfg.kge_epochs, epochs);
            override_usize(&mut cfg.negatives, negatives);
            override_f64(&mut cfg.kge_lr, lr);
            override_f64(&mut cfg.embed_dropout, dropout);
            validate(&cfg)?;
            stage_train_kge(&cfg, &dir)
        }
        Cmd::TrainPolicy {
            epochs,
            batch,
            max_len,
            action_dropout,
            embed_dropout,
            no_kg,
            no_reward_shaping,
            no_action_dropout,
            freeze_embeddings,
        } => {
            override_usize(&mut cfg.epochs, epochs);
            override_usize(&mut cfg.batch, batch);
            override_usize(&mut cfg.max_len, max_len);
            override_f64(&mut cfg.action_dropout, action_dropout);
            override_f64(&mut cfg.embed_dropout, embed_dropout);
            cfg.no_kg |= no_kg;
            cfg.no_reward_shaping |= no_reward_shaping;
            cfg.no_action_dropout |= no_action_dropout;
            cfg.freeze_embeddings |= freeze_embeddings;
            validate(&cfg)?;
            stage_train_policy(&cfg, &dir)
        }
        Cmd::Recommend { k, beam, strategy, out } => {
            override_usize(&mut cfg.k, k);
            override_usize(&mut cfg.beam, beam);
            validate(&cfg)?;
            let strategy: RankStrategy = strategy.as_deref().unwrap_or("path").parse()?;
            let out = out.unwrap_or_else(|| dir.join("recommendations.jsonl"));
            stage_recommend(&cfg, &dir, strategy, &out)
        }
        Cmd::Evaluate { k, runs, model } => {
            override_usize(&mut cfg.k, k);
            override_usize(&mut cfg.runs, runs);
            validate(&cfg)?;
            stage_evaluate(&cfg, &dir, &model)
        }
        Cmd::Explain { user, k, beam } => {
            override_usize(&mut cfg.k, k);
            override_usize(&mut cfg.beam, beam);
            validate(&cfg)?;
            explain(&cfg, &dir, &user)
        }
        Cmd::Pipeline { input, model } => {
            validate(&cfg)?;
            pipeline(&cfg, &input, &dir, &model)
        }
    }
}

fn apply_env_overrides(cfg: &mut RunConfig) -> Result<()> {
    for key in CONFIG_KEYS {
        let var = format!("EKAR_{}", key.to_ascii_uppercase());
        if let Ok(value) = std::env::var(&var) {
            cfg.set(key, &value)
                .map_err(|msg| EkarError::Config(format!("{var}: {msg}")))?;
        }
    }
    Ok(())
}

fn override_usize(slot: &mut usize, value: Option<usize>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn override_f64(slot: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(EkarError::Config(errors.join("; ")))
    }
}

// ---------------------------------------------------------------- stages

fn stage_ingest(cfg: &RunConfig, input: &InputArgs, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| EkarError::io(out, e))?;
    let interactions = ingest::read_interactions(&input.interactions)?;
    let triplets = match &input.triplets {
        Some(p) => ingest::read_triplets(p)?,
        None => Vec::new(),
    };
    let matches = match &input.matches {
        Some(p) => ingest::read_matches(p)?,
        None => HashMap::new(),
    };

    let (kept, removed, dropped) = if matches.is_empty() {
        (interactions, 0, 0)
    } else {
        let matched: HashSet<String> = matches.keys().cloned().collect();
        ingest::remove_unmatched_items(&interactions, &matched)
    };
    if kept.is_empty() {
        return Err(EkarError::Config("no interactions survive item matching".into()));
    }

    // Entities reachable from items: matched entity labels plus items
    // referenced directly in the KG.
    let mut item_entities: HashSet<String> = matches.values().cloned().collect();
    item_entities.extend(kept.iter().map(|(_, i)| i.clone()));
    let filtered = ingest::filter_triplets(&triplets, &item_entities);

    let split = ingest::split_interactions(&kept, cfg.seed);
    let stats = ingest::compute_stats(&kept, &filtered, removed, dropped);

    ingest::write_pairs(&out.join("train.tsv"), &split.train)?;
    ingest::write_pairs(&out.join("valid.tsv"), &split.valid)?;
    ingest::write_pairs(&out.join("test.tsv"), &split.test)?;
    let match_pairs: Vec<(String, String)> = {
        let mut v: Vec<_> = matches.into_iter().collect();
        v.sort();
        v
    };
    ingest::write_pairs(&out.join("matches.tsv"), &match_pairs)?;
    write_text(&out.join("triplets.tsv"), &render_triplets(&filtered))?;
    write_text(&out.join("stats.tsv"), &stats.to_tsv())?;

    let dataset = Dataset::from_parts(split, filtered, match_pairs.into_iter().collect())?;
    dataset.graph.save(&out.join("graph.tsv"))?;
    println!(
        "ingest: {} users, {} items, {} events ({} train / {} valid / {} test)",
        stats.users,
        stats.items,
        stats.events,
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len()
    );
    Ok(())
}

fn stage_train_kge(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let dataset = Dataset::load(dir, cfg.no_kg)?;
    let kge_cfg = KgeConfig {
        dim: cfg.dim,
        epochs: cfg.kge_epochs,
        negatives: cfg.negatives,
        lr: cfg.kge_lr,
        dropout: cfg.embed_dropout,
        batch: cfg.batch,
        seed: cfg.seed,
        include_interactions: true,
    };
    let (model, curve) = train_kge(&dataset.graph, &kge_cfg)?;
    checkpoint::save_embeddings(&dir.join("kge.ckpt"), &model.table)?;
    let mut tsv = String::from("epoch\tmean_loss\n");
    for (i, loss) in curve.iter().enumerate() {
        tsv.push_str(&format!("{i}\t{loss}\n"));
    }
    write_text(&dir.join("kge_curve.tsv"), &tsv)?;
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!("train-kge: {} epochs, loss {first:.4} -> {last:.4}", curve.len());
    } else {
        println!("train-kge: 0 epochs (initialization only)");
    }
    Ok(())
}

fn stage_train_policy(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let dataset = Dataset::load(dir, cfg.no_kg)?;
    let table = checkpoint::load_embeddings(&dir.join("kge.ckpt"))?;
    if table.num_entities != dataset.graph.num_entities()
        || table.num_relations != dataset.graph.num_relations()
    {
        return Err(EkarError::Config(
            "kge.ckpt does not match the ingested graph; re-run train-kge".into(),
        ));
    }
    let score_model = ScoreModel::new(table);

    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch: cfg.batch,
        max_len: cfg.max_len,
        hidden: cfg.hidden,
        action_dropout: if cfg.no_action_dropout { 0.0 } else { cfg.action_dropout },
        lr: cfg.lr,
        max_fanout: cfg.max_fanout,
        reward_shaping: !cfg.no_reward_shaping,
        freeze_embeddings: cfg.freeze_embeddings,
        baseline: cfg.baseline,
        seed: cfg.seed,
        eval_every: cfg.eval_every,
        beam: cfg.beam,
        k: cfg.k,
        ..TrainConfig::default()
    };
    let valid_map = dataset.pairs_by_user(&dataset.valid);
    let outcome = trainer::train(
        &dataset.graph,
        &score_model,
        &train_cfg,
        if cfg.eval_every > 0 { Some(&valid_map) } else { None },
    )?;

    checkpoint::save_policy(&dir.join("policy.ckpt"), &outcome.params)?;
    checkpoint::save_embeddings(&dir.join("embeddings.ckpt"), &outcome.table)?;
    let mut tsv = String::from("step\tminutes\tmean_reward\n");
    for (step, minutes, reward) in &outcome.curve {
        tsv.push_str(&format!("{step}\t{minutes}\t{reward}\n"));
    }
    write_text(&dir.join("reward_curve.tsv"), &tsv)?;
    match outcome.best_val_hr {
        Some(hr) => println!("train-policy: done, best validation HR@{} = {hr:.4}", cfg.k),
        None => println!("train-policy: done ({} updates)", outcome.curve.len()),
    }
    Ok(())
}

fn stage_recommend(
    cfg: &RunConfig,
    dir: &Path,
    strategy: RankStrategy,
    out: &Path,
) -> Result<()> {
    let dataset = Dataset::load(dir, cfg.no_kg)?;
    let (params, table, score_model) = load_trained(dir, &dataset.graph)?;

    let mut lines = String::new();
    for u in dataset.graph.users() {
        let list = recommend_for_user(
            cfg,
            &dataset,
            &params,
            &table,
            &score_model,
            u,
            strategy,
            cfg.seed,
        )?;
        lines.push_str(&inference::to_jsonl(&dataset.graph, &list));
        lines.push('\n');
    }
    write_text(out, &lines)?;
    println!("recommend: wrote {}", out.display());
    Ok(())
}

fn stage_evaluate(cfg: &RunConfig, dir: &Path, model: &str) -> Result<()> {
    let dataset = Dataset::load(dir, cfg.no_kg)?;
    let graph = &dataset.graph;
    let test_map = dataset.pairs_by_user(&dataset.test);
    let valid_map = dataset.pairs_by_user(&dataset.valid);

    let needs_policy = matches!(model, "ekar" | "ekar-star");
    let trained = if needs_policy { Some(load_trained(dir, graph)?) } else { None };
    let kge_model = if model == "kge-rec" {
        Some(ScoreModel::new(checkpoint::load_embeddings(&dir.join("kge.ckpt"))?))
    } else {
        None
    };
    let knn = if model == "itemknn" { Some(ItemKnn::fit(graph)) } else { None };

    let strategy = if model == "ekar-star" { RankStrategy::Reward } else { RankStrategy::PathProb };
    let mut report = MetricReport {
        k: cfg.k,
        per_run_hr: Vec::new(),
        per_run_ndcg: Vec::new(),
        users_skipped: 0,
    };
    let mut pattern_paths: Vec<inference::ScoredPath> = Vec::new();

    for run in 0..cfg.runs.max(1) {
        let run_seed = cfg.run_seed(run);
        let mut hrs = Vec::new();
        let mut ndcgs = Vec::new();
        let mut skipped = 0usize;
        for u in graph.users() {
            let Some(test_items) = test_map.get(&u) else {
                skipped += 1;
                continue;
            };
            let held_out: HashSet<EntityId> = test_items.iter().copied().collect();
            let top: Vec<EntityId> = match model {
                "ekar" | "ekar-star" => {
                    let (params, table, score_model) = trained.as_ref().unwrap();
                    let valid_items = valid_map.get(&u).cloned().unwrap_or_default();
                    let list = ranked_list(
                        cfg, &dataset, params, table, score_model, u, strategy, run_seed,
                        &valid_items,
                    )?;
                    if run == 0 {
                        pattern_paths.extend(list.entries.iter().map(|e| e.path.clone()));
                    }
                    list.entries.iter().map(|e| e.item).collect()
                }
                "itemknn" => exclude_items(
                    knn.as_ref().unwrap().recommend(
                        graph,
                        u,
                        cfg.k + valid_map.get(&u).map_or(0, |v| v.len()),
                    ),
                    valid_map.get(&u),
                    cfg.k,
                ),
                "kge-rec" => exclude_items(
                    eval::kge_rec_recommend(
                        graph,
                        kge_model.as_ref().unwrap(),
                        u,
                        cfg.k + valid_map.get(&u).map_or(0, |v| v.len()),
                    ),
                    valid_map.get(&u),
                    cfg.k,
                ),
                other => {
                    return Err(EkarError::Config(format!(
                        "unknown model '{other}' (expected ekar, ekar-star, itemknn or kge-rec)"
                    )))
                }
            };
            hrs.push(eval::hit_ratio_at_k(&top, &held_out, cfg.k));
            ndcgs.push(eval::ndcg_at_k(&top, &held_out, cfg.k));
        }
        report.users_skipped = skipped;
        report.per_run_hr.push(eval::mean(&hrs));
        report.per_run_ndcg.push(eval::mean(&ndcgs));
    }

    write_text(&dir.join(format!("metrics_{model}.tsv")), &report.to_tsv())?;
    if !pattern_paths.is_empty() {
        let refs: Vec<&inference::ScoredPath> = pattern_paths.iter().collect();
        let stats = eval::path_pattern_stats(graph, &refs);
        write_text(&dir.join("path_patterns.tsv"), &stats.to_tsv())?;
    }
    println!(
        "evaluate[{model}]: HR@{} = {:.4}, NDCG@{} = {:.4} over {} run(s)",
        cfg.k,
        report.mean_hr(),
        cfg.k,
        report.mean_ndcg(),
        cfg.runs.max(1)
    );
    Ok(())
}

fn explain(cfg: &RunConfig, dir: &Path, user: &str) -> Result<()> {
    let dataset = Dataset::load(dir, cfg.no_kg)?;
    let (params, table, score_model) = load_trained(dir, &dataset.graph)?;
    let u = dataset
        .graph
        .entity_id(user)
        .ok_or_else(|| EkarError::data(dir.join("train.tsv"), 0, format!("unknown user label '{user}'")))?;
    let list = recommend_for_user(
        cfg,
        &dataset,
        &params,
        &table,
        &score_model,
        u,
        RankStrategy::PathProb,
        cfg.seed,
    )?;
    if list.entries.is_empty() {
        println!("no recommendations for {user}");
        return Ok(());
    }
    for (rank, entry) in list.entries.iter().enumerate() {
        println!(
            "#{:<2} {} (log-prob {:.4})",
            rank + 1,
            dataset.graph.entity_label(entry.item),
            entry.score
        );
        println!("    {}", inference::render_path(&dataset.graph, &entry.path.steps));
    }
    Ok(())
}

// -------------------------------------------------------------- pipeline

fn pipeline(cfg: &RunConfig, input: &InputArgs, dir: &Path, model: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| EkarError::io(dir, e))?;
    let stages: [(&str, &[&str], &dyn Fn() -> Result<()>); 5] = [
        (
            "ingest",
            &["train.tsv", "valid.tsv", "test.tsv", "graph.tsv", "stats.tsv"],
            &|| stage_ingest(cfg, input, dir),
        ),
        ("train-kge", &["kge.ckpt", "kge_curve.tsv"], &|| stage_train_kge(cfg, dir)),
        (
            "train-policy",
            &["policy.ckpt", "embeddings.ckpt", "reward_curve.tsv"],
            &|| stage_train_policy(cfg, dir),
        ),
        ("recommend", &["recommendations.jsonl"], &|| {
            stage_recommend(
                cfg,
                dir,
                RankStrategy::PathProb,
                &dir.join("recommendations.jsonl"),
            )
        }),
        ("evaluate", &[], &|| stage_evaluate(cfg, dir, model)),
    ];

    let stamp_body = format!("{}\n{}\n", cfg.hash(), cfg.seed);
    for (name, outputs, run) in stages {
        let stamp = dir.join(format!("{name}.meta"));
        let failed = dir.join(format!("{name}.failed"));
        let up_to_date = std::fs::read_to_string(&stamp)
            .map(|s| s == stamp_body)
            .unwrap_or(false)
            && outputs.iter().all(|o| dir.join(o).exists())
            && !failed.exists();
        if up_to_date {
            println!("pipeline: {name} up to date, skipping");
            continue;
        }
        let _ = std::fs::remove_file(&stamp);
        match run() {
            Ok(()) => {
                let _ = std::fs::remove_file(&failed);
                write_text(&stamp, &stamp_body)?;
            }
            Err(e) => {
                write_text(&failed, &format!("{e}\n"))?;
                return Err(e);
            }
        }
    }
    Ok(())
}

// --------------------------------------------------------------- helpers

/// Split files plus the graph rebuilt from them. All stages reconstruct
/// the graph the same way, so entity ids are stable across stages.
struct Dataset {
    graph: IntegratedGraph,
    train: Vec<(String, String)>,
    valid: Vec<(String, String)>,
    test: Vec<(String, String)>,
}

impl Dataset {
    fn load(dir: &Path, no_kg: bool) -> Result<Self> {
        let train = ingest::read_interactions(&dir.join("train.tsv"))?;
        let valid = ingest::read_interactions(&dir.join("valid.tsv"))?;
        let test = ingest::read_interactions(&dir.join("test.tsv"))?;
        let triplets = if no_kg {
            Vec::new()
        } else {
            ingest::read_triplets(&dir.join("triplets.tsv"))?
        };
        let matches = ingest::read_matches(&dir.join("matches.tsv"))?;
        Self::build(train, valid, test, triplets, matches)
    }

    fn from_parts(
        split: ingest::DatasetSplit,
        triplets: Vec<(String, String, String)>,
        matches: HashMap<String, String>,
    ) -> Result<Self> {
        Self::build(split.train, split.valid, split.test, triplets, matches)
    }

    fn build(
        train: Vec<(String, String)>,
        valid: Vec<(String, String)>,
        test: Vec<(String, String)>,
        triplets: Vec<(String, String, String)>,
        matches: HashMap<String, String>,
    ) -> Result<Self> {
        let train_items: HashSet<&String> = train.iter().map(|(_, i)| i).collect();
        let mut seen: HashSet<&String> = HashSet::new();
        let mut extra: Vec<String> = Vec::new();
        for (_, i) in valid.iter().chain(test.iter()) {
            if !train_items.contains(i) && seen.insert(i) {
                extra.push(i.clone());
            }
        }
        let graph = build_graph(GraphInput {
            interactions: &train,
            triplets: &triplets,
            matches: &matches,
            extra_items: &extra,
        })?;
        Ok(Dataset { graph, train, valid, test })
    }

    /// Groups held-out (user, item) pairs by user id; pairs whose labels
    /// are missing from the graph are dropped.
    fn pairs_by_user(&self, pairs: &[(String, String)]) -> HashMap<EntityId, Vec<EntityId>> {
        let mut map: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
        for (u, i) in pairs {
            if let (Some(uid), Some(iid)) = (self.graph.entity_id(u), self.graph.entity_id(i)) {
                map.entry(uid).or_default().push(iid);
            }
        }
        map
    }
}

fn load_trained(
    dir: &Path,
    graph: &IntegratedGraph,
) -> Result<(ekar::policy::PolicyParams, ekar::kge::EmbeddingTable, ScoreModel)> {
    let params = checkpoint::load_policy(&dir.join("policy.ckpt"))?;
    let table = checkpoint::load_embeddings(&dir.join("embeddings.ckpt"))?;
    if table.num_entities != graph.num_entities() {
        return Err(EkarError::Config(
            "embeddings.ckpt does not match the ingested graph; re-run train-policy".into(),
        ));
    }
    let kge_table = checkpoint::load_embeddings(&dir.join("kge.ckpt"))?;
    Ok((params, table, ScoreModel::new(kge_table)))
}

#[allow(clippy::too_many_arguments)]
fn recommend_for_user(
    cfg: &RunConfig,
    dataset: &Dataset,
    params: &ekar::policy::PolicyParams,
    table: &ekar::kge::EmbeddingTable,
    score_model: &ScoreModel,
    u: EntityId,
    strategy: RankStrategy,
    seed: u64,
) -> Result<inference::RecommendationList> {
    ranked_list(cfg, dataset, params, table, score_model, u, strategy, seed, &[])
}

/// Beam-search, dedup and rank one user's paths; training items and the
/// supplied extra exclusions never appear in the list.
#[allow(clippy::too_many_arguments)]
fn ranked_list(
    cfg: &RunConfig,
    dataset: &Dataset,
    params: &ekar::policy::PolicyParams,
    table: &ekar::kge::EmbeddingTable,
    score_model: &ScoreModel,
    u: EntityId,
    strategy: RankStrategy,
    seed: u64,
    extra_exclusions: &[EntityId],
) -> Result<inference::RecommendationList> {
    let paths = inference::beam_search(
        &dataset.graph,
        params,
        table,
        u,
        cfg.max_len,
        cfg.beam,
        cfg.max_fanout,
        seed,
    )?;
    let paths = inference::dedup(paths, &dataset.graph);
    let mut exclusions: HashSet<EntityId> = dataset.graph.user_items(u).iter().copied().collect();
    exclusions.extend(extra_exclusions.iter().copied());
    Ok(inference::rank(&paths, strategy, score_model, u, cfg.k, &exclusions))
}

/// Truncates a baseline's over-fetched list to `k` after removing the
/// user's validation items.
fn exclude_items(
    ranked: Vec<EntityId>,
    valid_items: Option<&Vec<EntityId>>,
    k: usize,
) -> Vec<EntityId> {
    let excluded: HashSet<EntityId> = valid_items
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default();
    ranked
        .into_iter()
        .filter(|i| !excluded.contains(i))
        .take(k)
        .collect()
}

fn render_triplets(triplets: &[(String, String, String)]) -> String {
    let mut out = String::new();
    for (h, r, t) in triplets {
        out.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| EkarError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| EkarError::io(path, e))
}
