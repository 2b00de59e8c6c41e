//! Stage execution and the on-disk artifact layout.
//!
//! Every stage reads its inputs either from the dataset named in the config or
//! from files earlier stages wrote under the output directory, never from
//! anywhere else. Stages write through [`RunDir`] only.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use fedlab::analysis::{
    bucketed_f1, cost_effectiveness, hit_at_k, score_predictions, write_columns, write_csv, write_jsonl, AttackRecord,
    AttackScore, BucketedF1, CostEffectiveness, DeviationPoint, HeldOut, HitEval, MacroMetrics, RecMetrics, UserHit,
};
use fedlab::attacks::{attack_trace, AttackKind};
use fedlab::data::{interaction_buckets, leave_one_out_split, load_dataset, Dataset, DatasetSplit, ExcludedUser, SplitStats};
use fedlab::federation::{aggregate, Federation, LdpConfig, RoundTrace, TrainingRun};
use fedlab::models::{Checkpoint, CheckpointHeader, Defense};
use fedlab::numerics::RngStream;

use crate::config::{ExperimentConfig, Stage};
use crate::error::{CliError, CliResult};

pub const SNAPSHOT: &str = "config.toml";
pub const FAILURE_MARKER: &str = "FAILED";
pub const LOG: &str = "run.log";

/// Paths of every artifact a run can produce.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn stats(&self) -> PathBuf {
        self.path("ingest/stats.json")
    }
    pub fn train_summary(&self) -> PathBuf {
        self.path("train/summary.json")
    }
    pub fn traces(&self) -> PathBuf {
        self.path("train/traces")
    }
    pub fn attack_summary(&self) -> PathBuf {
        self.path("attack/summary.json")
    }
    pub fn attack_records(&self, kind: AttackKind) -> PathBuf {
        self.path(&format!("attack/{}.jsonl", kind.name()))
    }
    pub fn sweep_table(&self, family: &str) -> PathBuf {
        self.path(&format!("sweep/{family}.json"))
    }
    pub fn sweep_point(&self, family: &str, value: f64) -> RunDir {
        RunDir::new(self.path(&format!("sweep/{family}/{value}")))
    }
    pub fn analysis(&self, name: &str) -> PathBuf {
        self.path(&format!("analyze/{name}.json"))
    }

    /// The highest-numbered archived trace.
    pub fn last_trace(&self) -> CliResult<PathBuf> {
        let dir = self.traces();
        let mut names: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "trace"))
                .collect(),
            Err(_) => Vec::new(),
        };
        names.sort();
        names.pop().ok_or_else(|| CliError::Missing(vec![format!("train (no traces in {})", dir.display())]))
    }

    fn log(&self, line: &str) -> CliResult<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.path(LOG))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|_| CliError::Missing(vec![format!("{stage} ({})", path.display())]))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub stats: SplitStats,
    pub excluded: Vec<ExcludedUser>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub rounds_run: usize,
    pub stopped_early: Option<usize>,
    pub final_train_loss: f64,
    pub final_val_hit: f64,
    pub k: usize,
    pub protocol: String,
    pub test_hit: f64,
    pub short_users: Vec<usize>,
    pub deviation: DeviationPoint,
}

/// Aggregate attacker performance against one run, one line per attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack: AttackKind,
    pub round: usize,
    pub incomplete: usize,
    #[serde(flatten)]
    pub metrics: MacroMetrics,
}

/// One point of a λ or μ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub imia_f1: f64,
    pub imia_f1_std: f64,
    pub random_f1: f64,
    pub test_hit: f64,
    pub item_deviation: f64,
    pub user_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub f1: f64,
    pub f1_std: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub defense: String,
    pub value: f64,
    /// Whether this setting brought IMIA F1 to the random level; when no
    /// setting does, the strongest one is reported with this unset.
    pub reached_random_level: bool,
    pub f1: f64,
    pub test_hit: f64,
    #[serde(flatten)]
    pub cost: CostEffectiveness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub mu: f64,
    pub item: f64,
    pub user: f64,
}

/// Flat per-user CSV row.
#[derive(Serialize)]
struct RecordRow {
    user: usize,
    touched: usize,
    predicted: usize,
    iterations: usize,
    complete: bool,
    precision: f64,
    recall: f64,
    f1: f64,
}

impl From<&AttackRecord> for RecordRow {
    fn from(r: &AttackRecord) -> Self {
        RecordRow {
            user: r.user,
            touched: r.touched,
            predicted: r.predicted.len(),
            iterations: r.iterations,
            complete: r.complete,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }
}

/// Loaded data shared by every stage of one invocation.
pub struct Prepared {
    pub dataset: Dataset,
    pub split: DatasetSplit,
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let mapping = cfg.dataset.mapping()?;
    let mut dataset = load_dataset(&cfg.dataset.path, &mapping)?;
    if let Some(n) = cfg.dataset.first_users {
        dataset = dataset.first_users(n);
    }
    let split = leave_one_out_split(&dataset, &mut RngStream::new(cfg.seeds.split, "split"));
    Ok(Prepared { dataset, split })
}

/// Runs the configured stages, writing a config snapshot first. A failing
/// stage leaves everything written so far plus a failure marker.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunDir> {
    run_stages(cfg, &cfg.stages)
}

pub fn run_stages(cfg: &ExperimentConfig, stages: &[Stage]) -> CliResult<RunDir> {
    let dir = RunDir::new(&cfg.out);
    fs::create_dir_all(&dir.root)?;
    let marker = dir.path(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    fs::write(dir.path(SNAPSHOT), cfg.to_toml())?;
    let mut data = None;
    for &stage in stages {
        let start = Instant::now();
        info!("{}: {stage}", cfg.name);
        dir.log(&format!("stage {stage} started"))?;
        let result = run_stage(cfg, stage, &dir, &mut data);
        if let Err(e) = result {
            let text = format!("stage {stage} failed: {e}\n");
            fs::write(&marker, &text)?;
            dir.log(text.trim_end())?;
            return Err(match e {
                CliError::Lab(source) => CliError::Stage {
                    stage: stage.name().into(),
                    source,
                },
                other => other,
            });
        }
        dir.log(&format!("stage {stage} finished in {:.1}s", start.elapsed().as_secs_f64()))?;
    }
    Ok(dir)
}

fn run_stage(cfg: &ExperimentConfig, stage: Stage, dir: &RunDir, data: &mut Option<Prepared>) -> CliResult<()> {
    if data.is_none() {
        *data = Some(prepare(cfg)?);
    }
    let data = data.as_ref().expect("prepared above");
    match stage {
        Stage::Ingest => ingest(data, dir),
        Stage::Train => train(cfg, data, dir).map(|_| ()),
        Stage::Attack => attack(cfg, data, dir),
        Stage::Sweep => sweep(cfg, data, dir),
        Stage::Analyze => analyze(cfg, data, dir),
    }
}

fn ingest(data: &Prepared, dir: &RunDir) -> CliResult<()> {
    let report = IngestReport {
        stats: data.split.stats(),
        excluded: data.split.excluded.clone(),
    };
    info!(
        "{} users, {} items, {} interactions",
        report.stats.users, report.stats.items, report.stats.interactions
    );
    write_json(&dir.stats(), &report)
}

fn federation<'a>(cfg: &'a ExperimentConfig, split: &'a DatasetSplit, ldp: LdpConfig, defense: Option<Defense>) -> Federation<'a> {
    let mut fed = Federation::new(split, &cfg.model, &cfg.train);
    fed.ldp = ldp;
    fed.defense = defense;
    fed.seeds = cfg.seeds;
    fed.exec = cfg.execution;
    fed.eval_protocol = cfg.eval.hit_protocol();
    fed
}

pub fn test_eval(cfg: &ExperimentConfig) -> HitEval {
    HitEval {
        k: cfg.eval.k,
        protocol: cfg.eval.hit_protocol(),
        held_out: HeldOut::Test,
        seed: cfg.seeds.eval,
    }
}

fn train(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir) -> CliResult<TrainSummary> {
    train_with(cfg, data, dir, cfg.ldp, cfg.effective_defense())
}

fn train_with(
    cfg: &ExperimentConfig,
    data: &Prepared,
    dir: &RunDir,
    ldp: LdpConfig,
    defense: Option<Defense>,
) -> CliResult<TrainSummary> {
    let fed = federation(cfg, &data.split, ldp, defense);
    let run = fed.run_training(&cfg.archive)?;
    let traces = dir.traces();
    if traces.exists() {
        fs::remove_dir_all(&traces)?;
    }
    fs::create_dir_all(&traces)?;
    for t in &run.traces {
        t.save(traces.join(RoundTrace::file_name(t.round)))?;
    }
    let metrics = hit_at_k(&cfg.model, &run.state.public, &run.state.private, &data.split, &test_eval(cfg), cfg.execution)?;
    write_csv::<_, UserHit>(create(&dir.path("train/hit.csv"))?, &metrics.per_user)?;
    let summary = summarize_training(&run, metrics);
    let checkpoint = Checkpoint {
        header: CheckpointHeader {
            model: cfg.model.clone(),
            round: run.state.round,
            users: data.split.users(),
        },
        public: run.state.public.clone(),
        private: Some(run.state.private.clone()),
    };
    checkpoint.save(dir.path("train/checkpoint.bin"))?;
    run.write_curve_csv(create(&dir.path("train/curve.csv"))?)?;
    write_csv(create(&dir.path("train/deviation.csv"))?, &run.deviation.rounds)?;
    write_json(&dir.train_summary(), &summary)?;
    info!("test hit@{} = {:.4}", summary.k, summary.test_hit);
    Ok(summary)
}

fn summarize_training(run: &TrainingRun, metrics: RecMetrics) -> TrainSummary {
    let last = run.curve.last();
    TrainSummary {
        rounds_run: run.curve.len(),
        stopped_early: run.stopped_early,
        final_train_loss: last.map_or(0.0, |p| p.train_loss),
        final_val_hit: last.map_or(0.0, |p| p.val_hit10),
        k: metrics.k,
        protocol: metrics.protocol,
        test_hit: metrics.mean,
        short_users: metrics.short_users,
        deviation: *run.deviation.last().expect("deviation has the initial point"),
    }
}

fn popular_items(cfg: &ExperimentConfig, data: &Prepared) -> Option<Vec<usize>> {
    match (cfg.attack.imia.popularity, cfg.attack.popularity_from_catalog) {
        (Some(prior), true) => Some(data.dataset.catalog.top_popular(prior.top_fraction)),
        _ => None,
    }
}

fn run_attack(
    cfg: &ExperimentConfig,
    data: &Prepared,
    trace: &RoundTrace,
    kind: AttackKind,
    imia: &fedlab::attacks::AttackConfig,
) -> CliResult<AttackScore> {
    let popular = popular_items(cfg, data);
    let preds = attack_trace(trace, kind, imia, &cfg.train, popular.as_deref(), cfg.seeds.attack, cfg.execution)?;
    Ok(score_predictions(kind, &preds, &data.split)?)
}

fn attack(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir) -> CliResult<()> {
    attack_kinds(cfg, data, dir, &cfg.attack.kinds).map(|_| ())
}

fn attack_kinds(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir, kinds: &[AttackKind]) -> CliResult<Vec<AttackSummary>> {
    let trace = RoundTrace::load(dir.last_trace()?)?;
    let mut summaries = Vec::new();
    for &kind in kinds {
        let start = Instant::now();
        let score = run_attack(cfg, data, &trace, kind, &cfg.attack.imia)?;
        write_jsonl(create(&dir.attack_records(kind))?, &score.records)?;
        let rows: Vec<RecordRow> = score.records.iter().map(RecordRow::from).collect();
        write_csv(create(&dir.path(&format!("attack/{}.csv", kind.name())))?, &rows)?;
        let incomplete = score.records.iter().filter(|r| !r.complete).count();
        if incomplete > 0 {
            warn!("{}: {incomplete} users flagged incomplete", kind.name());
        }
        info!(
            "{} F1 {:.4} over {} users ({:.1}s)",
            kind.name(),
            score.summary.f1,
            score.summary.users,
            start.elapsed().as_secs_f64()
        );
        summaries.push(AttackSummary {
            attack: kind,
            round: trace.round,
            incomplete,
            metrics: score.summary,
        });
    }
    write_json(&dir.attack_summary(), &summaries)?;
    Ok(summaries)
}

fn summary_f1(summaries: &[AttackSummary], kind: AttackKind) -> Option<&MacroMetrics> {
    summaries.iter().find(|s| s.attack == kind).map(|s| &s.metrics)
}

/// Whether the base run is the undefended protocol, so grid points at zero
/// can reuse it.
fn base_is_vanilla(cfg: &ExperimentConfig) -> bool {
    !cfg.ldp.is_active() && cfg.effective_defense().is_none()
}

fn sweep_row(value: f64, train: &TrainSummary, attacks: &[AttackSummary]) -> CliResult<SweepRow> {
    let imia = summary_f1(attacks, AttackKind::Imia).ok_or_else(|| CliError::Missing(vec!["attack (imia)".into()]))?;
    let random = summary_f1(attacks, AttackKind::Random).ok_or_else(|| CliError::Missing(vec!["attack (random)".into()]))?;
    Ok(SweepRow {
        value,
        imia_f1: imia.f1,
        imia_f1_std: imia.f1_std,
        random_f1: random.f1,
        test_hit: train.test_hit,
        item_deviation: train.deviation.item,
        user_deviation: train.deviation.user,
    })
}

/// The base run's training and attack summaries, computing missing attacks.
fn vanilla_point(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir) -> CliResult<(TrainSummary, Vec<AttackSummary>)> {
    let train: TrainSummary = read_json(&dir.train_summary(), "train")?;
    let mut attacks: Vec<AttackSummary> = read_json(&dir.attack_summary(), "attack").unwrap_or_default();
    let needed = [AttackKind::Random, AttackKind::Imia];
    let missing: Vec<AttackKind> = needed.into_iter().filter(|k| summary_f1(&attacks, *k).is_none()).collect();
    if !missing.is_empty() {
        let mut kinds: Vec<AttackKind> = attacks.iter().map(|a| a.attack).chain(missing).collect();
        kinds.sort();
        attacks = attack_kinds(cfg, data, dir, &kinds)?;
    }
    Ok((train, attacks))
}

fn sweep(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir) -> CliResult<()> {
    let grids = [("lambda", &cfg.sweep.lambda), ("mu", &cfg.sweep.mu)];
    for (family, grid) in grids {
        if grid.is_empty() {
            continue;
        }
        let mut rows = Vec::new();
        for &value in grid {
            let (ldp, defense) = match family {
                "lambda" if value > 0.0 => (LdpConfig::new(value), None),
                "mu" if value > 0.0 => (LdpConfig::OFF, Some(Defense {
                    mu: value,
                    ..cfg.defense.unwrap_or(Defense::new(value))
                })),
                _ => (LdpConfig::OFF, None),
            };
            let (train, attacks) = if ldp == LdpConfig::OFF && defense.is_none() && base_is_vanilla(cfg) {
                info!("{family} = {value}: reusing the base run");
                vanilla_point(cfg, data, dir)?
            } else {
                info!("{family} = {value}: training");
                let point = dir.sweep_point(family, value);
                fs::create_dir_all(&point.root)?;
                let train = train_with(cfg, data, &point, ldp, defense)?;
                let attacks = attack_kinds(cfg, data, &point, &[AttackKind::Random, AttackKind::Imia])?;
                (train, attacks)
            };
            rows.push(sweep_row(value, &train, &attacks)?);
        }
        write_json(&dir.sweep_table(family), &rows)?;
    }
    if !cfg.sweep.gamma.is_empty() {
        let trace = RoundTrace::load(dir.last_trace()?)?;
        let mut rows = Vec::new();
        for &gamma in &cfg.sweep.gamma {
            let imia = fedlab::attacks::AttackConfig {
                gamma,
                ..cfg.attack.imia.clone()
            };
            let score = run_attack(cfg, data, &trace, AttackKind::Imia, &imia)?;
            let iters = score.records.iter().map(|r| r.iterations as f64).sum::<f64>() / score.records.len().max(1) as f64;
            info!("gamma = {gamma}: IMIA F1 {:.4}", score.summary.f1);
            rows.push(GammaRow {
                gamma,
                f1: score.summary.f1,
                f1_std: score.summary.f1_std,
                mean_iterations: iters,
            });
        }
        write_json(&dir.sweep_table("gamma"), &rows)?;
    }
    Ok(())
}

/// Picks the weakest grid point that brings IMIA to the random level, or the
/// strongest one when none does.
pub fn select_defense(rows: &[SweepRow], margin: f64) -> Option<(&SweepRow, bool)> {
    let mut defended: Vec<&SweepRow> = rows.iter().filter(|r| r.value > 0.0).collect();
    defended.sort_by(|a, b| a.value.total_cmp(&b.value));
    defended
        .iter()
        .find(|r| r.imia_f1 <= r.random_f1 + margin)
        .map(|r| (*r, true))
        .or_else(|| defended.last().map(|r| (*r, false)))
}

fn analyze(cfg: &ExperimentConfig, data: &Prepared, dir: &RunDir) -> CliResult<()> {
    let mut produced = 0;
    let mut missing = Vec::new();

    match fs::read_to_string(dir.attack_records(AttackKind::Imia)) {
        Ok(text) => {
            let records: Vec<AttackRecord> = fedlab::analysis::read_jsonl(&text)?;
            let pairs: Vec<(usize, f64)> = records.iter().map(|r| (r.user, r.f1)).collect();
            let map = interaction_buckets(&data.split, cfg.analysis.buckets)?;
            let buckets: BucketedF1 = bucketed_f1(&pairs, &map)?;
            write_json(&dir.analysis("buckets"), &buckets)?;
            let cols: Vec<Vec<f64>> = buckets.rows.iter().map(|r| vec![r.bucket as f64, r.users as f64, r.mean_f1]).collect();
            write_columns(create(&dir.path("analyze/buckets.dat"))?, &["bucket", "users", "mean_f1"], &cols)?;
            produced += 1;
        }
        Err(_) => missing.push("attack (imia records) for buckets".to_string()),
    }

    let lambda: Option<Vec<SweepRow>> = read_json(&dir.sweep_table("lambda"), "sweep").ok();
    let mu: Option<Vec<SweepRow>> = read_json(&dir.sweep_table("mu"), "sweep").ok();
    let vanilla = baseline_row(cfg, dir, &[lambda.as_deref(), mu.as_deref()]);
    match (&vanilla, lambda.is_some() || mu.is_some()) {
        (Some(base), true) => {
            let mut rows = Vec::new();
            for (name, grid) in [("ldp", &lambda), ("proximal", &mu)] {
                let Some(grid) = grid else { continue };
                if let Some((row, reached)) = select_defense(grid, cfg.analysis.random_margin) {
                    let cost = cost_effectiveness((base.imia_f1, base.test_hit), (row.imia_f1, row.test_hit))?;
                    rows.push(CostRow {
                        defense: name.into(),
                        value: row.value,
                        reached_random_level: reached,
                        f1: row.imia_f1,
                        test_hit: row.test_hit,
                        cost,
                    });
                }
            }
            write_json(&dir.analysis("cost"), &rows)?;
            produced += 1;
        }
        (None, true) => missing.push("vanilla baseline (train + attack, or a zero grid point) for cost".into()),
        _ => missing.push("sweep (lambda or mu grid) for cost".into()),
    }

    if let Some(grid) = &mu {
        let mut rows: Vec<DeviationRow> = grid
            .iter()
            .map(|r| DeviationRow {
                mu: r.value,
                item: r.item_deviation,
                user: r.user_deviation,
            })
            .collect();
        if let Some(base) = vanilla.as_ref().filter(|_| !grid.iter().any(|r| r.value == 0.0)) {
            rows.insert(
                0,
                DeviationRow {
                    mu: 0.0,
                    item: base.item_deviation,
                    user: base.user_deviation,
                },
            );
        }
        write_json(&dir.analysis("deviation"), &rows)?;
        produced += 1;
    } else {
        missing.push("sweep (mu grid) for deviation".into());
    }

    if let Ok(rows) = read_json::<Vec<GammaRow>>(&dir.sweep_table("gamma"), "sweep") {
        let cols: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.gamma, r.f1, r.f1_std]).collect();
        write_columns(create(&dir.path("analyze/gamma.dat"))?, &["gamma", "f1", "f1_std"], &cols)?;
        produced += 1;
    }

    if produced == 0 {
        return Err(CliError::Missing(missing));
    }
    for m in missing {
        warn!("analysis skipped: missing {m}");
    }
    Ok(())
}

/// The undefended reference point: a zero grid entry, else the base run when
/// it is vanilla.
fn baseline_row(cfg: &ExperimentConfig, dir: &RunDir, grids: &[Option<&[SweepRow]>]) -> Option<SweepRow> {
    if let Some(row) = grids.iter().flatten().flat_map(|g| g.iter()).find(|r| r.value == 0.0) {
        return Some(row.clone());
    }
    if !base_is_vanilla(cfg) {
        return None;
    }
    let train: TrainSummary = read_json(&dir.train_summary(), "train").ok()?;
    let attacks: Vec<AttackSummary> = read_json(&dir.attack_summary(), "attack").ok()?;
    sweep_row(0.0, &train, &attacks).ok()
}

/// Re-runs a finished experiment from its snapshot into `into` and lists the
/// artifacts whose bytes differ. Archived traces are also checked by
/// recomputing each round's aggregate.
pub fn replay(original: &Path, into: &Path) -> CliResult<Vec<String>> {
    let snapshot = original.join(SNAPSHOT);
    let text = fs::read_to_string(&snapshot).map_err(|_| CliError::Missing(vec![format!("snapshot {}", snapshot.display())]))?;
    let mut cfg = ExperimentConfig::parse(&text, &[])?;
    cfg.validate()?;
    cfg.out = into.to_path_buf();
    if into.exists() {
        fs::remove_dir_all(into)?;
    }
    run_experiment(&cfg)?;

    let mut mismatches = Vec::new();
    let ours = artifact_files(original, into)?;
    let theirs = artifact_files(into, into)?;
    for rel in ours.iter().chain(theirs.iter().filter(|r| !ours.contains(r))) {
        let a = fs::read(original.join(rel)).ok();
        let b = fs::read(into.join(rel)).ok();
        if a.is_none() || a != b {
            mismatches.push(rel.clone());
        }
    }
    for rel in ours.iter().filter(|r| r.ends_with(".trace")) {
        let trace = RoundTrace::load(original.join(rel))?;
        let again = aggregate(&trace.uploads, &trace.before, cfg.train.aggregation)?;
        if again != trace.after {
            mismatches.push(format!("{rel} (aggregate)"));
        }
    }
    Ok(mismatches)
}

/// Files under `root` that count as results: everything except the log, the
/// failure marker and the replay target.
fn artifact_files(root: &Path, exclude: &Path) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path == exclude && root != exclude {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                if rel != LOG && rel != FAILURE_MARKER && rel != SNAPSHOT {
                    out.push(rel);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}
