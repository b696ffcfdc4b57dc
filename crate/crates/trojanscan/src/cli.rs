//! Experiment orchestration.
//!
//! Subcommands: `gen-zoo`, `train-meta`, `scan`, `eval`, `arms-race`. Every
//! command reads one JSON config (all fields defaulted), with dotted-path
//! flags like `--meta.k=10` overriding individual fields and the
//! `TROJANSCAN_SEED` environment variable overriding the master seed.
//!
//! Exit codes: 0 success, 1 when per-item failures occurred (scan rows),
//! 2 for usage or configuration errors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::arms_race::{evaluate_arms_race, ArmsRaceConfig, ArmsRaceOutcome};
use crate::artifacts::{
    detection_csv, load_zoo, read_meta_state, write_meta_state, write_text, write_zoo,
};
use crate::config::{load_config, parse_zoo_role, ExperimentConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mntd::{
    compute_auc, meta_train_jumbo, meta_train_oneclass, MetaMode, MetaState, ReportRow,
};
use crate::rng::derive_seed;
use crate::trojan::{generate_zoo, AttackKind, ShadowRecord, Task, ZooRole};

#[derive(Parser)]
#[command(
    name = "trojanscan",
    version,
    about = "Black-box Trojan detection for neural networks via shadow-model zoos and query-tuned meta-classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides io.output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on parallel workers; results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a shadow-model zoo: model files plus a JSONL manifest.
    GenZoo(CommonArgs),
    /// Train a meta-classifier from a zoo manifest.
    TrainMeta {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to the zoo manifest (manifest.jsonl).
        #[arg(long)]
        zoo: PathBuf,
        /// Override meta.mode: `jumbo` or `oneclass`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Score target model files with a trained meta state.
    Scan {
        /// Path to the meta-state JSON.
        #[arg(long)]
        meta: PathBuf,
        /// Write the report CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional zoo manifest supplying ground-truth labels.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Target model files.
        targets: Vec<PathBuf>,
    },
    /// Full detection evaluation: zoos, three meta-classifiers, target sets
    /// per attack kind, the arms race, and one AUC table.
    Eval(CommonArgs),
    /// Adaptive attacker versus plain and randomized detection.
    ArmsRace(CommonArgs),
}

/// Dotted-path config overrides collected from the raw arguments.
type Overrides = Vec<(String, String)>;

/// Pull `--a.b=v` (dotted) and `--set key=v` tokens out of the raw args;
/// everything else goes to clap.
fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--set" {
            let kv = iter
                .next()
                .ok_or_else(|| Error::invalid("--set expects key=value"))?;
            overrides.push(split_kv(&kv)?);
            continue;
        }
        if let Some(body) = arg.strip_prefix("--") {
            if let Some(eq) = body.find('=') {
                let key = &body[..eq];
                if key.contains('.')
                    && key
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
                {
                    overrides.push((key.to_string(), body[eq + 1..].to_string()));
                    continue;
                }
            }
        }
        rest.push(arg);
    }
    Ok((rest, overrides))
}

fn split_kv(kv: &str) -> Result<(String, String)> {
    match kv.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::invalid(format!("expected key=value, got '{kv}'"))),
    }
}

/// Entry point shared by the binary and tests. Returns the process exit
/// code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let args: Vec<String> = args.into_iter().collect();
    let (rest, overrides) = match extract_overrides(args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error's own display
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let env_seed = std::env::var("TROJANSCAN_SEED").ok();
    match dispatch(cli.command, &overrides, env_seed.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(
    command: Command,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<i32> {
    match command {
        Command::GenZoo(common) => {
            let cfg = load_config(common.config.as_deref(), overrides, env_seed)?;
            let out = output_dir(&common, &cfg);
            with_jobs(common.jobs, || cmd_gen_zoo(&cfg, &out))
        }
        Command::TrainMeta { common, zoo, mode } => {
            let cfg = load_config(common.config.as_deref(), overrides, env_seed)?;
            let out = output_dir(&common, &cfg);
            with_jobs(common.jobs, || {
                cmd_train_meta(&cfg, &zoo, mode.as_deref(), &out)
            })
        }
        Command::Scan {
            meta,
            out,
            manifest,
            targets,
        } => cmd_scan(&meta, &targets, manifest.as_deref(), out.as_deref()),
        Command::Eval(common) => {
            let cfg = load_config(common.config.as_deref(), overrides, env_seed)?;
            let out = output_dir(&common, &cfg);
            with_jobs(common.jobs, || cmd_eval(&cfg, &out))
        }
        Command::ArmsRace(common) => {
            let cfg = load_config(common.config.as_deref(), overrides, env_seed)?;
            let out = output_dir(&common, &cfg);
            with_jobs(common.jobs, || cmd_arms_race(&cfg, &out))
        }
    }
}

fn output_dir(common: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.io.output_dir))
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match jobs {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
            pool.install(f)
        }
        _ => f(),
    }
}

/// The experiment's fixed derivations from the master seed. Zoo and target
/// streams are disjoint by label, and a smaller zoo is always a prefix of a
/// larger one under the same seed.
struct Experiment {
    task: Task,
    defender_data: Dataset,
    attacker_data: Dataset,
}

impl Experiment {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let master = cfg.master_seed;
        let task = Task::new(
            derive_seed(master, "task"),
            cfg.task.d_x,
            cfg.task.c,
            cfg.task.noise_sigma,
        )?;
        let defender_data =
            task.sample(derive_seed(master, "data/defender"), cfg.task.n_defender)?;
        let attacker_data =
            task.sample(derive_seed(master, "data/attacker"), cfg.task.n_attacker)?;
        Ok(Experiment {
            task,
            defender_data,
            attacker_data,
        })
    }

    fn zoo_stream_label(role: ZooRole) -> String {
        match role {
            ZooRole::Defender => "zoo/train".to_string(),
            ZooRole::Attacker(kind) => format!("targets/{}", kind.as_str()),
        }
    }

    /// Shadow zoos train on the defender's small clean set; target zoos on
    /// the attacker's dataset.
    fn training_data(&self, role: ZooRole) -> &Dataset {
        match role {
            ZooRole::Defender => &self.defender_data,
            ZooRole::Attacker(_) => &self.attacker_data,
        }
    }

    fn generate(
        &self,
        cfg: &ExperimentConfig,
        role: ZooRole,
        benign: usize,
        trojan: usize,
        label: &str,
    ) -> Result<Vec<ShadowRecord>> {
        generate_zoo(
            &self.task,
            self.training_data(role),
            benign,
            trojan,
            role,
            derive_seed(cfg.master_seed, label),
            &cfg.training.to_train_config(0),
        )
    }
}

fn cmd_gen_zoo(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let role = parse_zoo_role(&cfg.zoo.role)?;
    let exp = Experiment::build(cfg)?;
    let label = Experiment::zoo_stream_label(role);
    let zoo = exp.generate(
        cfg,
        role,
        cfg.zoo.count_benign,
        cfg.zoo.count_trojan,
        &label,
    )?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let manifest = write_zoo(out, &zoo)?;
    println!(
        "wrote {} models ({} benign, {} trojan) and {}",
        zoo.len(),
        cfg.zoo.count_benign,
        cfg.zoo.count_trojan,
        manifest.display()
    );
    Ok(0)
}

fn cmd_train_meta(
    cfg: &ExperimentConfig,
    zoo_path: &Path,
    mode_flag: Option<&str>,
    out: &Path,
) -> Result<i32> {
    let zoo = load_zoo(zoo_path)?;
    let mode = match mode_flag {
        Some(text) => MetaMode::parse(text)?,
        None => cfg.meta.mode()?,
    };
    let lr = cfg.training.learning_rate;
    let (state, trace): (MetaState, Vec<f64>) = match mode {
        MetaMode::Jumbo => {
            let stream = if cfg.meta.tune_queries {
                "meta/tuned"
            } else {
                "meta/untuned"
            };
            let mcfg = cfg
                .meta
                .to_meta_train_config(lr, derive_seed(cfg.master_seed, stream));
            let out = meta_train_jumbo(&zoo, cfg.meta.k, cfg.meta.tune_queries, &mcfg)?;
            (MetaState::jumbo(out.meta, out.queries), out.trace)
        }
        MetaMode::OneClass => {
            let benign: Vec<ShadowRecord> = zoo.into_iter().filter(|r| !r.label).collect();
            let mcfg = cfg
                .meta
                .to_meta_train_config(lr, derive_seed(cfg.master_seed, "meta/oneclass"));
            let out = meta_train_oneclass(&benign, cfg.meta.k, cfg.meta.nu, &mcfg)?;
            // The trace carries the pre-training objective up front; the CSV
            // contract is one row per epoch.
            let trace = out.trace[1..].to_vec();
            (MetaState::one_class(out.state, out.queries), trace)
        }
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let state_path = out.join("meta_state.json");
    write_meta_state(&state_path, &state, cfg.master_seed)?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    write_text(&out.join("trace.csv"), &csv)?;
    println!(
        "wrote {} (mode {}, k={} on {}-feature inputs)",
        state_path.display(),
        state.mode.as_str(),
        state.k(),
        state.meta.feat_len()
    );
    Ok(0)
}

fn cmd_scan(
    meta_path: &Path,
    targets: &[PathBuf],
    manifest: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32> {
    let state = read_meta_state(meta_path)?;
    // Resolve the target list: explicit files, plus manifest entries with
    // their ground-truth labels.
    let mut jobs: Vec<(PathBuf, Option<bool>)> =
        targets.iter().map(|p| (p.clone(), None)).collect();
    if let Some(manifest) = manifest {
        for entry in crate::artifacts::read_manifest(manifest)? {
            jobs.push((entry.path, Some(entry.label)));
        }
    }

    // File IO up front; scoring is timed separately.
    let mut rows: Vec<(ReportRow, bool)> = Vec::with_capacity(jobs.len());
    let mut loaded = Vec::new();
    for (path, label) in &jobs {
        match crate::artifacts::read_model(path) {
            Ok(net) => loaded.push((path.display().to_string(), *label, Some(net))),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                loaded.push((path.display().to_string(), *label, None));
            }
        }
    }
    let started = Instant::now();
    let mut errored = false;
    for (name, label, net) in &loaded {
        match net {
            Some(net) => match state.score_target(net) {
                Ok(score) => rows.push((
                    ReportRow {
                        name: name.clone(),
                        label: *label,
                        score,
                    },
                    false,
                )),
                Err(e) => {
                    eprintln!("{name}: {e}");
                    errored = true;
                    rows.push((
                        ReportRow {
                            name: name.clone(),
                            label: *label,
                            score: f64::NAN,
                        },
                        true,
                    ));
                }
            },
            None => {
                errored = true;
                rows.push((
                    ReportRow {
                        name: name.clone(),
                        label: *label,
                        score: f64::NAN,
                    },
                    true,
                ));
            }
        }
    }
    let scored = rows.iter().filter(|(_, e)| !e).count();
    eprintln!(
        "scored {scored} targets in {:.3} ms (file IO excluded)",
        started.elapsed().as_secs_f64() * 1e3
    );
    let csv = detection_csv(&rows);
    match out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(if errored { 1 } else { 0 })
}

struct Stage;

impl Stage {
    fn wrap<T>(name: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::invalid(format!("stage {name}: {e}")))
    }
}

fn detection_rows(
    state: &MetaState,
    trojan: &[ShadowRecord],
    benign: &[ShadowRecord],
) -> Result<f64> {
    let pos: Result<Vec<f64>> = trojan
        .iter()
        .map(|r| state.score_target(&r.model))
        .collect();
    let neg: Result<Vec<f64>> = benign
        .iter()
        .map(|r| state.score_target(&r.model))
        .collect();
    compute_auc(&pos?, &neg?)
}

fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let master = cfg.master_seed;
    let exp = Stage::wrap("task", Experiment::build(cfg))?;
    let lr = cfg.training.learning_rate;

    let zoo = Stage::wrap(
        "zoo",
        exp.generate(
            cfg,
            ZooRole::Defender,
            cfg.zoo.count_benign,
            cfg.zoo.count_trojan,
            "zoo/train",
        ),
    )?;
    let _validation = Stage::wrap(
        "validation-zoo",
        exp.generate(
            cfg,
            ZooRole::Defender,
            cfg.zoo.validation_benign,
            cfg.zoo.validation_trojan,
            "zoo/val",
        ),
    )?;

    let tuned = Stage::wrap(
        "meta-tuned",
        meta_train_jumbo(
            &zoo,
            cfg.meta.k,
            true,
            &cfg.meta
                .to_meta_train_config(lr, derive_seed(master, "meta/tuned")),
        ),
    )?;
    let tuned = MetaState::jumbo(tuned.meta, tuned.queries);
    let untuned = Stage::wrap(
        "meta-untuned",
        meta_train_jumbo(
            &zoo,
            cfg.meta.k,
            false,
            &cfg.meta
                .to_meta_train_config(lr, derive_seed(master, "meta/untuned")),
        ),
    )?;
    let untuned = MetaState::jumbo(untuned.meta, untuned.queries);
    let benign_zoo: Vec<ShadowRecord> = zoo.iter().filter(|r| !r.label).cloned().collect();
    let oneclass = Stage::wrap(
        "meta-oneclass",
        meta_train_oneclass(
            &benign_zoo,
            cfg.meta.k,
            cfg.meta.nu,
            &cfg.meta
                .to_meta_train_config(lr, derive_seed(master, "meta/oneclass")),
        ),
    )?;
    let oneclass = MetaState::one_class(oneclass.state, oneclass.queries);

    // Benign targets train on the attacker's dataset, like the Trojaned
    // targets they are compared against.
    let n_targets = cfg.arms_race.target_count;
    let benign_targets = Stage::wrap(
        "targets-benign",
        generate_zoo(
            &exp.task,
            &exp.attacker_data,
            n_targets,
            0,
            ZooRole::Defender,
            derive_seed(master, "targets/benign"),
            &cfg.training.to_train_config(0),
        ),
    )?;

    let mut csv = String::from("detector,attack,auc,master_seed\n");
    for kind in [
        AttackKind::Modification,
        AttackKind::Blending,
        AttackKind::AllToAll,
    ] {
        let trojan_targets = Stage::wrap(
            &format!("targets-{}", kind.as_str()),
            exp.generate(
                cfg,
                ZooRole::Attacker(kind),
                0,
                n_targets,
                &format!("targets/{}", kind.as_str()),
            ),
        )?;
        for (name, state) in [
            ("jumbo-tuned", &tuned),
            ("jumbo-untuned", &untuned),
            ("oneclass", &oneclass),
        ] {
            let auc = Stage::wrap(
                &format!("score-{}-{}", name, kind.as_str()),
                detection_rows(state, &trojan_targets, &benign_targets),
            )?;
            csv.push_str(&format!("{name},{},{auc},{master}\n", kind.as_str()));
        }
    }

    let arms = Stage::wrap("arms-race", run_arms_race(cfg, &exp, &zoo))?;
    for (defense, attack, auc) in arms_rows(&arms) {
        csv.push_str(&format!("{defense},{attack},{auc},{master}\n"));
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_text(&out.join("eval.csv"), &csv)?;
    write_meta_state(&out.join("meta_tuned.json"), &tuned, master)?;
    write_meta_state(&out.join("meta_untuned.json"), &untuned, master)?;
    write_meta_state(&out.join("meta_oneclass.json"), &oneclass, master)?;
    println!("wrote {}", out.join("eval.csv").display());
    Ok(0)
}

fn run_arms_race(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    zoo: &[ShadowRecord],
) -> Result<ArmsRaceOutcome> {
    let arms_cfg = ArmsRaceConfig {
        defender_seed: cfg.defender_seed(),
        attacker_seed: cfg.attacker_seed(),
        lambda: cfg.arms_race.lambda,
        target_count: cfg.arms_race.target_count,
        k: cfg.meta.k,
        target_train: cfg.training.to_train_config(0),
        meta: cfg.meta.to_meta_train_config(
            cfg.training.learning_rate,
            derive_seed(cfg.master_seed, "meta/tuned"),
        ),
    };
    evaluate_arms_race(&exp.task, &exp.attacker_data, zoo, &arms_cfg)
}

fn arms_rows(outcome: &ArmsRaceOutcome) -> [(&'static str, &'static str, f64); 4] {
    [
        ("plain", "none", outcome.plain_clean.auc),
        ("plain", "adaptive", outcome.plain_under_attack.auc),
        ("robust", "none", outcome.robust_clean.auc),
        ("robust", "adaptive", outcome.robust_under_attack.auc),
    ]
}

fn cmd_arms_race(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let exp = Experiment::build(cfg)?;
    let zoo = exp.generate(
        cfg,
        ZooRole::Defender,
        cfg.zoo.count_benign,
        cfg.zoo.count_trojan,
        "zoo/train",
    )?;
    let outcome = run_arms_race(cfg, &exp, &zoo)?;
    let mut csv = String::from("defense,attack,auc\n");
    for (defense, attack, auc) in arms_rows(&outcome) {
        csv.push_str(&format!("{defense},{attack},{auc}\n"));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_text(&out.join("arms_race.csv"), &csv)?;
    println!(
        "wrote {} (accuracy drop {:.4}, asr drop {:.4})",
        out.join("arms_race.csv").display(),
        outcome.accuracy_drop,
        outcome.asr_drop
    );
    Ok(0)
}
