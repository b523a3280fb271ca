use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use factgrid::checkpoint::{load_checkpoint, save_checkpoint};
use factgrid::data::{generate_synthetic, read_feature_file, write_feature_file, Dataset, Example, Pair, PairVocab, Split, SynthConfig};
use factgrid::eval::{accuracy_gap_report, retrieve, topk_accuracy, CandidatePolicy, EvalReport, DEFAULT_KS};
use factgrid::heads::{check_model_gradients, Model, ModelKind, ModelSpec};
use factgrid::nn::{GradCheckConfig, Matrix, Parameterized};
use factgrid::optim::{train_epochs, SgdConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{EvalArgs, GradcheckArgs, RetrieveArgs, SynthArgs, TrainArgs};
use crate::config::{ConfigFile, Widths};
use crate::error::{CliError, CliResult};

pub const DATA_FILE: &str = "data.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const EVAL_SEEN_FILE: &str = "eval_seen.csv";
pub const EVAL_UNSEEN_FILE: &str = "eval_unseen.csv";
pub const RETRIEVE_FILE: &str = "retrieve.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.txt";

pub const DEFAULT_OUT: &str = "factgrid-out";

fn out_dir(flag: Option<PathBuf>, cfg: &ConfigFile) -> CliResult<PathBuf> {
    let dir: PathBuf = cfg.pick(flag, "out", PathBuf::from(DEFAULT_OUT))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    read_feature_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn require_path(flag: Option<PathBuf>, cfg: &ConfigFile, key: &str) -> CliResult<PathBuf> {
    let p: Option<PathBuf> = cfg.pick_opt(flag, key)?;
    let p = p.ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))?;
    if !p.exists() {
        return Err(CliError::Usage(format!("{} does not exist", p.display())));
    }
    Ok(p)
}

const SYNTH_KEYS: &[&str] = &[
    "seed",
    "out",
    "adj_count",
    "noun_count",
    "latent_dim",
    "feature_dim",
    "examples_per_pair",
    "holdout_fraction",
    "label_noise",
    "noise_scale",
    "uploaders",
    "test_fraction",
];

pub fn synth(args: SynthArgs, console: &mut dyn Write) -> CliResult<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    cfg.check_keys(SYNTH_KEYS)?;
    let d = SynthConfig::default();
    let sc = SynthConfig {
        adj_count: cfg.pick(args.adj_count, "adj_count", d.adj_count)?,
        noun_count: cfg.pick(args.noun_count, "noun_count", d.noun_count)?,
        latent_dim: cfg.pick(args.latent_dim, "latent_dim", d.latent_dim)?,
        feature_dim: cfg.pick(args.feature_dim, "feature_dim", d.feature_dim)?,
        examples_per_pair: cfg.pick(args.examples_per_pair, "examples_per_pair", d.examples_per_pair)?,
        holdout_fraction: cfg.pick(args.holdout_fraction, "holdout_fraction", d.holdout_fraction)?,
        label_noise: cfg.pick(args.label_noise, "label_noise", d.label_noise)?,
        noise_scale: cfg.pick(args.noise_scale, "noise_scale", d.noise_scale)?,
        uploaders: cfg.pick(args.uploaders, "uploaders", d.uploaders)?,
        test_fraction: cfg.pick(args.test_fraction, "test_fraction", d.test_fraction)?,
        seed: cfg.pick(args.common.seed, "seed", d.seed)?,
    };
    let dir = out_dir(args.common.out, &cfg)?;
    let data = generate_synthetic(&sc)?;
    let path = dir.join(DATA_FILE);
    write_feature_file(&path, &data.dataset).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let ds = &data.dataset;
    writeln!(
        console,
        "grid {}x{}: {} seen pairs, {} held-out (unseen) cells",
        ds.vocab.adj_count(),
        ds.vocab.noun_count(),
        ds.vocab.seen_pairs().len(),
        ds.vocab.unseen_pairs().len()
    )?;
    writeln!(
        console,
        "examples: {} train, {} test, {} unseen",
        ds.count(Split::Train),
        ds.count(Split::Test),
        ds.count(Split::Unseen)
    )?;
    for w in &data.split_warnings {
        writeln!(console, "warning: {w}")?;
    }
    writeln!(console, "wrote {}", path.display())?;
    Ok(())
}

const TRAIN_KEYS: &[&str] = &[
    "seed",
    "out",
    "data",
    "model",
    "latent_dim",
    "trunk_widths",
    "branch_width",
    "epochs",
    "batch_size",
    "base_lr",
    "momentum",
    "weight_decay",
    "poly_power",
    "trunk_lr_mult",
    "head_lr_mult",
];

pub const DEFAULT_TRUNK: &str = "32,32";
pub const DEFAULT_BRANCH_WIDTH: usize = 32;
pub const DEFAULT_EPOCHS: usize = 5;

/// Final accuracy on the training split with seen candidates, as the
/// trainer records it.
fn train_accuracy(model: &Model, ds: &Dataset, train: &[&Example]) -> CliResult<EvalReport> {
    Ok(topk_accuracy(model, &ds.vocab, ds.dim, train, ds.vocab.seen_pairs(), &DEFAULT_KS, CandidatePolicy::Seen)?)
}

fn summary_line(r: &EvalReport) -> String {
    let mut s = String::new();
    for (k, m) in r.ks.iter().zip(&r.mean) {
        let _ = write!(s, " top{k}={m}");
    }
    s
}

pub fn train(args: TrainArgs, console: &mut dyn Write) -> CliResult<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    cfg.check_keys(TRAIN_KEYS)?;
    let data_path = require_path(args.data, &cfg, "data")?;
    let kind: ModelKind = cfg.pick(args.model, "model", ModelKind::Fact)?;
    let widths: Widths = cfg.pick(args.trunk_widths, "trunk_widths", DEFAULT_TRUNK.parse().expect("default widths"))?;
    let latent_dim = cfg.pick(args.latent_dim, "latent_dim", factgrid::heads::DEFAULT_LATENT_DIM)?;
    let branch_width = cfg.pick(args.branch_width, "branch_width", DEFAULT_BRANCH_WIDTH)?;
    let epochs = cfg.pick(args.epochs, "epochs", DEFAULT_EPOCHS)?;
    let seed: u64 = cfg.pick(args.common.seed, "seed", 0)?;
    let d = SgdConfig::default();
    let sgd = SgdConfig {
        base_lr: cfg.pick(args.base_lr, "base_lr", d.base_lr)?,
        momentum: cfg.pick(args.momentum, "momentum", d.momentum)?,
        weight_decay: cfg.pick(args.weight_decay, "weight_decay", d.weight_decay)?,
        batch_size: cfg.pick(args.batch_size, "batch_size", d.batch_size)?,
        poly_power: cfg.pick(args.poly_power, "poly_power", d.poly_power)?,
        trunk_lr_mult: cfg.pick(args.trunk_lr_mult, "trunk_lr_mult", d.trunk_lr_mult)?,
        head_lr_mult: cfg.pick(args.head_lr_mult, "head_lr_mult", d.head_lr_mult)?,
        ..d
    };
    sgd.validate()?;
    let dir = out_dir(args.common.out, &cfg)?;

    let ds = load_dataset(&data_path)?;
    let spec = ModelSpec {
        kind,
        in_dim: ds.dim,
        trunk_widths: widths.0.clone(),
        branch_width,
        latent_dim,
    };
    let mut model = Model::new(spec, &ds.vocab, seed)?;
    let train = ds.split(Split::Train);
    let log = train_epochs(&mut model, &train, &sgd, epochs, shuffle_seed(seed))?;

    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), seed.to_string());
    meta.insert("epochs".to_string(), epochs.to_string());
    meta.insert("batch_size".to_string(), sgd.batch_size.to_string());
    meta.insert("base_lr".to_string(), sgd.base_lr.to_string());
    let ck_path = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ck_path, &mut model, &ds.vocab, &meta)?;

    let mut text = String::from("iter,epoch,lr,batch_loss\n");
    text.push_str(&log.render());
    let means = log.epoch_means();
    for (e, m) in means.iter().enumerate() {
        let _ = writeln!(text, "#epoch {e} mean_loss={m}");
    }
    let acc = if train.is_empty() { None } else { Some(train_accuracy(&model, &ds, &train)?) };
    if let Some(a) = &acc {
        let _ = writeln!(text, "#final train{}", summary_line(a));
    }
    write_file(&dir.join(TRAIN_LOG_FILE), &text)?;

    writeln!(console, "model {} ({} parameters), {} training examples", model_name(&model), model.num_params(), train.len())?;
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        writeln!(console, "epoch mean loss: first {first:.4}, last {last:.4}")?;
    }
    if let Some(a) = &acc {
        writeln!(console, "final train accuracy:{}", summary_line(a))?;
    }
    writeln!(console, "wrote {}", ck_path.display())?;
    Ok(())
}

/// Mini-batch order seed, decorrelated from the initialization seed.
pub fn shuffle_seed(seed: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(seed).random()
}

fn model_name(m: &Model) -> String {
    factgrid::eval::PairScorer::name(m)
}

const EVAL_KEYS: &[&str] = &["seed", "out", "data", "checkpoint", "split", "policy", "compare", "gap_k"];

fn load_model(path: &Path, ds: &Dataset) -> CliResult<Model> {
    let ck = load_checkpoint(path, &ds.vocab).map_err(|e| match e {
        factgrid::Error::Incompatible(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    if ck.model.spec.in_dim != ds.dim {
        return Err(CliError::Data(format!(
            "{}: model expects {} features, data has {}",
            path.display(),
            ck.model.spec.in_dim,
            ds.dim
        )));
    }
    Ok(ck.model)
}

fn parse_split(s: &str) -> CliResult<Split> {
    s.parse().map_err(CliError::Usage)
}

pub fn eval(args: EvalArgs, console: &mut dyn Write) -> CliResult<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    cfg.check_keys(EVAL_KEYS)?;
    let data_path = require_path(args.data, &cfg, "data")?;
    let ck_path = require_path(args.checkpoint, &cfg, "checkpoint")?;
    let split = parse_split(&cfg.pick(args.split, "split", "test".to_string())?)?;
    if split == Split::Unseen {
        return Err(CliError::Usage("--split selects the seen-pair split (train or test); use --unseen for unseen pairs".into()));
    }
    let policy: CandidatePolicy = cfg.pick(args.policy, "policy", CandidatePolicy::SeenAndUnseen)?;
    if policy == CandidatePolicy::Seen {
        return Err(CliError::Usage("--policy applies to unseen evaluation: seen+unseen or unseen".into()));
    }
    let compare: Option<PathBuf> = cfg.pick_opt(args.compare, "compare")?;
    let gap_k: usize = cfg.pick(args.gap_k, "gap_k", 10)?;
    let dir = out_dir(args.common.out, &cfg)?;

    let ds = load_dataset(&data_path)?;
    let model = load_model(&ck_path, &ds)?;
    let do_unseen = args.unseen || (!args.seen_only && model.kind() != ModelKind::Flat);
    if args.unseen && model.kind() == ModelKind::Flat {
        return Err(CliError::Usage(
            "flat model cannot score unseen pairs: it only classifies pairs seen in training".into(),
        ));
    }
    if args.unseen && args.seen_only {
        return Err(CliError::Usage("--unseen and --seen-only are exclusive".into()));
    }

    let seen_examples = ds.split(split);
    let seen = topk_accuracy(&model, &ds.vocab, ds.dim, &seen_examples, ds.vocab.seen_pairs(), &DEFAULT_KS, CandidatePolicy::Seen)?;
    write_file(&dir.join(EVAL_SEEN_FILE), &seen.render())?;
    writeln!(console, "{} seen ({split}, {} pairs):{}", seen.model, seen.rows.len(), summary_line(&seen))?;

    let unseen_examples = ds.split(Split::Unseen);
    let unseen = if do_unseen {
        let r = topk_accuracy(&model, &ds.vocab, ds.dim, &unseen_examples, ds.vocab.unseen_pairs(), &DEFAULT_KS, policy)?;
        write_file(&dir.join(EVAL_UNSEEN_FILE), &r.render())?;
        writeln!(console, "{} unseen ({policy}, {} pairs):{}", r.model, r.rows.len(), summary_line(&r))?;
        Some(r)
    } else {
        writeln!(console, "unseen evaluation skipped ({} model)", model.kind())?;
        None
    };

    if let Some(other_path) = compare {
        let other = load_model(&other_path, &ds)?;
        let other_seen = topk_accuracy(&other, &ds.vocab, ds.dim, &seen_examples, ds.vocab.seen_pairs(), &DEFAULT_KS, CandidatePolicy::Seen)?;
        let gap = accuracy_gap_report(&seen, &other_seen, gap_k).map_err(|e| CliError::Usage(e.to_string()))?;
        write_file(&dir.join("gap_seen.csv"), &gap.render())?;
        writeln!(console, "gap report (seen, top{gap_k}) over {} pairs", gap.rows.len())?;
        if let Some(u) = &unseen {
            if other.kind() != ModelKind::Flat {
                let ou = topk_accuracy(&other, &ds.vocab, ds.dim, &unseen_examples, ds.vocab.unseen_pairs(), &DEFAULT_KS, policy)?;
                let gap = accuracy_gap_report(u, &ou, gap_k).map_err(|e| CliError::Usage(e.to_string()))?;
                write_file(&dir.join("gap_unseen.csv"), &gap.render())?;
                writeln!(console, "gap report (unseen, top{gap_k}) over {} pairs", gap.rows.len())?;
            }
        }
    }
    Ok(())
}

const RETRIEVE_KEYS: &[&str] = &["seed", "out", "data", "checkpoint", "adjective", "noun", "top_n", "split"];

/// Closest vocabulary entries to `word` by edit distance.
pub fn nearest_names(word: &str, names: &[String], n: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = names.iter().map(|c| (strsim::levenshtein(word, c), c)).collect();
    scored.sort();
    scored.into_iter().take(n).map(|(_, c)| c.clone()).collect()
}

fn lookup(kind: &str, word: &str, names: &[String], id: Option<usize>) -> CliResult<usize> {
    id.ok_or_else(|| {
        CliError::Usage(format!(
            "unknown {kind} {word:?}; nearest: {}",
            nearest_names(word, names, 3).join(", ")
        ))
    })
}

pub fn retrieve_cmd(args: RetrieveArgs, console: &mut dyn Write) -> CliResult<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    cfg.check_keys(RETRIEVE_KEYS)?;
    let data_path = require_path(args.data, &cfg, "data")?;
    let ck_path = require_path(args.checkpoint, &cfg, "checkpoint")?;
    let adjective: String = cfg
        .pick_opt(args.adjective, "adjective")?
        .ok_or_else(|| CliError::Usage("--adjective is required".into()))?;
    let noun: String = cfg
        .pick_opt(args.noun, "noun")?
        .ok_or_else(|| CliError::Usage("--noun is required".into()))?;
    let top_n: usize = cfg.pick(args.top_n, "top_n", 10)?;
    let split: String = cfg.pick(args.split, "split", "all".to_string())?;
    let dir = out_dir(args.common.out, &cfg)?;

    let ds = load_dataset(&data_path)?;
    let v: &PairVocab = &ds.vocab;
    let a = lookup("adjective", &adjective, v.adjectives(), v.adjective_id(&adjective))?;
    let n = lookup("noun", &noun, v.nouns(), v.noun_id(&noun))?;
    let model = load_model(&ck_path, &ds)?;
    let pool: Vec<&Example> = if split == "all" {
        ds.examples.iter().collect()
    } else {
        ds.split(parse_split(&split)?)
    };
    let query = Pair::new(a, n);
    let r = retrieve(&model, v, ds.dim, &pool, query, top_n)?;
    let status = if v.is_seen(query) {
        "seen"
    } else if v.is_unseen(query) {
        "unseen"
    } else {
        "novel"
    };
    let text = r.render(v);
    write_file(&dir.join(RETRIEVE_FILE), &text)?;
    writeln!(console, "query {} ({status}), {} of {} examples", v.pair_name(query), r.hits.len(), pool.len())?;
    for (i, h) in r.hits.iter().enumerate() {
        writeln!(console, "{:>4} {} {} {:.6}", i + 1, h.id, v.pair_name(h.pair), h.score)?;
    }
    Ok(())
}

const GRADCHECK_KEYS: &[&str] = &["seed", "out", "model", "latent_dim", "seeds", "tol"];

/// Small random problem for gradient checking.
fn gradcheck_problem(seed: u64) -> CliResult<(PairVocab, Matrix, Vec<Pair>)> {
    let (na, nn) = (4, 5);
    let unseen: BTreeSet<Pair> = [Pair::new(0, 3), Pair::new(2, 1), Pair::new(3, 4)].into();
    let seen: BTreeSet<Pair> = (0..na)
        .flat_map(|a| (0..nn).map(move |n| Pair::new(a, n)))
        .filter(|p| !unseen.contains(p))
        .collect();
    let vocab = PairVocab::new(
        (0..na).map(|i| format!("a{i}")).collect(),
        (0..nn).map(|i| format!("n{i}")).collect(),
        seen.clone(),
        unseen,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(6, 7, |_, _| rng.random_range(-1.0..1.0));
    let seen: Vec<Pair> = seen.into_iter().collect();
    let targets = (0..6).map(|_| seen[rng.random_range(0..seen.len())]).collect();
    Ok((vocab, x, targets))
}

pub fn gradcheck(args: GradcheckArgs, console: &mut dyn Write) -> CliResult<()> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    cfg.check_keys(GRADCHECK_KEYS)?;
    let which: String = cfg.pick(args.model, "model", "all".to_string())?;
    let kinds: Vec<ModelKind> = if which == "all" {
        ModelKind::ALL.to_vec()
    } else {
        vec![which.parse()?]
    };
    let latent_dim = cfg.pick(args.latent_dim, "latent_dim", factgrid::heads::DEFAULT_LATENT_DIM)?;
    let seeds: u64 = cfg.pick(args.seeds, "seeds", 3)?;
    let base_seed: u64 = cfg.pick(args.common.seed, "seed", 0)?;
    let tol: f64 = cfg.pick(args.tol, "tol", 1e-5)?;
    let out: Option<PathBuf> = cfg.pick_opt(args.common.out, "out")?;

    let mut text = String::from("model,seed,checked,max_rel_err,status\n");
    let mut failed = Vec::new();
    for kind in kinds {
        for s in base_seed..base_seed + seeds {
            let (vocab, x, targets) = gradcheck_problem(s)?;
            let spec = ModelSpec {
                kind,
                in_dim: x.cols(),
                trunk_widths: vec![8, 6],
                branch_width: 5,
                latent_dim,
            };
            let mut model = Model::new(spec, &vocab, s)?;
            model.set_corrupt_backward(args.corrupt_backward);
            let gcfg = GradCheckConfig {
                seed: s,
                ..GradCheckConfig::with_tol(tol)
            };
            let r = check_model_gradients(&mut model, &x, &targets, &gcfg)?;
            let status = if r.passed() { "pass" } else { "FAIL" };
            let name = model_name(&model);
            let _ = writeln!(text, "{name},{s},{},{:e},{status}", r.checked, r.max_rel_err);
            writeln!(console, "{name:<10} seed {s}: {} coords, max rel err {:.3e} {status}", r.checked, r.max_rel_err)?;
            if !r.passed() {
                failed.push(format!("{name} seed {s}"));
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        write_file(&dir.join(GRADCHECK_FILE), &text)?;
    }
    if failed.is_empty() {
        writeln!(console, "gradient check passed (tol {tol:e})")?;
        Ok(())
    } else {
        Err(CliError::Verification(format!("gradient check failed: {}", failed.join(", "))))
    }
}
