//! `hdmi` command-line tool. Machine-readable results go to stdout as
//! `key<TAB>value` lines; progress and diagnostics go to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hdmi_core::eval::{cluster_nmi, stratified_split};
use hdmi_core::fusion::{embed_multiplex, normalize_all};
use hdmi_core::gradcheck::{standard_suite, NamedCheck, SUITE_TOLERANCE};
use hdmi_core::io::{
    load_multiplex, read_embedding, read_index_list, read_labels, read_parameters, save_multiplex, write_embedding,
    write_matrix, write_parameters,
};
use hdmi_core::mi_oracle::{decomposition_sweep, interaction_information, xor_joint};
use hdmi_core::model::encode;
use hdmi_core::synthetic::{default_splits, TRAIN_FRACTION};
use hdmi_core::{
    classify, generate, normalize_adjacency, run_ablation, sim_at_k, HdiParameters, HdmiParameters, MultiplexNetwork,
    SyntheticSpec, TrainReport, TrainingConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MI_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "hdmi", version, about = "High-order deep multiplex infomax embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset manifest and write a run directory.
    Train(TrainArgs),
    /// Recompute embeddings from a saved parameter snapshot.
    Embed(EmbedArgs),
    /// Score an embedding file against labels and splits.
    Eval(EvalArgs),
    /// Run the synthetic ablation benchmark.
    Bench(BenchArgs),
    /// Check the information decomposition identity on random joints.
    Micheck(MicheckArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Run micheck and gradcheck together.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (`key=value`); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for `max_epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Shorthand for `embedding_dim`.
    #[arg(long)]
    dim: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainingConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainingConfig::load(p)?,
            None => TrainingConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.max_epochs = e;
        }
        if let Some(d) = self.dim {
            cfg.embedding_dim = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Run directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Train the single-layer model on this layer index only.
    #[arg(long)]
    layer: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    data: PathBuf,
    /// Parameter snapshot written by `train`.
    #[arg(long)]
    params: PathBuf,
    /// Config used for training; defaults to `config.txt` next to the snapshot.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer index for a single-layer snapshot.
    #[arg(long)]
    layer: Option<usize>,
    /// Output embedding file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the N x R attention matrix here (multiplex snapshots only).
    #[arg(long)]
    attention: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    All,
    Classify,
    Cluster,
    Similarity,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Label file; may instead come from `--data`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Manifest supplying labels and splits.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    task: Task,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Drives k-means and, when no split files exist, the stratified split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    communities: usize,
    /// Comma-separated per-layer informativeness; its length sets the layer count.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5")]
    informativeness: Vec<f64>,
    #[arg(long, default_value_t = 0.10)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 32)]
    attribute_dim: usize,
    /// Write the network generated with the first seed to this directory.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Only write `--dump`; skip training.
    #[arg(long, requires = "dump")]
    dump_only: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct MicheckArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    max_alphabet: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Scales every analytic gradient by 1.01; the checks must then fail.
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    mi: MicheckArgs,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key}\t{value}");
}

fn status(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Micheck(a) => cmd_micheck(&a),
        Command::Gradcheck(a) => cmd_gradcheck(a.seed, a.dim, a.corrupt_backward),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("hdmi: one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("hdmi: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_trace(report: &TrainReport) {
    for rec in &report.trace {
        kv(&format!("loss.{}", rec.epoch), rec.total);
    }
    kv("epochs_run", report.trace.len());
    match report.best_epoch {
        Some(e) => {
            kv("best_epoch", e);
            kv("best_loss", report.trace[e].total);
        }
        None => kv("best_epoch", "none"),
    }
    kv("stopped_early", report.stopped_early);
}

fn cmd_train(a: TrainArgs) -> Result<bool> {
    let cfg = a.config.resolve()?;
    let net = load_multiplex(&a.data)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), &cfg.to_text())?;
    eprintln!(
        "training on {} nodes, {} layers, d = {}",
        net.n_nodes(),
        net.n_layers(),
        cfg.embedding_dim
    );

    let report = match a.layer {
        Some(r) => {
            let layer = net
                .layer(r)
                .with_context(|| format!("--layer {r} out of range (dataset has {} layers)", net.n_layers()))?;
            let run = hdmi_core::train_hdi(layer, net.attributes(), &cfg)?;
            write_parameters(
                &a.out.join("params.txt"),
                &HdiParameters::names(),
                &run.params.to_tensors(),
            )?;
            write_embedding(&a.out.join("embeddings.txt"), &run.embedding)?;
            kv("model", "single-layer");
            kv("layer", layer.relation_name());
            run.report
        }
        None => {
            let run = hdmi_core::train_hdmi(&net, &cfg)?;
            write_parameters(
                &a.out.join("params.txt"),
                &HdmiParameters::names(net.n_layers()),
                &run.params.to_tensors(),
            )?;
            write_embedding(&a.out.join("embeddings.txt"), &run.fused)?;
            write_matrix(&a.out.join("attention.txt"), run.attention.as_tensor())?;
            for (r, h) in run.per_layer.iter().enumerate() {
                write_embedding(&a.out.join(format!("embeddings.layer{r}.txt")), h)?;
            }
            kv("model", "multiplex");
            kv("layers", net.n_layers());
            run.report
        }
    };
    write_file(&a.out.join("trace.tsv"), &report.trace_tsv())?;
    kv("nodes", net.n_nodes());
    kv("dim", cfg.embedding_dim);
    print_trace(&report);
    kv("out", a.out.display());
    eprintln!("done in {:.1}s", report.duration.as_secs_f64());
    Ok(true)
}

fn cmd_embed(a: EmbedArgs) -> Result<bool> {
    let config_path = a
        .config
        .clone()
        .or_else(|| a.params.parent().map(|p| p.join("config.txt")).filter(|p| p.exists()));
    let cfg = match &config_path {
        Some(p) => TrainingConfig::load(p)?,
        None => TrainingConfig::default(),
    };
    let net = load_multiplex(&a.data)?;
    let blocks = read_parameters(&a.params)?;
    let names: Vec<String> = blocks.iter().map(|(n, _)| n.clone()).collect();
    let tensors: Vec<_> = blocks.into_iter().map(|(_, t)| t).collect();

    if names == HdiParameters::names() {
        if a.attention.is_some() {
            bail!(
                "--attention needs a multiplex snapshot; {} is single-layer",
                a.params.display()
            );
        }
        let r = a.layer.context("single-layer snapshot: pass --layer")?;
        let layer = net
            .layer(r)
            .with_context(|| format!("--layer {r} out of range (dataset has {} layers)", net.n_layers()))?;
        let params = HdiParameters::from_tensors(&tensors)?;
        let adj = normalize_adjacency(layer, cfg.self_weight)?;
        let h = encode(&adj, net.attributes(), &params.encoder)?;
        write_embedding(&a.out, &h)?;
        kv("model", "single-layer");
        kv("nodes", h.n_nodes());
        kv("dim", h.dim());
    } else if names == HdmiParameters::names(net.n_layers()) {
        let params = HdmiParameters::from_tensors(net.n_layers(), &tensors)?;
        let emb = embed_multiplex(&normalize_all(&net, cfg.self_weight)?, net.attributes(), &params)?;
        write_embedding(&a.out, &emb.fused)?;
        if let Some(p) = &a.attention {
            write_matrix(p, emb.attention.as_tensor())?;
            kv("attention", p.display());
        }
        kv("model", "multiplex");
        kv("nodes", emb.fused.n_nodes());
        kv("dim", emb.fused.dim());
    } else {
        bail!(
            "{} does not match a single-layer snapshot or a {}-layer multiplex snapshot",
            a.params.display(),
            net.n_layers()
        );
    }
    kv("out", a.out.display());
    Ok(true)
}

struct EvalInputs {
    labels: Vec<usize>,
    train: Option<Vec<usize>>,
    test: Option<Vec<usize>>,
}

fn eval_inputs(a: &EvalArgs, n: usize) -> Result<EvalInputs> {
    let net: Option<MultiplexNetwork> = a.data.as_deref().map(load_multiplex).transpose()?;
    let labels = match (&a.labels, &net) {
        (Some(p), _) => read_labels(p, n)?,
        (None, Some(net)) => net.labels().context("manifest has no labels")?.to_vec(),
        (None, None) => bail!("pass --labels or --data"),
    };
    let from_net = |pick: fn(&hdmi_core::Splits) -> &Vec<usize>| {
        net.as_ref()
            .and_then(|m| m.splits())
            .map(pick)
            .filter(|v| !v.is_empty())
            .cloned()
    };
    let train = match &a.train {
        Some(p) => Some(read_index_list(p, n)?),
        None => from_net(|s| &s.train),
    };
    let test = match &a.test {
        Some(p) => Some(read_index_list(p, n)?),
        None => from_net(|s| &s.test),
    };
    Ok(EvalInputs { labels, train, test })
}

fn cmd_eval(a: EvalArgs) -> Result<bool> {
    let h = read_embedding(&a.embeddings)?;
    let n = h.n_nodes();
    let inputs = eval_inputs(&a, n)?;
    let labels = &inputs.labels;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let wants = |t: Task| a.task == Task::All || a.task == t;

    if wants(Task::Classify) {
        let (train, test, source) = match (inputs.train, inputs.test) {
            (Some(tr), Some(te)) => (tr, te, "files"),
            (None, None) if a.task == Task::All => {
                let s = stratified_split(labels, TRAIN_FRACTION, a.seed)?;
                (s.train, s.test, "stratified")
            }
            _ => bail!("classification needs both --train and --test split files"),
        };
        let f1 = classify(&h, labels, &train, &test)?;
        kv("macro_f1", f1.macro_f1);
        kv("micro_f1", f1.micro_f1);
        kv("train_size", train.len());
        kv("test_size", test.len());
        kv("split", source);
    }
    if wants(Task::Cluster) {
        kv("nmi", cluster_nmi(&h, labels, num_classes, a.seed)?);
    }
    if wants(Task::Similarity) {
        let sim = sim_at_k(&h, labels, a.k)?;
        kv(&format!("sim@{}", a.k), sim.value);
        kv("sim_skipped", sim.skipped);
    }
    Ok(true)
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let spec = SyntheticSpec {
        nodes: a.nodes,
        communities: a.communities,
        layers: a.informativeness.len(),
        p_in: a.p_in,
        p_out: a.p_out,
        attribute_dim: a.attribute_dim,
        layer_informativeness: a.informativeness.clone(),
        seed: a.seeds.first().copied().unwrap_or(0),
        ..SyntheticSpec::default()
    };
    spec.validate()?;
    if let Some(dir) = &a.dump {
        let net = generate(&spec)?;
        let splits = default_splits(&net, spec.seed)?;
        let net = MultiplexNetwork::new(
            net.layers().to_vec(),
            net.attributes().clone(),
            net.labels().map(<[usize]>::to_vec),
            splits,
        )?;
        let manifest = save_multiplex(&net, dir)?;
        eprintln!("wrote dataset for seed {}", spec.seed);
        kv("manifest", manifest.display());
    }
    if a.dump_only {
        return Ok(true);
    }
    let cfg = a.config.resolve()?;
    let start = Instant::now();
    let table = run_ablation(&spec, &cfg, &a.seeds)?;
    print!("{}", table.to_tsv());
    eprintln!(
        "ablation over {} seeds took {:.1}s",
        a.seeds.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(true)
}

fn cmd_micheck(a: &MicheckArgs) -> Result<bool> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let sweep = decomposition_sweep(a.count, a.max_alphabet, &mut rng)?;
    let xor = interaction_information(&xor_joint())?;
    let xor_error = (xor + std::f64::consts::LN_2).abs();
    let ok = sweep.max_residual < MI_TOLERANCE && xor_error < MI_TOLERANCE;
    kv("mi.joints", sweep.joints);
    kv("mi.max_residual", format!("{:e}", sweep.max_residual));
    kv("mi.xor_interaction", xor);
    kv("mi.xor_error", format!("{xor_error:e}"));
    kv("mi.runtime_s", start.elapsed().as_secs_f64());
    kv("mi.status", status(ok));
    Ok(ok)
}

fn report_gradients(checks: &[NamedCheck]) -> bool {
    let mut ok = true;
    for c in checks {
        kv(&format!("grad.{}", c.name), format!("{:e}", c.report.max_rel_error));
        ok &= c.passed();
    }
    kv("grad.tolerance", format!("{SUITE_TOLERANCE:e}"));
    kv("grad.status", status(ok));
    ok
}

fn cmd_gradcheck(seed: u64, dim: usize, corrupt: bool) -> Result<bool> {
    if corrupt {
        eprintln!("corrupting analytic gradients by 1%");
    }
    let checks = standard_suite(seed, dim, corrupt.then_some(1.01))?;
    Ok(report_gradients(&checks))
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let mi = cmd_micheck(&a.mi)?;
    let grad = cmd_gradcheck(a.mi.seed, a.dim, a.corrupt_backward)?;
    kv("status", status(mi && grad));
    Ok(mi && grad)
}
