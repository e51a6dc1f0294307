use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cocodiff::checkpoint::Checkpoint;
use cocodiff::config::{run_training, RunConfig};
use cocodiff::dataset::{generate_dataset, load_dataset, save_dataset};
use cocodiff::eval::{
    evaluate, export_embeddings, per_class_delta, report_csv, run_sweep, sweep_csv, sweep_timing_csv, SweepAxis,
    SweepSpec,
};
use cocodiff::train::{write_metrics_csv, Flow, Hooks, Stage};
use cocodiff::{Error, Result};

#[derive(Parser)]
#[command(name = "cocodiff", version, about = "Text-guided feature diffusion for skeleton action recognition")]
struct Cli {
    /// Configuration file with `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sets every seed (data, init, shuffle, noise, evaluation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Override any configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic skeleton dataset.
    GenData(GenArgs),
    /// Run the training stages and write checkpoints and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of one configuration axis.
    Sweep(SweepArgs),
    /// Write encoder features (and optionally generated ones) as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Also evaluate the final checkpoint on this dataset.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Pick the best epoch by accuracy on this dataset.
    #[arg(long)]
    select_with: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "T")]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Classifier-only training, no diffusion.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    no_pretrain_gcn: bool,
    #[arg(long)]
    no_pretrain_diffusion: bool,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long, hide = true)]
    halt_after_epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report per-class accuracy differences against this checkpoint.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values; defaults to the standard grid of the axis.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation set; defaults to the training data.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    include_generated: bool,
    #[arg(long)]
    gen_steps: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn required<T>(v: Option<T>, flag: &str) -> std::result::Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing required flag --{flag}")))
}

fn resolve_config(cli: &Cli, extra: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::config("set", format!("expected KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn gen_data(cli: &Cli, a: &GenArgs) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(v) = a.classes {
        extra.push(("classes", v.to_string()));
    }
    if let Some(v) = a.per_class {
        extra.push(("per_class", v.to_string()));
    }
    if let Some(v) = a.frames {
        extra.push(("frames", v.to_string()));
    }
    if let Some(v) = a.jitter {
        extra.push(("jitter_std", v.to_string()));
    }
    let cfg = resolve_config(cli, &extra)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let out = required(a.out.as_ref(), "out")?;
    let ds = generate_dataset(&cfg.generation_spec())?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_dataset(&ds, out)?;
    println!("wrote {} sequences to {}", ds.len(), out.display());
    Ok(())
}

fn stage_file(stage: Stage) -> &'static str {
    match stage {
        Stage::Encoder => "encoder_pre.ckpt",
        Stage::Diffusion => "diffusion.ckpt",
        Stage::Joint | Stage::Baseline => "final.ckpt",
    }
}

fn train(cli: &Cli, a: &TrainArgs) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(v) = a.lambda {
        extra.push(("lambda", v.to_string()));
    }
    if let Some(v) = a.steps {
        extra.push(("T", v.to_string()));
    }
    if let Some(v) = a.epochs {
        extra.push(("epochs", v.to_string()));
    }
    if a.no_pretrain_gcn {
        extra.push(("pretrain_gcn", "false".into()));
    }
    if a.no_pretrain_diffusion {
        extra.push(("pretrain_diffusion", "false".into()));
    }
    let cfg = resolve_config(cli, &extra)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let data = load_dataset(required(a.data.as_ref(), "data")?)?;
    let select = a.select_with.as_ref().map(load_dataset).transpose()?;
    let out = &cli.out_dir;
    ensure_dir(out)?;
    let last = out.join("last.ckpt");
    let resume = if a.resume { Some(Checkpoint::load(&last)?) } else { None };

    let mut epochs_run = 0usize;
    let halt_after = a.halt_after_epochs;
    let mut on_epoch = |ck: &Checkpoint| -> Result<Flow> {
        ck.save(&last)?;
        epochs_run += 1;
        Ok(match halt_after {
            Some(n) if epochs_run >= n => Flow::Halt,
            _ => Flow::Continue,
        })
    };
    let mut on_stage_end = |stage: Stage, ck: &Checkpoint| -> Result<()> {
        ck.save(out.join(stage_file(stage)))?;
        eprintln!("finished stage {stage} after {} epochs", ck.epoch);
        Ok(())
    };
    let mut hooks = Hooks {
        on_epoch: Some(&mut on_epoch),
        on_stage_end: Some(&mut on_stage_end),
    };
    let result = run_training(&cfg, &data, select.as_ref(), a.baseline, resume.as_ref(), &mut hooks)?;
    let Some(ck) = result else {
        println!("halted; resume with --resume");
        return Ok(());
    };
    write_metrics_csv(out.join("metrics.csv"), &ck.history)?;
    if let Some(last) = ck.history.last() {
        println!("final epoch {}: L={:.6} train_acc={:.4}", last.epoch, last.l_total, last.train_acc);
    }
    if let Some(test) = &a.test {
        let report = evaluate(&ck, &load_dataset(test)?, cfg.div_options())?;
        write_file(&out.join("test_metrics.csv"), &report_csv(&report))?;
        println!("test top1={:.4} top5={:.4}", report.top1, report.top5);
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> CmdResult {
    let cfg = resolve_config(cli, &[])?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let ck = Checkpoint::load(required(a.checkpoint.as_ref(), "checkpoint")?)?;
    let ds = load_dataset(required(a.data.as_ref(), "data")?)?;
    let report = evaluate(&ck, &ds, cfg.div_options())?;
    let out = a.out.clone().unwrap_or_else(|| cli.out_dir.join("eval.csv"));
    write_file(&out, &report_csv(&report))?;
    println!("top1={:.4} top5={:.4} div={:.4}", report.top1, report.top5, report.div);
    if let Some(other) = &a.against {
        let base = evaluate(&Checkpoint::load(other)?, &ds, cfg.div_options())?;
        let delta = per_class_delta(&report, &base)?;
        let mut s = String::from("class,name,delta\n");
        for (k, d) in delta.iter().enumerate() {
            s.push_str(&format!("{k},{},{d:.8e}\n", ds.class_names[k]));
        }
        write_file(&out.with_file_name("per_class_delta.csv"), &s)?;
    }
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> CmdResult {
    let cfg = resolve_config(cli, &[])?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let axis: SweepAxis = required(a.axis.as_deref(), "axis")?.parse()?;
    let grid = match &a.grid {
        Some(g) => g.split(',').map(|s| s.trim().to_string()).collect(),
        None => axis.default_grid(),
    };
    let seeds = a
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| Failure::Usage(format!("bad seed `{s}`"))))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let data = load_dataset(required(a.data.as_ref(), "data")?)?;
    let test = match &a.test {
        Some(p) => load_dataset(p)?,
        None => data.clone(),
    };
    let spec = SweepSpec {
        axis,
        grid,
        seeds,
        base: cfg,
    };
    let rows = run_sweep(&spec, &data, &test)?;
    let out = a.out.clone().unwrap_or_else(|| cli.out_dir.join("sweep.csv"));
    write_file(&out, &sweep_csv(&rows))?;
    write_file(&out.with_file_name("sweep_timing.csv"), &sweep_timing_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    println!("wrote {} rows ({failed} failed) to {}", rows.len(), out.display());
    Ok(())
}

fn export(cli: &Cli, a: &ExportArgs) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(v) = a.gen_steps {
        extra.push(("gen_steps", v.to_string()));
    }
    let cfg = resolve_config(cli, &extra)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let ck = Checkpoint::load(required(a.checkpoint.as_ref(), "checkpoint")?)?;
    let ds = load_dataset(required(a.data.as_ref(), "data")?)?;
    let out = required(a.out.as_ref(), "out")?;
    let t_gen = if cfg.gen_steps == 0 { ck.betas.len() } else { cfg.gen_steps };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    export_embeddings(&ck, &ds, out, a.include_generated, t_gen, cfg.gen_seed)?;
    println!("wrote embeddings to {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Some(Command::GenData(a)) => gen_data(cli, a),
        Some(Command::Train(a)) => train(cli, a),
        Some(Command::Eval(a)) => eval(cli, a),
        Some(Command::Sweep(a)) => sweep(cli, a),
        Some(Command::ExportEmbeddings(a)) => export(cli, a),
        None if cli.print_config => {
            print!("{}", resolve_config(cli, &[])?.to_text());
            Ok(())
        }
        None => Err(Failure::Usage("no subcommand given".into())),
    }
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage message={}", one_line(first));
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: kind=usage message={m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: kind={} message={}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(2)
        }
    }
}
