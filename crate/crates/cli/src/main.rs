use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use silentlab::domain::sample_domain;
use silentlab::harness::{
    demo_fig3, grid_select, run_sweep, run_training_experiment, write_demo_lines, write_demo_points, write_experiment,
    write_rows, Arm, Criterion, DemoConfig, ExperimentConfig, SelectionRow, DEFAULT_CONFIG_TOML,
};
use silentlab::monte_carlo::mc_risk_with;
use silentlab::risk::{bayes_classifier, linear_classifier_risk, DomainKind};
use silentlab::rng::derive_seed;
use silentlab::trainer::{feature_distortion, init_pretrained, model_risk, train, PretrainKind, TrainConfig};
use silentlab::Execution;

#[derive(Parser)]
#[command(name = "silentlab", version, about = "Gaussian silent-feature experiments")]
struct Cli {
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads. 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Record wall-times in JSON metadata (breaks byte-reproducibility).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the training domain and one test domain per gamma.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Samples per domain; defaults to n_train.
        #[arg(long)]
        n: Option<usize>,
        /// Also write the latent columns.
        #[arg(long)]
        latents: bool,
    },
    /// Closed-form risks of the Bayes predictor over the weight grid.
    RiskSweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Monte-Carlo samples per point; overrides mc_samples.
        #[arg(long)]
        mc_samples: Option<u64>,
    },
    /// Compare Monte-Carlo and closed-form risks on the weight grid.
    McCheck {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        /// Interval half-width in standard errors.
        #[arg(long, default_value_t = 4.0)]
        k: f64,
    },
    /// Train one arm from one pretrained initialization.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "lp_ft_swad")]
        arm: Arm,
        #[arg(long, default_value = "oracle_silent", value_parser = parse_pretrain)]
        pretrain: PretrainKind,
        /// Index into the config's [[train]] tables.
        #[arg(long, default_value_t = 0)]
        config_id: usize,
        /// Repetition seed.
        #[arg(long, default_value_t = 0)]
        run: u64,
    },
    /// Every config x seed x pretrain x arm, with aggregates and selection.
    Experiment {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Two-level selection over a candidates.csv written by `experiment`.
    GridSelect {
        /// Candidates file.
        candidates: PathBuf,
        #[arg(long, default_value = "train_val")]
        criterion: Criterion,
    },
    /// The 2-D texture/shape scenario as plottable CSV.
    DemoFig3 {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Print the documented default config.
    Defaults,
}

fn parse_pretrain(s: &str) -> Result<PretrainKind, String> {
    match s {
        "oracle_silent" => Ok(PretrainKind::OracleSilent),
        "oracle_dominant" => Ok(PretrainKind::OracleDominant),
        other => match other.strip_prefix("noisy_oracle:").map(str::parse::<f64>) {
            Some(Ok(eps)) => Ok(PretrainKind::NoisyOracle { eps }),
            _ => Err(format!(
                "expected oracle_silent, oracle_dominant or noisy_oracle:<eps>, got {other:?}"
            )),
        },
    }
}

struct Ctx {
    seed: Option<u64>,
    out: PathBuf,
    exec: Execution,
    timings: bool,
}

impl Ctx {
    fn load(&self, arg: &ConfigArg) -> Result<ExperimentConfig> {
        let mut cfg = match &arg.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        for w in cfg.validate()? {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &anyhow::Error) -> String {
    let errors: Vec<_> = match e.downcast_ref::<silentlab::Error>() {
        Some(silentlab::Error::IncompleteGrid { missing }) => missing
            .iter()
            .map(|cell| json!({"kind": "incomplete_grid", "message": format!("missing cell {cell}")}))
            .collect(),
        Some(err) => vec![json!({"kind": err.kind(), "message": format!("{e:#}")})],
        None => vec![json!({"kind": "cli", "message": format!("{e:#}")})],
    };
    json!({ "errors": errors }).to_string()
}

fn run(cli: Cli) -> Result<()> {
    let exec = match cli.jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Execution::Sequential,
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        exec,
        timings: cli.timings,
    };
    match cli.command {
        Command::Generate { config, n, latents } => generate(&ctx, &config, n, latents),
        Command::RiskSweep { config, mc_samples } => {
            let mut cfg = ctx.load(&config)?;
            if let Some(n) = mc_samples {
                cfg.mc_samples = n;
            }
            let rows = run_sweep(&cfg, ctx.exec)?;
            let path = ctx.file("sweep.csv")?;
            write_rows(&rows, fs::File::create(&path)?)?;
            report(&[path]);
            Ok(())
        }
        Command::McCheck { config, n, k } => mc_check(&ctx, &config, n, k),
        Command::Train {
            config,
            arm,
            pretrain,
            config_id,
            run,
        } => train_one(&ctx, &config, arm, pretrain, config_id, run),
        Command::Experiment { config } => {
            let cfg = ctx.load(&config)?;
            let started = Instant::now();
            let result = run_training_experiment(&cfg, ctx.exec)?;
            let failed = result.runs.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("warning: {failed} of {} runs failed; see meta.json", result.runs.len());
            }
            fs::create_dir_all(&ctx.out)?;
            report(&write_experiment(&cfg, &result, &ctx.out, ctx.timings)?);
            if ctx.timings {
                eprintln!("elapsed {:.2}s", started.elapsed().as_secs_f64());
            }
            Ok(())
        }
        Command::GridSelect { candidates, criterion } => select(&ctx, &candidates, criterion),
        Command::DemoFig3 { gamma, n } => {
            let mut cfg = DemoConfig::default();
            if let Some(g) = gamma {
                cfg.gamma = g;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s) = ctx.seed {
                cfg.seed = s;
            }
            let out = demo_fig3(&cfg)?;
            let points = ctx.file("demo_points.csv")?;
            write_demo_points(&out, fs::File::create(&points)?)?;
            let lines = ctx.file("demo_lines.csv")?;
            write_demo_lines(&out, fs::File::create(&lines)?)?;
            report(&[points, lines]);
            Ok(())
        }
        Command::Defaults => {
            std::io::stdout().write_all(DEFAULT_CONFIG_TOML.as_bytes())?;
            Ok(())
        }
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn gamma_tag(gamma: f64) -> String {
    format!("{gamma}").replace('-', "m")
}

fn generate(ctx: &Ctx, arg: &ConfigArg, n: Option<usize>, latents: bool) -> Result<()> {
    let cfg = ctx.load(arg)?;
    let n = n.unwrap_or(cfg.n_train);
    let mixing = cfg.mixing_map();
    let mut written = Vec::new();
    let train_data = sample_domain(&cfg.domain, &mixing, n, derive_seed(&[cfg.master_seed, 0]))?;
    let path = ctx.file("train.csv")?;
    train_data.write_csv(fs::File::create(&path)?, latents)?;
    written.push(path);
    for (i, &gamma) in cfg.gammas.iter().enumerate() {
        let spec = cfg.domain.with_gamma(gamma);
        let data = sample_domain(&spec, &mixing, n, derive_seed(&[cfg.master_seed, 1, i as u64]))?;
        let path = ctx.file(&format!("test_gamma_{}.csv", gamma_tag(gamma)))?;
        data.write_csv(fs::File::create(&path)?, latents)?;
        written.push(path);
    }
    report(&written);
    Ok(())
}

fn mc_check(ctx: &Ctx, arg: &ConfigArg, n: u64, k: f64) -> Result<()> {
    let cfg = ctx.load(arg)?;
    let mixing = cfg.mixing_map();
    let path = ctx.file("mc_check.csv")?;
    let mut w = buffered(&path)?;
    writeln!(w, "w_d,w_s,gamma,domain,closed_form,mc_mean,stderr,z,within")?;
    let (mut total, mut inside) = (0usize, 0usize);
    for (pi, weights) in cfg.grid.points()?.into_iter().enumerate() {
        for (gi, &gamma) in cfg.gammas.iter().enumerate() {
            let spec = cfg.domain.with_gamma(gamma);
            let beta = bayes_classifier(&spec, weights);
            for (di, domain) in [DomainKind::Train, DomainKind::Test].into_iter().enumerate() {
                let exact = linear_classifier_risk(&spec, weights, &beta, domain)?;
                let seed = derive_seed(&[cfg.master_seed, pi as u64, gi as u64, di as u64]);
                let est = mc_risk_with(&spec, weights, &beta, domain, &mixing, n, seed, ctx.exec)?;
                let z = if est.stderr > 0.0 {
                    (est.mean - exact) / est.stderr
                } else {
                    0.0
                };
                let ok = est.within(exact, k);
                total += 1;
                inside += usize::from(ok);
                let tag = if domain == DomainKind::Train { "train" } else { "test" };
                writeln!(
                    w,
                    "{},{},{gamma},{tag},{exact},{},{},{z},{ok}",
                    weights.w_d, weights.w_s, est.mean, est.stderr
                )?;
            }
        }
    }
    w.flush()?;
    eprintln!("{inside}/{total} points within {k} standard errors");
    report(&[path]);
    Ok(())
}

fn buffered(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn train_one(ctx: &Ctx, arg: &ConfigArg, arm: Arm, pretrain: PretrainKind, config_id: usize, run: u64) -> Result<()> {
    let cfg = ctx.load(arg)?;
    let Some(tc) = cfg.train.get(config_id) else {
        bail!(
            "config id {config_id} out of range (have {} train configs)",
            cfg.train.len()
        );
    };
    // Same seed derivation as the experiment runner, so the outputs match its row.
    let run_seed = cfg.run_seed(config_id, run);
    let mixing = cfg.mixing_map();
    let data = sample_domain(&cfg.domain, &mixing, cfg.n_train, derive_seed(&[run_seed, 0]))?;
    let init = init_pretrained(&mixing, cfg.domain.p_d(), pretrain, derive_seed(&[run_seed, 2]))?;
    let tc = TrainConfig {
        seed: derive_seed(&[run_seed, 1]),
        ..tc.clone()
    };
    let swad = arm.uses_swad().then_some(&cfg.swad);
    let started = Instant::now();
    let (model, trace) = train(&init, &data, &tc, arm.schedule(), swad)?;
    let elapsed = started.elapsed().as_secs_f64();

    let trace_path = ctx.file("trace.csv")?;
    trace.write_csv(fs::File::create(&trace_path)?)?;
    let model_path = ctx.file("model.txt")?;
    fs::write(&model_path, model.to_checkpoint())?;

    let mut risks = Vec::new();
    for &gamma in &cfg.gammas {
        let spec = cfg.domain.with_gamma(gamma);
        risks.push(json!({
            "gamma": gamma,
            "train_risk": model_risk(&model, &mixing, &spec, DomainKind::Train)?,
            "test_risk": model_risk(&model, &mixing, &spec, DomainKind::Test)?,
        }));
    }
    let mut meta = json!({
        "schema": "silentlab.train-meta/1",
        "version": env!("CARGO_PKG_VERSION"),
        "arm": arm,
        "pretrain": pretrain.label(),
        "config_id": config_id,
        "seed": run,
        "run_seed": run_seed,
        "final_val_risk": trace.final_val_risk,
        "final_val_loss": trace.final_val_loss,
        "feature_distortion": feature_distortion(&init, &model, &data)?,
        "silent_share_drop": init.silent_share(&mixing) - model.silent_share(&mixing),
        "swad": trace.swad,
        "risks": risks,
    });
    if ctx.timings {
        meta["wall_time_s"] = json!(elapsed);
    }
    let meta_path = ctx.file("train.json")?;
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    report(&[trace_path, model_path, meta_path]);
    Ok(())
}

fn select(ctx: &Ctx, path: &Path, criterion: Criterion) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    // Candidates are grouped per (arm, pretrain); each group is its own grid.
    let mut groups: Vec<((String, String), Vec<SelectionRow>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| {
            rec.get(i)
                .with_context(|| format!("missing column {i} on line {:?}", rec.position().map(|p| p.line())))
        };
        let key = (field(2)?.to_string(), field(3)?.to_string());
        let row = SelectionRow {
            config_id: field(0)?.parse()?,
            seed: field(1)?.parse()?,
            candidate: field(4)?.parse()?,
            train_val_risk: field(5)?.parse()?,
            test_risk: field(6)?.parse()?,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    if groups.is_empty() {
        bail!("{} has no candidate rows", path.display());
    }
    let out = ctx.file("grid_select.csv")?;
    let mut w = buffered(&out)?;
    writeln!(w, "arm,pretrain,criterion,config_id,score")?;
    for ((arm, pretrain), rows) in &groups {
        let sel = grid_select(rows, criterion)?;
        writeln!(w, "{arm},{pretrain},{criterion},{},{}", sel.config_id, sel.score)?;
    }
    w.flush()?;
    report(&[out]);
    Ok(())
}
