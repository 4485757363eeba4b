//! `so3diff`: generate data, train, sample and evaluate diffusion models on SO(3).
//!
//! Exit status is 0 on success, 2 for invalid input (arguments, config
//! values, files) and 3 when a computation fails numerically.

mod config;
mod plot;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use so3diff::data::SampleSet;
use so3diff::ddpm::{self, DdpmTrainer, ReverseKernelModel};
use so3diff::eval::{c2st, ed_correlation, RadialBin};
use so3diff::io::{self, Checkpoint, ModelKind};
use so3diff::sgm::{self, ScoreModel, SgmTrainer};
use so3diff::targets::Target;
use so3diff::train::{run_training, TrainEvent};
use so3diff::{Error, Real};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "so3diff", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// Binary sample set.
    Bin,
    /// Comma-separated text.
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a training set from a synthetic target.
    GenData {
        /// checkerboard, four-gaussians, three-stripes or two-blob.
        target: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Bin)]
        format: Format,
    },
    /// Train a model described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples from a trained checkpoint.
    Sample {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// ODE steps for score models; DDPM always runs its full chain.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Comma-separated context vector for conditional models.
        #[arg(long, value_delimiter = ',')]
        context: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Bin)]
        format: Format,
    },
    /// Classifier two-sample test between two sample sets.
    EvalC2st {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file (TOML); printed to stdout as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ellipticity-direction correlation of an oriented point cloud.
    EvalEd {
        cloud: PathBuf,
        /// Increasing bin edges, e.g. `0,0.5,1,2`.
        #[arg(long, value_delimiter = ',', required = true)]
        bins: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        jackknife: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mollweide projection of each rotation's canonical axis.
    Plot {
        samples: PathBuf,
        /// CSV with longitude, latitude, tilt and projected coordinates.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unconverged { .. }
            | Error::NonFiniteDensity { .. }
            | Error::NonPositiveDensity { .. }
            | Error::NearCutLocus { .. }
            | Error::NonFiniteField { .. }
            | Error::StepTooLarge { .. }
            | Error::NonFiniteLoss { .. }
            | Error::RetriesExhausted(_)
            | Error::DegenerateFrame => 3,
            _ => 2,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::invalid(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::GenData {
            target,
            n,
            seed,
            out,
            format,
        } => gen_data(&target, n, seed, &out, format),
        Cmd::Train { config, seed, out } => train(&config, seed, out),
        Cmd::Sample {
            checkpoint,
            n,
            seed,
            out,
            steps,
            context,
            format,
        } => sample(&checkpoint, n, seed, &out, steps, &context, format),
        Cmd::EvalC2st {
            a,
            b,
            k_folds,
            seed,
            out,
        } => eval_c2st(&a, &b, k_folds, seed, out.as_deref()),
        Cmd::EvalEd {
            cloud,
            bins,
            jackknife,
            out,
        } => eval_ed(&cloud, &bins, jackknife, out.as_deref()),
        Cmd::Plot { samples, out, svg } => plot_cmd(&samples, &out, svg.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn write_set<T: Real>(path: &Path, set: &SampleSet<T>, format: Format) -> CmdResult {
    match format {
        Format::Bin => io::save_samples(path, set)?,
        Format::Csv => io::write_atomic(path, io::write_samples_text(set).as_bytes())?,
    }
    Ok(())
}

fn gen_data(target: &str, n: usize, seed: u64, out: &Path, format: Format) -> CmdResult {
    let target = Target::from_name(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = target
        .sample::<f64, _>(n, &mut rng)?
        .with_provenance(seed, 0);
    write_set(out, &set, format)?;
    println!("wrote {n} {} samples to {}", target.name(), out.display());
    Ok(())
}

fn train(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CmdResult {
    let mut cfg = RunConfig::load(path).map_err(Failure::invalid)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.validate()
        .map_err(|e| Failure::invalid(e.to_string()))?;
    if cfg.precision == "f32" {
        train_as::<f32>(&cfg)
    } else {
        train_as::<f64>(&cfg)
    }
}

fn train_as<T: Real>(cfg: &RunConfig) -> CmdResult {
    let kind = cfg.kind().map_err(|e| Failure::invalid(e.to_string()))?;
    let data: SampleSet<T> = io::load_samples(&cfg.data)
        .map_err(|e| Failure::invalid(format!("{}: {e}", cfg.data.display())))?;
    let ckpt = match &cfg.resume {
        Some(p) => {
            let c = io::load_checkpoint::<T>(p)
                .map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?;
            if c.kind() != kind {
                return Err(Failure::invalid(format!(
                    "checkpoint holds a {} model but the config asks for {}",
                    c.kind().name(),
                    kind.name()
                )));
            }
            c
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let cd = data.context_dim();
            match kind {
                ModelKind::Sgm => {
                    let m = ScoreModel::new(&cfg.hidden(), cfg.ve_schedule(), cd, &mut rng)?;
                    Checkpoint::Sgm(SgmTrainer::new(m, cfg.adam())?)
                }
                ModelKind::Ddpm => {
                    let s = cfg
                        .vp_schedule()
                        .map_err(|e| Failure::invalid(e.to_string()))?;
                    let m = ReverseKernelModel::new(&cfg.hidden(), s, cd, &mut rng)?;
                    Checkpoint::Ddpm(DdpmTrainer::new(m, cfg.adam())?)
                }
            }
        }
    };
    if ckpt.context_dim() != data.context_dim() {
        return Err(Failure::invalid(format!(
            "model expects context dimension {}, data has {}",
            ckpt.context_dim(),
            data.context_dim()
        )));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let done = ckpt.steps_done();
    let mut tc = cfg.train_config();
    tc.iterations = cfg.iterations.saturating_sub(done);
    // a fresh stream per resume point keeps resumed runs reproducible
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(done.wrapping_add(1));

    let loss_path = cfg.out_dir.join("loss.csv");
    let mut loss_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&loss_path)?;
    if loss_file.metadata()?.len() == 0 {
        writeln!(loss_file, "step,loss")?;
    }
    let out_dir = cfg.out_dir.clone();
    let mut on_event =
        |step: u64, loss: Option<f64>, snap: Option<Checkpoint<T>>| -> so3diff::Result<()> {
            if let Some(l) = loss {
                writeln!(loss_file, "{step},{l}")?;
            }
            if let Some(c) = snap {
                io::save_checkpoint(&out_dir.join(format!("ckpt_{step:08}.bin")), &c)?;
            }
            Ok(())
        };
    let final_ckpt = match ckpt {
        Checkpoint::Sgm(mut t) => {
            run_training(&mut t, &data, &tc, &mut rng, |e| match e {
                TrainEvent::Log { step, loss } => on_event(step, Some(loss), None),
                TrainEvent::Checkpoint { step, trainer } => {
                    on_event(step, None, Some(Checkpoint::Sgm(trainer.clone())))
                }
            })?;
            Checkpoint::Sgm(t)
        }
        Checkpoint::Ddpm(mut t) => {
            run_training(&mut t, &data, &tc, &mut rng, |e| match e {
                TrainEvent::Log { step, loss } => on_event(step, Some(loss), None),
                TrainEvent::Checkpoint { step, trainer } => {
                    on_event(step, None, Some(Checkpoint::Ddpm(trainer.clone())))
                }
            })?;
            Checkpoint::Ddpm(t)
        }
    };
    let model_path = cfg.out_dir.join("model.ckpt");
    io::save_checkpoint(&model_path, &final_ckpt)?;
    println!(
        "trained {} model to step {}; checkpoint {}",
        final_ckpt.kind().name(),
        final_ckpt.steps_done(),
        model_path.display()
    );
    Ok(())
}

fn sample(
    path: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    steps: usize,
    context: &[f64],
    format: Format,
) -> CmdResult {
    let ckpt = io::load_checkpoint::<f64>(path)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    if n == 0 {
        return Err(Failure::invalid("--n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = match &ckpt {
        Checkpoint::Sgm(t) => {
            sgm::sample(&t.model, &t.model.schedule, n, context, steps, &mut rng)?
                .with_provenance(seed, steps as u32)
        }
        Checkpoint::Ddpm(t) => {
            let s = &t.model.schedule;
            ddpm::sample(&t.model, s, n, context, &mut rng)?
                .with_provenance(seed, s.n_steps() as u32)
        }
    };
    write_set(out, &set, format)?;
    println!(
        "wrote {n} samples from {} model to {}",
        ckpt.kind().name(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct C2stOut {
    metric: &'static str,
    score: f64,
    std: f64,
    fold_scores: Vec<f64>,
    n_per_side: usize,
    k_folds: usize,
    seed: u64,
    a: String,
    b: String,
}

fn emit<S: Serialize>(report: &S, out: Option<&Path>) -> CmdResult {
    let text = toml::to_string(report).map_err(|e| Failure::invalid(e.to_string()))?;
    print!("{text}");
    if let Some(p) = out {
        io::write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

fn load_any(path: &Path) -> Result<SampleSet<f32>, Failure> {
    io::load_samples(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn eval_c2st(a: &Path, b: &Path, k_folds: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let (sa, sb) = (load_any(a)?, load_any(b)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = c2st(&sa, &sb, k_folds, &mut rng)?;
    emit(
        &C2stOut {
            metric: "c2st",
            score: r.score,
            std: r.std,
            fold_scores: r.fold_scores,
            n_per_side: r.n_per_side,
            k_folds,
            seed,
            a: a.display().to_string(),
            b: b.display().to_string(),
        },
        out,
    )
}

#[derive(Serialize)]
struct EdOut {
    metric: &'static str,
    cloud: String,
    jackknife: usize,
    n_points: usize,
    bins: Vec<EdBinOut>,
}

#[derive(Serialize)]
struct EdBinOut {
    lo: f64,
    hi: f64,
    pairs: u64,
    /// Absent when no pair falls in the bin.
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    err: Option<f64>,
}

fn eval_ed(path: &Path, edges: &[f64], jackknife: usize, out: Option<&Path>) -> CmdResult {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::invalid(
            "--bins needs at least two increasing edges",
        ));
    }
    let text = fs::read_to_string(path)?;
    let cloud =
        io::read_cloud(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let bins: Vec<RadialBin> = edges
        .windows(2)
        .map(|w| RadialBin { lo: w[0], hi: w[1] })
        .collect();
    let res = ed_correlation(&cloud, &bins, jackknife)?;
    let report = EdOut {
        metric: "ed_correlation",
        cloud: path.display().to_string(),
        jackknife,
        n_points: cloud.len(),
        bins: bins
            .iter()
            .zip(res)
            .map(|(b, r)| EdBinOut {
                lo: b.lo,
                hi: b.hi,
                pairs: r.map_or(0, |r| r.pairs),
                omega: r.map(|r| r.omega),
                err: r.map(|r| r.err).filter(|e| e.is_finite()),
            })
            .collect(),
    };
    emit(&report, out)
}

fn plot_cmd(path: &Path, out: &Path, svg: Option<&Path>) -> CmdResult {
    let set: SampleSet<f64> =
        io::load_samples(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let pts: Vec<plot::PlotPoint> = set.rotations.iter().map(plot::project).collect();
    io::write_atomic(out, plot::to_csv(&pts).as_bytes())?;
    if let Some(p) = svg {
        io::write_atomic(p, plot::to_svg(&pts).as_bytes())?;
    }
    println!("projected {} rotations to {}", pts.len(), out.display());
    Ok(())
}
