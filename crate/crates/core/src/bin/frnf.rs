use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frnf::mapper::{AblationMode, MapperConfig, Session};
use frnf::scene_field::{load_checkpoint, save_checkpoint, FieldConfig};
use frnf::semantics::{evaluate_baseline, evaluate_field, load_click_script, script_order, ClickSpec};
use frnf::simio::{generate_sequence, standard_fixture, Dataset, CLICKS_FILE};
use frnf::{renderer::Field, Error, Result};

#[derive(Parser)]
#[command(name = "frnf", version, about = "Online neural feature-field fusion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a fixture dataset.
    GenDataset {
        #[arg(long, env = "FRNF_FIXTURE")]
        fixture: String,
        #[arg(long, env = "FRNF_OUT")]
        out: PathBuf,
        #[arg(long, env = "FRNF_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Train a field over a dataset.
    Run {
        #[arg(long, env = "FRNF_DATASET")]
        dataset: PathBuf,
        /// Click script; defaults to the dataset's clicks.json
        #[arg(long, env = "FRNF_CLICKS")]
        clicks: Option<PathBuf>,
        #[arg(long, env = "FRNF_STEPS_PER_FRAME", default_value_t = 10)]
        steps_per_frame: usize,
        #[arg(long, env = "FRNF_MODE", default_value = "fused")]
        mode: AblationMode,
        #[arg(long, env = "FRNF_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long, env = "FRNF_METRICS")]
        metrics: Option<PathBuf>,
        /// JSON mapper configuration; flags above override it
        #[arg(long, env = "FRNF_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, env = "FRNF_HIDDEN", default_value_t = 256)]
        hidden: usize,
        #[arg(long, env = "FRNF_SEED")]
        seed: Option<u64>,
        /// Per-pixel relative depth error counted as unexplained
        #[arg(long, env = "FRNF_KF_REL_ERROR")]
        kf_rel_error: Option<f64>,
        /// Fraction of unexplained pixels that makes a frame a keyframe
        #[arg(long, env = "FRNF_KF_FRACTION")]
        kf_fraction: Option<f64>,
    },
    /// mIoU of a trained field against the dataset labels.
    Eval {
        #[arg(long, env = "FRNF_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long, env = "FRNF_DATASET")]
        dataset: PathBuf,
        #[arg(long, env = "FRNF_REPORT")]
        report: PathBuf,
        #[arg(long, env = "FRNF_CLICKS")]
        clicks: Option<PathBuf>,
        #[arg(long, env = "FRNF_STRIDE", default_value_t = 2)]
        stride: usize,
        #[arg(long, env = "FRNF_BINS", default_value_t = frnf::renderer::DEFAULT_BINS)]
        bins: usize,
    },
    /// mIoU of the 2D 1-NN cosine baseline on front-end features.
    Baseline {
        #[arg(long, env = "FRNF_DATASET")]
        dataset: PathBuf,
        #[arg(long, env = "FRNF_CLICKS")]
        clicks: Option<PathBuf>,
        /// Only front-end features are used (the only supported baseline)
        #[arg(long, default_value_t = true)]
        frontend_only: bool,
        #[arg(long, env = "FRNF_REPORT")]
        report: PathBuf,
        #[arg(long, env = "FRNF_STRIDE", default_value_t = 2)]
        stride: usize,
    },
    /// Live session behind the HTTP API.
    Serve {
        #[arg(long, env = "FRNF_DATASET")]
        dataset: PathBuf,
        #[arg(long, env = "FRNF_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "FRNF_HIDDEN", default_value_t = 256)]
        hidden: usize,
        /// Frames per second of playback
        #[arg(long, env = "FRNF_FPS", default_value_t = 2.0)]
        fps: f64,
    },
}

fn clicks_or_default(dataset: &Path, clicks: Option<PathBuf>) -> Result<Vec<ClickSpec>> {
    let path = clicks.unwrap_or_else(|| dataset.join(CLICKS_FILE));
    Ok(script_order(load_click_script(&path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenDataset { fixture, out, seed } => {
            let (scene, spec) = standard_fixture(&fixture, seed)?;
            let m = generate_sequence(&spec, &scene, &out)?;
            println!("wrote {} frames of {fixture} to {}", m.frames.len(), out.display());
        }
        Cmd::Run {
            dataset,
            clicks,
            steps_per_frame,
            mode,
            checkpoint,
            metrics,
            config,
            hidden,
            seed,
            kf_rel_error,
            kf_fraction,
        } => {
            let clicks = clicks_or_default(&dataset, clicks)?;
            let ds = Dataset::open(&dataset)?;
            let mut cfg: MapperConfig = match config {
                Some(p) => serde_json::from_slice(&std::fs::read(&p).map_err(|e| Error::Io { path: p, source: e })?)?,
                None => MapperConfig::default(),
            };
            cfg.steps_per_frame = steps_per_frame;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = kf_rel_error {
                cfg.kf_rel_error_threshold = t;
            }
            if let Some(f) = kf_fraction {
                cfg.kf_pixel_fraction = f;
            }
            let cfg = mode.apply(cfg);
            let field_cfg = FieldConfig {
                feature_dim: ds.manifest.feature_dim,
                ..FieldConfig::default()
            }
            .with_hidden(hidden);
            let mut session = Session::new(ds, field_cfg, cfg, clicks)?;
            let summary = match metrics {
                Some(p) => {
                    let mut w = create(&p)?;
                    let s = session.run(&mut w)?;
                    w.flush().map_err(|e| Error::Io { path: p, source: e })?;
                    s
                }
                None => session.run(&mut std::io::sink())?,
            };
            save_checkpoint(&checkpoint, &session.state.params)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Cmd::Eval {
            checkpoint,
            dataset,
            report,
            clicks,
            stride,
            bins,
        } => {
            let clicks = clicks_or_default(&dataset, clicks)?;
            let ds = Dataset::open(&dataset)?;
            let params = load_checkpoint(&checkpoint)?;
            let basis = params.config().basis()?;
            let field = Field::new(params.view(), &basis, ds.bounds())?;
            let r = evaluate_field(&field, &ds, &clicks, stride, bins)?;
            write_json(&report, &r)?;
            println!("mean_iou {:.4} over {} frames", r.mean_iou, r.n_eval_frames);
        }
        Cmd::Baseline {
            dataset,
            clicks,
            frontend_only,
            report,
            stride,
        } => {
            if !frontend_only {
                return Err(Error::Config("the baseline only runs on front-end features".into()));
            }
            let clicks = clicks_or_default(&dataset, clicks)?;
            let ds = Dataset::open(&dataset)?;
            let r = evaluate_baseline(&ds, &clicks, stride)?;
            write_json(&report, &r)?;
            println!("mean_iou {:.4} over {} frames", r.mean_iou, r.n_eval_frames);
        }
        Cmd::Serve {
            dataset,
            port,
            hidden,
            fps,
        } => {
            let ds = Dataset::open(&dataset)?;
            let field_cfg = FieldConfig {
                feature_dim: ds.manifest.feature_dim,
                ..FieldConfig::default()
            }
            .with_hidden(hidden);
            frnf::service::serve(ds, field_cfg, MapperConfig::default(), fps, port)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
