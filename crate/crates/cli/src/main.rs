use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sasdeconv::baselines::{inverse_filter, wiener_filter};
use sasdeconv::beamform::{beamform, normalize_peak};
use sasdeconv::deconv::{evaluate_against_truth, mse, psnr, run_deconv_with, Observer, Snapshot};
use sasdeconv::io::{
    png_export, read_grid, read_measurements, read_scene, write_checkpoint, write_complex_grid,
    write_measurements, write_panel, write_real_grid, Checkpoint, RunConfig,
};
use sasdeconv::psf::{build_psf, Psf};
use sasdeconv::sim::simulate;
use sasdeconv::{ComplexGrid, Error, RealGrid, Result};

const THREADS_ENV: &str = "SASDECONV_THREADS";
const PSF_SUPPORT_THRESHOLD: f64 = 0.05;

/// Circular SAS simulation, beamforming and neural deconvolution.
#[derive(Parser)]
#[command(name = "sasdeconv", version)]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (also read from SASDECONV_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate echoes for the configured scene and beamform them.
    Simulate,
    /// Beamform a stored measurement set.
    Beamform,
    /// Image a centered unit scatterer.
    Psf,
    /// Fit the coordinate network to the beamformed image.
    Deconv,
    /// Naive frequency-domain inverse filter.
    Invfilter,
    /// Wiener filter with the configured noise-to-signal ratio.
    Wiener,
    /// Score an estimate against a ground-truth scene.
    Metrics,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidGeometry(_) | Error::InvalidWaveform(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::DimensionMismatch { .. } => 3,
        Error::NonFiniteLoss { .. } | Error::PsfNotCentered { .. } => 4,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v.trim().parse().map_err(|_| Error::Config {
            key: THREADS_ENV.into(),
            msg: format!("expected a positive integer, got {v:?}"),
        })?;
        cfg.threads = Some(n);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config {
                    key: "threads".into(),
                    msg: e.to_string(),
                })?;
            pool.install(|| run(cli.command, &cfg))
        }
        None => run(cli.command, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Simulate => cmd_simulate(cfg),
        Command::Beamform => cmd_beamform(cfg),
        Command::Psf => cmd_psf(cfg),
        Command::Deconv => cmd_deconv(cfg),
        Command::Invfilter => cmd_invfilter(cfg),
        Command::Wiener => cmd_wiener(cfg),
        Command::Metrics => cmd_metrics(cfg),
    }
}

fn out_file(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config {
        key: key.into(),
        msg: "path is required for this command".into(),
    })
}

fn save_lambda(cfg: &RunConfig, lambda: &ComplexGrid) -> Result<()> {
    let path = cfg.lambda_path();
    write_complex_grid(&path, lambda)?;
    png_export(out_file(cfg, "lambda.png"), &lambda.magnitude())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let scene = read_scene(required(&cfg.scene, "scene")?)?;
    let mut m = simulate(&scene, &cfg.geometry, &cfg.waveform, cfg.simulation.offset)?;
    if cfg.simulation.noise_level > 0.0 {
        m.add_noise(cfg.simulation.noise_level, cfg.seed)?;
    }
    write_measurements(cfg.measurements_path(), &m)?;
    let lambda = normalize_peak(&beamform(&m, &cfg.beamform)?)?;
    save_lambda(cfg, &lambda)
}

fn cmd_beamform(cfg: &RunConfig) -> Result<()> {
    let m = read_measurements(cfg.measurements_path())?;
    let lambda = normalize_peak(&beamform(&m, &cfg.beamform)?)?;
    save_lambda(cfg, &lambda)
}

fn cmd_psf(cfg: &RunConfig) -> Result<()> {
    let psf = build_psf(&cfg.geometry, &cfg.waveform, &cfg.beamform)?;
    let path = cfg.psf_path();
    write_complex_grid(&path, psf.grid())?;
    png_export(out_file(cfg, "psf.png"), &psf.grid().magnitude())?;
    let radius = psf.support_radius(PSF_SUPPORT_THRESHOLD);
    let (h, w) = psf.dims();
    let (pr, pc) = psf.peak_index();
    let meta = format!(
        "height = {h}\nwidth = {w}\npeak_row = {pr}\npeak_col = {pc}\n\
         support_threshold = {PSF_SUPPORT_THRESHOLD}\nsupport_radius_px = {radius}\n"
    );
    write_text(&out_file(cfg, "psf_meta.toml"), &meta)?;
    println!("wrote {}; support radius {radius:.2} px at {PSF_SUPPORT_THRESHOLD}", path.display());
    Ok(())
}

fn load_inputs(cfg: &RunConfig) -> Result<(ComplexGrid, Psf)> {
    let lambda = read_grid(cfg.lambda_path())?.into_complex();
    let psf = Psf::from_grid(read_grid(cfg.psf_path())?.into_complex())?;
    if psf.dims() != lambda.dims() {
        return Err(Error::DimensionMismatch {
            expected: psf.dims(),
            got: lambda.dims(),
        });
    }
    Ok((lambda, psf))
}

struct CliObserver {
    losses: Vec<f64>,
    snapshot_dir: PathBuf,
    failed: Option<Error>,
}

impl Observer for CliObserver {
    fn loss(&mut self, _iteration: usize, loss: f64) {
        self.losses.push(loss);
    }

    fn snapshot(&mut self, snap: Snapshot<'_>) {
        if self.failed.is_some() {
            return;
        }
        let path = self.snapshot_dir.join(format!("sigma_{:06}.png", snap.iteration));
        if let Err(e) = png_export(&path, snap.sigma) {
            self.failed = Some(e);
        }
    }
}

fn loss_log(losses: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

fn cmd_deconv(cfg: &RunConfig) -> Result<()> {
    let (lambda, psf) = load_inputs(cfg)?;
    let dcfg = cfg.deconv_config();
    let mut obs = CliObserver {
        losses: Vec::new(),
        snapshot_dir: out_file(cfg, "snapshots"),
        failed: None,
    };
    let result = run_deconv_with(&lambda, &psf, &dcfg, &mut obs);
    write_text(&out_file(cfg, "loss.csv"), &loss_log(&obs.losses))?;
    if let Some(e) = obs.failed {
        return Err(e);
    }
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            if let Error::NonFiniteLoss { iteration, loss } = e {
                eprintln!("deconv aborted at iteration {iteration} with loss {loss}");
            }
            return Err(e);
        }
    };
    let iterations = out.loss_history.len();
    let final_loss = out.loss_history.last().copied().unwrap_or(f64::NAN);

    write_real_grid(cfg.estimate_path(), &out.sigma_hat)?;
    write_complex_grid(out_file(cfg, "b_estimated.sasg"), &out.b_estimated)?;
    png_export(out_file(cfg, "sigma_hat.png"), &out.sigma_hat)?;
    write_panel(
        out_file(cfg, "panel.png"),
        &[&out.sigma_hat, &out.b_estimated.magnitude(), &lambda.magnitude()],
        2,
    )?;
    write_checkpoint(
        out_file(cfg, "checkpoint.sasc"),
        &Checkpoint {
            seed: dcfg.seed,
            encoder: out.encoder,
            net: out.net,
            adam: out.adam,
        },
    )?;
    let status = if out.converged { "converged" } else { "iteration cap" };
    println!("deconv: {iterations} iterations ({status}), final loss {final_loss}");

    if let Some(truth_path) = &cfg.truth {
        let truth = read_scene(truth_path)?;
        let text = metrics_report(&out.sigma_hat, &truth, Some(&lambda))?;
        write_text(&out_file(cfg, "metrics.toml"), &text)?;
        print!("{text}");
    }
    Ok(())
}

fn metrics_report(estimate: &RealGrid, truth: &RealGrid, lambda: Option<&ComplexGrid>) -> Result<String> {
    let m = evaluate_against_truth(estimate, truth)?;
    let mut s = format!("mse = {}\npsnr_db = {}\n", m.mse, m.psnr_db);
    if let Some(lambda) = lambda {
        let base = mse(&lambda.magnitude(), truth)?;
        let _ = write!(s, "lambda_mse = {base}\nlambda_psnr_db = {}\n", psnr(base));
    }
    if let Some(loc) = m.localization {
        let _ = write!(
            s,
            "localization_mean_px = {}\nlocalization_max_px = {}\n",
            loc.mean_error, loc.max_error
        );
    }
    Ok(s)
}

fn cmd_invfilter(cfg: &RunConfig) -> Result<()> {
    let (lambda, psf) = load_inputs(cfg)?;
    let out = inverse_filter(&lambda, &psf)?;
    if out.floored_bins > 0 {
        eprintln!("warning: {} spectral bins hit the inverse-filter floor", out.floored_bins);
    }
    let path = out_file(cfg, "inverse.sasg");
    write_complex_grid(&path, &out.image)?;
    png_export(out_file(cfg, "inverse.png"), &out.image.magnitude())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_wiener(cfg: &RunConfig) -> Result<()> {
    let (lambda, psf) = load_inputs(cfg)?;
    let image = wiener_filter(&lambda, &psf, &cfg.wiener)?;
    let path = out_file(cfg, "wiener.sasg");
    write_complex_grid(&path, &image)?;
    png_export(out_file(cfg, "wiener.png"), &image.magnitude())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_metrics(cfg: &RunConfig) -> Result<()> {
    let truth = read_scene(required(&cfg.truth, "truth")?)?;
    let estimate = read_grid(cfg.estimate_path())?.into_real();
    let lambda = match read_grid(cfg.lambda_path()) {
        Ok(g) => Some(g.into_complex()),
        Err(Error::Io { .. }) => None,
        Err(e) => return Err(e),
    };
    let text = metrics_report(&estimate, &truth, lambda.as_ref())?;
    write_text(&out_file(cfg, "metrics.toml"), &text)?;
    print!("{text}");
    Ok(())
}
