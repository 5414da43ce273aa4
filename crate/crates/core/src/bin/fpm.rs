use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use fpm::epie::{run_epie, EpieConfig};
use fpm::io::{
    export_image, read_complex, read_dataset, read_manifest, read_real, write_complex, write_dataset, write_real,
    ExportMode, Manifest, MANIFEST_FILE,
};
use fpm::metrics::metrics;
use fpm::model::ensure_finite;
use fpm::pgnn::{run_pgnn, PgnnConfig};
use fpm::sim::{phantom, simulate_dataset, GroundTruth, SimOptions};
use fpm::{FpError, OpticalConfig, Result};

#[derive(Parser, Debug)]
#[command(name = "fpm", version, about = "Fourier ptychographic simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a capture stack from amplitude and phase images.
    Simulate {
        #[arg(long)]
        truth_amp: PathBuf,
        #[arg(long)]
        truth_phase: PathBuf,
        /// Manifest describing the optics; image file entries are ignored.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        defocus_um: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long)]
        saturation: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct object and pupil from a dataset directory.
    Reconstruct {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Pgnn)]
        method: Method,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// ePIE passes.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        tv_alpha1: Option<f64>,
        #[arg(long)]
        tv_alpha2: Option<f64>,
        /// Number of Zernike modes, or `off` for a free complex pupil.
        #[arg(long)]
        zernike: Option<ZernikeArg>,
        /// Object learning rate; the object step size for ePIE.
        #[arg(long)]
        lr_object: Option<f64>,
        /// Pupil learning rate; the pupil step size for ePIE.
        #[arg(long)]
        lr_pupil: Option<f64>,
        #[arg(long)]
        lr_zern: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `rel_err_complex,rel_err_amp,psnr_amp` for two complex fields.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Summarize a dataset directory.
    Inspect {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a test object and a matching reference manifest.
    Phantom {
        /// High-resolution side length; must be a multiple of 4.
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Pgnn,
    Epie,
}

#[derive(Clone, Copy, Debug)]
enum ZernikeArg {
    Off,
    Modes(usize),
}

impl FromStr for ZernikeArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "off" {
            return Ok(ZernikeArg::Off);
        }
        s.parse()
            .map(ZernikeArg::Modes)
            .map_err(|_| format!("expected a mode count or `off`, got `{s}`"))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FpError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FpError::io(path, e))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    truth_amp: &Path,
    truth_phase: &Path,
    config: &Path,
    defocus_um: f64,
    noise_sigma: f64,
    saturation: Option<f64>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let cfg = read_manifest(config)?.config();
    let amp = read_real(truth_amp)?;
    let phase = read_real(truth_phase)?;
    let gt = GroundTruth::new(&cfg, &amp, &phase, defocus_um)?;
    let opts = SimOptions {
        saturation,
        gaussian_noise_sigma: noise_sigma,
        seed,
    };
    let dataset = simulate_dataset(&gt, &cfg, &opts)?;
    write_dataset(&dataset, out)?;
    write_complex(&gt.object_spatial, out.join("truth.fpc"))?;
    write_complex(&gt.pupil, out.join("truth_pupil.fpc"))
}

struct ReconArgs {
    method: Method,
    stages: Option<usize>,
    epochs: Option<usize>,
    iterations: Option<usize>,
    tv_alpha1: Option<f64>,
    tv_alpha2: Option<f64>,
    zernike: Option<ZernikeArg>,
    lr_object: Option<f64>,
    lr_pupil: Option<f64>,
    lr_zern: Option<f64>,
    seed: Option<u64>,
}

fn pgnn_config(args: &ReconArgs) -> PgnnConfig {
    let mut cfg = PgnnConfig::default();
    cfg.stages = args.stages.unwrap_or(cfg.stages);
    cfg.epochs_per_stage = args.epochs.unwrap_or(cfg.epochs_per_stage);
    cfg.tv_alpha1 = args.tv_alpha1.unwrap_or(cfg.tv_alpha1);
    cfg.tv_alpha2 = args.tv_alpha2.unwrap_or(cfg.tv_alpha2);
    match args.zernike {
        Some(ZernikeArg::Off) => cfg.use_zernike = false,
        Some(ZernikeArg::Modes(l)) => cfg.zernike_modes = l,
        None => {}
    }
    cfg.lr_object = args.lr_object.unwrap_or(cfg.lr_object);
    cfg.lr_pupil_amp = args.lr_pupil.unwrap_or(cfg.lr_pupil_amp);
    cfg.lr_zern = args.lr_zern.unwrap_or(cfg.lr_zern);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg
}

fn epie_config(args: &ReconArgs) -> EpieConfig {
    let mut cfg = EpieConfig::default();
    cfg.iterations = args.iterations.unwrap_or(cfg.iterations);
    cfg.alpha = args.lr_object.unwrap_or(cfg.alpha);
    cfg.beta = args.lr_pupil.unwrap_or(cfg.beta);
    cfg
}

fn reconstruct(dataset: &Path, args: &ReconArgs, out: &Path) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let (object, pupil, losses) = match args.method {
        Method::Pgnn => {
            let r = run_pgnn(&ds, &pgnn_config(args))?;
            let mut losses = vec![r.initial_loss];
            losses.extend(&r.loss_history);
            (r.object, r.pupil, losses)
        }
        Method::Epie => {
            let r = run_epie(&ds, &epie_config(args))?;
            (r.object, r.pupil, r.residual_history)
        }
    };
    if !(object.is_finite() && pupil.is_finite()) {
        return Err(FpError::NonFinite("reconstruction".into()));
    }
    create_dir(out)?;
    write_complex(&object, out.join("object.fpc"))?;
    write_complex(&pupil, out.join("pupil.fpc"))?;
    export_image(&object, out.join("object_amp.pgm"), ExportMode::Amp)?;
    export_image(&object, out.join("object_phase.pgm"), ExportMode::Phase)?;
    export_image(&pupil, out.join("pupil_amp.pgm"), ExportMode::Amp)?;
    export_image(&pupil, out.join("pupil_phase.pgm"), ExportMode::Phase)?;
    let csv: String = losses.iter().enumerate().map(|(e, l)| format!("{e},{l}\n")).collect();
    write_text(&out.join("loss.csv"), &csv)
}

fn inspect(dir: &Path) -> Result<()> {
    let manifest = read_manifest(dir.join(MANIFEST_FILE))?;
    let ds = read_dataset(dir)?;
    let cfg = &ds.config;
    println!(
        "wavelength_um {} na {} magnification {} camera_pixel_um {}",
        cfg.wavelength_um, cfg.na, cfg.magnification, cfg.camera_pixel_um
    );
    println!(
        "captures {} of {}x{}, upsample {} -> {}x{}",
        ds.len(),
        cfg.low_rows,
        cfg.low_cols,
        cfg.upsample,
        cfg.high_dims().0,
        cfg.high_dims().1
    );
    match ds.saturation {
        Some(s) => println!("saturation {s}"),
        None => println!("saturation none"),
    }
    println!("index,file,sx,sy,min,max,mean");
    for (n, (img, ill)) in ds.images.iter().zip(&manifest.illuminations).enumerate() {
        let (lo, hi) = img.min_max();
        println!(
            "{n},{},{},{},{lo},{hi},{}",
            ill.file.as_deref().unwrap_or(""),
            ill.sx,
            ill.sy,
            img.mean()
        );
    }
    Ok(())
}

fn write_phantom(size: usize, seed: u64, out: &Path) -> Result<()> {
    let reference = OpticalConfig::reference_setup();
    if size == 0 || !size.is_multiple_of(reference.upsample) {
        return Err(FpError::InvalidConfig(format!(
            "size must be a positive multiple of {}",
            reference.upsample
        )));
    }
    let low = size / reference.upsample;
    let cfg = OpticalConfig {
        low_rows: low,
        low_cols: low,
        ..reference
    };
    let manifest = Manifest::for_config(&cfg, None);
    manifest.config().validate()?;
    create_dir(out)?;
    let (amp, phase) = phantom(size, size, seed);
    write_real(&amp, out.join("amp.fpd"))?;
    write_real(&phase, out.join("phase.fpd"))?;
    write_text(&out.join("config.json"), &manifest.to_json()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            truth_amp,
            truth_phase,
            config,
            defocus_um,
            noise_sigma,
            saturation,
            seed,
            out,
        } => simulate(&truth_amp, &truth_phase, &config, defocus_um, noise_sigma, saturation, seed, &out),
        Command::Reconstruct {
            dataset,
            method,
            stages,
            epochs,
            iterations,
            tv_alpha1,
            tv_alpha2,
            zernike,
            lr_object,
            lr_pupil,
            lr_zern,
            seed,
            out,
        } => {
            let args = ReconArgs {
                method,
                stages,
                epochs,
                iterations,
                tv_alpha1,
                tv_alpha2,
                zernike,
                lr_object,
                lr_pupil,
                lr_zern,
                seed,
            };
            reconstruct(&dataset, &args, &out)
        }
        Command::Metrics { recon, truth } => {
            let (recon_grid, truth_grid) = (read_complex(&recon)?, read_complex(&truth)?);
            ensure_finite(&recon_grid, &recon.display().to_string())?;
            ensure_finite(&truth_grid, &truth.display().to_string())?;
            let m = metrics(&recon_grid, &truth_grid)?;
            println!("{m}");
            Ok(())
        }
        Command::Inspect { dataset } => inspect(&dataset),
        Command::Phantom { size, seed, out } => write_phantom(size, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
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
