use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stresstomo_core::estimation::{estimate_2d, estimate_sixstep};
use stresstomo_core::renderer::{
    add_gaussian_noise, render_capture, sixstep_configs, table_2d_configs, CaptureSet,
};
use stresstomo_core::stress::{FieldKind, Grid, OccupancyMask, StressField};
use stresstomo_core::tomo::study::{angle_range_study, wrap_sweep_study};
use stresstomo_core::tomo::{
    common_configs, evaluate_field_mse, find_configs, reconstruct, Clock, ReconReport,
};

use crate::config::{ModeConfig, Overrides, Resolved, RunConfig, OUT_DIR_ENV};
use crate::io::{self, ParamMaps};
use crate::RayonExecutor;

#[derive(Debug, Parser)]
#[command(name = "stresstomo", version, about = "Photoelastic stress tomography")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured scene into a capture file.
    Render {
        #[command(flatten)]
        run: RunArgs,
        /// Also write PGM images of the first pose.
        #[arg(long)]
        preview: bool,
    },
    /// Fit a stress field to a capture file.
    Reconstruct {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to the capture written by `render` in the output directory.
        #[arg(long)]
        capture: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeConfig>,
    },
    /// Per-pixel closed-form parameter estimates, one map file per pose.
    Estimate {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long, value_enum, default_value = "sixstep")]
        scheme: Scheme,
        /// Defaults to the directory holding the capture.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two grid field files after removing their traces.
    Eval {
        field_a: PathBuf,
        field_b: PathBuf,
        /// Take the evaluation mask from this configuration's scene instead
        /// of the grid bounds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluation lattice points per axis.
        #[arg(long, default_value_t = 32)]
        n: usize,
    },
    /// Reconstruction error against angular coverage.
    StudyAngles {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Reconstruction error against the stress-optic coefficient.
    StudyWrap {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write every image of a capture file as an 8-bit PGM.
    ExportFringe {
        #[arg(long)]
        capture: PathBuf,
        /// Only this pose (index in order of appearance).
        #[arg(long)]
        pose: Option<usize>,
        /// Defaults to the directory holding the capture.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; takes precedence over the environment and the
    /// configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    #[value(name = "2d10")]
    TwoD10,
    Sixstep,
}

/// Seconds since the clock was made.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let exec = RayonExecutor::new(cli.threads).context("starting worker pool")?;
    match cli.command {
        Command::Render { run, preview } => {
            let r = load(&run, cli.seed, None)?;
            cmd_render(&r, preview, &exec)
        }
        Command::Reconstruct { run, capture, mode } => {
            let r = load(&run, cli.seed, mode)?;
            let path = capture.unwrap_or_else(|| r.out_dir.join(&r.capture_name));
            cmd_reconstruct(&r, &path, &exec)
        }
        Command::Estimate {
            capture,
            scheme,
            out,
        } => cmd_estimate(&capture, scheme, out),
        Command::Eval {
            field_a,
            field_b,
            config,
            n,
        } => {
            let mask = match config {
                Some(c) => Some(load_config(&c, &Overrides::default())?.field.occupancy),
                None => None,
            };
            print!("{}", cmd_eval(&field_a, &field_b, mask.as_ref(), n)?);
            Ok(())
        }
        Command::StudyAngles { run } => {
            let r = load(&run, cli.seed, None)?;
            cmd_study_angles(&r, &exec)
        }
        Command::StudyWrap { run } => {
            let r = load(&run, cli.seed, None)?;
            cmd_study_wrap(&r, &exec)
        }
        Command::ExportFringe { capture, pose, out } => cmd_export_fringe(&capture, pose, out),
    }
}

fn load(run: &RunArgs, seed: Option<u64>, mode: Option<ModeConfig>) -> Result<Resolved> {
    load_config(
        &run.config,
        &Overrides {
            seed,
            out: run.out.clone(),
            mode,
        },
    )
}

fn load_config(path: &Path, ov: &Overrides) -> Result<Resolved> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let r = cfg
        .resolve(base, ov)
        .with_context(|| format!("invalid configuration {}", path.display()))?;
    Ok(r)
}

/// `--out`, then the environment, then the directory holding `input`.
fn out_dir_near(out: Option<PathBuf>, input: &Path) -> PathBuf {
    out.or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
    .unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf())
}

fn cmd_render(r: &Resolved, preview: bool, exec: &RayonExecutor) -> Result<()> {
    let mut cap = render_capture(&r.field, &r.spec, exec)?;
    if r.noise_sigma > 0.0 {
        add_gaussian_noise(&mut cap, r.noise_sigma, r.seed);
    }
    let path = r.out_dir.join(&r.capture_name);
    io::write_capture(&path, &cap)?;
    eprintln!("wrote {} ({} images)", path.display(), cap.records.len());
    if preview {
        let n_cfg = r.spec.configs.len();
        for (k, rec) in cap.records.iter().take(n_cfg).enumerate() {
            let p = r.out_dir.join(format!("preview-cfg{k:02}.pgm"));
            let bytes = io::encode_pgm(
                cap.width,
                cap.height,
                &rec.image,
                rec.config.source_intensity,
            );
            io::write_bytes(&p, &bytes)?;
        }
        eprintln!("wrote {n_cfg} previews");
    }
    Ok(())
}

fn cmd_reconstruct(r: &Resolved, capture: &Path, exec: &RayonExecutor) -> Result<()> {
    let cap = io::read_capture(capture)?;
    let clock = WallClock::new();
    let (field, report) = reconstruct(&cap, &r.field.occupancy, &r.recon, exec, &clock)
        .map_err(|f| anyhow::anyhow!("{f}"))?;
    let mode = r.recon_mode.name();
    let grid = match field.kind {
        FieldKind::RegularGrid(g) => g,
        _ => {
            let (min, max) = field.occupancy.bounds();
            Grid::from_fn(r.export_dims, min, max, |p| field.query(p))?
        }
    };
    let field_path = r.out_dir.join(format!("field-{mode}.nstf"));
    io::write_field(&field_path, &grid)?;
    io::write_bytes(
        &r.out_dir.join(format!("recon-{mode}.log")),
        recon_log(mode, &report).as_bytes(),
    )?;
    let maps = ParamMaps {
        width: cap.width,
        height: cap.height,
        planes: report
            .residual_images
            .iter()
            .map(|(_, img)| img.clone())
            .collect(),
    };
    io::write_maps(&r.out_dir.join(format!("residuals-{mode}.nstm")), &maps)?;
    eprintln!(
        "{mode}: {} iterations, final loss {:.6e}, {:.1} s; wrote {}",
        report.iterations_run,
        report.final_loss,
        report.wall_clock_s,
        field_path.display()
    );
    Ok(())
}

/// The reconstruction log. Holds no timing so reruns are byte-identical.
pub fn recon_log(mode: &str, report: &ReconReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode={mode}");
    for c in &report.checkpoints {
        let _ = write!(
            s,
            "checkpoint iteration={} train_loss={:.9e}",
            c.iteration, c.train_loss
        );
        if let Some(h) = c.holdout_loss {
            let _ = write!(s, " holdout_loss={h:.9e}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "iterations_run={}", report.iterations_run);
    let _ = writeln!(s, "stopped_early={}", report.stopped_early);
    let _ = writeln!(s, "degenerate={}", report.degenerate);
    let _ = writeln!(s, "final_loss={:.9e}", report.final_loss);
    s
}

fn cmd_estimate(capture: &Path, scheme: Scheme, out: Option<PathBuf>) -> Result<()> {
    let cap = io::read_capture(capture)?;
    let configs = common_configs(&cap)?;
    let src = configs[0].source_intensity;
    let (wanted, name) = match scheme {
        Scheme::TwoD10 => (table_2d_configs(src), "2d10"),
        Scheme::Sixstep => (sixstep_configs(src), "sixstep"),
    };
    let pick = find_configs(&configs, &wanted, name)?;
    let dir = out_dir_near(out, capture);
    let views = cap.views();
    let npix = cap.width * cap.height;
    for (vi, (_, idx)) in views.iter().enumerate() {
        let image = |k: usize, px: usize| cap.records[idx[pick[k]]].image[px];
        let mut planes =
            vec![Vec::with_capacity(npix); if scheme == Scheme::Sixstep { 3 } else { 2 }];
        for px in 0..npix {
            match scheme {
                Scheme::TwoD10 => {
                    let e = estimate_2d(&std::array::from_fn(|k| image(k, px)));
                    planes[0].push(e.delta);
                    planes[1].push(e.theta);
                }
                Scheme::Sixstep => {
                    let p = estimate_sixstep(&std::array::from_fn(|k| image(k, px)), src).params;
                    planes[0].push(p.delta);
                    planes[1].push(p.theta);
                    planes[2].push(p.gamma);
                }
            }
        }
        let maps = ParamMaps {
            width: cap.width,
            height: cap.height,
            planes,
        };
        io::write_maps(
            &dir.join(format!("estimate-{name}-pose{vi:03}.nstm")),
            &maps,
        )?;
    }
    eprintln!(
        "wrote {} {name} map files to {}",
        views.len(),
        dir.display()
    );
    Ok(())
}

/// The seven `key=value` lines printed by `eval`.
pub fn cmd_eval(a: &Path, b: &Path, mask: Option<&OccupancyMask>, n: usize) -> Result<String> {
    let ga = io::read_field(a)?;
    let gb = io::read_field(b)?;
    if ga.dims != gb.dims {
        bail!("grid dimensions differ: {:?} vs {:?}", ga.dims, gb.dims);
    }
    if ga.min != gb.min || ga.max != gb.max {
        bail!("grid bounds differ");
    }
    let own_mask = OccupancyMask::Box {
        min: ga.min,
        max: ga.max,
    };
    let mask = mask.unwrap_or(&own_mask);
    let fa = StressField::new(FieldKind::RegularGrid(ga), mask.clone());
    let fb = StressField::new(FieldKind::RegularGrid(gb), mask.clone());
    let e = evaluate_field_mse(&fa, &fb, mask, n)?;
    let mut s = String::new();
    for (name, v) in ["sxx", "syy", "szz", "sxy", "syz", "szx"]
        .iter()
        .zip(e.components)
    {
        let _ = writeln!(s, "mse_{name}={v:e}");
    }
    let _ = writeln!(s, "mse_total={:e}", e.total);
    Ok(s)
}

fn cmd_study_angles(r: &Resolved, exec: &RayonExecutor) -> Result<()> {
    let rows = angle_range_study(&r.field, &r.study_ranges, &r.study, exec, &WallClock::new())
        .map_err(|f| anyhow::anyhow!("{f}"))?;
    let mut tsv = String::from("range_deg\tmse\tnormalized_l2\n");
    for row in &rows {
        let _ = writeln!(
            tsv,
            "{}\t{:e}\t{:e}",
            row.range_deg, row.mse, row.normalized_l2
        );
    }
    print!("{tsv}");
    io::write_bytes(&r.out_dir.join("study-angles.tsv"), tsv.as_bytes())?;
    Ok(())
}

fn cmd_study_wrap(r: &Resolved, exec: &RayonExecutor) -> Result<()> {
    let rows = wrap_sweep_study(&r.field, &r.study_coeffs, &r.study, exec, &WallClock::new())
        .map_err(|f| anyhow::anyhow!("{f}"))?;
    let mut tsv = String::from("coeff\tfringe_density\tmse\tnormalized_l2\tdegenerate\n");
    for row in &rows {
        let _ = writeln!(
            tsv,
            "{}\t{:.6}\t{:e}\t{:e}\t{}",
            row.coeff, row.fringe_density, row.mse, row.normalized_l2, row.degenerate
        );
    }
    print!("{tsv}");
    io::write_bytes(&r.out_dir.join("study-wrap.tsv"), tsv.as_bytes())?;
    Ok(())
}

fn cmd_export_fringe(capture: &Path, pose: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cap: CaptureSet = io::read_capture(capture)?;
    let views = cap.views();
    if let Some(p) = pose {
        if p >= views.len() {
            bail!("pose {p} out of range, capture has {} poses", views.len());
        }
    }
    let dir = out_dir_near(out, capture);
    let mut n = 0;
    for (vi, (_, idx)) in views.iter().enumerate() {
        if pose.is_some_and(|p| p != vi) {
            continue;
        }
        for (k, &ri) in idx.iter().enumerate() {
            let rec = &cap.records[ri];
            let bytes = io::encode_pgm(
                cap.width,
                cap.height,
                &rec.image,
                rec.config.source_intensity,
            );
            io::write_bytes(
                &dir.join(format!("fringe-pose{vi:03}-cfg{k:02}.pgm")),
                &bytes,
            )?;
            n += 1;
        }
    }
    eprintln!("wrote {n} images to {}", dir.display());
    Ok(())
}
