//! The JSON run configuration.
//!
//! Parsing happens in two passes. `serde` checks the document shape (and
//! reports line and column on failure), then [`RunConfig::resolve`] checks
//! values, loads referenced files and builds library objects, naming the
//! offending field on failure. Nothing is written until both passes succeed.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use stresstomo_core::adjoint::LossKind;
use stresstomo_core::renderer::{
    sixstep_configs, sixteen_configs, table_2d_configs, CaptureSpec, ForwardModel, MarchSettings,
    Optics, PolariscopeConfig, RotationPose,
};
use stresstomo_core::stress::{Disk, FieldKind, NetArch, OccupancyMask, ScatteredKnn, StressField};
use stresstomo_core::tomo::study::{pose_grid, StudySetup};
use stresstomo_core::tomo::{ParamSpec, ReconConfig, ReconMode};
use stresstomo_core::{Mat3, Vec3};

use crate::io;

/// Environment variable that overrides the output directory (the `--out`
/// flag takes precedence over it).
pub const OUT_DIR_ENV: &str = "STRESSTOMO_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: line {line}, column {column}: {msg}", path.display())]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error(transparent)]
    File(#[from] io::IoError),
}

fn invalid<T>(field: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.into(),
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneConfig,
    #[serde(default)]
    pub optics: OpticsConfig,
    #[serde(default)]
    pub polariscope: PolariscopeSection,
    #[serde(default)]
    pub poses: PoseConfig,
    #[serde(default)]
    pub image: ImageConfig,
    #[serde(default)]
    pub march: MarchConfig,
    /// Standard deviation of additive Gaussian noise on rendered captures.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub recon: ReconSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub field: FieldSource,
    /// Defaults to the disks' cylinders, or the bounding box of a grid or
    /// point cloud. Required for the zero field.
    #[serde(default)]
    pub occupancy: Option<MaskConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Disks {
        disks: Vec<DiskConfig>,
    },
    /// An `NSTF1` file; relative paths resolve against the config file.
    Grid {
        path: PathBuf,
    },
    /// An `NSTP1` file.
    Points {
        path: PathBuf,
        #[serde(default)]
        k: Option<usize>,
    },
    Zero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub load: f64,
    pub radius: f64,
    pub thickness: f64,
    #[serde(default)]
    pub center: [f64; 3],
    /// Rotations about x, y, z in degrees, applied in that order.
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Cylinder {
        center: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        half_height: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub stress_optic: f64,
    pub wavelength: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            stress_optic: 1.0,
            wavelength: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Sixteen,
    Sixstep,
    Table2d,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEntry {
    pub alpha1_deg: f64,
    #[serde(default)]
    pub qwp1_deg: Option<f64>,
    #[serde(default)]
    pub qwp2_deg: Option<f64>,
    pub alpha2_deg: f64,
}

/// Either a preset or an explicit list of configurations.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolariscopeSection {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub configs: Option<Vec<ConfigEntry>>,
    pub source_intensity: f64,
}

impl Default for PolariscopeSection {
    fn default() -> Self {
        PolariscopeSection {
            preset: None,
            configs: None,
            source_intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub azimuth_count: usize,
    pub elevation_count: usize,
    pub azimuth_range_deg: f64,
    pub elevation_range_deg: f64,
    /// Explicit `(rho1, rho2)` pairs in degrees; replaces the grid.
    #[serde(default)]
    pub list_deg: Option<Vec<[f64; 2]>>,
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            azimuth_count: 16,
            elevation_count: 8,
            azimuth_range_deg: 180.0,
            elevation_range_deg: 90.0,
            list_deg: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
    pub view_extent: f64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            width: 32,
            height: 32,
            view_extent: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarchConfig {
    pub n_samples: usize,
    /// Stratified jitter keyed by the run seed.
    #[serde(default)]
    pub jitter: bool,
}

impl Default for MarchConfig {
    fn default() -> Self {
        MarchConfig {
            n_samples: 64,
            jitter: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamConfig {
    Voxel {
        dims: [usize; 3],
    },
    Coordnet {
        #[serde(default = "default_layers")]
        hidden_layers: usize,
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_freqs")]
        freqs: usize,
    },
}

fn default_layers() -> usize {
    NetArch::default().hidden_layers
}

fn default_width() -> usize {
    NetArch::default().width
}

fn default_freqs() -> usize {
    NetArch::default().freqs
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LossConfig {
    Intensity,
    Canonical,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    General,
    Linear,
    TwoStep,
}

impl ModeConfig {
    pub fn name(self) -> &'static str {
        match self {
            ModeConfig::General => "general",
            ModeConfig::Linear => "linear",
            ModeConfig::TwoStep => "two-step",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub parameterization: ParamConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub loss: LossConfig,
    pub mode: ModeConfig,
    pub holdout_fraction: f64,
    pub patience: usize,
    pub checkpoint_every: usize,
    /// Samples per ray during reconstruction; defaults to `march.n_samples`.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Lattice used to store a network reconstruction as a grid file.
    pub export_dims: [usize; 3],
}

impl Default for ReconSection {
    fn default() -> Self {
        ReconSection {
            parameterization: ParamConfig::Voxel { dims: [16; 3] },
            iterations: 2000,
            batch_size: 512,
            lr: 3e-4,
            lr_decay: 1.0,
            loss: LossConfig::Intensity,
            mode: ModeConfig::General,
            holdout_fraction: 0.05,
            patience: 2000,
            checkpoint_every: 100,
            n_samples: None,
            export_dims: [32; 3],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub ranges_deg: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub noise_sigma: f64,
    pub eval_samples: usize,
    /// Angular range of the wrap sweep, degrees.
    pub range_deg: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            ranges_deg: vec![45.0, 90.0, 180.0],
            coeffs: vec![0.1, 0.25, 0.5],
            noise_sigma: 0.01,
            eval_samples: 16,
            range_deg: 180.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub capture: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            capture: "capture.nstc".into(),
        }
    }
}

/// Everything a command needs, validated.
pub struct Resolved {
    pub seed: u64,
    pub field: StressField,
    pub spec: CaptureSpec,
    pub noise_sigma: f64,
    pub recon: ReconConfig,
    pub recon_mode: ModeConfig,
    pub export_dims: [usize; 3],
    pub study: StudySetup,
    pub study_ranges: Vec<f64>,
    pub study_coeffs: Vec<f64>,
    pub out_dir: PathBuf,
    pub capture_name: String,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let msg = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
            ConfigError::Syntax {
                path: path.into(),
                line: e.line(),
                column: e.column(),
                msg,
            }
        })
    }

    /// Validate every value and build the library objects. `base` is the
    /// directory relative input paths resolve against.
    pub fn resolve(&self, base: &Path, ov: &Overrides) -> Result<Resolved, ConfigError> {
        let seed = ov.seed.unwrap_or(self.seed);
        let optics = Optics {
            stress_optic: self.optics.stress_optic,
            wavelength: self.optics.wavelength,
        };
        if optics.validate().is_err() {
            return invalid(
                "optics",
                "stress_optic and wavelength must be positive and finite",
            );
        }
        let field = self.build_field(base)?;
        let configs = self.polariscope.build()?;
        let poses = self.poses.build()?;
        let img = &self.image;
        if img.width == 0 || img.height == 0 {
            return invalid("image", "width and height must be at least 1");
        }
        if !(img.view_extent > 0.0 && img.view_extent.is_finite()) {
            return invalid("image.view_extent", "must be positive");
        }
        if self.march.n_samples == 0 {
            return invalid("march.n_samples", "must be at least 1");
        }
        let march = MarchSettings {
            n_samples: self.march.n_samples,
            jitter_seed: self.march.jitter.then_some(seed),
        };
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise_sigma", "must be non-negative");
        }
        let spec = CaptureSpec {
            poses,
            configs: configs.clone(),
            width: img.width,
            height: img.height,
            view_extent: img.view_extent,
            march,
            optics,
            model: ForwardModel::General,
        };
        if let Err(e) = spec.validate_against(field.occupancy.bounds()) {
            return invalid("scene", e.to_string());
        }

        let r = &self.recon;
        let mode = ov.mode.unwrap_or(r.mode);
        let param = match r.parameterization {
            ParamConfig::Voxel { dims } => ParamSpec::Voxel { dims },
            ParamConfig::Coordnet {
                hidden_layers,
                width,
                freqs,
            } => {
                if hidden_layers == 0 || width == 0 {
                    return invalid(
                        "recon.parameterization",
                        "hidden_layers and width must be at least 1",
                    );
                }
                ParamSpec::CoordNet(NetArch {
                    hidden_layers,
                    width,
                    freqs,
                })
            }
        };
        let mut recon = ReconConfig::new(param, img.view_extent, optics);
        recon.iterations = r.iterations;
        recon.batch_size = r.batch_size;
        recon.lr = r.lr;
        recon.lr_decay = r.lr_decay;
        recon.loss = match r.loss {
            LossConfig::Intensity => LossKind::Intensity,
            LossConfig::Canonical => LossKind::Canonical,
        };
        recon.mode = match mode {
            ModeConfig::General => ReconMode::General,
            ModeConfig::Linear => ReconMode::Linear,
            ModeConfig::TwoStep => ReconMode::TwoStep,
        };
        recon.holdout_fraction = r.holdout_fraction;
        recon.patience = r.patience;
        recon.checkpoint_every = r.checkpoint_every;
        recon.seed = seed;
        recon.march = MarchSettings {
            n_samples: r.n_samples.unwrap_or(self.march.n_samples),
            jitter_seed: march.jitter_seed,
        };
        if let Err(e) = recon.validate() {
            return invalid("recon", e.to_string());
        }
        if r.export_dims.iter().any(|&d| d < 2) {
            return invalid("recon.export_dims", "must be at least 2 per axis");
        }

        let s = &self.study;
        if s.ranges_deg.is_empty() || s.ranges_deg.iter().any(|r| !(*r > 0.0 && *r <= 180.0)) {
            return invalid(
                "study.ranges_deg",
                "need at least one range, each in (0, 180]",
            );
        }
        if s.coeffs.is_empty() || s.coeffs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return invalid(
                "study.coeffs",
                "need at least one coefficient, each positive",
            );
        }
        if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
            return invalid("study.noise_sigma", "must be non-negative");
        }
        if s.eval_samples < 2 {
            return invalid("study.eval_samples", "must be at least 2");
        }
        if !(s.range_deg > 0.0 && s.range_deg <= 180.0) {
            return invalid("study.range_deg", "must lie in (0, 180]");
        }
        let study = StudySetup {
            configs,
            width: img.width,
            height: img.height,
            view_extent: img.view_extent,
            march,
            optics,
            n_azimuth: self.poses.azimuth_count,
            n_elevation: self.poses.elevation_count,
            range_deg: s.range_deg,
            noise_sigma: s.noise_sigma,
            noise_seed: seed,
            recon: recon.clone(),
            eval_samples: s.eval_samples,
        };

        let out_dir = match (&ov.out, std::env::var_os(OUT_DIR_ENV)) {
            (Some(o), _) => o.clone(),
            (None, Some(e)) if !e.is_empty() => PathBuf::from(e),
            _ => base.join(&self.output.dir),
        };
        if self.output.capture.is_empty() || self.output.capture.contains(['/', '\\']) {
            return invalid("output.capture", "must be a plain file name");
        }
        Ok(Resolved {
            seed,
            field,
            spec,
            noise_sigma: self.noise_sigma,
            recon,
            recon_mode: mode,
            export_dims: r.export_dims,
            study,
            study_ranges: s.ranges_deg.clone(),
            study_coeffs: s.coeffs.clone(),
            out_dir,
            capture_name: self.output.capture.clone(),
        })
    }

    fn build_field(&self, base: &Path) -> Result<StressField, ConfigError> {
        let explicit = match &self.scene.occupancy {
            Some(m) => Some(m.build()?),
            None => None,
        };
        let (kind, default_mask) = match &self.scene.field {
            FieldSource::Disks { disks } => {
                if disks.is_empty() {
                    return invalid("scene.field.disks", "need at least one disk");
                }
                let mut built = Vec::with_capacity(disks.len());
                for (i, d) in disks.iter().enumerate() {
                    built.push(d.build(&format!("scene.field.disks[{i}]"))?);
                }
                let f = StressField::disks(built);
                (f.kind, Some(f.occupancy))
            }
            FieldSource::Grid { path } => {
                let g = io::read_field(&base.join(path))?;
                let mask = OccupancyMask::Box {
                    min: g.min,
                    max: g.max,
                };
                (FieldKind::RegularGrid(g), Some(mask))
            }
            FieldSource::Points { path, k } => {
                let (pts, vals) = io::read_points(&base.join(path))?;
                let k = k.unwrap_or(ScatteredKnn::DEFAULT_K);
                if k == 0 {
                    return invalid("scene.field.k", "must be at least 1");
                }
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in &pts {
                    for i in 0..3 {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                let knn = ScatteredKnn::new(pts, vals, k).map_err(|e| ConfigError::Invalid {
                    field: "scene.field".into(),
                    msg: e.to_string(),
                })?;
                (
                    FieldKind::ScatteredKnn(knn),
                    Some(OccupancyMask::Box {
                        min: Vec3(lo),
                        max: Vec3(hi),
                    }),
                )
            }
            FieldSource::Zero => (FieldKind::AnalyticDisks(Vec::new()), None),
        };
        let Some(mask) = explicit.or(default_mask) else {
            return invalid("scene.occupancy", "required for the zero field");
        };
        Ok(StressField::new(kind, mask))
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3(a)
}

impl DiskConfig {
    fn build(&self, field: &str) -> Result<Disk, ConfigError> {
        let finite = [self.load, self.radius, self.thickness]
            .iter()
            .chain(&self.center)
            .chain(&self.rotation_deg)
            .all(|v| v.is_finite());
        if !finite || self.radius <= 0.0 || self.thickness <= 0.0 {
            return invalid(
                field,
                "radius and thickness must be positive, all values finite",
            );
        }
        let [rx, ry, rz] = self.rotation_deg.map(f64::to_radians);
        let mut d = Disk::new(self.load, self.radius, self.thickness);
        d.center = vec3(self.center);
        d.frame = Mat3::rot_z(rz) * Mat3::rot_y(ry) * Mat3::rot_x(rx);
        Ok(d)
    }
}

impl MaskConfig {
    fn build(&self) -> Result<OccupancyMask, ConfigError> {
        match *self {
            MaskConfig::Box { min, max } => {
                if (0..3).any(|i| !(min[i] < max[i])) {
                    return invalid("scene.occupancy", "box min must be below max");
                }
                Ok(OccupancyMask::Box {
                    min: vec3(min),
                    max: vec3(max),
                })
            }
            MaskConfig::Cylinder {
                center,
                axis,
                radius,
                half_height,
            } => {
                let a = vec3(axis);
                if !(a.norm() > 0.0 && radius > 0.0 && half_height > 0.0) {
                    return invalid(
                        "scene.occupancy",
                        "cylinder needs a nonzero axis and positive size",
                    );
                }
                Ok(OccupancyMask::Cylinder {
                    center: vec3(center),
                    axis: a.normalized(),
                    radius,
                    half_height,
                })
            }
        }
    }
}

impl PolariscopeSection {
    fn build(&self) -> Result<Vec<PolariscopeConfig>, ConfigError> {
        let src = self.source_intensity;
        if !(src > 0.0 && src.is_finite()) {
            return invalid("polariscope.source_intensity", "must be positive");
        }
        match (&self.preset, &self.configs) {
            (Some(_), Some(_)) => invalid("polariscope", "give either preset or configs, not both"),
            (Some(Preset::Sixteen) | None, None) => Ok(sixteen_configs(src)),
            (Some(Preset::Sixstep), None) => Ok(sixstep_configs(src)),
            (Some(Preset::Table2d), None) => Ok(table_2d_configs(src)),
            (None, Some(list)) => {
                if list.is_empty() {
                    return invalid("polariscope.configs", "need at least one configuration");
                }
                let mut out = Vec::with_capacity(list.len());
                for (i, c) in list.iter().enumerate() {
                    let cfg = PolariscopeConfig {
                        alpha1: c.alpha1_deg.to_radians(),
                        qwp1: c.qwp1_deg.map(f64::to_radians),
                        qwp2: c.qwp2_deg.map(f64::to_radians),
                        alpha2: c.alpha2_deg.to_radians(),
                        source_intensity: src,
                    };
                    if cfg.validate().is_err() {
                        return invalid(
                            &format!("polariscope.configs[{i}]"),
                            "angles must be finite",
                        );
                    }
                    out.push(cfg);
                }
                Ok(out)
            }
        }
    }
}

impl PoseConfig {
    fn build(&self) -> Result<Vec<RotationPose>, ConfigError> {
        if let Some(list) = &self.list_deg {
            if list.is_empty() || list.iter().flatten().any(|v| !v.is_finite()) {
                return invalid(
                    "poses.list_deg",
                    "need at least one pose, all angles finite",
                );
            }
            return Ok(list
                .iter()
                .map(|[a, b]| RotationPose::new(a.to_radians(), b.to_radians()))
                .collect());
        }
        if self.azimuth_count == 0 || self.elevation_count == 0 {
            return invalid(
                "poses",
                "azimuth_count and elevation_count must be at least 1",
            );
        }
        for (name, r) in [
            ("azimuth_range_deg", self.azimuth_range_deg),
            ("elevation_range_deg", self.elevation_range_deg),
        ] {
            if !(r > 0.0 && r <= 180.0) {
                return invalid(&format!("poses.{name}"), "must lie in (0, 180]");
            }
        }
        Ok(pose_grid(
            self.azimuth_count,
            self.elevation_count,
            self.azimuth_range_deg.to_radians(),
            self.elevation_range_deg.to_radians(),
        ))
    }
}
