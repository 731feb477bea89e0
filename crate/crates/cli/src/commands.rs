use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nhsplat::data_io::{
    load_pose_file, synthesize_dataset, write_hdr_image, Dataset, RawMeta, SceneSpec, Split, Supervision, DATASET_FILE,
    GT_CLOUD_FILE, TOY_SCENE_JSON,
};
use nhsplat::optim::{self, EvalOptions, EvalReport, MetricRecord, TrainConfig, TrainObserver};
use nhsplat::photometry::tonemap_preview;
use nhsplat::raster::{self, RenderOptions};
use nhsplat::scene::{load_cloud, save_cloud, GaussianCloud};
use nhsplat::sh::{ColorModel, LuminanceSpace};
use nhsplat::{Error, Result};

use crate::manifest::{
    read_config, sha256_hex, Layout, RunManifest, CHECKPOINT_DIR, CLOUD_FILE, MANIFEST_FILE, METRICS_FILE, SCENE_FILE,
};
use crate::{EvalArgs, Mode, ModelArg, RenderArgs, SpaceArg, SynthArgs, TrainArgs};

/// Sizes the global pool; returns the thread count in effect.
pub fn init_threads(requested: Option<usize>) -> Result<usize> {
    if let Some(n) = requested {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(rayon::current_num_threads())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn is_non_empty_dir(path: &Path) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let mut entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    Ok(entries.next().is_some())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec_text = if a.spec == "toy" {
        TOY_SCENE_JSON.to_string()
    } else {
        let path = Path::new(&a.spec);
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    };
    let spec: SceneSpec =
        serde_json::from_str(&spec_text).map_err(|e| Error::config(format!("scene spec {}: {e}", a.spec)))?;
    let raw = RawMeta {
        pattern: a.pattern.parse()?,
        black_level: a.black_level,
        white_level: a.white_level,
    };
    if is_non_empty_dir(&a.out)? && !a.force {
        return Err(Error::config(format!(
            "{} already exists and is not empty; pass --force to replace it",
            a.out.display()
        )));
    }
    let supervision = match a.mode {
        Mode::Hdr => Supervision::HdrRgb,
        Mode::Bayer => Supervision::BayerRaw,
    };
    let (dataset, gt) = synthesize_dataset(&spec, supervision, raw)?;

    // only what a previous synth run could have written
    for split in [Split::Train, Split::Test] {
        let dir = a.out.join(split.dir_name());
        if dir.is_dir() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    dataset.save(&a.out)?;
    save_cloud(&gt, &a.out.join(GT_CLOUD_FILE))?;
    write_file(&a.out.join(SCENE_FILE), spec_text.as_bytes())?;
    println!(
        "wrote {} train + {} test views ({}x{}, {}) to {}",
        dataset.train.len(),
        dataset.test.len(),
        spec.width,
        spec.height,
        supervision,
        a.out.display()
    );
    Ok(())
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => read_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.color_model {
        cfg.color_model = match v {
            ModelArg::Entangled => ColorModel::Entangled,
            ModelArg::Decomposed => ColorModel::Decomposed,
        };
    }
    if let Some(v) = a.sh_degree {
        cfg.sh_degree = v;
    }
    if let Some(v) = a.luminance_space {
        cfg.luminance_space = Some(match v {
            SpaceArg::Log => LuminanceSpace::Log,
            SpaceArg::Linear => LuminanceSpace::Linear,
        });
    }
    if let Some(v) = a.lambda {
        cfg.loss.lambda = v;
    }
    if let Some(v) = a.mu {
        cfg.loss.mu = v;
    }
    if let Some(v) = a.lr_luminance {
        cfg.lr.luminance = v;
    }
    if let Some(v) = a.lr_sh {
        cfg.lr.sh = v;
    }
    if let Some(v) = a.lr_position {
        // keep the decay ratio
        let ratio = cfg.lr.position_final / cfg.lr.position_init;
        cfg.lr.position_init = v;
        cfg.lr.position_final = v * ratio;
    }
    if let Some(v) = a.init_count {
        cfg.init_count = v;
    }
    if a.densify {
        cfg.densify.enabled = true;
    }
    if a.sh_warmup {
        cfg.sh_warmup = true;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if let Some(v) = a.background {
        cfg.background = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct RunFiles {
    metrics: BufWriter<File>,
    metrics_path: PathBuf,
    checkpoints: PathBuf,
}

impl TrainObserver for RunFiles {
    fn record(&mut self, record: &MetricRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("records serialize");
        let path = &self.metrics_path;
        writeln!(self.metrics, "{line}").map_err(|e| Error::io(path, e))?;
        self.metrics.flush().map_err(|e| Error::io(path, e))
    }

    fn checkpoint(&mut self, iter: usize, cloud: &GaussianCloud) -> Result<()> {
        save_cloud(cloud, &self.checkpoints.join(format!("iter_{iter:06}.nhgc")))
    }
}

pub fn train(a: &TrainArgs, threads: usize) -> Result<()> {
    let cfg = resolve_config(a)?;
    let dataset = Dataset::load(&a.data)?;
    if a.out.join(MANIFEST_FILE).exists() && !a.force {
        return Err(Error::config(format!(
            "{} already holds a run; pass --force to replace it",
            a.out.display()
        )));
    }
    let checkpoints = a.out.join(CHECKPOINT_DIR);
    create_dir(&checkpoints)?;

    let scene_path = a.data.join(SCENE_FILE);
    let scene_spec_sha256 = if scene_path.is_file() {
        Some(sha256_hex(&std::fs::read(&scene_path).map_err(|e| Error::io(&scene_path, e))?))
    } else {
        None
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        threads,
        data_dir: a.data.display().to_string(),
        supervision: dataset.supervision,
        train_views: dataset.train.len(),
        scene_spec_sha256,
        config: cfg.clone(),
        layout: Layout::default(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&a.out.join(MANIFEST_FILE), json.as_bytes())?;

    let metrics_path = a.out.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut files = RunFiles {
        metrics: BufWriter::new(file),
        metrics_path,
        checkpoints,
    };
    let outcome = optim::train(&dataset, &cfg, &mut files)?;
    save_cloud(&outcome.cloud, &a.out.join(CLOUD_FILE))?;
    match outcome.records.last() {
        Some(r) => println!(
            "{} iterations, {} gaussians, last loss {:.5}, training mu-PSNR {:.2} dB",
            r.iter, r.n_gaussians, r.loss, r.mu_psnr
        ),
        None => println!("0 iterations; wrote the initial cloud"),
    }
    Ok(())
}

/// Binary PPM of an 8-bit RGB raster.
fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let cloud = load_cloud(&a.cloud, None)?;
    let frames = load_pose_file(&a.poses)?;
    create_dir(&a.out)?;
    let opts = RenderOptions {
        background: a.background.unwrap_or([0.0; 3]),
        sh_degree: None,
    };
    for (file, cam) in &frames {
        let stem = Path::new(file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::format(&a.poses, format!("frame file `{file}` has no name")))?;
        let image = raster::render(&cloud, cam, &opts)?.image;
        write_hdr_image(&image, &a.out.join(format!("{stem}.pfm")))?;
        if a.preview {
            let ppm = encode_ppm(image.width(), image.height(), &tonemap_preview(&image));
            write_file(&a.out.join(format!("{stem}.ppm")), &ppm)?;
        }
    }
    println!("rendered {} views to {}", frames.len(), a.out.display());
    Ok(())
}

fn format_report(report: &EvalReport) -> String {
    let raw = report.mean.raw_psnr.is_some();
    let mut out = format!("{:<12} {:>9} {:>9} {:>7}", "view", "mu-PSNR", "lin-PSNR", "SSIM");
    if raw {
        out += &format!(" {:>9}", "RAW-PSNR");
    }
    out.push('\n');
    for m in report.views.iter().chain(std::iter::once(&report.mean)) {
        out += &format!("{:<12} {:>9.3} {:>9.3} {:>7.4}", m.name, m.mu_psnr, m.linear_psnr, m.ssim);
        if let Some(r) = m.raw_psnr {
            out += &format!(" {r:>9.3}");
        }
        out.push('\n');
    }
    out
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let split: Split = a.split.parse()?;
    if !a.data.join(DATASET_FILE).is_file() {
        return Err(Error::io(
            a.data.join(DATASET_FILE),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no dataset here"),
        ));
    }
    let dataset = Dataset::load(&a.data)?;
    let views = dataset.views(split);
    if views.is_empty() {
        return Err(Error::config(format!("dataset has no `{}` views", a.split)));
    }
    let cloud = load_cloud(&a.cloud, None)?;
    let opts = EvalOptions {
        mu: a.mu,
        background: a.background.unwrap_or([0.0; 3]),
        ..EvalOptions::default()
    };
    let report = optim::evaluate(&cloud, views, &opts)?;
    print!("{}", format_report(&report));
    let json_path = a.json.clone().unwrap_or_else(|| {
        a.cloud
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval_{}.json", split.dir_name()))
    });
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&json_path, json.as_bytes())
}
