use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use depth_orient::defocus::DefocusConfig;
use depth_orient::eval::{ground_sweep_cases, run_eval_sweep, write_report_csv};
use depth_orient::io::{read_depth_file, write_depth_file, DepthFormat, ReadOptions, WriteOptions};
use depth_orient::synth::{make_ground_truth_case, ScenePreset};
use depth_orient::{
    canonicalize_angle, estimate_orientation, estimate_video, DepthMap, Error, EstimateInput, GrayImage, Mode,
    RefineConfig,
};

mod output;

use output::{sig6, EstimateJson, FrameJson, VideoJson};

#[derive(Parser)]
#[command(name = "depth-orient", version, about = "Estimate image orientation from depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the orientation of one image or depth map.
    Estimate {
        /// Depth map (.pfm, .pgm) or image. PNG is read as an image unless
        /// `--mode depth` is given.
        #[arg(long)]
        input: PathBuf,
        /// Depth map for the image given as `--input`.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[command(flatten)]
        opts: EstimateOpts,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate every frame of a sequence and aggregate by majority vote.
    Video {
        #[arg(long)]
        frames: String,
        #[arg(long)]
        depth_frames: Option<String>,
        #[command(flatten)]
        opts: EstimateOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a labelled synthetic depth map.
    Synth {
        #[arg(long, default_value = "ground")]
        preset: String,
        #[arg(long, default_value = "128x128", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rotation: f64,
        /// Output depth file; the extension picks the format.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an accuracy sweep and write a CSV report.
    Eval {
        #[arg(long, default_value = "ground-sweep")]
        suite: String,
        #[arg(long, default_value_t = 5)]
        scenes: usize,
        #[arg(long, default_value = "128x128", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value = "0,5,10", value_delimiter = ',')]
        deltas: Vec<f64>,
        #[arg(long)]
        csv: PathBuf,
        #[command(flatten)]
        refine: RefineOpts,
    },
}

#[derive(Args, Clone)]
struct RefineOpts {
    /// Weight of the vertical depth-gradient term.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Weight of the left-right asymmetry term.
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Candidate spacing in degrees.
    #[arg(long, default_value_t = 10.0)]
    step: f64,
    /// Box edge for the gradient term, in pixels.
    #[arg(long = "box", default_value_t = 10)]
    box_size: usize,
    /// Min-max normalize both score lists before combining.
    #[arg(long)]
    normalize: bool,
}

impl RefineOpts {
    fn config(&self) -> RefineConfig {
        RefineConfig {
            alpha: self.alpha,
            beta: self.beta,
            step_deg: self.step,
            box_size: self.box_size,
            normalize_scores: self.normalize,
            ..RefineConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct EstimateOpts {
    #[arg(long, default_value = "auto")]
    mode: Mode,
    /// Depth inputs hold disparity (larger = nearer).
    #[arg(long)]
    invert_depth: bool,
    /// Depth represented by a PNG16 sample of 65535.
    #[arg(long, default_value_t = 1.0)]
    depth_scale: f64,
    /// Treat stored zeros as missing depth.
    #[arg(long)]
    zero_missing: bool,
    /// Report `runtime_ms` as 0 so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    refine: RefineOpts,
}

impl EstimateOpts {
    fn read_options(&self) -> ReadOptions {
        ReadOptions {
            depth_scale: self.depth_scale,
            zero_is_missing: self.zero_missing,
            invert_depth: false,
        }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

fn load_gray(path: &Path) -> anyhow::Result<GrayImage> {
    let img = image::open(path)
        .map_err(Error::from)
        .with_context(|| format!("reading image {}", path.display()))?
        .to_luma32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| (v as f64).clamp(0.0, 1.0)).collect();
    Ok(GrayImage::new(w, h, data)?)
}

fn load_depth(path: &Path, format: DepthFormat, opts: &EstimateOpts) -> anyhow::Result<DepthMap> {
    read_depth_file(path, format, &opts.read_options()).with_context(|| format!("reading depth {}", path.display()))
}

fn depth_format_of(path: &Path) -> anyhow::Result<DepthFormat> {
    DepthFormat::from_path(path)
        .ok_or_else(|| Error::InvalidArgument(format!("cannot tell the depth format of {}", path.display())).into())
}

/// Builds the pipeline input for one frame.
fn build_input(input: &Path, depth: Option<&Path>, opts: &EstimateOpts) -> anyhow::Result<EstimateInput> {
    let mut est = EstimateInput {
        mode: opts.mode,
        invert_depth: opts.invert_depth,
        ..Default::default()
    };
    match depth {
        Some(d) => {
            est.depth = Some(load_depth(d, depth_format_of(d)?, opts)?);
            if opts.mode != Mode::Depth {
                est.image = Some(load_gray(input)?);
            }
        }
        None => match DepthFormat::from_path(input) {
            Some(f @ (DepthFormat::Pfm | DepthFormat::Pgm16)) => est.depth = Some(load_depth(input, f, opts)?),
            Some(DepthFormat::Png16) if opts.mode == Mode::Depth => {
                est.depth = Some(load_depth(input, DepthFormat::Png16, opts)?)
            }
            _ => est.image = Some(load_gray(input)?),
        },
    }
    Ok(est)
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.into(), source: e })?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sorted_glob(pattern: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::InvalidArgument(format!("bad glob {pattern:?}: {e}")))?
        .collect::<Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no files match {pattern:?}")).into());
    }
    Ok(paths)
}

/// Exit status carried by a successful run.
enum Outcome {
    Done,
    Degenerate,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Estimate { input, depth, opts, out } => {
            let est = build_input(&input, depth.as_deref(), &opts)?;
            let result = estimate_orientation(&est, &opts.refine.config(), &DefocusConfig::default())?;
            emit(&EstimateJson::new(&result, !opts.no_timing), out.as_deref())?;
            Ok(if result.degenerate { Outcome::Degenerate } else { Outcome::Done })
        }
        Command::Video { frames, depth_frames, opts, out } => {
            let frame_paths = sorted_glob(&frames)?;
            let depth_paths = match &depth_frames {
                Some(g) => {
                    let d = sorted_glob(g)?;
                    if d.len() != frame_paths.len() {
                        bail!(Error::InvalidArgument(format!(
                            "{} frames but {} depth frames",
                            frame_paths.len(),
                            d.len()
                        )));
                    }
                    d.into_iter().map(Some).collect()
                }
                None => vec![None; frame_paths.len()],
            };
            let inputs = frame_paths
                .iter()
                .zip(&depth_paths)
                .map(|(f, d)| build_input(f, d.as_deref(), &opts))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let video = estimate_video(&inputs, &opts.refine.config(), &DefocusConfig::default())?;
            let degenerate = video.per_frame.iter().any(|r| r.degenerate);
            let json = VideoJson {
                frames: frame_paths
                    .iter()
                    .zip(&video.per_frame)
                    .map(|(p, r)| FrameJson {
                        file: p.display().to_string(),
                        estimate: EstimateJson::new(r, !opts.no_timing),
                    })
                    .collect(),
                aggregate_deg: sig6(video.aggregate_deg.degrees()),
                agreement: sig6(video.agreement),
            };
            emit(&json, out.as_deref())?;
            Ok(if degenerate { Outcome::Degenerate } else { Outcome::Done })
        }
        Command::Synth { preset, size, rotation, out } => {
            let preset: ScenePreset = preset.parse()?;
            let format = depth_format_of(&out)?;
            let rotation = canonicalize_angle(rotation)?;
            let (scene, cam) = preset.build(size.0, size.1);
            let (map, label) = make_ground_truth_case(&scene, &cam, rotation)?;
            let mut sidecar = write_depth_file(&map, &out, format, &WriteOptions::default())?;
            sidecar.label_deg = Some(label.degrees());
            sidecar.preset = Some(preset.name().to_string());
            sidecar.write(&out)?;
            eprintln!("wrote {} ({}x{}, label {label})", out.display(), size.0, size.1);
            Ok(Outcome::Done)
        }
        Command::Eval { suite, scenes, size, deltas, csv, refine } => {
            if suite != "ground-sweep" {
                bail!(Error::InvalidArgument(format!("unknown suite {suite:?}")));
            }
            let cases = ground_sweep_cases(scenes, size.0, size.1)?;
            let report = run_eval_sweep(&cases, &refine.config(), &deltas)?;
            let file = fs::File::create(&csv).map_err(|e| Error::Io { path: csv.clone(), source: e })?;
            write_report_csv(&report, std::io::BufWriter::new(file))?;
            for (d, a) in report.deltas.iter().zip(&report.accuracy) {
                eprintln!("accuracy@{d}: {a:.4}");
            }
            Ok(Outcome::Done)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Format { .. } | Error::Image(_) | Error::Csv(_) | Error::Json(_)) => 3,
        Some(Error::Degenerate(_) | Error::DegenerateScene) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Degenerate) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
