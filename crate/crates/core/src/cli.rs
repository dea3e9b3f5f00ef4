//! Command-line front end. `paqe <command> --help` lists the options of each
//! command; a TOML file given with `--config` supplies defaults that flags
//! override.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::codec::{read_meta_file, read_stream, write_artifacts, ArtifactPaths, EncoderConfig};
use crate::enhance::{enhance_sequence, ModelTriple, PostMethod};
use crate::error::{Error, Result};
use crate::frame_io::{read_raw_video, write_raw_video, Frame420};
use crate::ilf::{encode_with_ilf, run_ilf_sweep, sweep_frames_csv, write_decisions, IlfMode};
use crate::metrics::{compare, plot_csv, psnr, read_rd_csv, report_csv, write_rd_csv};
use crate::synth::synthetic_corpus;
use crate::training::{
    generate_dataset, load_dataset, save_dataset, train_triple, write_loss_curve, DatasetConfig, Profile,
    TrainSchedule,
};

#[derive(Parser, Debug)]
#[command(name = "paqe", version, about = "Prediction-aware quality enhancement for a toy video codec")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (dataset selection, initialization, sampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode a raw 4:2:0 10-bit video with the toy codec.
    Encode(EncodeArgs),
    /// Encode videos at several qps and store training frames.
    Dataset(DatasetArgs),
    /// Train the intra, inter and prediction-unaware models.
    Train(TrainArgs),
    /// Post-process a decoded stream with trained models.
    Enhance(EnhanceArgs),
    /// BD-rate, ΔPSNR and runtime report from RD tables.
    Report(ReportArgs),
    /// Encode at several qps under several in-loop modes.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub w: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub qp: Option<u8>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Stream name; defaults to the input file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub ilf_mode: Option<String>,
    #[arg(long)]
    pub models: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Raw videos; each file is one video named after its stem.
    #[arg(long = "video")]
    pub videos: Vec<PathBuf>,
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub h: Option<usize>,
    /// Generate this many synthetic clips instead of reading videos.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Frames per synthetic clip.
    #[arg(long, default_value_t = 17)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Path of `dataset.jsonl`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// Videos used for validation; defaults to the last video name.
    #[arg(long = "held-out")]
    pub held_out: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ProfileArg {
    Paper,
    Desk,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Desk => Profile::Desk,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, ValueEnum)]
pub enum MethodArg {
    /// Coding-type dispatch with the prediction signal.
    #[default]
    Aware,
    /// The prediction-unaware model on every frame.
    Unaware,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    /// Stream prefix: reads `<stream>.recon.yuv`, `.pred.yuv`, `.meta.jsonl`.
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub w: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Aware)]
    pub method: MethodArg,
    /// Write per-frame PSNR against `--orig` to `<stream>.psnr.csv`.
    #[arg(long, requires = "orig")]
    pub report: bool,
    #[arg(long)]
    pub orig: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// RD tables (label, qp, rate_bits, quality); each file is one sequence.
    #[arg(long = "rd", required = true)]
    pub rd: Vec<PathBuf>,
    #[arg(long, default_value = "REF")]
    pub anchor: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub w: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Comma-separated modes; all of them by default.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub qps: Vec<u8>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
}

/// Settings that may come from a configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub encoder: EncoderConfig,
    pub dataset: DatasetConfig,
    pub profile: Option<Profile>,
    /// Overrides on top of the profile's training schedule.
    pub train: toml::Table,
    pub ilf_mode: Option<String>,
    pub models: Option<PathBuf>,
    /// qps of sweeps; the dataset qps when empty.
    pub qps: Vec<u8>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn profile(&self) -> Profile {
        self.profile.unwrap_or(Profile::Desk)
    }

    /// Profile schedule with the `[train]` overrides and the seed applied.
    pub fn schedule(&self) -> Result<TrainSchedule> {
        let base = toml::Table::try_from(self.profile().schedule()).expect("schedule serializes");
        let mut merged = base;
        for (k, v) in &self.train {
            merged.insert(k.clone(), v.clone());
        }
        let mut s: TrainSchedule = merged
            .try_into()
            .map_err(|e| Error::Config(format!("[train]: {e}")))?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let mut d = self.dataset.clone();
        if let Some(seed) = self.seed {
            d.seed = seed;
        }
        d
    }

    pub fn sweep_qps(&self) -> Vec<u8> {
        if self.qps.is_empty() {
            self.dataset.qps.clone()
        } else {
            self.qps.clone()
        }
    }

    fn echo(&self) {
        match toml::to_string(self) {
            Ok(t) => info!("effective configuration:\n{t}"),
            Err(e) => info!("effective configuration not printable: {e}"),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match cli.command {
        Command::Encode(a) => cmd_encode(cfg, a),
        Command::Dataset(a) => cmd_dataset(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Enhance(a) => cmd_enhance(cfg, a),
        Command::Report(a) => cmd_report(a),
        Command::Sweep(a) => cmd_sweep(cfg, a),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "stream".into())
}

fn read_video(p: &Path, w: usize, h: usize) -> Result<Vec<Frame420>> {
    if !p.exists() {
        return Err(Error::MissingFile(p.to_path_buf()));
    }
    read_raw_video(p, w, h)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_models(path: Option<&PathBuf>) -> Result<ModelTriple> {
    let dir = path.ok_or_else(|| Error::Config("--models is required for this mode".into()))?;
    ModelTriple::load(dir)
}

pub fn cmd_encode(mut cfg: RunConfig, a: EncodeArgs) -> Result<()> {
    if let Some(qp) = a.qp {
        cfg.encoder.base_qp = qp;
    }
    if a.ilf_mode.is_some() {
        cfg.ilf_mode = a.ilf_mode.clone();
    }
    if a.models.is_some() {
        cfg.models = a.models.clone();
    }
    cfg.encoder.validate()?;
    let mode: IlfMode = cfg.ilf_mode.as_deref().unwrap_or("ref").parse()?;
    cfg.echo();
    let models = if mode == IlfMode::Ref {
        None
    } else {
        Some(load_models(cfg.models.as_ref())?)
    };
    let frames = read_video(&a.input, a.w, a.h)?;
    let name = a.name.clone().unwrap_or_else(|| stem(&a.input));
    create_dir(&a.out)?;
    let res = encode_with_ilf(
        &frames,
        &cfg.encoder,
        mode,
        models.as_ref().map(|m| m as &dyn crate::codec::FrameEnhancer),
    )?;
    let paths = write_artifacts(&res.encoded, &a.out, &name)?;
    if mode != IlfMode::Ref {
        write_decisions(&res.decisions, a.out.join(format!("{name}.ilf.csv")))?;
    }
    info!(
        "encoded {} frames, {} bits, recon at {}",
        frames.len(),
        res.encoded.total_bits(),
        paths.recon.display()
    );
    Ok(())
}

pub fn cmd_dataset(cfg: RunConfig, a: DatasetArgs) -> Result<()> {
    cfg.encoder.validate()?;
    let dcfg = cfg.dataset_config();
    if dcfg.qps.is_empty() {
        return Err(Error::Config("dataset needs at least one qp".into()));
    }
    let videos: Vec<(String, Vec<Frame420>)> = match (a.synthetic, a.videos.is_empty()) {
        (Some(n), true) => {
            let (w, h) = (a.w.unwrap_or(64), a.h.unwrap_or(64));
            synthetic_corpus(n, w, h, a.frames, dcfg.seed)
        }
        (None, false) => {
            let (Some(w), Some(h)) = (a.w, a.h) else {
                return Err(Error::Config("--w and --h are required with --video".into()));
            };
            a.videos
                .iter()
                .map(|p| Ok((stem(p), read_video(p, w, h)?)))
                .collect::<Result<_>>()?
        }
        _ => return Err(Error::Config("give either --video files or --synthetic".into())),
    };
    cfg.echo();
    let ds = generate_dataset(&videos, &cfg.encoder, &dcfg)?;
    save_dataset(&ds, &a.out)?;
    info!(
        "{} intra and {} inter frames written to {}",
        ds.intra.len(),
        ds.inter.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(p) = a.profile {
        cfg.profile = Some(p.into());
    }
    let schedule = cfg.schedule()?;
    cfg.echo();
    let ds = load_dataset(&a.manifest)?;
    let held_out = if a.held_out.is_empty() {
        let mut names: Vec<String> = ds.all().entries.iter().map(|e| e.video.clone()).collect();
        names.sort();
        names.dedup();
        if names.len() < 2 {
            return Err(Error::Config("need at least two videos to hold one out for validation".into()));
        }
        vec![names.pop().expect("non-empty")]
    } else {
        a.held_out.clone()
    };
    let (train, val) = ds.split_videos(&held_out);
    info!("validating on {}", held_out.join(", "));
    create_dir(&a.out)?;
    let out = train_triple(&train, &val, cfg.profile(), &schedule)?;
    out.models.save(&a.out)?;
    for (name, curve) in [("intra", &out.intra), ("inter", &out.inter), ("unaware", &out.unaware)] {
        write_loss_curve(curve, a.out.join(format!("{name}.loss.csv")))?;
    }
    Ok(())
}

pub fn cmd_enhance(mut cfg: RunConfig, a: EnhanceArgs) -> Result<()> {
    if a.models.is_some() {
        cfg.models = a.models.clone();
    }
    let models = load_models(cfg.models.as_ref())?;
    let dir = a.stream.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = a
        .stream
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Config("--stream needs a file name prefix".into()))?;
    let paths = ArtifactPaths::new(&dir, &name);
    for p in [&paths.recon, &paths.meta] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let method = match a.method {
        MethodArg::Aware => PostMethod::Aware,
        MethodArg::Unaware => PostMethod::Unaware,
    };
    let recon = read_stream(&paths.recon, a.w, a.h)?;
    let meta = read_meta_file(&paths.meta)?;
    let pred = if method == PostMethod::Aware {
        if !paths.pred.exists() {
            return Err(Error::MissingFile(paths.pred.clone()));
        }
        Some(read_stream(&paths.pred, a.w, a.h)?)
    } else {
        None
    };
    let orig = match (&a.orig, a.report) {
        (Some(p), true) => Some(read_video(p, a.w, a.h)?),
        _ => None,
    };
    let enhanced = enhance_sequence(&recon, pred.as_deref(), &meta, &models, method)?;
    let out_path = dir.join(format!("{name}.enhanced.yuv"));
    write_raw_video(&enhanced, &out_path)?;
    if let Some(orig) = orig {
        if orig.len() != recon.len() {
            return Err(Error::Contract(format!(
                "original has {} frames, stream has {}",
                orig.len(),
                recon.len()
            )));
        }
        let mut csv = String::from("poc,psnr_recon_y,psnr_enhanced_y\n");
        for ((r, e), o) in recon.iter().zip(&enhanced).zip(&orig) {
            let _ = writeln!(csv, "{},{},{}", r.poc, psnr(&r.y, &o.y)?, psnr(&e.y, &o.y)?);
        }
        let p = dir.join(format!("{name}.psnr.csv"));
        fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    }
    info!("wrote {}", out_path.display());
    Ok(())
}

pub fn cmd_report(a: ReportArgs) -> Result<()> {
    let tables = a
        .rd
        .iter()
        .map(|p| Ok((stem(p), read_rd_csv(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = compare(&tables, &a.anchor)?;
    create_dir(&a.out)?;
    let report = report_csv(&rows);
    let rp = a.out.join("report.csv");
    fs::write(&rp, &report).map_err(|e| Error::io(&rp, e))?;
    let pp = a.out.join("plot.csv");
    fs::write(&pp, plot_csv(&tables)).map_err(|e| Error::io(&pp, e))?;
    print!("{report}");
    Ok(())
}

pub fn cmd_sweep(mut cfg: RunConfig, a: SweepArgs) -> Result<()> {
    if a.models.is_some() {
        cfg.models = a.models.clone();
    }
    if !a.qps.is_empty() {
        cfg.qps = a.qps.clone();
    }
    cfg.encoder.validate()?;
    let modes: Vec<IlfMode> = if a.modes.is_empty() {
        IlfMode::ALL.to_vec()
    } else {
        a.modes.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let qps = cfg.sweep_qps();
    if qps.is_empty() {
        return Err(Error::Config("sweep needs at least one qp".into()));
    }
    cfg.echo();
    let models = if modes.iter().all(|m| *m == IlfMode::Ref) {
        None
    } else {
        Some(load_models(cfg.models.as_ref())?)
    };
    let frames = read_video(&a.input, a.w, a.h)?;
    let name = a.name.clone().unwrap_or_else(|| stem(&a.input));
    let res = run_ilf_sweep(
        &frames,
        &cfg.encoder,
        models.as_ref().map(|m| m as &dyn crate::codec::FrameEnhancer),
        &qps,
        &modes,
    )?;
    create_dir(&a.out)?;
    let fp = a.out.join(format!("{name}.sweep.csv"));
    fs::write(&fp, sweep_frames_csv(&res.frames)).map_err(|e| Error::io(&fp, e))?;
    write_rd_csv(&res.rd, a.out.join(format!("{name}.rd.csv")))
}
