use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use olm::config::{parse_config_text, parse_connectivity, ConfigOverrides, PipelineConfig};
use olm::eval::{evaluate_dirs, EvalConfig, EvalMode};
use olm::localization::Keep;
use olm::miner::{mine_frequent, FrequentItemset};
use olm::parts::part_mask;
use olm::pgm::{write_pgm, GrayMap};
use olm::pipeline::{localize, parts_from, BoxRecord, Localization, PartsRecord};
use olm::tensor::read_olmf;
use olm::transactions::read_transactions_text;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NO_OBJECT: u8 = 4;

#[derive(Parser)]
#[command(name = "olm", version, about = "Unsupervised object localization by frequent-itemset mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit object boxes as JSON.
    Localize {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        flags: PipelineFlags,
        /// Also write the normalized support map as PGM (a directory in batch mode).
        #[arg(long)]
        support_map: Option<PathBuf>,
    },
    /// Emit the normalized support map as an 8-bit PGM.
    Saliency {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Emit part locations as JSON.
    Parts {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        flags: PipelineFlags,
        /// Write one PGM mask per part into this directory.
        #[arg(long)]
        mask_dir: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Keep only the first N predicted boxes per image.
        #[arg(long)]
        max_boxes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine frequent itemsets from a transaction text file.
    Mine {
        /// One transaction per line, space-separated integer item ids.
        #[arg(long)]
        transactions: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Corloc,
    Saliency,
}

#[derive(Clone, Copy, ValueEnum)]
enum KeepArg {
    Largest,
    All,
}

#[derive(Args)]
struct InputArgs {
    /// OLMF file, or a directory of `.olmf` files for batch mode.
    #[arg(long)]
    features: PathBuf,
    /// Original image size as WxH.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    /// JSON manifest giving each OLMF file's image width and height.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output file (single input) or directory (batch). Defaults to stdout for JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for batch mode.
    #[arg(long)]
    workers: Option<usize>,
    /// Exit with status 4 when no object is found.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct PipelineFlags {
    /// key=value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_connectivity_arg)]
    connectivity: Option<olm::localization::Connectivity>,
    #[arg(long, value_enum)]
    keep: Option<KeepArg>,
    #[arg(long)]
    max_boxes: Option<usize>,
    /// Number of parts.
    #[arg(long)]
    k: Option<usize>,
    /// Part side as a fraction of the shorter object box side.
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated tensor names to merge.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<String>>,
    #[arg(long)]
    support_weight: Option<f64>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err(format!("size must be positive, got `{s}`"));
    }
    Ok((w, h))
}

fn parse_connectivity_arg(s: &str) -> Result<olm::localization::Connectivity, String> {
    parse_connectivity(s).map_err(|e| e.to_string())
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<olm::Error> for CliError {
    fn from(e: olm::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

impl PipelineFlags {
    fn resolve(&self, defaults: PipelineConfig) -> CliResult<PipelineConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Some(parse_config_text(&text).map_err(|e| CliError::Usage(e.to_string()))?)
            }
            None => None,
        };
        let flags = ConfigOverrides {
            alpha: self.alpha,
            connectivity: self.connectivity,
            keep: self.keep.map(|k| match k {
                KeepArg::Largest => Keep::Largest,
                KeepArg::All => Keep::All,
            }),
            max_boxes: self.max_boxes,
            parts_k: self.k,
            lambda: self.lambda,
            seed: self.seed,
            layers: self.layers.clone(),
            support_weight: self.support_weight,
        };
        PipelineConfig::resolve(defaults, file.as_ref(), &flags)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Deserialize)]
struct ManifestEntry {
    olmf: String,
    width: usize,
    height: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Manifest {
    Wrapped { images: Vec<ManifestEntry> },
    List(Vec<ManifestEntry>),
}

struct Job {
    path: PathBuf,
    name: String,
    img_w: usize,
    img_h: usize,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl InputArgs {
    fn batch(&self) -> bool {
        self.features.is_dir()
    }

    fn jobs(&self) -> CliResult<Vec<Job>> {
        let paths = if self.batch() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&self.features)
                .map_err(|e| CliError::Data(format!("{}: {e}", self.features.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "olmf"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::Data(format!(
                    "no .olmf files in {}",
                    self.features.display()
                )));
            }
            if self.out.is_none() {
                return Err(CliError::Usage("batch mode needs --out <dir>".into()));
            }
            paths
        } else {
            vec![self.features.clone()]
        };

        let manifest: Vec<ManifestEntry> = match &self.manifest {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                match serde_json::from_str(&text)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                {
                    Manifest::Wrapped { images } => images,
                    Manifest::List(images) => images,
                }
            }
            None => Vec::new(),
        };
        if self.size.is_none() && self.manifest.is_none() {
            return Err(CliError::Usage("image size required: pass --size WxH or --manifest".into()));
        }

        paths
            .into_iter()
            .map(|path| {
                let (img_w, img_h) = match self.size {
                    Some(size) => size,
                    None => {
                        let name = file_name(&path);
                        let entry = manifest
                            .iter()
                            .find(|e| file_name(Path::new(&e.olmf)) == name)
                            .ok_or_else(|| {
                                CliError::Data(format!("{name} is not listed in the manifest"))
                            })?;
                        (entry.width, entry.height)
                    }
                };
                Ok(Job {
                    name: file_stem(&path),
                    path,
                    img_w,
                    img_h,
                })
            })
            .collect()
    }

    /// Where a per-image output goes: the `--out` file, a file in the
    /// `--out` directory, or stdout.
    fn target(&self, name: &str, ext: &str) -> Option<PathBuf> {
        let out = self.out.as_ref()?;
        Some(if self.batch() {
            out.join(format!("{name}.{ext}"))
        } else {
            out.clone()
        })
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable output");
    bytes.push(b'\n');
    bytes
}

fn emit(target: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match target {
        Some(path) => Ok(olm::io::write_atomic(path, bytes)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Per-image outcome of a batch: whether an object was found.
type JobOutcome = Result<bool, String>;

fn run_jobs<F>(input: &InputArgs, config: &PipelineConfig, work: F) -> CliResult<ExitCode>
where
    F: Fn(&Job, Localization) -> CliResult<()> + Sync,
{
    let jobs = input.jobs()?;
    if input.batch() {
        ensure_dir(input.out.as_ref().expect("checked in jobs()"))?;
    }
    let run = |job: &Job| -> JobOutcome {
        let result = (|| {
            let stacks = read_olmf(&job.path)?;
            let loc = localize(&stacks, config, job.img_h, job.img_w)?;
            let found = !loc.no_object_found();
            work(job, loc)?;
            Ok(found)
        })();
        result.map_err(|e: CliError| match e {
            CliError::Usage(m) | CliError::Data(m) => format!("{}: {m}", job.path.display()),
        })
    };
    let outcomes: Vec<JobOutcome> = match input.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };

    let mut failed = false;
    let mut missing = false;
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        match outcome {
            Ok(true) => {}
            Ok(false) => {
                eprintln!("warning: no object found in {}", job.name);
                missing = true;
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                failed = true;
            }
        }
    }
    Ok(if failed {
        ExitCode::from(EXIT_DATA)
    } else if missing && input.strict {
        ExitCode::from(EXIT_NO_OBJECT)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_localize(input: InputArgs, flags: PipelineFlags, support_map: Option<PathBuf>) -> CliResult<ExitCode> {
    let config = flags.resolve(PipelineConfig::default())?;
    if input.batch() {
        if let Some(dir) = &support_map {
            ensure_dir(dir)?;
        }
    }
    run_jobs(&input, &config, |job, loc| {
        let record = BoxRecord {
            image: job.name.clone(),
            no_object_found: loc.no_object_found(),
            boxes: loc.boxes.clone(),
            config: Some(config.clone()),
        };
        emit(input.target(&job.name, "json").as_deref(), &to_json(&record))?;
        if let Some(path) = &support_map {
            let path = if input.batch() {
                path.join(format!("{}.pgm", job.name))
            } else {
                path.clone()
            };
            write_pgm(&loc.saliency(), path)?;
        }
        Ok(())
    })
}

fn cmd_saliency(input: InputArgs, flags: PipelineFlags) -> CliResult<ExitCode> {
    let config = flags.resolve(PipelineConfig::default())?;
    if input.out.is_none() {
        return Err(CliError::Usage("saliency needs --out".into()));
    }
    run_jobs(&input, &config, |job, loc| {
        let target = input.target(&job.name, "pgm").expect("--out checked");
        write_pgm(&loc.saliency(), target)?;
        Ok(())
    })
}

fn cmd_parts(input: InputArgs, flags: PipelineFlags, mask_dir: Option<PathBuf>) -> CliResult<ExitCode> {
    let config = flags.resolve(PipelineConfig::for_parts())?;
    if let Some(dir) = &mask_dir {
        ensure_dir(dir)?;
    }
    run_jobs(&input, &config, |job, loc| {
        let parts = parts_from(&loc, &config)?;
        if let Some(dir) = &mask_dir {
            for part in &parts {
                let mask = part_mask(
                    (part.center_x, part.center_y),
                    part.side,
                    job.img_h,
                    job.img_w,
                )?;
                let path = dir.join(format!("{}_part{}.pgm", job.name, part.index));
                write_pgm(&GrayMap::from_mask(&mask), path)?;
            }
        }
        let record = PartsRecord {
            image: job.name.clone(),
            parts,
            config: Some(config.clone()),
        };
        emit(input.target(&job.name, "json").as_deref(), &to_json(&record))
    })
}

fn cmd_eval(pred: PathBuf, gt: PathBuf, mode: ModeArg, max_boxes: Option<usize>, out: Option<PathBuf>) -> CliResult<ExitCode> {
    let mode = match mode {
        ModeArg::Corloc => EvalMode::Corloc,
        ModeArg::Saliency => EvalMode::Saliency,
    };
    let config = EvalConfig {
        max_boxes,
        ..EvalConfig::new(mode)
    };
    let report = evaluate_dirs(&pred, &gt, config)?;
    emit(out.as_deref(), &to_json(&report))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct MineReport {
    transactions: usize,
    items: usize,
    alpha: f64,
    max_len: Option<usize>,
    itemsets: Vec<FrequentItemset>,
}

fn cmd_mine(transactions: PathBuf, alpha: f64, max_len: Option<usize>, out: Option<PathBuf>) -> CliResult<ExitCode> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CliError::Usage(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let db = read_transactions_text(&transactions)?;
    let itemsets = mine_frequent(&db, alpha, max_len)?;
    let report = MineReport {
        transactions: db.len(),
        items: db.item_universe_size(),
        alpha,
        max_len,
        itemsets,
    };
    emit(out.as_deref(), &to_json(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Localize {
            input,
            flags,
            support_map,
        } => cmd_localize(input, flags, support_map),
        Command::Saliency { input, flags } => cmd_saliency(input, flags),
        Command::Parts {
            input,
            flags,
            mask_dir,
        } => cmd_parts(input, flags, mask_dir),
        Command::Eval {
            pred,
            gt,
            mode,
            max_boxes,
            out,
        } => cmd_eval(pred, gt, mode, max_boxes, out),
        Command::Mine {
            transactions,
            alpha,
            max_len,
            out,
        } => cmd_mine(transactions, alpha, max_len, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
