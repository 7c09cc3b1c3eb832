use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dynimage::coeffs::{coeffs, ArpVariant, CoeffKind};
use dynimage::io::{
    flow_encode, is_png_compatible, load_sequence, write_image, write_tensor, FlowEncoding,
    TensorData, TensorFile,
};
use dynimage::layer::{gradcheck, MeanPoolLayer, RankPoolLayer};
use dynimage::metrics::{bench, fuse_scores, ranking_accuracy, BenchConfig, ScoreMatrix};
use dynimage::pooling::{di_export, di_preprocess, pool, PoolingMethod};
use dynimage::segment::{mdi, Merge, WindowLength, WindowSpec};
use dynimage::solver::SolverConfig;
use dynimage::{Error, FrameSequence, Modality, Tensor};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dynimage", version, about = "Summarize frame sequences as dynamic images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool a frame sequence into one or more dynamic images.
    Pool(PoolArgs),
    /// Print per-frame pooling coefficients as CSV.
    Coeffs(CoeffsArgs),
    /// Pairwise ranking accuracy of pooled summaries.
    RankAcc(RankAccArgs),
    /// Compare the rank pooling layer's backward pass with finite differences.
    Gradcheck(GradcheckArgs),
    /// Throughput of pooling methods on synthetic sequences.
    Bench(BenchArgs),
    /// Quantize optical flow to bytes.
    FlowEncode(FlowEncodeArgs),
    /// Average per-stream class scores.
    Fuse(FuseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Approximate rank pooling.
    Arp,
    /// Exact rank pooling.
    Rp,
    Mean,
    Max,
    /// Motion history image.
    Mhi,
    /// Motion energy image.
    Mei,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Regularizer weight of the ranking objective.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    step_size: f64,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            step_size: self.step_size,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
        }
    }
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// Coefficient variant for approximate rank pooling (avg or direct).
    #[arg(long, default_value = "avg")]
    variant: ArpVariant,
    /// Motion threshold on [0,1] luminance.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Motion history duration.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

fn pooling_method(
    method: MethodArg,
    variant: ArpVariant,
    args: &MethodArgs,
) -> Result<PoolingMethod, Error> {
    Ok(match method {
        MethodArg::Arp => PoolingMethod::Arp(variant),
        MethodArg::Rp => {
            let cfg = args.solver.config();
            cfg.validate()?;
            PoolingMethod::RankExact(cfg)
        }
        MethodArg::Mean => PoolingMethod::Mean,
        MethodArg::Max => PoolingMethod::Max,
        MethodArg::Mhi => {
            check_positive("threshold", args.threshold)?;
            check_positive("duration", args.duration)?;
            PoolingMethod::Mhi {
                threshold: args.threshold,
                duration: args.duration,
            }
        }
        MethodArg::Mei => {
            check_positive("threshold", args.threshold)?;
            PoolingMethod::Mei {
                threshold: args.threshold,
            }
        }
    })
}

fn check_positive(name: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("--{name} must be positive, got {v}")))
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Directory of frames (PNG/PPM/PGM/JPEG) or a (T,C,H,W) tensor file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "rgb")]
    modality: Modality,
    /// Flow clipping range in pixels, used to decode flow bytes.
    #[arg(long, default_value_t = 20.0)]
    clip: f64,
    /// Take the square root of pixel values before pooling.
    #[arg(long)]
    sqrt: bool,
}

impl InputArgs {
    fn load(&self) -> Result<FrameSequence, Error> {
        let flow = FlowEncoding::new(self.clip)?;
        let seq = load_sequence(&self.input, self.modality, &flow)?;
        if self.sqrt {
            di_preprocess(&seq)
        } else {
            Ok(seq)
        }
    }
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Arp)]
    method: MethodArg,
    #[command(flatten)]
    options: MethodArgs,
    /// Window length in frames, or "full" for one image over the whole sequence.
    #[arg(long, default_value = "10")]
    window: WindowLength,
    #[arg(long, default_value_t = 6)]
    stride: usize,
    /// How to merge per-window images: none, max, mean, arp-avg, arp-direct.
    #[arg(long, default_value = "max")]
    temp_pool: Merge,
    /// Also write the unscaled f64 result next to each exported image.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct CoeffsArgs {
    #[arg(long)]
    length: usize,
    /// avg, direct, or beta.
    #[arg(long, default_value = "avg")]
    variant: CoeffKind,
}

#[derive(Debug, Args)]
struct RankAccArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Methods to evaluate, comma separated.
    #[arg(long = "methods", value_enum, value_delimiter = ',', default_value = "arp,rp")]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayerArg {
    Rankpool,
    Mean,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Frame shape, e.g. 3x4x4.
    #[arg(long, default_value = "3x4x4", value_parser = parse_shape)]
    shape: Shape,
    #[arg(long, default_value_t = 7)]
    frames: usize,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "avg")]
    variant: ArpVariant,
    #[arg(long, value_enum, default_value_t = LayerArg::Rankpool)]
    layer: LayerArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 150)]
    frames: usize,
    #[arg(long, default_value = "3x32x32", value_parser = parse_shape)]
    shape: Shape,
    #[arg(long, default_value_t = 4)]
    sequences: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "methods", value_enum, value_delimiter = ',', default_value = "arp,rp")]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Debug, Args)]
struct FlowEncodeArgs {
    /// Tensor file holding flow of shape (2,H,W) or (T,2,H,W), in pixels.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    clip: f64,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Score CSV files, one per stream: a header of class labels, then one row per sample.
    #[arg(long = "input", short, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Per-stream weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Frame dimensions written as `CxHxW` (any rank).
#[derive(Debug, Clone)]
struct Shape(Vec<usize>);

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad shape '{s}': {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.contains(&0) {
        return Err(format!("shape '{s}' has a zero dimension"));
    }
    Ok(Shape(dims))
}

/// Reals in CSV output: 17 significant digits.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Image(_) | Error::Format(_) | Error::EmptyInput(_) => EXIT_IO,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Precondition(_)
        | Error::Dimension { .. }
        | Error::Domain(_)
        | Error::Contract(_) => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut out = io::stdout().lock();
    let result = match cli.command {
        Command::Pool(a) => cmd_pool(&a, &mut out),
        Command::Coeffs(a) => cmd_coeffs(&a, &mut out),
        Command::RankAcc(a) => cmd_rank_acc(&a, &mut out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, &mut out),
        Command::Bench(a) => cmd_bench(&a, &mut out),
        Command::FlowEncode(a) => cmd_flow_encode(&a, &mut out),
        Command::Fuse(a) => cmd_fuse(&a, &mut out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}

type CmdResult = Result<u8, Error>;

fn cmd_pool(a: &PoolArgs, out: &mut impl Write) -> CmdResult {
    let method = pooling_method(a.method, a.options.variant, &a.options)?;
    let spec = WindowSpec {
        window: a.window,
        stride: a.stride,
        merge: a.temp_pool,
    };
    spec.validate()?;
    FlowEncoding::new(a.input.clip)?;

    let seq = a.input.load()?;
    let result = mdi(&seq, &spec, &method)?;
    let images = result.images();
    fs::create_dir_all(&a.output)?;
    for (k, di) in images.iter().enumerate() {
        let stem = if images.len() == 1 {
            "dynamic".to_string()
        } else {
            format!("window_{k:04}")
        };
        let bytes = di_export(di)?;
        let ext = if is_png_compatible(&bytes) { "png" } else { "dynt" };
        let path = a.output.join(format!("{stem}.{ext}"));
        write_image(&bytes, &path)?;
        if a.raw {
            write_tensor(&di.tensor, &a.output.join(format!("{stem}.f64.dynt")))?;
        }
        writeln!(
            out,
            "{} frames {}-{} method {} dims {:?}",
            path.display(),
            di.source_range.0,
            di.source_range.1,
            di.method,
            di.tensor.dims()
        )?;
    }
    Ok(0)
}

fn cmd_coeffs(a: &CoeffsArgs, out: &mut impl Write) -> CmdResult {
    let c = coeffs(a.length, a.variant)?;
    writeln!(out, "t,value")?;
    for (t, v) in c.values().iter().enumerate() {
        writeln!(out, "{},{}", t + 1, real(*v))?;
    }
    Ok(0)
}

fn summary_for(seq: &FrameSequence, method: &PoolingMethod) -> Result<Tensor, Error> {
    Ok(pool(seq, method)?.tensor)
}

fn cmd_rank_acc(a: &RankAccArgs, out: &mut impl Write) -> CmdResult {
    let methods = a
        .methods
        .iter()
        .map(|&m| pooling_method(m, a.method.variant, &a.method))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = a.input.load()?;
    writeln!(out, "method,accuracy,pairs_correct,pairs_total")?;
    for method in &methods {
        let d = summary_for(&seq, method)?;
        if d.dims() != seq.frame_dims() {
            return Err(Error::Precondition(format!(
                "{} changes the frame shape and cannot be scored",
                method.kind()
            )));
        }
        let r = ranking_accuracy(&d, &seq)?;
        writeln!(
            out,
            "{},{},{},{}",
            method.kind(),
            real(r.accuracy),
            r.pairs_correct,
            r.pairs_total
        )?;
    }
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut impl Write) -> CmdResult {
    let report = match a.layer {
        LayerArg::Rankpool => gradcheck(
            &mut RankPoolLayer::new(a.variant),
            &a.shape.0,
            a.frames,
            a.epsilon,
            a.seed,
        )?,
        LayerArg::Mean => gradcheck(
            &mut MeanPoolLayer::default(),
            &a.shape.0,
            a.frames,
            a.epsilon,
            a.seed,
        )?,
    };
    writeln!(out, "result,max_rel_error,entries")?;
    writeln!(
        out,
        "{},{},{}",
        if report.pass { "pass" } else { "fail" },
        real(report.max_rel_error),
        report.entries
    )?;
    Ok(if report.pass { 0 } else { EXIT_NUMERICAL })
}

fn cmd_bench(a: &BenchArgs, out: &mut impl Write) -> CmdResult {
    let methods = a
        .methods
        .iter()
        .map(|&m| pooling_method(m, a.method.variant, &a.method))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = BenchConfig {
        frames: a.frames,
        frame_dims: a.shape.0.clone(),
        sequences: a.sequences,
        trials: a.trials,
        seed: a.seed,
    };
    let reports = bench(&methods, &cfg)?;
    writeln!(out, "method,frames_per_second,wall_seconds,sequences")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{}",
            r.method,
            real(r.frames_per_second),
            real(r.wall_seconds),
            r.sequences
        )?;
    }
    Ok(0)
}

fn cmd_flow_encode(a: &FlowEncodeArgs, out: &mut impl Write) -> CmdResult {
    let enc = FlowEncoding::new(a.clip)?;
    let file = TensorFile::read(&a.input)?;
    let values: Vec<f64> = match &file.data {
        TensorData::F64(v) => v.clone(),
        TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        TensorData::U8(_) => {
            return Err(Error::Format("flow input must hold real displacements".into()))
        }
    };
    let channels = match file.dims.len() {
        3 => file.dims[0],
        4 => file.dims[1],
        _ => 0,
    };
    if channels != 2 {
        return Err(Error::Format(format!(
            "flow input needs dims (2,H,W) or (T,2,H,W), got {:?}",
            file.dims
        )));
    }
    let flow = Tensor::new(file.dims.clone(), values)?;
    let bytes = flow_encode(&flow, &enc)?;
    TensorFile::new(file.dims.clone(), TensorData::U8(bytes.data().to_vec()))?.write(&a.output)?;
    writeln!(out, "{} dims {:?} clip {}", a.output.display(), file.dims, a.clip)?;
    Ok(0)
}

struct ScoreTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_scores(path: &Path) -> Result<ScoreTable, Error> {
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("score '{f}': {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(ScoreTable { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

fn cmd_fuse(a: &FuseArgs, out: &mut impl Write) -> CmdResult {
    let tables = a
        .inputs
        .iter()
        .map(|p| read_scores(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = &tables[0];
    for (t, path) in tables.iter().zip(&a.inputs).skip(1) {
        if t.header != first.header || t.rows.len() != first.rows.len() {
            return Err(Error::Format(format!(
                "{} does not match the classes and sample count of {}",
                path.display(),
                a.inputs[0].display()
            )));
        }
    }
    let mut fused = Vec::with_capacity(first.rows.len());
    for i in 0..first.rows.len() {
        let m = ScoreMatrix::new(tables.iter().map(|t| t.rows[i].clone()).collect())?;
        if m.classes() != first.header.len() {
            return Err(Error::Format(format!(
                "sample {} has {} scores for {} classes",
                i + 1,
                m.classes(),
                first.header.len()
            )));
        }
        fused.push(fuse_scores(&m, a.weights.as_deref())?);
    }

    let mut text = String::new();
    text.push_str(&first.header.join(","));
    text.push('\n');
    for row in fused {
        let cells: Vec<String> = row.into_iter().map(real).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    match &a.output {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}
