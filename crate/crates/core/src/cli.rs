//! `droughtcast` command line.
//!
//! Exit codes: 0 success, 1 usage or argument error, 2 data error (I/O,
//! format, empty data), 3 numeric divergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::cube::{out_of_time_split, split_point, summarize, PdsiCube};
use crate::error::{Error, Result};
use crate::forecast::ForecastCube;
use crate::harness::{self, evaluate, metrics_for, ReportRow, ReportTable};
use crate::metrics::MetricMap;
use crate::models::{train_model, ModelKind, TrainedModel};
use crate::render::{heatmap_svg, metric_map_svg, probability_field_svg, write_svg, HeatmapStyle, Rgb};
use crate::synth::generate;

#[derive(Debug, Parser)]
#[command(name = "droughtcast", version, about = "Drought forecasting on monthly PDSI grids")]
struct Cli {
    /// key=value config file (flags override it)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Synthetic-data seed and first experiment seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to DROUGHTCAST_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, repeatable: --set horizons=1,3
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Input {
    /// PDSI cube (.pdsc, or .csv with --dims)
    #[arg(long)]
    input: PathBuf,
    /// t_len,rows,cols for CSV input
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cube
    Synth {
        #[arg(long)]
        t_len: Option<usize>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        ar_coeff: Option<f64>,
    },
    /// Region summary statistics
    Stats {
        #[command(flatten)]
        input: Input,
    },
    /// Out-of-time train/test split into a directory
    Split {
        #[command(flatten)]
        input: Input,
    },
    /// Train one model on the training span
    Train {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
    },
    /// Forecast every reachable month of a cube
    Predict {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Median per-cell metrics of a forecast over the test months
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        forecast: PathBuf,
        /// Score every predicted month, not just the test span
        #[arg(long)]
        all_months: bool,
    },
    /// Experiment suites
    Ablate {
        #[arg(value_enum)]
        kind: AblateKind,
        /// Cubes; the region study takes several
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, value_parser = parse_dims)]
        dims: Option<[usize; 3]>,
        /// Horizon for the region study
        #[arg(long, default_value_t = 6)]
        horizon: usize,
    },
    /// SVG heatmap of a metric map or a forecast month
    Render {
        /// Metric map CSV (row,col,value)
        #[arg(long, conflicts_with = "forecast")]
        map: Option<PathBuf>,
        /// Forecast CSV; needs --input for the grid shape
        #[arg(long, requires = "input")]
        forecast: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse_dims)]
        dims: Option<[usize; 3]>,
        #[arg(long, default_value_t = 0)]
        month: usize,
        #[arg(long, default_value_t = 1)]
        class: usize,
        #[arg(long)]
        vmin: Option<f64>,
        #[arg(long)]
        vmax: Option<f64>,
        #[arg(long)]
        low: Option<String>,
        #[arg(long)]
        high: Option<String>,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblateKind {
    Horizon,
    Region,
    Crop,
    Zoom,
    Ensemble,
    Multiclass,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Argument(_) => 1,
        Error::Divergence(_) => 3,
        _ => 2,
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.or_else(|| std::env::var("DROUGHTCAST_THREADS").ok().and_then(|s| s.parse().ok()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cfg.apply_text(&text).map_err(|e| e.context(format!("config file {}", p.display())))?;
    }
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.synth.seed = s;
        let n = cfg.seeds.len().max(1) as u64;
        cfg.seeds = (s..s + n).collect();
    }
    if let Command::Synth { t_len, rows, cols, ar_coeff } = &cli.command {
        let sy = &mut cfg.synth;
        sy.t_len = t_len.unwrap_or(sy.t_len);
        sy.rows = rows.unwrap_or(sy.rows);
        sy.cols = cols.unwrap_or(sy.cols);
        sy.ar_coeff = ar_coeff.unwrap_or(sy.ar_coeff);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
    v.try_into().map_err(|_| "expected t_len,rows,cols".to_string())
}

fn load_cube(path: &Path, dims: Option<&[usize; 3]>) -> Result<PdsiCube> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    match (is_csv, dims) {
        (true, Some(d)) => PdsiCube::load_csv(path, d[0], d[1], d[2], 0),
        (true, None) => Err(Error::Argument("CSV input needs --dims t_len,rows,cols".into())),
        (false, _) => PdsiCube::load(path),
    }
}

fn need_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Argument("this command needs --out".into()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<file>.config.txt` next to a file output.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    println!("config_hash={}", cfg.hash());
    match &cli.command {
        Command::Synth { .. } => {
            let out = need_out(cli)?;
            let cube = generate(&cfg.synth)?;
            cube.save(out)?;
            write_text(&sidecar(out, ".config.txt"), &cfg.to_text())?;
            println!("wrote {} ({}x{}x{})", out.display(), cube.t_len(), cube.rows(), cube.cols());
        }
        Command::Stats { input } => {
            let cube = load_cube(&input.input, input.dims.as_ref())?;
            let scheme = cfg.scheme_for(&cube)?;
            let st = summarize(&cube, &scheme)?;
            println!("span_months={}", st.span_months);
            println!("pct_normal={:.3}", st.pct_normal);
            println!("pct_drought={:.3}", st.pct_drought);
        }
        Command::Split { input } => {
            let out = need_out(cli)?;
            let cube = load_cube(&input.input, input.dims.as_ref())?;
            let (train, test) = out_of_time_split(&cube, cfg.train_frac)?;
            ensure_dir(out)?;
            train.save(out.join("train.pdsc"))?;
            test.save(out.join("test.pdsc"))?;
            write_text(&out.join("config.txt"), &cfg.to_text())?;
            println!("train_months={} test_months={}", train.t_len(), test.t_len());
        }
        Command::Train { input, model, horizon } => {
            let out = need_out(cli)?;
            let kind: ModelKind = model.parse()?;
            let cube = load_cube(&input.input, input.dims.as_ref())?;
            let scheme = cfg.scheme_for(&cube)?;
            let labels = scheme.label(&cube);
            let split = split_point(cube.t_len(), cfg.train_frac)?;
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let (m, log) = train_model(kind, &cube, &labels, split, &cfg.settings_for(*horizon), seed)?;
            m.save(out)?;
            let mut log_text: String = log.iter().map(|l| format!("{l}\n")).collect();
            log_text.insert_str(0, &format!("model={kind} horizon={horizon} seed={seed} train_months={split}\n"));
            write_text(&sidecar(out, ".log"), &log_text)?;
            write_text(&sidecar(out, ".config.txt"), &cfg.to_text())?;
            print!("{log_text}");
        }
        Command::Predict { input, model_file } => {
            let out = need_out(cli)?;
            let cube = load_cube(&input.input, input.dims.as_ref())?;
            let model = TrainedModel::load(model_file)?;
            let scheme = cfg.scheme_for(&cube)?;
            let labels = scheme.label(&cube);
            let f = model.forecast(&cube, &labels)?;
            let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
            f.write_csv(std::io::BufWriter::new(file))?;
            println!("predicted_months={}", f.predicted_months().len());
        }
        Command::Evaluate { input, forecast, all_months } => {
            let out = need_out(cli)?;
            let cube = load_cube(&input.input, input.dims.as_ref())?;
            let scheme = cfg.scheme_for(&cube)?;
            let labels = scheme.label(&cube);
            let file = std::fs::File::open(forecast).map_err(|e| Error::io(forecast, e))?;
            let f = ForecastCube::read_csv(std::io::BufReader::new(file), cube.dims(), cube.start_month())?;
            let from = if *all_months { 0 } else { split_point(cube.t_len(), cfg.train_frac)? };
            let metrics = metrics_for(&scheme);
            let maps = evaluate(&f, &labels, from, &metrics)?;
            ensure_dir(out)?;
            let hash = cfg.hash();
            let mut table = ReportTable::default();
            for (m, map) in metrics.iter().zip(&maps) {
                let path = out.join(format!("map_{m}.csv"));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                map.write_csv(std::io::BufWriter::new(file))?;
                println!("{m}={}", map.median);
                table.rows.push(ReportRow {
                    experiment: "evaluate".into(),
                    model: forecast.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                    region: cfg.region.clone(),
                    horizon: None,
                    seed: None,
                    crop: None,
                    area: None,
                    metric: *m,
                    value: map.median,
                    config_hash: hash.clone(),
                });
            }
            table.save_csv(out.join("report.csv"))?;
            write_text(&out.join("config.txt"), &cfg.to_text())?;
        }
        Command::Ablate { kind, input, dims, horizon } => {
            let out = need_out(cli)?;
            let cubes: Vec<PdsiCube> = input.iter().map(|p| load_cube(p, dims.as_ref())).collect::<Result<_>>()?;
            let table = match kind {
                AblateKind::Region => {
                    let regions: Vec<(String, PdsiCube)> = input
                        .iter()
                        .zip(cubes)
                        .map(|(p, c)| (p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), c))
                        .collect();
                    harness::region_table(&regions, &cfg, *horizon)?
                }
                other => {
                    let [cube] = cubes.as_slice() else {
                        return Err(Error::Argument("this study takes exactly one --input".into()));
                    };
                    match other {
                        AblateKind::Horizon => harness::horizon_sweep(cube, &cfg)?,
                        AblateKind::Crop => harness::crop_study(cube, &cfg)?,
                        AblateKind::Zoom => harness::zoom_study(cube, &cfg)?,
                        AblateKind::Ensemble => harness::seed_ensemble(cube, &cfg)?,
                        AblateKind::Multiclass => harness::multiclass_study(cube, &cfg)?,
                        AblateKind::Region => unreachable!(),
                    }
                }
            };
            ensure_dir(out)?;
            table.save_csv(out.join("report.csv"))?;
            write_text(&out.join("train.log"), &table.log.iter().map(|l| format!("{l}\n")).collect::<String>())?;
            write_text(&out.join("config.txt"), &cfg.to_text())?;
            print!("{}", table.to_csv_string());
        }
        Command::Render { map, forecast, input, dims, month, class, vmin, vmax, low, high, title } => {
            let out = need_out(cli)?;
            let mut style = HeatmapStyle { vmin: *vmin, vmax: *vmax, title: title.clone(), ..Default::default() };
            if let Some(c) = low {
                style.low = c.parse::<Rgb>()?;
            }
            if let Some(c) = high {
                style.high = c.parse::<Rgb>()?;
            }
            let svg = match (map, forecast, input) {
                (Some(p), _, _) => {
                    let file = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
                    metric_map_svg(&MetricMap::read_csv(std::io::BufReader::new(file))?, &style)?
                }
                (None, Some(fp), Some(ip)) => {
                    let cube = load_cube(ip, dims.as_ref())?;
                    let file = std::fs::File::open(fp).map_err(|e| Error::io(fp, e))?;
                    let f = ForecastCube::read_csv(std::io::BufReader::new(file), cube.dims(), cube.start_month())?;
                    probability_field_svg(&f, *month, *class, &style)?
                }
                (None, None, Some(ip)) => {
                    let cube = load_cube(ip, dims.as_ref())?;
                    if *month >= cube.t_len() {
                        return Err(Error::Argument(format!("month {month} outside cube")));
                    }
                    let vals: Vec<f64> = cube.month(*month).iter().map(|&v| v as f64).collect();
                    heatmap_svg(cube.rows(), cube.cols(), &vals, &style)?
                }
                _ => return Err(Error::Argument("render needs --map, --input, or --forecast with --input".into())),
            };
            write_svg(&svg, out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
