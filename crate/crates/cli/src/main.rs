//! `fsstn` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a computation or IO failure, 2 on a usage
//! error. `SQZ_THREADS` caps the worker thread count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fsstn::io::{
    read_signal_file, write_matrix_csv, write_matrix_file, write_ridges_csv, write_signal_csv,
    write_table_csv, MatrixData,
};
use fsstn::metrics::{
    emd_to_ideal, normalized_energy_curve, optimize_sigma, parse_grid, EmdOptions,
};
use fsstn::pipeline::{
    d_sweep, modes_from_ridges, prepare_input, ridges_of, score_reconstruction, transform,
    Method, SigmaChoice, TransformConfig, TransformOutput,
};
use fsstn::ridge::RidgeConfig;
use fsstn::signal::{add_noise, make_paper_signal, ChirpRingdown, IdealTF, SampledSignal};
use fsstn::stft::StftConfig;

#[derive(Parser)]
#[command(name = "fsstn", version, about = "Higher-order synchrosqueezing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a time-frequency representation.
    Transform(TransformArgs),
    /// Extract ridges and reconstruct modes.
    Reconstruct(ReconstructArgs),
    /// Rényi entropy, normalized energy and EMD evaluations.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinSignal {
    /// Two-mode test signal f = f1 + f2.
    Paper,
    F1,
    F2,
    /// Synthetic chirp then ring-down strain, 3441 samples at 4096 Hz.
    GwSurrogate,
}

#[derive(Args)]
struct InputArgs {
    /// Built-in signal.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    signal: Option<BuiltinSignal>,
    /// Signal CSV: (time, value) or (time, re, im).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sample rate of the benchmark signals.
    #[arg(long, default_value_t = 1024.0)]
    fs: f64,
    /// Length of the benchmark signals.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Zero-pad to the next power of two before analysis.
    #[arg(long)]
    pad_pow2: bool,
}

#[derive(Args)]
struct TransformOpts {
    #[arg(long, default_value = "fsst4")]
    method: String,
    /// Window width in seconds, or `auto`.
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// Grid `start:step:stop` searched by `--sigma auto`.
    #[arg(long, default_value = fsstn::pipeline::DEFAULT_SIGMA_GRID)]
    sigma_grid: String,
    /// Threshold relative to the largest STFT magnitude.
    #[arg(long, default_value_t = 1e-3)]
    gamma_rel: f64,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long, default_value_t = 1)]
    hop: usize,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    opts: TransformOpts,
    /// Input SNR in dB of added white Gaussian noise.
    #[arg(long, allow_hyphen_values = true)]
    noise_snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Magnitude matrix in TFR1 format.
    #[arg(long)]
    output: PathBuf,
    /// Complex matrix in TFR1 format (not available for rm).
    #[arg(long)]
    complex_output: Option<PathBuf>,
    /// Magnitude matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Diagnostics as CSV key/value pairs.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    opts: TransformOpts,
    #[arg(long, allow_hyphen_values = true)]
    noise_snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of modes.
    #[arg(long = "K", short = 'K')]
    k: usize,
    /// Band half width in bins around each ridge.
    #[arg(long, default_value_t = 0)]
    d: usize,
    /// Range `a..b` (inclusive) of half widths to sweep.
    #[arg(long)]
    d_sweep: Option<String>,
    /// Largest ridge move between frames, in bins.
    #[arg(long, default_value_t = RidgeConfig::new(1).jump)]
    jump: usize,
    /// Reference mode CSVs for SNR reporting; built-in signals supply their own.
    #[arg(long)]
    reference: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Rényi entropy curves and sigma_opt per noise level.
    #[arg(long)]
    renyi: bool,
    /// Normalized energy curves of every method.
    #[arg(long)]
    energy: bool,
    /// EMD to the ideal representation per noise level and mode.
    #[arg(long)]
    emd: bool,
    #[arg(long, default_value = "rm,fsst2,fsst3,fsst4")]
    methods: String,
    #[arg(long, default_value = fsstn::pipeline::DEFAULT_SIGMA_GRID)]
    sigma_grid: String,
    /// Comma separated input SNRs in dB; `inf` for noise free.
    #[arg(long, default_value = "inf,5,0,-5", allow_hyphen_values = true)]
    snr_levels: String,
    /// Noise realizations per level for `--emd`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Window width for `--energy` and `--emd`, or `auto`.
    #[arg(long, default_value = "auto")]
    sigma: String,
    #[arg(long, default_value_t = 1e-3)]
    gamma_rel: f64,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Compute(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<fsstn::Error> for Failure {
    fn from(e: fsstn::Error) -> Self {
        Failure::Compute(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Parses a value that the user supplied, mapping failures to usage errors.
fn parsed<T>(what: &str, r: fsstn::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Usage(format!("{what}: {e}")))
}

struct Loaded {
    clean: SampledSignal,
    /// Per-mode references and the ideal representation, when known.
    modes: Vec<SampledSignal>,
    ideal: Option<IdealTF>,
}

fn load(input: &InputArgs) -> CliResult<Loaded> {
    if let Some(path) = &input.input {
        let clean = read_signal_file(path)
            .with_context(|| format!("reading {}", path.display()))?;
        return Ok(Loaded {
            clean,
            modes: Vec::new(),
            ideal: None,
        });
    }
    let builtin = input.signal.expect("clap requires --signal or --input");
    if let BuiltinSignal::GwSurrogate = builtin {
        let clean = ChirpRingdown::default().strain(3441, 4096.0)?;
        return Ok(Loaded {
            clean,
            modes: Vec::new(),
            ideal: None,
        });
    }
    if !(input.fs > 0.0) || input.n < 2 {
        return usage("--fs must be positive and --n at least 2");
    }
    let p = make_paper_signal(input.fs, input.n)?;
    Ok(match builtin {
        BuiltinSignal::Paper => Loaded {
            clean: p.f.clone(),
            modes: vec![p.f1, p.f2],
            ideal: Some(p.ideal),
        },
        BuiltinSignal::F1 => Loaded {
            clean: p.f1.clone(),
            modes: vec![p.f1],
            ideal: Some(p.ideal.mode(0)),
        },
        BuiltinSignal::F2 => Loaded {
            clean: p.f2.clone(),
            modes: vec![p.f2],
            ideal: Some(p.ideal.mode(1)),
        },
        BuiltinSignal::GwSurrogate => unreachable!(),
    })
}

fn transform_config(opts: &TransformOpts, method: Method) -> CliResult<TransformConfig> {
    let sigma: SigmaChoice = parsed("--sigma", opts.sigma.parse())?;
    let sigma_grid = parsed("--sigma-grid", parse_grid(&opts.sigma_grid))?;
    if !(opts.gamma_rel >= 0.0 && opts.gamma_rel.is_finite()) {
        return usage("--gamma-rel must be a nonnegative number");
    }
    if opts.hop == 0 {
        return usage("--hop must be at least 1");
    }
    let mut cfg = TransformConfig::new(method, sigma);
    cfg.sigma_grid = sigma_grid;
    cfg.gamma_rel = opts.gamma_rel;
    cfg.stft = StftConfig {
        hop: opts.hop,
        n_fft: opts.n_fft,
    };
    Ok(cfg)
}

fn with_noise(sig: &SampledSignal, snr: Option<f64>, seed: u64) -> CliResult<SampledSignal> {
    match snr {
        Some(s) if s.is_nan() => usage("--noise-snr must be a number"),
        Some(s) => Ok(add_noise(sig, s, seed)?),
        None => Ok(sig.clone()),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn diagnostics_rows(out: &TransformOutput) -> Vec<(String, f64)> {
    let d = &out.diagnostics;
    let mut rows = vec![
        ("sigma".to_string(), out.sigma),
        ("gamma".to_string(), out.gamma),
        ("dropped".to_string(), d.dropped as f64),
        ("dropped_energy".to_string(), d.dropped_energy),
    ];
    for (k, &c) in d.order_histogram.iter().enumerate() {
        rows.push((format!("order_used_{k}"), c as f64));
    }
    rows
}

fn cmd_transform(a: &TransformArgs) -> CliResult<()> {
    let method: Method = parsed("--method", a.opts.method.parse())?;
    if a.complex_output.is_some() && method == Method::Rm {
        return usage("rm produces a real matrix; --complex-output is not available");
    }
    let cfg = transform_config(&a.opts, method)?;
    let loaded = load(&a.input)?;
    let noisy = with_noise(&loaded.clean, a.noise_snr, a.seed)?;
    let prep = prepare_input(&noisy, a.input.pad_pow2)?;
    let out = transform(&prep.signal, &cfg)?;
    let mag = out.magnitude();
    write_matrix_file(&a.output, &MatrixData::Real(mag.clone()))
        .with_context(|| format!("writing {}", a.output.display()))?;
    if let Some(path) = &a.complex_output {
        let m = out.squeezed.clone().unwrap_or_else(|| out.stft_g.clone());
        write_matrix_file(path, &MatrixData::Complex(m))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.csv {
        write_matrix_csv(create(path)?, &mag)?;
    }
    let rows = diagnostics_rows(&out);
    if let Some(path) = &a.diagnostics {
        let mut w = create(path)?;
        writeln!(w, "key,value").map_err(anyhow::Error::from)?;
        for (k, v) in &rows {
            writeln!(w, "{k},{v}").map_err(anyhow::Error::from)?;
        }
        w.flush().map_err(anyhow::Error::from)?;
    }
    let summary: Vec<String> = rows.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{method}: {} frames x {} bins; {}",
        mag.n_frames(),
        mag.n_bins(),
        summary.join(" ")
    );
    Ok(())
}

fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || Failure::Usage(format!("--d-sweep expects a..b, got '{s}'"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let method: Method = parsed("--method", a.opts.method.parse())?;
    if !method.is_invertible() {
        return usage(format!("{method} is not invertible; use fsst, fsst2, fsst3 or fsst4"));
    }
    if a.k == 0 {
        return usage("--K must be at least 1");
    }
    if a.opts.hop != 1 {
        return usage("reconstruction needs --hop 1");
    }
    let sweep = a.d_sweep.as_deref().map(parse_range).transpose()?;
    let cfg = transform_config(&a.opts, method)?;
    let loaded = load(&a.input)?;
    let mut refs = loaded.modes.clone();
    for path in &a.reference {
        refs.push(read_signal_file(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let noisy = with_noise(&loaded.clean, a.noise_snr, a.seed)?;
    let prep = prepare_input(&noisy, a.input.pad_pow2)?;
    let out = transform(&prep.signal, &cfg)?;
    let max_d = sweep.as_ref().and_then(|s| s.last().copied()).unwrap_or(a.d).max(a.d);
    let ridge_cfg = RidgeConfig {
        jump: a.jump,
        ..RidgeConfig::for_band(a.k, max_d)
    };
    let ridges = ridges_of(&out, &ridge_cfg)?;
    if ridges.incomplete {
        eprintln!("warning: only {} of {} ridges found", ridges.len(), a.k);
    }
    let modes = modes_from_ridges(&out, &ridges, a.d, prep.original_len, prep.real)?;
    fs::create_dir_all(&a.output_dir)
        .with_context(|| format!("creating {}", a.output_dir.display()))?;
    let path = |name: &str| a.output_dir.join(name);
    for (k, m) in modes.iter().enumerate() {
        write_signal_csv(create(&path(&format!("mode{k}.csv")))?, m)?;
    }
    let sq_axes = out.squeezed.as_ref().expect("invertible method").axes;
    write_ridges_csv(create(&path("ridges.csv"))?, &ridges, &sq_axes)?;
    let ref_views: Vec<&SampledSignal> = refs.iter().collect();
    let report = score_reconstruction(&ref_views, &loaded.clean, &modes)?;
    let mut rows = Vec::new();
    for (k, snr) in report.per_mode.iter().enumerate() {
        rows.push(vec![k as f64, *snr]);
        println!("mode {k}: output SNR {snr:.2} dB");
    }
    rows.push(vec![-1.0, report.total]);
    println!(
        "sum of modes: output SNR {:.2} dB (sigma {}, d {})",
        report.total, out.sigma, a.d
    );
    write_table_csv(create(&path("report.csv"))?, &["mode", "snr_db"], &rows)?;
    if let Some(ds) = sweep {
        let results = d_sweep(&out, &ridges, &ds, &ref_views, &loaded.clean, prep.real)?;
        let mut header = vec!["d".to_string()];
        header.extend((0..refs.len()).map(|k| format!("mode{k}_snr_db")));
        header.push("total_snr_db".into());
        let rows: Vec<Vec<f64>> = results
            .iter()
            .map(|(d, r)| {
                let mut row = vec![*d as f64];
                row.extend(&r.per_mode);
                row.push(r.total);
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table_csv(create(&path("d_sweep.csv"))?, &header, &rows)?;
    }
    Ok(())
}

fn parse_methods(s: &str) -> CliResult<Vec<Method>> {
    let methods = s
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| parsed("--methods", m.parse::<Method>()))
        .collect::<CliResult<Vec<_>>>()?;
    if methods.is_empty() {
        return usage("--methods must name at least one method");
    }
    Ok(methods)
}

fn parse_snr_levels(s: &str) -> CliResult<Vec<f64>> {
    let levels = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            _ => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Failure::Usage(format!("--snr-levels: bad level '{v}'"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    if levels.is_empty() {
        return usage("--snr-levels must list at least one level");
    }
    Ok(levels)
}

fn level_name(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        snr.to_string()
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let methods = parse_methods(&a.methods)?;
    let levels = parse_snr_levels(&a.snr_levels)?;
    let grid = parsed("--sigma-grid", parse_grid(&a.sigma_grid))?;
    let sigma_choice: SigmaChoice = parsed("--sigma", a.sigma.parse())?;
    let all = !(a.renyi || a.energy || a.emd);
    let loaded = load(&a.input)?;
    if (a.emd || all) && loaded.ideal.is_none() {
        return usage("--emd needs a built-in signal with a known ideal representation");
    }
    if a.seeds == 0 {
        return usage("--seeds must be at least 1");
    }
    let prep = prepare_input(&loaded.clean, a.input.pad_pow2)?;
    let signal = &prep.signal;
    fs::create_dir_all(&a.output_dir)
        .with_context(|| format!("creating {}", a.output_dir.display()))?;
    let path = |name: &str| a.output_dir.join(name);
    let sigma = match sigma_choice {
        SigmaChoice::Fixed(s) => s,
        SigmaChoice::Auto => {
            optimize_sigma(signal, &grid, 3.0, StftConfig::default())?.sigma_opt
        }
    };
    let config = |m: Method| {
        let mut c = TransformConfig::new(m, SigmaChoice::Fixed(sigma));
        c.gamma_rel = a.gamma_rel;
        c
    };
    if a.renyi || all {
        let mut curves = Vec::new();
        let mut opt_rows = Vec::new();
        for &snr in &levels {
            let noisy = add_noise(signal, snr, a.seed)?;
            let search = optimize_sigma(&noisy, &grid, 3.0, StftConfig::default())?;
            println!("snr {}: sigma_opt {}", level_name(snr), search.sigma_opt);
            opt_rows.push(vec![snr, search.sigma_opt]);
            curves.push(search.curve);
        }
        let mut header = vec!["sigma".to_string()];
        header.extend(levels.iter().map(|&s| format!("renyi_snr_{}", level_name(s))));
        let rows: Vec<Vec<f64>> = (0..grid.len())
            .map(|i| {
                let mut r = vec![grid[i]];
                r.extend(curves.iter().map(|c| c[i].1));
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table_csv(create(&path("renyi.csv"))?, &header, &rows)?;
        write_table_csv(create(&path("sigma_opt.csv"))?, &["snr_db", "sigma_opt"], &opt_rows)?;
    }
    if a.energy || all {
        let m_len = prep.original_len;
        let max_count = 4 * m_len;
        let curves = methods
            .iter()
            .map(|&m| {
                let out = transform(signal, &config(m))?;
                Ok(normalized_energy_curve(out.magnitude().values.view(), max_count))
            })
            .collect::<fsstn::Result<Vec<_>>>()?;
        let mut header = vec!["count_over_m".to_string()];
        header.extend(methods.iter().map(|m| m.name().to_string()));
        let rows: Vec<Vec<f64>> = (0..max_count)
            .map(|c| {
                let mut r = vec![(c + 1) as f64 / m_len as f64];
                r.extend(curves.iter().map(|v| v[c]));
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table_csv(create(&path("energy.csv"))?, &header, &rows)?;
        for (m, c) in methods.iter().zip(&curves) {
            println!("{m}: normalized energy at M = {:.4}", c[m_len - 1]);
        }
    }
    if a.emd || all {
        let ideal = loaded.ideal.as_ref().expect("checked above");
        if prep.signal.len() != prep.original_len {
            return usage("--emd cannot be combined with --pad-pow2");
        }
        let n_modes = ideal.modes.len();
        let mode_sel: Vec<Option<usize>> = if n_modes > 1 {
            (0..n_modes).map(Some).collect()
        } else {
            vec![None]
        };
        let mut rows = Vec::new();
        for &snr in &levels {
            let mut sums = vec![vec![0.0; methods.len()]; mode_sel.len()];
            for s in 0..a.seeds {
                let noisy = add_noise(&loaded.clean, snr, a.seed + s)?;
                for (j, &m) in methods.iter().enumerate() {
                    let mag = transform(&noisy, &config(m))?.magnitude();
                    for (i, &mode) in mode_sel.iter().enumerate() {
                        let opts = EmdOptions { mode, floor: 0.0 };
                        sums[i][j] +=
                            emd_to_ideal(mag.values.view(), &mag.axes, ideal, &opts)?;
                    }
                }
            }
            for (i, &mode) in mode_sel.iter().enumerate() {
                let mut row = vec![snr, mode.map_or(-1.0, |k| k as f64)];
                row.extend(sums[i].iter().map(|v| v / a.seeds as f64));
                let cells: Vec<String> = methods
                    .iter()
                    .zip(&row[2..])
                    .map(|(m, v)| format!("{m} {v:.3}"))
                    .collect();
                println!(
                    "snr {} mode {}: EMD Hz {}",
                    level_name(snr),
                    mode.map_or("all".to_string(), |k| k.to_string()),
                    cells.join(", ")
                );
                rows.push(row);
            }
        }
        let mut header = vec!["snr_db".to_string(), "mode".to_string()];
        header.extend(methods.iter().map(|m| format!("emd_{m}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table_csv(create(&path("emd.csv"))?, &header, &rows)?;
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SQZ_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SQZ_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Compute(anyhow!(e)))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Transform(a) => cmd_transform(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
