//! Command-line surface.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bandwidth::BandwidthPolicy;
use crate::critical::{critical_values, CriticalMethod, Sidedness};
use crate::dgp::{DgpConfig, GammaScheme};
use crate::error::{Error, ErrorClass, Result};
use crate::inference::{
    search_thresholds, test_existence, test_homogeneity, validate_grid, Center, TestConfig, TestKind,
    ThresholdSpec, Truncation,
};
use crate::io::{
    accuracy_table, num, read_panel_csv, read_thresholds_csv, render_tables, search_result_tables,
    size_power_table, test_result_tables, write_atomic, PanelSchema, ReportFormat, Table,
};
use crate::kernel::Kernel;
use crate::montecarlo::{run_size_power, run_threshold_accuracy, McConfig, ThresholdMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "paneljump",
    version,
    about = "Jump effects in nonparametric panel regressions"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test for the existence of jumps at known thresholds.
    JumpTest(TestArgs),
    /// Test whether jump sizes are equal across units.
    HomogeneityTest(TestArgs),
    /// Estimate unknown thresholds over a grid and test for jumps.
    ThresholdSearch(SearchArgs),
    /// Monte Carlo size, power or threshold accuracy on a synthetic design.
    Simulate(SimulateArgs),
    /// Critical value of the maximum of independent standard normals.
    CriticalValue(CriticalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SidedArg {
    Two,
    Upper,
}

impl From<SidedArg> for Sidedness {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::Two => Sidedness::TwoSided,
            SidedArg::Upper => Sidedness::OneSidedUpper,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CenterArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Analytic,
    Simulated,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output format: csv, tsv or markdown.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Long-format panel file.
    #[arg(long)]
    data: PathBuf,
    /// Column names as unit,time,y,x.
    #[arg(long, default_value = "unit,time,y,x")]
    schema: String,
    /// Field delimiter of the data file.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Significance level; repeatable.
    #[arg(long = "alpha", default_values_t = vec![0.10, 0.05, 0.01])]
    alphas: Vec<f64>,
    #[arg(long, default_value = "uniform")]
    kernel: String,
    /// auto, pooled or fixed:<value>.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    /// Critical values in closed form or by simulation.
    #[arg(long = "critical", value_enum, default_value = "analytic")]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replications for simulated critical values.
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    /// Subtract each unit's mean outcome first.
    #[arg(long)]
    demean: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// <value> or file:<path> with unit,c rows.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    threshold: String,
    /// Centering of the homogeneity statistic.
    #[arg(long, value_enum, default_value = "mean")]
    center: CenterArg,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// grid:v1,v2,... or grid:start:step:end.
    #[arg(long, allow_hyphen_values = true)]
    threshold: String,
    /// Truncation level for squared residuals: auto, none or a value.
    #[arg(long, default_value = "auto")]
    truncation: String,
    /// With --critical simulated, draw correlated grid statistics.
    #[arg(long)]
    sigma_c: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimTest {
    Existence,
    Homogeneity,
    Unknown,
    Accuracy,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Design number, 1 to 6.
    #[arg(long, default_value_t = 1)]
    dgp: u8,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    t: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "existence")]
    test: SimTest,
    /// Share of units with a jump; zero for size.
    #[arg(long, default_value_t = 0.0)]
    fraction: f64,
    /// Jump magnitude multiplier; 1 for power runs and 5 for accuracy runs when absent.
    #[arg(long)]
    scale: Option<f64>,
    /// Grid for unknown thresholds (grid:... syntax).
    #[arg(long, default_value = "grid:-0.2,-0.1,0,0.1,0.2", allow_hyphen_values = true)]
    threshold: String,
    #[arg(long = "alpha", default_values_t = vec![0.10, 0.05, 0.01])]
    alphas: Vec<f64>,
    #[arg(long, default_value = "uniform")]
    kernel: String,
    #[arg(long, default_value = "pooled")]
    bandwidth: String,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long, value_enum, default_value = "mean")]
    center: CenterArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CriticalArgs {
    /// Number of comparisons.
    #[arg(long)]
    n: usize,
    #[arg(long = "alpha", default_values_t = vec![0.05])]
    alphas: Vec<f64>,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long = "critical", value_enum, default_value = "analytic")]
    method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decimal places printed.
    #[arg(long, default_value_t = 3)]
    digits: usize,
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

/// Parses `grid:v1,v2,...` or `grid:start:step:end`.
pub fn parse_grid(arg: &str) -> Result<Vec<f64>> {
    let body = arg
        .strip_prefix("grid:")
        .ok_or_else(|| Error::InvalidConfig(format!("expected grid:..., got `{arg}`")))?;
    let bad = || Error::InvalidConfig(format!("cannot parse grid `{arg}`"));
    let grid = if body.contains(',') || !body.contains(':') {
        body.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    } else {
        let parts = body
            .split(':')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let [start, step, end] = parts.as_slice() else {
            return Err(bad());
        };
        if !(*step > 0.0) || end < start {
            return Err(Error::InvalidConfig(format!(
                "grid `{arg}` needs step > 0 and end >= start"
            )));
        }
        let k = ((end - start) / step + 1e-9).floor() as usize;
        // rounding keeps values such as 0.3 exact instead of 0.30000000000000004
        (0..=k)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn threshold_spec(arg: &str) -> Result<ThresholdSpec> {
    if let Some(path) = arg.strip_prefix("file:") {
        return Ok(ThresholdSpec::PerUnit(read_thresholds_csv(path.as_ref())?));
    }
    arg.parse::<f64>()
        .ok()
        .filter(|c| c.is_finite())
        .map(ThresholdSpec::Common)
        .ok_or_else(|| {
            Error::InvalidConfig(format!("threshold must be a number or file:<path>, got `{arg}`"))
        })
}

fn parse_truncation(arg: &str) -> Result<Truncation> {
    match arg {
        "auto" => Ok(Truncation::Auto),
        "none" | "off" => Ok(Truncation::Off),
        v => v.parse::<f64>().map(Truncation::Level).map_err(|_| {
            Error::InvalidConfig(format!("truncation must be auto, none or a number, got `{v}`"))
        }),
    }
}

fn method(m: MethodArg, reps: usize, seed: u64, sigma_c: bool) -> CriticalMethod {
    match (m, sigma_c) {
        (MethodArg::Analytic, _) => CriticalMethod::Analytic,
        (MethodArg::Simulated, false) => CriticalMethod::Simulated { reps, seed },
        (MethodArg::Simulated, true) => CriticalMethod::SimulatedSigmaC { reps, seed },
    }
}

fn base_config(c: &CommonArgs) -> Result<TestConfig> {
    Ok(TestConfig {
        kernel: c.kernel.parse::<Kernel>()?,
        bandwidth: c.bandwidth.parse::<BandwidthPolicy>()?,
        sidedness: c.sided.into(),
        alphas: c.alphas.clone(),
        critical: method(c.method, c.reps, c.seed, false),
        ..TestConfig::default()
    })
}

fn load(c: &CommonArgs) -> Result<crate::panel::PanelData> {
    let mut schema: PanelSchema = c.schema.parse()?;
    if !c.delimiter.is_ascii() {
        return Err(Error::InvalidConfig(
            "delimiter must be a single ASCII character".into(),
        ));
    }
    schema.delimiter = c.delimiter as u8;
    let mut panel = read_panel_csv(&c.data, &schema)?;
    if c.demean {
        panel.demean_units();
    }
    Ok(panel)
}

fn center(c: CenterArg) -> Center {
    match c {
        CenterArg::Mean => Center::Mean,
        CenterArg::Median => Center::Median,
    }
}

struct Output {
    text: String,
    warnings: Vec<String>,
}

fn emit(tables: &[Table], o: &OutputArgs, warnings: Vec<String>) -> Result<Output> {
    let format: ReportFormat = o.format.parse()?;
    Ok(Output {
        text: render_tables(tables, format)?,
        warnings,
    })
}

fn run_test(args: &TestArgs, kind: TestKind) -> Result<Output> {
    let mut cfg = base_config(&args.common)?;
    cfg.threshold = threshold_spec(&args.threshold)?;
    cfg.center = center(args.center);
    cfg.validate()?;
    args.common.output.format.parse::<ReportFormat>()?;
    let panel = load(&args.common)?;
    let result = match kind {
        TestKind::Homogeneity => test_homogeneity(&panel, &cfg)?,
        _ => test_existence(&panel, &cfg)?,
    };
    emit(
        &test_result_tables(&result),
        &args.common.output,
        result.warnings.clone(),
    )
}

fn run_search(args: &SearchArgs) -> Result<Output> {
    let mut cfg = base_config(&args.common)?;
    cfg.truncation = parse_truncation(&args.truncation)?;
    cfg.critical = method(
        args.common.method,
        args.common.reps,
        args.common.seed,
        args.sigma_c,
    );
    cfg.validate()?;
    let grid = parse_grid(&args.threshold)?;
    args.common.output.format.parse::<ReportFormat>()?;
    let panel = load(&args.common)?;
    let result = search_thresholds(&panel, &grid, &cfg)?;
    emit(
        &search_result_tables(&result),
        &args.common.output,
        result.warnings.clone(),
    )
}

fn run_simulate(args: &SimulateArgs) -> Result<Output> {
    let gamma_scheme = match args.test {
        SimTest::Accuracy => match args.scale {
            Some(scale) => GammaScheme::Accuracy { scale },
            None => GammaScheme::accuracy(),
        },
        _ if args.fraction > 0.0 => GammaScheme::SparsePower {
            fraction: args.fraction,
            scale: args.scale.unwrap_or(1.0),
        },
        _ => GammaScheme::Null,
    };
    let dgp = DgpConfig {
        gamma_scheme,
        ..DgpConfig::new(args.dgp, args.n, args.t, 0)
    };
    let mc = McConfig {
        reps: args.reps,
        alphas: args.alphas.clone(),
        base_seed: args.seed,
    };
    let cfg = TestConfig {
        kernel: args.kernel.parse()?,
        bandwidth: args.bandwidth.parse()?,
        sidedness: args.sided.into(),
        center: center(args.center),
        alphas: args.alphas.clone(),
        ..TestConfig::default()
    };
    args.output.format.parse::<ReportFormat>()?;
    let table = match args.test {
        SimTest::Existence => size_power_table(&[run_size_power(
            &dgp,
            &mc,
            TestKind::Existence,
            &ThresholdMode::Known,
            &cfg,
        )?]),
        SimTest::Homogeneity => size_power_table(&[run_size_power(
            &dgp,
            &mc,
            TestKind::Homogeneity,
            &ThresholdMode::Known,
            &cfg,
        )?]),
        SimTest::Unknown => {
            let grid = parse_grid(&args.threshold)?;
            size_power_table(&[run_size_power(
                &dgp,
                &mc,
                TestKind::ExistenceUnknownThreshold,
                &ThresholdMode::Grid(grid),
                &cfg,
            )?])
        }
        SimTest::Accuracy => {
            let grid = parse_grid(&args.threshold)?;
            accuracy_table(&[run_threshold_accuracy(&dgp, &mc, &grid, &cfg)?])
        }
    };
    emit(&[table], &args.output, Vec::new())
}

fn run_critical(args: &CriticalArgs) -> Result<Output> {
    let m = method(args.method, args.reps, args.seed, false);
    let q = critical_values(args.n, &args.alphas, args.sided.into(), m, None)?;
    let text = if q.len() == 1 {
        format!("{:.*}\n", args.digits, q[0])
    } else {
        q.iter()
            .zip(&args.alphas)
            .map(|(q, a)| format!("{} {:.*}\n", num(*a), args.digits, q))
            .collect()
    };
    Ok(Output {
        text,
        warnings: Vec::new(),
    })
}

/// Runs the command line `args` (program name first), writing results to
/// `out` or the requested file and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let (result, dest) = match &cli.command {
        Command::JumpTest(a) => (run_test(a, TestKind::Existence), a.common.output.out.clone()),
        Command::HomogeneityTest(a) => (run_test(a, TestKind::Homogeneity), a.common.output.out.clone()),
        Command::ThresholdSearch(a) => (run_search(a), a.common.output.out.clone()),
        Command::Simulate(a) => (run_simulate(a), a.output.out.clone()),
        Command::CriticalValue(a) => (run_critical(a), None),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    for w in &output.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    match dest {
        Some(path) => {
            if let Err(e) = write_atomic(&path, output.text.as_bytes()) {
                let _ = writeln!(err, "error: {e}");
                return exit_code(&e);
            }
        }
        None => {
            let _ = out.write_all(output.text.as_bytes());
        }
    }
    EXIT_OK
}

/// Caps the worker pool at `PANELJUMP_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("PANELJUMP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
