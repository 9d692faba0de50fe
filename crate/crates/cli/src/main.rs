//! `minpat`: outlier detection in contingency tables through minimal patterns.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use minpat_core::casestudy::{reproduce, CaseStudy};
use minpat_core::detect::{detect_ol1, detect_oltcs, detect_omp, detect_ompc, DEFAULT_G, DEFAULT_SUBSETS};
use minpat_core::estimate::{fit, optimal_h, trimmed_chisq};
use minpat_core::patterns::{
    candidate_count, enumerate, minimal_catalog, sample_catalog, CellSet, PatternKind, DEFAULT_ENUM_CAP,
};
use minpat_core::simulate::{cutoff_study, evaluate_rates, scenario, CutoffConfig, CutoffPlant};
use minpat_core::table::load_table;
use minpat_core::{
    build_design, outlier_region, Coding, ContingencyTable, DesignMatrix, Error, Estimator, Method, ModelSpec,
    TableFormat, TrimSpec, TrimVariant, VERSION,
};

#[derive(Parser, Debug, Serialize)]
#[command(name = "minpat", version, about = "Outlier detection in contingency tables through minimal patterns")]
struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Run an outlier detector on a table.
    Detect(DetectArgs),
    /// Count, enumerate or sample minimal patterns.
    Patterns(PatternArgs),
    /// Print the inlier interval `lo hi K` of a Poisson alpha-outlier region.
    Region(RegionArgs),
    /// Fit the model on a subset of cells.
    Fit(FitArgs),
    /// Simulation scenarios and the cutoff study, as CSV.
    Simulate(SimulateArgs),
    /// Rerun the embedded case studies next to the published detections.
    Casestudy(CaseArgs),
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// `independence` or a generating class such as `1,2|2,3` (1-based factors).
    #[arg(long, default_value = "independence")]
    model: String,
    #[arg(long, value_enum, default_value_t = CodingArg::Sumzero)]
    coding: CodingArg,
}

#[derive(Args, Debug, Serialize)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Grid)]
    format: FormatArg,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    alpha: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// OMPC cutoff fraction.
    #[arg(long, default_value_t = DEFAULT_G)]
    g: f64,
    /// Elemental subsets for OLTCS.
    #[arg(long, default_value_t = DEFAULT_SUBSETS)]
    subsets: usize,
    /// Patterns drawn when the full catalog is too large.
    #[arg(long, default_value_t = 500)]
    budget: usize,
    /// Estimator for OL1.
    #[arg(long, value_enum, default_value_t = EstimatorArg::L1)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Ltcs)]
    variant: VariantArg,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PatternArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Table dimensions, e.g. `4,4`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, group = "action")]
    count: bool,
    #[arg(long, group = "action")]
    enumerate: bool,
    /// Draw this many patterns.
    #[arg(long, group = "action")]
    sample: Option<usize>,
    /// Strictly minimal instead of minimal patterns (enumerate/sample).
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest number of candidate subsets an enumeration may scan.
    #[arg(long, default_value_t = DEFAULT_ENUM_CAP)]
    cap: u128,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RegionArgs {
    #[arg(long)]
    mean: f64,
    #[arg(long)]
    alpha: f64,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    input: InputArgs,
    /// 0-based flat cell indices (default: all cells).
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Ml)]
    estimator: EstimatorArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "cutoff_study", required_unless_present = "cutoff_study")]
    scenario: Option<u8>,
    #[arg(long)]
    cutoff_study: bool,
    /// Methods to score (default: ol1, oltcs, ompc, ompcl1).
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<MethodArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    replications: Option<usize>,
    /// Cutoff study: tables per size.
    #[arg(long, default_value_t = 1000)]
    tables: usize,
    /// Cutoff study: square table sizes.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7")]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = PlantArg::Type)]
    plant: PlantArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CaseArgs {
    #[arg(value_enum)]
    name: CaseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Ol1,
    Omp,
    Ompc,
    Ompcl1,
    Oltcs,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ol1 => Method::Ol1,
            MethodArg::Omp => Method::Omp,
            MethodArg::Ompc => Method::Ompc,
            MethodArg::Ompcl1 => Method::Ompcl1,
            MethodArg::Oltcs => Method::Oltcs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CodingArg {
    Sumzero,
    Corner,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Grid,
    Long,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorArg {
    Ml,
    L1,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VariantArg {
    Ltcs,
    Lmcs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PlantArg {
    Type,
    Antitype,
    Either,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CaseArg {
    Nevada,
    Glass,
    Socialnet,
}

impl EstimatorArg {
    fn core(self) -> Estimator {
        match self {
            EstimatorArg::Ml => Estimator::Ml,
            EstimatorArg::L1 => Estimator::L1,
        }
    }
}

/// Failure with its exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Parse { .. }
            | Error::Ragged { .. }
            | Error::DuplicateCell(_)
            | Error::MissingCell(_)
            | Error::IndexOutOfRange { .. }
            | Error::InvalidDims(_) => Failure::Data(m),
            Error::InvalidModel(_) | Error::InvalidArgument(_) | Error::EnumerationCap { .. } => Failure::Usage(m),
            Error::RankDeficient { .. } | Error::AllFitsFailed(_) | Error::Numerical(_) => Failure::Numerical(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    version: &'a str,
    config: &'a C,
    report: R,
}

fn write_json<C: Serialize, R: Serialize>(path: &Path, config: &C, report: R) -> CliResult<()> {
    let env = Envelope {
        version: VERSION,
        config,
        report,
    };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Data(e.to_string()))
        }
    }
}

fn check_unit(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

fn read_table(input: &InputArgs) -> CliResult<ContingencyTable> {
    let text = fs::read_to_string(&input.input)
        .map_err(|e| Failure::Data(format!("{}: {e}", input.input.display())))?;
    let format = match input.format {
        FormatArg::Grid => TableFormat::Grid,
        FormatArg::Long => TableFormat::Long,
    };
    Ok(load_table(&text, format)?)
}

fn design_for(model: &ModelArgs, dims: &[usize]) -> CliResult<DesignMatrix> {
    let coding = match model.coding {
        CodingArg::Sumzero => Coding::SumToZero,
        CodingArg::Corner => Coding::CornerPoint,
    };
    let spec = ModelSpec::parse(&model.model, dims.to_vec(), coding)?;
    Ok(build_design(&spec)?)
}

fn names(table: &ContingencyTable, cells: &[usize]) -> String {
    if cells.is_empty() {
        return "none".into();
    }
    cells.iter().map(|&j| table.cell_name(j)).collect::<Vec<_>>().join(" ")
}

fn run_detect(args: &DetectArgs) -> CliResult<()> {
    check_unit("alpha", args.alpha)?;
    check_unit("g", args.g)?;
    let table = read_table(&args.input)?;
    let design = design_for(&args.model, table.dims())?;
    let method: Method = args.method.into();
    let report = match method {
        Method::Ol1 => detect_ol1(&table, &design, args.alpha, args.estimator.core())?,
        Method::Oltcs => {
            let variant = match args.variant {
                VariantArg::Ltcs => TrimVariant::Ltcs,
                VariantArg::Lmcs => TrimVariant::Lmcs,
            };
            detect_oltcs(&table, &design, args.alpha, args.subsets, variant, args.seed)?
        }
        _ => {
            let catalog = minimal_catalog(&design, args.budget, args.seed)?;
            match method {
                Method::Omp => detect_omp(&table, &design, args.alpha, &catalog)?,
                Method::Ompc => detect_ompc(&table, &design, args.alpha, &catalog, Estimator::Ml, args.g)?,
                _ => detect_ompc(&table, &design, args.alpha, &catalog, Estimator::L1, args.g)?,
            }
        }
    };
    let mut text = format!("method {} alpha {}\n", report.method, report.alpha);
    for k in 0..report.flags.len() {
        text.push_str(&format!("solution {}: {}\n", k + 1, names(&table, &report.outliers(k))));
    }
    if let (Some(c), Some(r)) = (&report.detect_counts, &report.r) {
        for j in 0..table.n_cells() {
            text.push_str(&format!("{} {}/{}\n", table.cell_name(j), c[j], r[j]));
        }
    }
    if report.skipped_patterns > 0 {
        text.push_str(&format!("skipped {} of {} patterns\n", report.skipped_patterns, report.patterns_used));
    }
    emit(&None, &text)?;
    if let Some(path) = &args.out {
        write_json(path, args, &report)?;
    }
    Ok(())
}

fn run_patterns(args: &PatternArgs) -> CliResult<()> {
    let design = design_for(&args.model, &args.dims)?;
    let kind = if args.strict {
        PatternKind::StrictlyMinimal
    } else {
        PatternKind::Minimal
    };
    if let Some(k) = args.sample {
        let cat = sample_catalog(&design, kind, k, args.seed)?;
        return emit(&args.out, &cat.to_lines());
    }
    if args.enumerate {
        let cat = enumerate(&design, kind, args.cap)?;
        return emit(&args.out, &cat.to_lines());
    }
    if !args.count {
        return Err(Failure::Usage("choose one of --count, --enumerate, --sample".into()));
    }
    let mut text = String::new();
    for (label, kind) in [("minimal", PatternKind::Minimal), ("strictly_minimal", PatternKind::StrictlyMinimal)] {
        let cat = enumerate(&design, kind, args.cap)?;
        text.push_str(&format!(
            "{label} {} of {}\n",
            cat.len(),
            candidate_count(&design, kind)
        ));
    }
    emit(&args.out, &text)
}

fn run_region(args: &RegionArgs) -> CliResult<()> {
    check_unit("alpha", args.alpha)?;
    let r = outlier_region(args.mean, args.alpha)?;
    emit(&None, &format!("{} {} {:e}\n", r.lo, r.hi, r.threshold))
}

#[derive(Serialize)]
struct FitReport {
    cells: Vec<usize>,
    fit: minpat_core::FitResult,
    trimmed_chisq: f64,
}

fn run_fit(args: &FitArgs) -> CliResult<()> {
    let table = read_table(&args.input)?;
    let design = design_for(&args.model, table.dims())?;
    let cells = match &args.cells {
        Some(c) => CellSet::new(c.clone(), table.n_cells())?.to_vec(),
        None => (0..table.n_cells()).collect(),
    };
    let f = fit(args.estimator.core(), &design, &table, &cells)?;
    let (n, p) = (design.n_cells(), design.p());
    let q = trimmed_chisq(&f, &table, TrimSpec::new(optimal_h(n, p), TrimVariant::Ltcs, p, n)?)?;
    let mut text = format!("converged {} iterations {} objective {}\n", f.converged, f.iterations, f.objective);
    text.push_str(&format!(
        "beta {}\n",
        f.beta.iter().map(|b| format!("{b:.6}")).collect::<Vec<_>>().join(" ")
    ));
    for j in 0..n {
        text.push_str(&format!("{} {} {:.4}\n", table.cell_name(j), table.counts()[j], f.fitted_means[j]));
    }
    emit(&None, &text)?;
    if let Some(path) = &args.out {
        write_json(
            path,
            args,
            FitReport {
                cells,
                fit: f,
                trimmed_chisq: q,
            },
        )?;
    }
    Ok(())
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_default()
}

fn run_simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.cutoff_study {
        let config = CutoffConfig {
            sizes: args.sizes.clone(),
            tables: args.tables,
            plant: match args.plant {
                PlantArg::Type => CutoffPlant::Type,
                PlantArg::Antitype => CutoffPlant::Antitype,
                PlantArg::Either => CutoffPlant::Either,
            },
            seed: args.seed,
            ..CutoffConfig::default()
        };
        let rows = cutoff_study(&config)?;
        let mut text = String::from("size,model");
        for g in &config.g_grid {
            text.push_str(&format!(",{g}"));
        }
        text.push('\n');
        for row in rows {
            for (label, v) in [("M0", &row.m0), ("M1", &row.m1)] {
                text.push_str(&format!("{0}x{0},{label}", row.size));
                for x in v {
                    text.push_str(&format!(",{x:.3}"));
                }
                text.push('\n');
            }
        }
        return emit(&args.out, &text);
    }
    let number = args.scenario.expect("clap requires --scenario without --cutoff-study");
    let methods: Vec<Method> = if args.method.is_empty() {
        vec![Method::Ol1, Method::Oltcs, Method::Ompc, Method::Ompcl1]
    } else {
        args.method.iter().map(|&m| m.into()).collect()
    };
    let mut text = String::from("scenario,planted,method,outliers,inliers,replications\n");
    for mut spec in scenario(number, args.seed)? {
        if let Some(r) = args.replications {
            spec.replications = r;
        }
        let values: Vec<String> = spec.planted_values()?.iter().map(|v| v.to_string()).collect();
        for &m in &methods {
            let r = evaluate_rates(m, &spec)?;
            text.push_str(&format!(
                "\"{}\",{},{},{},{:.3},{}\n",
                spec.label,
                values.join("/"),
                m,
                fmt_rate(r.outliers),
                r.inliers,
                r.replications
            ));
        }
    }
    emit(&args.out, &text)
}

fn run_case(args: &CaseArgs) -> CliResult<()> {
    let case = match args.name {
        CaseArg::Nevada => CaseStudy::Nevada,
        CaseArg::Glass => CaseStudy::Glass,
        CaseArg::Socialnet => CaseStudy::Socialnet,
    };
    let table = case.table();
    let rows = reproduce(case, args.seed)?;
    let mut text = format!("{:<8} {:>8}  {:<32} {:<32} {}\n", "method", "alpha", "published", "found", "match");
    for r in &rows {
        let show = |sets: &[Vec<usize>]| sets.iter().map(|s| format!("{{{}}}", names(&table, s))).collect::<Vec<_>>().join(" ");
        text.push_str(&format!(
            "{:<8} {:>8}  {:<32} {:<32} {}\n",
            r.reported.method.name(),
            r.reported.alpha,
            show(&r.reported.outliers),
            show(&r.found),
            if r.matches { "yes" } else { "no" }
        ));
    }
    emit(&None, &text)?;
    if let Some(path) = &args.out {
        write_json(path, args, &rows)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Patterns(a) => run_patterns(a),
        Command::Region(a) => run_region(a),
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Casestudy(a) => run_case(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
