use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bundling_pmg::closed_form::FeasibilityTol;
use bundling_pmg::oracle::{find_fixed_point, find_fixed_points, OracleConfig};
use bundling_pmg::policy::{solve_subgame, PolicyOptions, SubgameSolution, Warning};
use bundling_pmg::sweep::{
    fmt_g6, parse_market_config, run_sweep, table_rows, write_cells_csv, write_cells_json,
    write_table_csv, write_table_json, SweepSpec,
};
use bundling_pmg::{DemandProfile, MarketParams, Scenario};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_INPUT: u8 = 1;
const EXIT_NO_EQUILIBRIUM: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "pmgeq", version, about = "Bundling and price-matching equilibria of a retail duopoly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one subgame and print the selected equilibrium.
    Solve(SolveArgs),
    /// Emit the five-row equilibrium table (four guarantee pairs, no bundling).
    Table(TableArgs),
    /// Run a parameter sweep described by a sweep spec.
    Sweep(SweepArgs),
    /// Cross-check every selected equilibrium against the best-response oracle.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Market config (TOML with a [market] table); baseline if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Guarantee choices, e.g. `--pmg r1=cm r2=nocm`. Unspecified retailers default to cm.
    #[arg(long, num_args = 1..=2, value_name = "RETAILER=cm|nocm")]
    pmg: Vec<String>,
    /// Whether retailer 1 offers the mixed bundle.
    #[arg(long, default_value = "1", value_parser = ["0", "1"])]
    bundling: String,
    /// Append an oracle fixed-point comparison.
    #[arg(long, value_enum)]
    verify: Option<VerifyMode>,
    /// Absolute feasibility tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyMode {
    Oracle,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for table.csv (and table.json); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write JSON (to stdout instead of CSV when --out is absent).
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for one CSV per panel; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of CPUs.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Largest accepted relative price deviation.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<bundling_pmg::Error> for Failure {
    fn from(e: bundling_pmg::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn load_market(path: Option<&Path>) -> Result<MarketParams, Failure> {
    let Some(path) = path else { return Ok(MarketParams::baseline()) };
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    parse_market_config(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn parse_scenario(bundling: &str, pmg: &[String]) -> Result<Scenario, Failure> {
    let (mut r1, mut r2) = (true, true);
    for item in pmg {
        let (who, what) = item
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("--pmg expects r1=<cm|nocm>, got `{item}`")))?;
        let flag = match what.to_ascii_lowercase().as_str() {
            "cm" => true,
            "nocm" | "ncm" => false,
            other => return Err(Failure::input(format!("--pmg value must be cm or nocm, got `{other}`"))),
        };
        match who {
            "r1" => r1 = flag,
            "r2" => r2 = flag,
            other => return Err(Failure::input(format!("--pmg retailer must be r1 or r2, got `{other}`"))),
        }
    }
    Ok(Scenario::new(bundling == "1", r1, r2))
}

fn policy_opts(tol: f64) -> Result<PolicyOptions, Failure> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Failure::input(format!("--tol must be a finite value >= 0, got {tol}")));
    }
    Ok(PolicyOptions {
        tol: FeasibilityTol { abs: tol, ..FeasibilityTol::default() },
        ..PolicyOptions::default()
    })
}

fn print_solution(out: &mut impl Write, sol: &SubgameSolution) -> io::Result<()> {
    writeln!(out, "scenario: {}", sol.scenario)?;
    for c in &sol.candidates {
        let status = match (&c.result, &c.error) {
            (Some(r), _) if r.feasible => "feasible".to_string(),
            (Some(r), _) => format!("infeasible: {}", r.violations.join("; ")),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "not evaluated".to_string(),
        };
        writeln!(out, "candidate {}: {status}", c.theorem)?;
    }
    let Some(r) = &sol.chosen else {
        writeln!(out, "equilibrium: none")?;
        return Ok(());
    };
    writeln!(out, "equilibrium: {} (regime {})", r.theorem, r.regime)?;
    let p = r.prices;
    write!(out, "prices: p1={} p2={}", fmt_g6(p.p1), fmt_g6(p.p2))?;
    if let Some(pb1) = p.pb1 {
        write!(out, " pb1={}", fmt_g6(pb1))?;
    }
    writeln!(out, " pb2={}", fmt_g6(p.pb2))?;
    let d: Vec<String> = DemandProfile::LABELS
        .iter()
        .zip(r.demands.as_array())
        .map(|(k, v)| format!("{k}={}", fmt_g6(v)))
        .collect();
    writeln!(out, "demands: {}", d.join(" "))?;
    let k = r.profits.in_thousands();
    writeln!(
        out,
        "profits (thousands): pi_r1={} pi_r2={} welfare={}",
        fmt_g6(k.pi_r1),
        fmt_g6(k.pi_r2),
        fmt_g6(k.welfare)
    )?;
    writeln!(out, "foc_residual: {:.3e}", r.foc_residual)?;
    let rep = &r.condition_report;
    let failed = rep.failures().count();
    writeln!(
        out,
        "condition set {}: {} ({} of {} inequalities hold)",
        rep.set_id,
        if rep.all_satisfied { "satisfied" } else { "not satisfied" },
        rep.inequalities.len() - failed,
        rep.inequalities.len()
    )?;
    for i in rep.failures() {
        writeln!(out, "  fails: {}  [{} vs {}]", i.label, fmt_g6(i.lhs), fmt_g6(i.rhs))?;
    }
    if let Some(c) = sol.chosen_candidate() {
        for w in &c.warnings {
            match w {
                Warning::ConditionsNotVerified => writeln!(
                    out,
                    "warning: conditions-not-verified (admitted as feasible and stationary)"
                )?,
            }
        }
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, Failure> {
    let params = load_market(args.config.as_deref())?;
    let scenario = parse_scenario(&args.bundling, &args.pmg)?;
    let opts = policy_opts(args.tol)?;
    let sol = solve_subgame(&params, &scenario, &opts);
    let mut out = io::stdout().lock();
    print_solution(&mut out, &sol).map_err(|e| Failure::input(e.to_string()))?;
    if let (Some(VerifyMode::Oracle), Some(r)) = (args.verify, &sol.chosen) {
        let o = find_fixed_point(&params, &scenario, &OracleConfig::pinned(r.regime))?;
        let dev = o.prices.sup_distance(&r.prices) / r.prices.sup_norm().max(1.0);
        writeln!(
            out,
            "oracle: converged={} iterations={} max_rel_deviation={:.3e}",
            o.converged, o.iterations, dev
        )
        .map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(if sol.chosen.is_some() { 0 } else { EXIT_NO_EQUILIBRIUM })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn create_file(path: &Path) -> Result<io::BufWriter<fs::File>, Failure> {
    fs::File::create(path).map(io::BufWriter::new).map_err(|e| io_failure(path, e))
}

fn cmd_table(args: &TableArgs) -> Result<u8, Failure> {
    let params = load_market(args.config.as_deref())?;
    let rows = table_rows(&params, &PolicyOptions::default())?;
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_table_csv(&rows, create_file(&dir.join("table.csv"))?)?;
            if args.json {
                write_table_json(&rows, create_file(&dir.join("table.json"))?)?;
            }
        }
        None if args.json => write_table_json(&rows, io::stdout().lock())?,
        None => write_table_csv(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_failure(&args.config, e))?;
    let spec = SweepSpec::parse(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", args.config.display())))?;
    let results = run_sweep(&spec, args.threads, &PolicyOptions::default())?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }
    for panel in &results {
        match &args.out {
            Some(dir) => {
                write_cells_csv(&spec, &panel.cells, create_file(&dir.join(format!("{}.csv", panel.name)))?)?;
                if args.json {
                    write_cells_json(
                        &spec,
                        &panel.cells,
                        create_file(&dir.join(format!("{}.json", panel.name)))?,
                    )?;
                }
            }
            None => {
                let mut out = io::stdout().lock();
                writeln!(out, "# panel: {}", panel.name).map_err(|e| Failure::input(e.to_string()))?;
                if args.json {
                    write_cells_json(&spec, &panel.cells, &mut out)?;
                } else {
                    write_cells_csv(&spec, &panel.cells, &mut out)?;
                }
            }
        }
        let existing = panel.cells.iter().filter(|c| c.exists).count();
        eprintln!("panel {}: {} cells, {} with equilibria", panel.name, panel.cells.len(), existing);
    }
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8, Failure> {
    let params = load_market(args.config.as_deref())?;
    params.validate()?;
    let mut out = io::stdout().lock();
    let mut ok = true;
    for scenario in Scenario::all() {
        let sol = solve_subgame(&params, &scenario, &PolicyOptions::default());
        let line = match &sol.chosen {
            None => format!("{scenario}: no closed-form equilibrium"),
            Some(r) => {
                let pinned = find_fixed_point(&params, &scenario, &OracleConfig::pinned(r.regime))?;
                let dev = pinned.prices.sup_distance(&r.prices) / r.prices.sup_norm().max(1.0);
                let pass = pinned.converged && dev <= args.tol;
                ok &= pass;
                let global = find_fixed_points(&params, &scenario, &OracleConfig::default())?;
                let global: Vec<String> = global
                    .iter()
                    .map(|g| {
                        let kink = if g.on_kink { " on kink" } else { "" };
                        format!("{}{kink}", g.regime)
                    })
                    .collect();
                format!(
                    "{scenario}: {} {} regime-pinned oracle max_rel_deviation={dev:.3e} [{}]; global fixed points: {}",
                    r.theorem,
                    r.regime,
                    if pass { "PASS" } else { "FAIL" },
                    if global.is_empty() { "none".to_string() } else { global.join(", ") }
                )
            }
        };
        writeln!(out, "{line}").map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(if ok { 0 } else { EXIT_MISMATCH })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Table(a) => cmd_table(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
