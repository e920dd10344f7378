//! `heteroplace` command line: generate designs, place them, check
//! placements and draw snapshots.

mod snapshot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heteroplace::arch::{generate_synthetic, Device, Netlist, SynthSpec};
use heteroplace::engine::{EngineConfig, Metrics, Observer, Placer};
use heteroplace::legalize::{check_half_columns, check_legality, legalize, parse_placement};
use heteroplace::timing::analyze;
use heteroplace::wirelen::hpwl;
use heteroplace::Error;
use serde_json::json;

use snapshot::{render_svg, StateDump};

/// Prefix of environment variables that override engine settings, e.g.
/// `HETEROPLACE_MAX_ITERATIONS=500` or `HETEROPLACE_TIMING__PERIOD_PS=4`.
const ENV_PREFIX: &str = "HETEROPLACE_";

const EXIT_OTHER: u8 = 1;
const EXIT_NONCONVERGED: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_VIOLATIONS: u8 = 4;

#[derive(Parser)]
#[command(name = "heteroplace", version, about = "Analytical placer for heterogeneous FPGAs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Global placement followed by legalization.
    Place(PlaceArgs),
    /// Writes a synthetic device and netlist.
    Gen {
        /// TOML design recipe; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Checks a placement file for legality and clock limits.
    Check {
        #[arg(long)]
        placement: PathBuf,
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        netlist: PathBuf,
        /// Writes the violation list here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Renders a state dump as SVG.
    Snap {
        #[arg(long)]
        state: PathBuf,
        /// Defaults to the dump path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct PlaceArgs {
    #[arg(long)]
    device: PathBuf,
    #[arg(long)]
    netlist: PathBuf,
    /// `key = value` engine settings over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Dump the state every N density steps; 0 turns it off.
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } | Error::ClockInfeasible { .. } | Error::NoSite { .. } => EXIT_INFEASIBLE,
            Error::Divergence { .. } => EXIT_NONCONVERGED,
            _ => EXIT_OTHER,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_OTHER,
        msg: format!("{}: {e}", path.display()),
    })
}

fn load(device: &Path, netlist: &Path) -> Result<(Device, Netlist), Failure> {
    let dev = Device::parse(&read(device)?).map_err(|e| with_path(device, e))?;
    let nl = Netlist::parse(&read(netlist)?, &dev).map_err(|e| with_path(netlist, e))?;
    Ok((dev, nl))
}

fn with_path(path: &Path, e: Error) -> Failure {
    let mut f = Failure::from(e);
    f.msg = format!("{}: {}", path.display(), f.msg);
    f
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Streams metrics lines and periodic state dumps while the engine runs.
struct RunObserver<'a> {
    netlist: &'a Netlist,
    device: &'a Device,
    metrics: BufWriter<File>,
    out: &'a Path,
    every: usize,
    error: Option<std::io::Error>,
}

impl Observer for RunObserver<'_> {
    fn metrics(&mut self, m: &Metrics, xs: &[f64], ys: &[f64]) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(self.metrics, "{line}") {
            self.error = Some(e);
            return;
        }
        if self.every > 0 && m.iter.is_multiple_of(self.every) {
            let dump = StateDump::capture(self.netlist, self.device, xs, ys, m.iter);
            let path = self.out.join(format!("state_{:05}.json", m.iter));
            let text = serde_json::to_string(&dump).expect("dump serializes");
            if let Err(e) = fs::write(path, text) {
                self.error = Some(e);
            }
        }
    }
}

fn engine_config(args: &PlaceArgs) -> Result<EngineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => EngineConfig::from_kv(&read(path)?).map_err(|e| with_path(path, e))?,
        None => EngineConfig::default(),
    };
    cfg.apply_env(ENV_PREFIX, std::env::vars())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn cmd_place(args: &PlaceArgs) -> Result<u8, Failure> {
    let (device, netlist) = load(&args.device, &args.netlist)?;
    let cfg = engine_config(args)?;
    fs::create_dir_all(&args.out)?;

    let mut observer = RunObserver {
        netlist: &netlist,
        device: &device,
        metrics: BufWriter::new(File::create(args.out.join("metrics.jsonl"))?),
        out: &args.out,
        every: args.snapshot_every,
        error: None,
    };
    let mut placer = Placer::new(&netlist, &device, cfg.clone())?;
    if args.snapshot_every > 0 {
        let (xs, ys) = placer.positions();
        let dump = StateDump::capture(&netlist, &device, xs, ys, 0);
        write_json(&args.out.join("state_00000.json"), &dump)?;
    }
    let gp = placer.run_with(&mut observer)?;
    observer.metrics.flush()?;
    if let Some(e) = observer.error {
        return Err(e.into());
    }

    let legal = legalize(&netlist, &gp.xs, &gp.ys, gp.plan.as_ref(), &device)?;
    let (lx, ly) = legal.positions();
    fs::write(args.out.join("placement.pl"), legal.to_text(&netlist))?;

    let timing = analyze(&netlist, &lx, &ly, &cfg.timing)?.report(10);
    write_json(&args.out.join("timing.json"), &timing)?;
    if let Some(plan) = &gp.plan {
        write_json(&args.out.join("clockplan.json"), &plan.to_json(&netlist, &device))?;
    }

    let sites: Vec<_> = legal.sites.iter().copied().map(Some).collect();
    let legality = check_legality(&netlist, &device, &sites);
    let half_columns = check_half_columns(&netlist, &device, &legal.sites);
    let regions = legal.clock_overflow(device.cr_limit);
    write_json(
        &args.out.join("violations.json"),
        &json!({ "legality": legality, "half_columns": half_columns }),
    )?;

    let report = json!({
        "converged": gp.converged,
        "iterations": gp.iterations,
        "hpwl": hpwl(&netlist, &lx, &ly),
        "global_hpwl": gp.hpwl,
        "wns": timing.wns_ps,
        "tns": timing.tns_ps,
        "overflow": gp.overflow,
        "displacement": legal.displacement,
        "max_displacement": legal.max_displacement,
        "clock_violations": {
            "regions": regions,
            "fallbacks": legal.fallbacks,
            "half_columns": half_columns.len(),
        },
        "legality_violations": legality.len(),
        "diagnostics": gp.diagnostics,
    });
    write_json(&args.out.join("report.json"), &report)?;

    let dump = StateDump::capture(&netlist, &device, &lx, &ly, gp.iterations);
    write_json(&args.out.join("state.json"), &dump)?;
    fs::write(args.out.join("placement.svg"), render_svg(&dump))?;

    if !args.quiet {
        println!(
            "{} after {} iterations: hpwl {:.1}, wns {:.3} ps, tns {:.3} ps, displacement {:.1}",
            if gp.converged { "converged" } else { "not converged" },
            gp.iterations,
            hpwl(&netlist, &lx, &ly),
            timing.wns_ps,
            timing.tns_ps,
            legal.displacement
        );
    }
    Ok(if gp.converged { 0 } else { EXIT_NONCONVERGED })
}

fn cmd_gen(spec: Option<&Path>, seed: u64, out: &Path) -> Result<u8, Failure> {
    let spec = match spec {
        Some(path) => SynthSpec::from_toml(&read(path)?).map_err(|e| with_path(path, e))?,
        None => SynthSpec::default(),
    };
    let (device, netlist) = generate_synthetic(&spec, seed)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("design.device"), device.to_text())?;
    fs::write(out.join("design.netlist"), netlist.to_text())?;
    Ok(0)
}

fn cmd_check(placement: &Path, device: &Path, netlist: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let (dev, nl) = load(device, netlist)?;
    let sites = parse_placement(&read(placement)?, &nl, &dev).map_err(|e| with_path(placement, e))?;
    let legality = check_legality(&nl, &dev, &sites);
    let (half_columns, regions) = match sites.iter().copied().collect::<Option<Vec<_>>>() {
        Some(all) => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = all.iter().map(|s| s.centre()).unzip();
            let demand = heteroplace::clockplan::clock_demand(&nl, &xs, &ys, &dev);
            let over: Vec<(usize, usize)> =
                demand.into_iter().enumerate().filter(|&(_, d)| d > dev.cr_limit).collect();
            (check_half_columns(&nl, &dev, &all), over)
        }
        None => (Vec::new(), Vec::new()),
    };
    let value = json!({ "legality": legality, "half_columns": half_columns, "regions": regions });
    match out {
        Some(path) => write_json(path, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    let clean = legality.is_empty() && half_columns.is_empty() && regions.is_empty();
    Ok(if clean { 0 } else { EXIT_VIOLATIONS })
}

fn cmd_snap(state: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let dump: StateDump = serde_json::from_str(&read(state)?).map_err(|e| Failure {
        code: EXIT_OTHER,
        msg: format!("{}: corrupt state dump: {e}", state.display()),
    })?;
    let path = out.map_or_else(|| state.with_extension("svg"), Path::to_path_buf);
    fs::write(path, render_svg(&dump))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Place(args) => cmd_place(args),
        Command::Gen { spec, seed, out } => cmd_gen(spec.as_deref(), *seed, out),
        Command::Check {
            placement,
            device,
            netlist,
            out,
        } => cmd_check(placement, device, netlist, out.as_deref()),
        Command::Snap { state, out } => cmd_snap(state, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("heteroplace: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
