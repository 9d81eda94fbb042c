//! Command line front end: model validation, determinant scans over energy
//! rectangles, resonance search, and the seeded identity suite.
//!
//! Exit codes are part of the interface: 0 success, 2 schema or I/O
//! failure, 3 model or argument validation failure, 4 region or solver
//! failure, 5 identity suite failure.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use resonax_core::lsolve::SolverOptions;
use resonax_core::resonances::{self, ResonanceResult, SearchRegion};
use resonax_core::verify::{run_suite, VerifyOptions};
use resonax_core::{build_grid, parse_config, Error, MomentumGrid, ParsedConfig, SheetIndex};

use output::{config_digest, fnum, jarray, jcomplex, jobject, jstring};

#[derive(Parser)]
#[command(name = "resonax", version, about = "Resonances and bound states of multichannel scattering models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model configuration and print its summary
    Validate { config: PathBuf },
    /// Evaluate det s_l on an energy rectangle and write a CSV grid
    Scan {
        config: PathBuf,
        /// Sheet signature as comma-separated bits, e.g. 1,0
        #[arg(long)]
        sheet: String,
        /// Rectangle as re_min,re_max,im_min,im_max
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        #[arg(long, default_value_t = 50)]
        nx: usize,
        #[arg(long, default_value_t = 50)]
        ny: usize,
        /// Override the quadrature node count from the config
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count, refine and classify determinant zeros in a region
    Find {
        config: PathBuf,
        /// Sheet signature as comma-separated bits, e.g. 1,0
        #[arg(long)]
        sheet: String,
        /// Rectangle as re_min,re_max,im_min,im_max
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        /// Seeding-scan resolution along Re z
        #[arg(long, default_value_t = 40)]
        nx: usize,
        /// Seeding-scan resolution along Im z
        #[arg(long, default_value_t = 24)]
        ny: usize,
        /// Initial boundary samples for the winding count
        #[arg(long, default_value_t = 64)]
        boundary_points: usize,
        /// Override the quadrature node count from the config
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the seeded identity suite against the model
    Verify {
        config: PathBuf,
        /// Pseudo-random samples per identity
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        seed: u64,
        /// Override the quadrature node count from the config
        #[arg(long)]
        nodes: Option<usize>,
        /// Test fixture: break the momentum factor sign, which must fail
        #[arg(long, hide = true)]
        mutate_a_sign: bool,
    },
}

fn main() -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(3);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// RESONAX_THREADS caps the rayon pool; unset means the rayon default.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("RESONAX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("RESONAX_THREADS must be a positive integer, got '{raw}'"))?;
    if n == 0 {
        return Err("RESONAX_THREADS must be a positive integer".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn exit_class(err: &Error) -> u8 {
    match err {
        Error::Schema(_) => 2,
        Error::Validation(_) | Error::InvalidParameter(_) => 3,
        _ => 4,
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Validate { config } => cmd_validate(&config),
        Cmd::Scan {
            config,
            sheet,
            region,
            nx,
            ny,
            nodes,
            out,
        } => cmd_scan(&config, &sheet, &region, nx, ny, nodes, &out),
        Cmd::Find {
            config,
            sheet,
            region,
            nx,
            ny,
            boundary_points,
            nodes,
            out,
        } => cmd_find(&config, &sheet, &region, nx, ny, boundary_points, nodes, &out),
        Cmd::Verify {
            config,
            samples,
            seed,
            nodes,
            mutate_a_sign,
        } => cmd_verify(&config, samples, seed, nodes, mutate_a_sign),
    }
}

fn load(path: &Path) -> Result<(ParsedConfig, String), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    Ok((cfg, config_digest(&text)))
}

fn solver_options(cfg: &ParsedConfig) -> SolverOptions {
    SolverOptions {
        cond_limit: cfg.solver.cond_limit,
        ..SolverOptions::default()
    }
}

fn make_grid(cfg: &ParsedConfig, nodes: Option<usize>) -> Result<MomentumGrid, Error> {
    build_grid(nodes.unwrap_or(cfg.grid.n_points), cfg.grid.scale)
}

fn parse_sheet(text: &str, channels: usize) -> Result<SheetIndex, Error> {
    let bits: Vec<u8> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u8>()
                .map_err(|_| Error::Validation(format!("sheet bit '{t}' is not an integer")))
        })
        .collect::<Result<_, _>>()?;
    let sheet = SheetIndex::new(bits)?;
    if sheet.len() != channels {
        return Err(Error::Validation(format!(
            "sheet has {} bits but the model has {} channels",
            sheet.len(),
            channels
        )));
    }
    Ok(sheet)
}

fn parse_region(
    text: &str,
    nx: usize,
    ny: usize,
    boundary_points: usize,
) -> Result<SearchRegion, Error> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("region entry '{t}' is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(Error::Validation(format!(
            "region needs 4 comma-separated numbers, got {}",
            parts.len()
        )));
    }
    Ok(SearchRegion {
        re_min: parts[0],
        re_max: parts[1],
        im_min: parts[2],
        im_max: parts[3],
        grid_nx: nx,
        grid_ny: ny,
        boundary_points,
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    std::fs::write(path, content)
        .map_err(|e| Error::Schema(format!("cannot write {}: {e}", path.display())))
}

fn sheet_bits_json(sheet: &SheetIndex) -> String {
    let mut bits = vec![0u8; sheet.len()];
    for &c in &sheet.crossed_set() {
        bits[c] = 1;
    }
    let body: Vec<String> = bits.iter().map(u8::to_string).collect();
    format!("[{}]", body.join(","))
}

/// One line of self-contained provenance per run, printed to stdout after
/// the payload has been written.
fn emit_report(
    command: &str,
    digest: &str,
    parameters: &[(&str, String)],
    results: String,
    warnings: &[String],
    started: Instant,
) {
    let report = jobject(&[
        ("tool", jstring("resonax")),
        ("version", jstring(env!("CARGO_PKG_VERSION"))),
        ("config_digest", jstring(digest)),
        ("command", jstring(command)),
        ("parameters", jobject(parameters)),
        ("results", results),
        ("warnings", jarray(warnings.iter().map(|w| jstring(w)))),
        (
            "timings_ms",
            jobject(&[("total", fnum(started.elapsed().as_secs_f64() * 1e3))]),
        ),
    ]);
    println!("{report}");
}

fn cmd_validate(config: &Path) -> Result<ExitCode, Error> {
    let (cfg, digest) = load(config)?;
    let m = cfg.model.n_channels();
    let thresholds: Vec<String> = cfg.model.thresholds().iter().map(|t| t.to_string()).collect();
    println!("config digest: {digest}");
    println!("channels: {m}");
    println!("thresholds: {}", thresholds.join(", "));
    println!("potential: {}", cfg.model.potential.kind_name());
    println!("partial wave: {}", cfg.model.partial_wave);
    println!("sheets: {}", 1u64 << m);
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(
    config: &Path,
    sheet_text: &str,
    region_text: &str,
    nx: usize,
    ny: usize,
    nodes: Option<usize>,
    out: &Path,
) -> Result<ExitCode, Error> {
    let started = Instant::now();
    let (cfg, digest) = load(config)?;
    let sheet = parse_sheet(sheet_text, cfg.model.n_channels())?;
    let region = parse_region(region_text, nx, ny, 64)?;
    let grid = make_grid(&cfg, nodes)?;
    let values = resonances::scan(&cfg.model, &grid, &region, &sheet, &solver_options(&cfg))?;

    let mut csv = String::from("re_z,im_z,re_det,im_det,abs_det\n");
    for (z, det) in &values {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fnum(z.re),
            fnum(z.im),
            fnum(det.re),
            fnum(det.im),
            fnum(det.norm())
        ));
    }
    write_file(out, &csv)?;

    let (best_z, best) = values
        .iter()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .expect("validated region has at least 2x2 points");
    emit_report(
        "scan",
        &digest,
        &[
            ("sheet", sheet_bits_json(&sheet)),
            ("region", jstring(region_text)),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("nodes", grid.n().to_string()),
            ("out", jstring(&out.display().to_string())),
        ],
        jobject(&[
            ("rows", values.len().to_string()),
            ("min_abs_det", fnum(best.norm())),
            ("argmin_z", jcomplex(*best_z)),
        ]),
        &[],
        started,
    );
    Ok(ExitCode::SUCCESS)
}

fn result_record(r: &ResonanceResult) -> String {
    jobject(&[
        ("sheet", sheet_bits_json(&r.sheet)),
        ("z_star", jcomplex(r.z_star)),
        ("residual", fnum(r.residual)),
        ("kind", jstring(&r.kind.to_string())),
        ("amplitude", jarray(r.null_vector.iter().map(|&c| jcomplex(c)))),
        ("extended", jarray(r.extended.iter().map(|&c| jcomplex(c)))),
        ("gamow_coeff", jarray(r.gamow_coeffs.iter().map(|&c| jcomplex(c)))),
    ])
}

#[allow(clippy::too_many_arguments)]
fn cmd_find(
    config: &Path,
    sheet_text: &str,
    region_text: &str,
    nx: usize,
    ny: usize,
    boundary_points: usize,
    nodes: Option<usize>,
    out: &Path,
) -> Result<ExitCode, Error> {
    let started = Instant::now();
    let (cfg, digest) = load(config)?;
    let sheet = parse_sheet(sheet_text, cfg.model.n_channels())?;
    let region = parse_region(region_text, nx, ny, boundary_points)?;
    let grid = make_grid(&cfg, nodes)?;
    let outcome =
        resonances::find_all(&cfg.model, &grid, &region, &sheet, &solver_options(&cfg))?;

    let records = jarray(outcome.results.iter().map(result_record));
    write_file(out, &format!("{records}\n"))?;

    let warnings: Vec<String> = outcome.warning.clone().into_iter().collect();
    emit_report(
        "find",
        &digest,
        &[
            ("sheet", sheet_bits_json(&sheet)),
            ("region", jstring(region_text)),
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("boundary_points", boundary_points.to_string()),
            ("nodes", grid.n().to_string()),
            ("out", jstring(&out.display().to_string())),
        ],
        jobject(&[
            ("expected", outcome.expected.to_string()),
            ("found", outcome.results.len().to_string()),
        ]),
        &warnings,
        started,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    config: &Path,
    samples: usize,
    seed: u64,
    nodes: Option<usize>,
    mutate_a_sign: bool,
) -> Result<ExitCode, Error> {
    let (cfg, digest) = load(config)?;
    let grid = make_grid(&cfg, nodes)?;
    let opts = VerifyOptions {
        samples,
        seed,
        solver: solver_options(&cfg),
        flip_a_sign: mutate_a_sign,
    };
    let reports = run_suite(&cfg.model, &grid, &opts)?;
    println!("config digest: {digest}");
    println!("samples per identity: {samples}, seed: {seed}");
    for r in &reports {
        println!(
            "{:<26} max deviation {:>10.3e}  tolerance {:>7.1e}  {}",
            r.name,
            r.max_dev,
            r.tol,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let failures = reports.iter().filter(|r| !r.passed).count();
    if failures > 0 {
        println!("{failures} of {} identities failed", reports.len());
        return Ok(ExitCode::from(5));
    }
    println!("all {} identities passed", reports.len());
    Ok(ExitCode::SUCCESS)
}
