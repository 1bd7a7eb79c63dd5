//! `snbody`: graph catalogs, symmetry transforms, coupling tensors,
//! reduction tables, normal-mode spectra, and the first-order pipeline,
//! driven from the command line.

use clap::{Parser, Subcommand};
use snbody_cli::archive::{to_json, ArchiveMeta, TaylorDoc};
use snbody_cli::{
    parse_delta, render_frequencies_csv, run_checks, run_pipeline, CheckKind, CliError,
    CliResult, ModelSource, RunConfig, EXIT_CHECK_FAILURE, EXIT_INPUT_ERROR,
};
use snbody_core::{
    beta_table_analytic, build_system, build_W, catalog, derivative_catalog, normal_modes,
    BinaryInvariant, Block, CgContext, CouplingKey, CouplingVariant, Irrep, ParticleCount,
    SectorLabel,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "snbody", version, about = "Permutation-symmetric machinery for N confined bosons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lists the invariant-tensor classes with member counts at N.
    Catalog {
        /// Particle count.
        #[arg(long, default_value_t = 6)]
        n: u32,
    },
    /// Writes the orthogonal symmetry-coordinate transform as CSV rows.
    Wmatrix {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints the nonzero entries of one coupling tensor.
    Cg {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Three sector digits, e.g. 011 or 222.
        #[arg(long)]
        alphas: String,
        /// Coupling variant, I or II.
        #[arg(long, default_value = "I")]
        variant: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the graph reduction tables, optionally with numeric checks.
    Beta {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Add numerically extracted values and relative errors.
        #[arg(long)]
        numeric: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solves the five-sector harmonic problem of a model.
    Modes {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Built-in model name or JSON model file.
        #[arg(long, default_value = "harmonic-harmonic")]
        model: String,
        /// Pair coupling for the harmonic-harmonic built-in.
        #[arg(long)]
        lambda: Option<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extracts minimum and Taylor data of a model into a JSON document.
    Extract {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Built-in model name or JSON model file.
        #[arg(long, default_value = "harmonic-harmonic")]
        model: String,
        /// Pair coupling for the harmonic-harmonic built-in.
        #[arg(long)]
        lambda: Option<f64>,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the full first-order pipeline and writes an archive directory.
    Delta1 {
        /// Particle count.
        #[arg(long)]
        n: u32,
        /// Built-in model name or JSON model file.
        #[arg(long, default_value = "harmonic-harmonic")]
        model: String,
        /// Pair coupling for the harmonic-harmonic built-in.
        #[arg(long)]
        lambda: Option<f64>,
        /// Inverse-dimension parameter, a decimal or p/q fraction in (0, 1].
        #[arg(long, default_value = "1/3")]
        delta: String,
        /// Archive directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs named verification checks (repeat --check; default: all).
    Check {
        /// Check name, or "all"; may be repeated.
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Particle count.
        #[arg(long, default_value_t = 6)]
        n: u32,
        /// Random seed for the sampled checks.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Residual bound overriding each check's default.
        #[arg(long)]
        tol: Option<f64>,
        /// Built-in model name or JSON model file.
        #[arg(long, default_value = "harmonic-harmonic")]
        model: String,
        /// Pair coupling for the harmonic-harmonic built-in.
        #[arg(long)]
        lambda: Option<f64>,
        /// Inverse-dimension parameter for the pipeline-based checks.
        #[arg(long, default_value = "1/3")]
        delta: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_INPUT_ERROR as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Catalog { n } => cmd_catalog(n),
        Command::Wmatrix { n, out } => cmd_wmatrix(n, out.as_deref()),
        Command::Cg {
            n,
            alphas,
            variant,
            out,
        } => cmd_cg(n, &alphas, &variant, out.as_deref()),
        Command::Beta { n, numeric, out } => cmd_beta(n, numeric, out.as_deref()),
        Command::Modes {
            n,
            model,
            lambda,
            out,
        } => cmd_modes(n, &model, lambda, out.as_deref()),
        Command::Extract {
            n,
            model,
            lambda,
            out,
        } => cmd_extract(n, &model, lambda, &out),
        Command::Delta1 {
            n,
            model,
            lambda,
            delta,
            out,
        } => cmd_delta1(n, &model, lambda, &delta, &out),
        Command::Check {
            checks,
            n,
            seed,
            tol,
            model,
            lambda,
            delta,
        } => cmd_check(&checks, n, seed, tol, &model, lambda, &delta),
    }
}

/// Writes `text` to `out`, or to stdout when no file was requested.
fn emit(text: &str, out: Option<&std::path::Path>) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

const FIRST_ORDER_BLOCKS: [Block; 6] = [
    Block::R,
    Block::Gamma,
    Block::Rrr,
    Block::GammaRr,
    Block::GammaGammaR,
    Block::GammaGammaGamma,
];

fn cmd_catalog(n: u32) -> CliResult<ExitCode> {
    let n = ParticleCount::new(n)?;
    println!("invariant classes at N = {}", n.get());
    println!("harmonic (second-derivative) blocks:");
    for block in [Block::Rr, Block::GammaR, Block::GammaGamma] {
        print_block_line(block, n);
    }
    println!("first-order (gradient and cubic) blocks:");
    for block in FIRST_ORDER_BLOCKS {
        print_block_line(block, n);
    }
    let total: usize = FIRST_ORDER_BLOCKS.iter().map(|b| catalog(*b).len()).sum();
    println!("first-order total: {total} classes");
    println!("note: the derivative-refined kinetic catalog replaces ggg-c by ggg-c*");
    Ok(ExitCode::SUCCESS)
}

fn print_block_line(block: Block, n: ParticleCount) {
    let ids = catalog(block);
    let names: Vec<String> = ids.iter().map(|id| id.to_string()).collect();
    let members: usize = ids
        .iter()
        .map(|id| BinaryInvariant::new(*id, n).count())
        .sum();
    println!(
        "  {:<3} {} classes, {} index tuples: {}",
        block.name(),
        ids.len(),
        members,
        names.join(" ")
    );
}

fn cmd_wmatrix(n: u32, out: Option<&std::path::Path>) -> CliResult<ExitCode> {
    let n = ParticleCount::new(n)?;
    let w = build_W(n);
    let full = w.assemble_full();
    let p = n.num_coords();
    let mut text = format!("# n={}\n", n.get());
    text.push_str("sector,row");
    for c in 0..p {
        text.push_str(&format!(",c{c}"));
    }
    text.push('\n');
    let mut row = 0usize;
    for sector in SectorLabel::ALL {
        for local in 0..sector.rows(n) {
            text.push_str(&format!("{sector},{local}"));
            for c in 0..p {
                text.push_str(&format!(",{}", full[(row, c)]));
            }
            text.push('\n');
            row += 1;
        }
    }
    emit(&text, out)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_alphas(s: &str) -> CliResult<[Irrep; 3]> {
    let digits: Vec<Irrep> = s
        .chars()
        .map(|c| match c {
            '0' => Ok(Irrep::Zero),
            '1' => Ok(Irrep::One),
            '2' => Ok(Irrep::Two),
            _ => Err(CliError::Input(format!(
                "sector digits must be 0, 1, or 2, got {s:?}"
            ))),
        })
        .collect::<CliResult<_>>()?;
    digits
        .try_into()
        .map_err(|_| CliError::Input(format!("expected exactly three sector digits, got {s:?}")))
}

fn parse_variant(s: &str) -> CliResult<CouplingVariant> {
    match s {
        "I" | "i" => Ok(CouplingVariant::I),
        "II" | "ii" => Ok(CouplingVariant::II),
        _ => Err(CliError::Input(format!(
            "coupling variant must be I or II, got {s:?}"
        ))),
    }
}

fn cmd_cg(n: u32, alphas: &str, variant: &str, out: Option<&std::path::Path>) -> CliResult<ExitCode> {
    let n = ParticleCount::new(n)?;
    let key = CouplingKey::with_variant(parse_alphas(alphas)?, parse_variant(variant)?);
    let ctx = CgContext::new(n);
    let tensor = ctx.tensor(key)?;
    let mut text = format!("# n={} alphas={} variant={}\n", n.get(), alphas, variant);
    text.push_str("i,j,k,value\n");
    let mut count = 0usize;
    for (idx, value) in tensor.iter() {
        if value != 0.0 {
            text.push_str(&format!("{},{},{},{}\n", idx[0], idx[1], idx[2], value));
            count += 1;
        }
    }
    emit(&text, out)?;
    if out.is_some() {
        println!("{count} nonzero entries");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_beta(n: u32, numeric: bool, out: Option<&std::path::Path>) -> CliResult<ExitCode> {
    let n = ParticleCount::new(n)?;
    let mut text = format!("# n={}\n", n.get());
    if numeric {
        text.push_str("graph,key,analytic,numeric,abs_err,rel_err\n");
        for row in snbody_core::verify_tables(n)? {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.graph, row.key, row.analytic, row.numeric, row.abs_err, row.rel_err
            ));
        }
    } else {
        text.push_str("graph,key,value\n");
        for block in Block::ALL {
            for id in derivative_catalog(block) {
                for (key, value) in beta_table_analytic(id, n)? {
                    text.push_str(&format!("{id},{key},{value}\n"));
                }
            }
        }
    }
    emit(&text, out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_modes(
    n: u32,
    model: &str,
    lambda: Option<f64>,
    out: Option<&std::path::Path>,
) -> CliResult<ExitCode> {
    let (spec, canonical) = ModelSource::parse(model).load(lambda)?;
    let pn = ParticleCount::new(n)?;
    let system = build_system(&spec, pn)?;
    let solution = normal_modes(&system.taylor, pn)?;
    let meta = ArchiveMeta::new(n, &canonical);
    let csv = render_frequencies_csv(&meta, &solution, pn);
    emit(&csv, out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_extract(n: u32, model: &str, lambda: Option<f64>, out: &std::path::Path) -> CliResult<ExitCode> {
    let (spec, canonical) = ModelSource::parse(model).load(lambda)?;
    let pn = ParticleCount::new(n)?;
    let system = build_system(&spec, pn)?;
    if let Some(minimum) = &system.minimum {
        println!(
            "symmetric minimum: r = {}, gamma = {}, energy = {}",
            minimum.r, minimum.gamma, minimum.energy
        );
    }
    println!(
        "residuals: gradient {}, cross-tuple {}",
        system.taylor.gradient_amax, system.taylor.cross_tuple_residual
    );
    let doc = TaylorDoc {
        meta: ArchiveMeta::new(n, &canonical),
        system,
    };
    std::fs::write(out, to_json(&doc)?)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_delta1(
    n: u32,
    model: &str,
    lambda: Option<f64>,
    delta: &str,
    out: &std::path::Path,
) -> CliResult<ExitCode> {
    let mut config = RunConfig::new(n, ModelSource::parse(model));
    config.lambda = lambda;
    config.delta = parse_delta(delta)?;
    let archive = run_pipeline(&config)?;
    archive.save(out)?;
    let doc = &archive.delta1;
    println!(
        "first-order energy {}; wavefunction terms: {} cubic, {} linear",
        doc.energy1,
        doc.delta1_cubic.len(),
        doc.delta1_linear.len()
    );
    println!("wrote archive to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(
    checks: &[String],
    n: u32,
    seed: u64,
    tol: Option<f64>,
    model: &str,
    lambda: Option<f64>,
    delta: &str,
) -> CliResult<ExitCode> {
    let mut config = RunConfig::new(n, ModelSource::parse(model));
    config.seed = seed;
    config.tolerance = tol;
    config.lambda = lambda;
    config.delta = parse_delta(delta)?;
    let mut kinds: Vec<CheckKind> = Vec::new();
    for name in checks {
        kinds.extend(CheckKind::parse(name)?);
    }
    config.checks = kinds;
    let report = run_checks(&config);
    print!("{report}");
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_CHECK_FAILURE as u8))
    }
}
