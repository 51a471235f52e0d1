use adomp_core::analysis::analysis_tsv;
use adomp_core::{
    differentiate_adjoint_with, differentiate_tangent, emit, parse, AdjointOptions, Program,
    Schedule,
};
use adomp_exec::{execute, threads_from_env, ExecConfig, Values};
use adomp_verify::fixture::{self, Fixture, Size, Variant};
use adomp_verify::{bench, check_adjoint, check_tangent, values, BenchRow, Report};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "adomp",
    version,
    about = "Differentiate and run OpenMP-style array kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Tangent,
    Adjoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleKind {
    Static,
    Dynamic,
}

#[derive(Subcommand)]
enum Command {
    /// Print the access classification of every shared variable as TSV.
    Analyze { file: PathBuf },
    /// Generate the tangent or adjoint routine.
    Diff {
        #[arg(long, value_enum)]
        mode: Mode,
        file: PathBuf,
        /// Output file; standard output when absent.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        /// Largest per-thread footprint in bytes for a reduction adjoint.
        #[arg(long)]
        privatization_budget: Option<u64>,
    },
    /// Run a program and print selected parameters as TSV columns.
    Run {
        file: PathBuf,
        /// Team size; defaults to ADOMP_NUM_THREADS, then 1.
        #[arg(long)]
        threads: Option<usize>,
        /// Replace the schedule of every worksharing loop.
        #[arg(long, value_enum)]
        schedule: Option<ScheduleKind>,
        #[arg(long, requires = "schedule")]
        chunk: Option<i64>,
        /// `name=value`, `name=v1,v2,...` or `@file.tsv`.
        #[arg(long = "in")]
        inputs: Vec<String>,
        /// Parameters to print; all outputs when absent.
        #[arg(long = "out")]
        outputs: Vec<String>,
    },
    /// Check tangents and adjoints of the built-in fixtures.
    Verify {
        #[arg(long)]
        fixture: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8])]
        threads: Vec<usize>,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Machine-readable output, one row per check.
        #[arg(long)]
        tsv: bool,
    },
    /// Time primal, tangent and adjoint programs of the fixtures.
    Bench {
        #[arg(long)]
        fixture: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4])]
        threads: Vec<usize>,
        /// Runs per measurement; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        cells: Option<i64>,
        #[arg(long)]
        steps: Option<i64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn read_program(path: &Path) -> Result<Program> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, true).with_context(|| format!("parsing {}", path.display()))
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fixtures(names: &[String]) -> Result<Vec<Fixture>> {
    if names.is_empty() {
        return Ok(fixture::all());
    }
    names.iter().map(|n| fixture::by_name(n)).collect()
}

fn run(
    file: &Path,
    threads: Option<usize>,
    schedule: Option<ScheduleKind>,
    chunk: Option<i64>,
    inputs: &[String],
    outputs: &[String],
) -> Result<()> {
    let prog = read_program(file)?;
    let mut vals = Values::new();
    for arg in inputs {
        if let Some(path) = arg.strip_prefix('@') {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            vals.extend(values::parse_tsv(&prog, &text).with_context(|| format!("in {path}"))?);
        } else {
            let (k, v) = values::parse_assignment(&prog, arg)?;
            vals.insert(k, v);
        }
    }
    let nthreads = threads.or_else(threads_from_env).unwrap_or(1);
    let mut cfg = ExecConfig::new(nthreads);
    match schedule {
        Some(ScheduleKind::Static) => cfg = cfg.with_schedule(Schedule::Static(chunk)),
        Some(ScheduleKind::Dynamic) => cfg = cfg.with_schedule(Schedule::Dynamic(chunk)),
        None => {}
    }
    if chunk.is_some_and(|c| c < 1) {
        bail!("--chunk must be positive");
    }
    let out = execute(&prog, &vals, &cfg)?;
    let names: Vec<String> = if outputs.is_empty() {
        prog.params
            .iter()
            .filter(|d| d.intent.is_some_and(|i| i.writes_output()))
            .map(|d| d.name.clone())
            .collect()
    } else {
        outputs.to_vec()
    };
    print!("{}", values::to_tsv(&out.values, &names)?);
    Ok(())
}

fn verify(
    names: &[String],
    threads: &[usize],
    variant: Option<Variant>,
    seed: u64,
    tsv: bool,
) -> Result<bool> {
    let mut all_passed = true;
    let mut show = |r: Result<Report>, what: String| match r {
        Ok(r) => {
            all_passed &= r.passed();
            if tsv {
                r.tsv_rows().iter().for_each(|row| println!("{row}"));
            } else {
                print!("{r}");
            }
        }
        Err(e) => {
            all_passed = false;
            if tsv {
                println!("{what}\terror\t-\t-\tFAIL\t{e:#}");
            } else {
                println!("{what}: error: {e:#}");
            }
        }
    };
    if tsv {
        println!("{}", Report::TSV_HEADER);
    }
    for fx in fixtures(names)? {
        let variants: Vec<Variant> = match variant {
            Some(v) if fx.supports(v) => vec![v],
            Some(_) => Vec::new(),
            None => fx.variants.to_vec(),
        };
        for &nt in threads {
            if variant.is_none() {
                show(
                    check_tangent(&fx, nt, seed),
                    format!("{}\ttangent\t-\t{nt}\t{seed}", fx.name),
                );
            }
            for &v in &variants {
                show(
                    check_adjoint(&fx, nt, v, seed),
                    format!("{}\tadjoint\t{v}\t{nt}\t{seed}", fx.name),
                );
            }
        }
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { file } => read_program(&file)
            .map(|p| print!("{}", analysis_tsv(&p)))
            .map(|_| true),
        Command::Diff {
            mode,
            file,
            output,
            privatization_budget,
        } => (|| {
            let prog = read_program(&file)?;
            let out = match mode {
                Mode::Tangent => differentiate_tangent(&prog)?,
                Mode::Adjoint => {
                    let mut opts = AdjointOptions::default();
                    if let Some(b) = privatization_budget {
                        opts.privatization_budget = b;
                    }
                    let res = differentiate_adjoint_with(&prog, &opts)?;
                    for w in &res.warnings {
                        eprintln!("warning: {w}");
                    }
                    res.program
                }
            };
            write_or_print(output.as_deref(), &emit(&out))?;
            Ok(true)
        })(),
        Command::Run {
            file,
            threads,
            schedule,
            chunk,
            inputs,
            outputs,
        } => run(&file, threads, schedule, chunk, &inputs, &outputs).map(|_| true),
        Command::Verify {
            fixture,
            threads,
            variant,
            seed,
            tsv,
        } => verify(&fixture, &threads, variant, seed, tsv),
        Command::Bench {
            fixture,
            threads,
            reps,
            cells,
            steps,
            seed,
        } => (|| {
            println!("{}", BenchRow::TSV_HEADER);
            for row in bench::empty_loop(&threads, reps)? {
                println!("{}", row.tsv());
            }
            for fx in fixtures(&fixture)? {
                let size = Size {
                    cells: cells.unwrap_or(fx.size.cells),
                    steps: steps.unwrap_or(fx.size.steps),
                };
                for row in bench(&fx.with_size(size), &threads, reps, seed)? {
                    println!("{}", row.tsv());
                }
            }
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
