use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use log::info;

use smm_core::audit::{self, AuditDims, AuditError, AuditReport};
use smm_core::harness::{self, worker, HarnessError, JobSpec, KeySource, WorkerRegistry};
use smm_core::rates::{self, Sweep};
use smm_core::schemes::{
    achievable_rate, default_r, plan_custom, plan_for, validate_exponent_plan, SchemeError, SchemeKind,
    SchemeParams, SchemePlan,
};
use smm_core::{FieldMatrix, PrimeField};

use crate::{AuditArgs, Command, RatesArgs, RunArgs, SchemeOpts, WorkerArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_BIND: u8 = 4;

fn fail(code: u8, message: impl Display) -> CliError {
    CliError {
        code,
        message: message.to_string().replace('\n', " "),
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        fail(EXIT_FAILURE, e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        fail(EXIT_FAILURE, e)
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let code = match e {
            AuditError::BudgetExceeded { .. } => EXIT_BUDGET,
            _ => EXIT_FAILURE,
        };
        fail(code, e)
    }
}

pub fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Run(args) => cmd_run(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Rates(args) => cmd_rates(&args),
        Command::Worker(args) => cmd_worker(&args),
    }
}

fn field_for(opts: &SchemeOpts, fallback: PrimeField) -> Result<PrimeField, CliError> {
    match opts.modulus {
        Some(q) => PrimeField::new(q).map_err(|e| fail(EXIT_INPUT, format!("--modulus {q}: {e}"))),
        None => Ok(fallback),
    }
}

/// The block count to use, after checking it against the closed form.
fn choose_r(opts: &SchemeOpts) -> Result<Option<usize>, CliError> {
    if !matches!(SchemeKind::from(opts.scheme), SchemeKind::FullySecure) {
        return Ok(opts.r);
    }
    if opts.r.is_some() {
        return Ok(opts.r);
    }
    let paper = rates::paper_r(opts.n).checked_sub(opts.ell).filter(|&r| r >= 1);
    let feasible = default_r(opts.n, opts.ell);
    if let Some(r) = paper {
        let needed = (r + opts.ell) * (r + opts.ell);
        if needed > opts.n {
            let msg = format!(
                "the closed-form block count r={r} needs {needed} servers but N={}",
                opts.n
            );
            if opts.strict_paper_r {
                return Err(fail(EXIT_FAILURE, format!("{msg} (--strict-paper-r)")));
            }
            match feasible {
                Some(f) => eprintln!("warning: {msg}; using the feasible r={f}"),
                None => eprintln!("warning: {msg}; no feasible r exists"),
            }
        }
    }
    Ok(feasible.or(paper))
}

fn build_plan(opts: &SchemeOpts, params: &SchemeParams) -> Result<SchemePlan, CliError> {
    match (&opts.a_exp, &opts.b_exp) {
        (Some(a), Some(b)) => {
            let plan = plan_custom(params, opts.a_parts, opts.b_parts, a.clone(), b.clone())?;
            let verdict = validate_exponent_plan(&plan);
            if !verdict.is_valid() {
                let reasons: Vec<String> = verdict.failures.iter().map(|f| f.to_string()).collect();
                return Err(fail(
                    EXIT_FAILURE,
                    format!("custom exponents rejected: {}", reasons.join("; ")),
                ));
            }
            Ok(plan)
        }
        _ => Ok(plan_for(params, choose_r(opts)?)?),
    }
}

fn read_matrix(path: &Path, binary: bool) -> Result<FieldMatrix, CliError> {
    let bytes = fs::read(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    let parsed = if binary {
        FieldMatrix::from_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| fail(EXIT_INPUT, format!("{}: not UTF-8 text", path.display())))?;
        FieldMatrix::from_text(&text)
    };
    parsed.map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| fail(EXIT_FAILURE, format!("stdout: {e}"))),
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, CliError> {
    let opts = &args.scheme;
    let a = read_matrix(&args.a, args.binary)?;
    let b = read_matrix(&args.b, args.binary)?;
    let field = field_for(opts, a.field())?;
    if a.field() != field || b.field() != field {
        return Err(fail(
            EXIT_INPUT,
            format!(
                "inputs are over F_{} and F_{}, job is over F_{}",
                a.field().modulus(),
                b.field().modulus(),
                field.modulus()
            ),
        ));
    }
    let params = SchemeParams::new(opts.scheme.into(), opts.n, opts.ell, field)?;
    let plan = build_plan(opts, &params)?;
    let keys = match args.seed {
        Some(seed) => KeySource::Seeded(seed),
        None => KeySource::Entropy,
    };
    let job = JobSpec::new(plan, a, b, keys);
    let (product, log) = match &args.workers {
        Some(path) => {
            let registry = WorkerRegistry::from_file(path).map_err(|e| fail(EXIT_INPUT, e))?;
            harness::run_distributed(&job, &registry)?
        }
        None => harness::run_local(&job)?,
    };
    info!("{}", log.timings_summary());
    let bytes = if args.binary {
        product.to_binary()
    } else {
        product.to_text().into_bytes()
    };
    write_output(args.out.as_deref(), &bytes)?;
    print!("{}", log.summary());
    let plan_rate = achievable_rate(&job.plan);
    println!(
        "plan rate {}/{} (decoded from {} of {} answers)",
        plan_rate.numer(),
        plan_rate.denom(),
        job.plan.answers_needed(),
        job.plan.params().n_servers()
    );
    Ok(0)
}

fn write_report(report: &AuditReport, out: &mut String) {
    out.push_str(&report.summary());
    out.push_str(&report.records());
}

fn cmd_audit(args: &AuditArgs) -> Result<u8, CliError> {
    let opts = &args.scheme;
    let field = field_for(opts, PrimeField::new(3).expect("3 is prime"))?;
    let params = SchemeParams::desk_scale(opts.scheme.into(), opts.n, opts.ell, field)?;
    let plan = build_plan(opts, &params)?;
    let dims = AuditDims::new(
        args.rows.unwrap_or(plan.a_parts()),
        args.inner,
        args.cols.unwrap_or(if plan.encodes_b() { plan.b_parts() } else { 1 }),
    );
    let positive = audit::audit_at_size(
        &plan,
        dims,
        opts.ell,
        audit::Expectation::Perfect,
        args.budget,
    )?;
    let negative = audit::audit_collusion_count_boundary_with_budget(&plan, dims, args.budget)?;
    let mut text = String::new();
    write_report(&positive, &mut text);
    write_report(&negative, &mut text);
    let passed = positive.meets_expectation() && negative.meets_expectation();
    text.push_str(if passed { "audit passed\n" } else { "audit FAILED\n" });
    print!("{text}");
    if let Some(path) = &args.report {
        fs::write(path, &text).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
    }
    if passed {
        Ok(0)
    } else {
        Err(fail(
            EXIT_FAILURE,
            format!(
                "audit verdict: {} at size {} ({}), {} at size {} ({})",
                if positive.is_perfect() { "perfect" } else { "leaky" },
                positive.collusion_size,
                if positive.meets_expectation() { "as expected" } else { "expected perfect" },
                if negative.any_leaky() { "leaky" } else { "perfect" },
                negative.collusion_size,
                if negative.meets_expectation() { "as expected" } else { "expected leaky" },
            ),
        ))
    }
}

fn cmd_rates(args: &RatesArgs) -> Result<u8, CliError> {
    let sweep = match (args.fix_l, args.fix_n) {
        (Some(ell), None) => Sweep::FixEll {
            ell,
            n_from: args.n_from.expect("required by clap"),
            n_to: args.n_to.expect("required by clap"),
        },
        (None, Some(n)) => Sweep::FixN {
            n,
            ell_from: args.l_from.expect("required by clap"),
            ell_to: args.l_to.expect("required by clap"),
        },
        _ => return Err(fail(EXIT_INPUT, "choose one of --fix-l or --fix-n")),
    };
    let rows = rates::sweep_table(sweep).map_err(|e| fail(EXIT_INPUT, e))?;
    write_output(args.out.as_deref(), rates::to_csv(&rows).as_bytes())?;
    Ok(0)
}

fn cmd_worker(args: &WorkerArgs) -> Result<u8, CliError> {
    let handle = worker::spawn_worker(args.listen.as_str(), worker::WorkerConfig::default())
        .map_err(|e| fail(EXIT_BIND, format!("cannot listen on {}: {e}", args.listen)))?;
    println!("listening on {}", handle.local_addr());
    let _ = io::stdout().flush();
    handle.join();
    Ok(0)
}
