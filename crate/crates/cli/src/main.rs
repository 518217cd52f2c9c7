//! `smm`: run secure matrix-multiplication jobs, audit schemes, print rate
//! tables and serve as a worker.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smm_core::SchemeKind;

#[derive(Parser, Debug)]
#[command(name = "smm", version, about = "Secure distributed matrix multiplication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Multiply A and B through N servers and write the product.
    Run(RunArgs),
    /// Exhaustively audit a scheme's secrecy over a tiny field.
    Audit(AuditArgs),
    /// Print the rate comparison table as CSV.
    Rates(RatesArgs),
    /// Serve the wire protocol.
    Worker(WorkerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    OneSided,
    #[value(alias = "fully-secure")]
    Fully,
    Aligned,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::OneSided => SchemeKind::OneSided,
            SchemeArg::Fully => SchemeKind::FullySecure,
            SchemeArg::Aligned => SchemeKind::Aligned,
        }
    }
}

#[derive(Args, Debug)]
pub struct SchemeOpts {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Number of servers.
    #[arg(short = 'N', long = "servers")]
    pub n: usize,
    /// Number of colluding servers tolerated.
    #[arg(short = 'l', long = "colluding")]
    pub ell: usize,
    /// Field modulus (a prime below 2^63).
    #[arg(long, env = "SMM_MODULUS")]
    pub modulus: Option<u64>,
    /// Block count for the fully-secure scheme.
    #[arg(long)]
    pub r: Option<usize>,
    /// Refuse to run when the closed-form block count needs more servers.
    #[arg(long)]
    pub strict_paper_r: bool,
    /// Custom A exponents (blocks then keys), comma separated.
    #[arg(long, value_delimiter = ',', requires = "b_exp")]
    pub a_exp: Option<Vec<u64>>,
    /// Custom B exponents (blocks then keys), comma separated.
    #[arg(long, value_delimiter = ',', requires = "a_exp")]
    pub b_exp: Option<Vec<u64>>,
    /// Row blocks of A for custom exponents.
    #[arg(long, default_value_t = 2)]
    pub a_parts: usize,
    /// Column blocks of B for custom exponents.
    #[arg(long, default_value_t = 2)]
    pub b_parts: usize,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub scheme: SchemeOpts,
    /// Matrix A.
    #[arg(long)]
    pub a: std::path::PathBuf,
    /// Matrix B (public for the one-sided scheme).
    #[arg(long)]
    pub b: std::path::PathBuf,
    /// Product output; standard output when omitted.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Seed for reproducible keys; system entropy when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker registry file (one host:port per line); runs in process when omitted.
    #[arg(long)]
    pub workers: Option<std::path::PathBuf>,
    /// Read and write matrices in the binary wire format.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub scheme: SchemeOpts,
    /// Rows of A; defaults to the number of A blocks.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Columns of A and rows of B.
    #[arg(long, default_value_t = 1)]
    pub inner: usize,
    /// Columns of B; defaults to the number of B blocks.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Maximum enumerated states per collusion set.
    #[arg(long, default_value_t = smm_core::audit::DEFAULT_BUDGET)]
    pub budget: u64,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct RatesArgs {
    /// Fix l and sweep N.
    #[arg(long, conflicts_with = "fix_n", requires_all = ["n_from", "n_to"])]
    pub fix_l: Option<usize>,
    #[arg(long)]
    pub n_from: Option<usize>,
    #[arg(long)]
    pub n_to: Option<usize>,
    /// Fix N and sweep l.
    #[arg(long, requires_all = ["l_from", "l_to"])]
    pub fix_n: Option<usize>,
    #[arg(long)]
    pub l_from: Option<usize>,
    #[arg(long)]
    pub l_to: Option<usize>,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct WorkerArgs {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7700")]
    pub listen: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,smm_core::harness::worker=info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line: Vec<&str> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .collect();
            eprintln!("smm-error: {}", line.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("smm-error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
