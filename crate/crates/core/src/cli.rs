//! Command-line front end.
//!
//! CSV goes to standard output (or `--out`), diagnostics to standard error.
//! Every CSV output starts with `#` lines echoing the resolved
//! configuration. The worker thread count comes from `SYNCSEC_THREADS`
//! (default 1) and never changes results.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bound::{self, GridSpec, McBudget};
use crate::channel::{transmit, ChannelParams};
use crate::condent::{genie_block_cond_entropy_lb, mc_cond_entropy_rate, ChannelKind, GenieBlockConfig, EXACT_MAX_LEN};
use crate::error::{Error, Result};
use crate::hmm::{build_deletion_hmm, build_erasure_hmm, build_insertion_hmm, mc_entropy_rate};
use crate::selftest;
use crate::source::MarkovSource;

pub const THREADS_ENV: &str = "SYNCSEC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "syncsec", version, about = "Synchronization-error secrecy: transmitter and secrecy-capacity lower bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// First-order source: probability of a 0 -> 1 transition.
    #[arg(long, requires = "p10", conflicts_with = "matrix")]
    pub p01: Option<f64>,
    /// First-order source: probability of a 1 -> 0 transition.
    #[arg(long, requires = "p01")]
    pub p10: Option<f64>,
    /// CSV file with the full 2^M x 2^M transition matrix.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

impl SourceArgs {
    /// Defaults to the uniform i.i.d. source.
    fn resolve(&self) -> Result<MarkovSource> {
        match (&self.matrix, self.p01, self.p10) {
            (Some(path), _, _) => MarkovSource::from_csv(&std::fs::read_to_string(path)?),
            (None, Some(a), Some(b)) => MarkovSource::first_order(a, b),
            _ => MarkovSource::first_order(0.5, 0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    /// Source symbols.
    X,
    /// Receiver's erasure sequence.
    Y,
    /// Eavesdropper output symbols, insertion channel.
    ZIns,
    /// Eavesdropper output symbols, deletion channel.
    ZDel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Ins,
    Del,
}

impl From<Channel> for ChannelKind {
    fn from(c: Channel) -> Self {
        match c {
            Channel::Ins => ChannelKind::Insertion,
            Channel::Del => ChannelKind::Deletion,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BudgetArgs {
    /// Input length for conditional-entropy and receiver-entropy runs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output length for eavesdropper entropy-rate runs.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Replace the exact deletion trellis with the genie-aided block bound.
    #[arg(long = "genie-T", value_name = "T")]
    pub genie_t: Option<usize>,
    /// Start from the long-run preset instead of the desk-scale one.
    #[arg(long = "paper-scale")]
    pub long_run: bool,
}

impl BudgetArgs {
    fn resolve(&self) -> McBudget {
        let base = if self.long_run {
            McBudget::LONG_RUN
        } else {
            McBudget::DESK
        };
        McBudget {
            n: self.n.unwrap_or(base.n),
            k: self.k.unwrap_or(base.k),
            runs: self.runs.unwrap_or(base.runs),
            genie_block: self.genie_t,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the transmitter once and print x, y and the flat output z.
    Transmit {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        i: f64,
        #[arg(long, default_value_t = 0.0)]
        d: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also print the per-symbol segments separated by '|'.
        #[arg(long)]
        segments: bool,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Monte-Carlo entropy rate of one of the hidden-Markov processes.
    Entropy {
        #[arg(long, value_enum)]
        process: Process,
        #[arg(long, default_value_t = 0.0)]
        i: f64,
        #[arg(long, default_value_t = 0.0)]
        d: f64,
        #[arg(long, default_value_t = 100_000)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Conditional entropy rate of the eavesdropper output given the input.
    Condent {
        #[arg(long, value_enum)]
        channel: Channel,
        #[arg(long, default_value_t = 0.0)]
        i: f64,
        #[arg(long, default_value_t = 0.0)]
        d: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "genie-T", value_name = "T")]
        genie_t: Option<usize>,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Secrecy-capacity lower bound for one channel parameter.
    Bound {
        #[arg(value_enum)]
        channel: Channel,
        #[arg(long)]
        param: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optimize over this first-order grid (start:stop:step or a list)
        /// instead of using the given source.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Optimized bound over a list of channel parameters, written as CSV.
    Sweep {
        #[arg(value_enum)]
        channel: Channel,
        /// start:stop:step or a comma-separated list.
        #[arg(long)]
        params: String,
        #[arg(long, default_value = "0.05:0.95:0.05")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

/// Resolved configuration echoed into every CSV output.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    subcommand: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    channel: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    process: Option<Process>,
    #[serde(skip_serializing_if = "Option::is_none")]
    i: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<&'a GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    genie_block: Option<usize>,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    long_run: bool,
}

impl<'a> RunConfig<'a> {
    fn new(subcommand: &'a str, seed: u64) -> Self {
        Self {
            subcommand,
            channel: None,
            process: None,
            i: None,
            d: None,
            params: None,
            source: None,
            grid: None,
            n: None,
            k: None,
            runs: None,
            genie_block: None,
            seed,
            out: None,
            long_run: false,
        }
    }

    fn metadata(&self) -> Vec<String> {
        vec![
            format!("syncsec {} {}", env!("CARGO_PKG_VERSION"), self.subcommand),
            format!("config: {}", serde_json::to_string(self).expect("config serializes")),
        ]
    }

    fn with_budget(mut self, b: McBudget, long_run: bool) -> Self {
        self.n = Some(b.n);
        self.k = Some(b.k);
        self.runs = Some(b.runs);
        self.genie_block = b.genie_block;
        self.long_run = long_run;
        self
    }
}

fn describe_source(source: &MarkovSource) -> String {
    match source.first_order_params() {
        Some((a, b)) => format!("first-order p01={a} p10={b}"),
        None => {
            let p = source.transitions();
            let rows: Vec<String> = (0..p.nrows())
                .map(|r| p.row(r).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                .collect();
            format!("order-{} rows=[{}]", source.order(), rows.join("; "))
        }
    }
}

fn write_metadata(out: &mut dyn Write, config: &RunConfig) -> Result<()> {
    for line in config.metadata() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| Error::Parameter(format!("{THREADS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(1),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return 2;
        }
    };
    let outcome = threads_from_env().and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Parameter(e.to_string()))?;
        let mut buffer = Vec::new();
        let code = pool.install(|| dispatch(cli.command, &mut buffer))?;
        out.write_all(&buffer)?;
        out.flush()?;
        Ok(code)
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut Vec<u8>) -> Result<i32> {
    match command {
        Command::Transmit {
            n,
            i,
            d,
            seed,
            segments,
            source,
        } => {
            let params = ChannelParams::new(i, d)?;
            let source = source.resolve()?;
            if n == 0 {
                return Err(Error::Parameter("--n must be at least 1".into()));
            }
            let x = source.sample_path(n, seed);
            let rec = transmit(&x, params, crate::estimate::derive_seed(seed, 1))?;
            writeln!(out, "{x}")?;
            writeln!(out, "{}", rec.resynced())?;
            writeln!(out, "{}", rec.flat_output())?;
            if segments {
                let parts: Vec<String> = rec
                    .segments()
                    .iter()
                    .map(|s| s.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect())
                    .collect();
                writeln!(out, "{}", parts.join("|"))?;
            }
        }
        Command::Entropy {
            process,
            i,
            d,
            k,
            runs,
            seed,
            source,
        } => {
            let source = source.resolve()?;
            let model = match process {
                Process::X => build_insertion_hmm(&source, 0.0)?,
                Process::Y => build_erasure_hmm(&source, d)?,
                Process::ZIns => build_insertion_hmm(&source, i)?,
                Process::ZDel => build_deletion_hmm(&source, d)?,
            };
            let config = RunConfig {
                process: Some(process),
                i: matches!(process, Process::ZIns).then_some(i),
                d: matches!(process, Process::Y | Process::ZDel).then_some(d),
                source: Some(describe_source(&source)),
                k: Some(k),
                runs: Some(runs),
                ..RunConfig::new("entropy", seed)
            };
            let r = mc_entropy_rate(&model, k, runs, seed)?;
            write_metadata(out, &config)?;
            writeln!(out, "mean,stderr,runs,k")?;
            writeln!(out, "{},{},{},{}", r.mean, r.stderr, r.runs, r.length)?;
        }
        Command::Condent {
            channel,
            i,
            d,
            n,
            runs,
            seed,
            genie_t,
            source,
        } => {
            let source = source.resolve()?;
            let params = match channel {
                Channel::Ins => ChannelParams::insertion_only(i)?,
                Channel::Del => ChannelParams::deletion_only(d)?,
            };
            let (report, method) = match (channel, genie_t) {
                (Channel::Ins, Some(_)) => {
                    return Err(Error::Parameter("--genie-T applies to the deletion channel only".into()))
                }
                (Channel::Del, Some(t)) => (
                    genie_block_cond_entropy_lb(&source, d, n, GenieBlockConfig::new(t)?, runs, seed)?,
                    format!("genie-T{t}"),
                ),
                (_, None) if n > EXACT_MAX_LEN => {
                    return Err(Error::Parameter(format!(
                        "exact trellis is limited to n <= {EXACT_MAX_LEN}; use --genie-T for the deletion channel"
                    )))
                }
                (_, None) => (mc_cond_entropy_rate(&source, params, n, runs, seed)?, "exact".to_string()),
            };
            let config = RunConfig {
                channel: Some(ChannelKind::from(channel).tag()),
                i: (channel == Channel::Ins).then_some(i),
                d: (channel == Channel::Del).then_some(d),
                source: Some(describe_source(&source)),
                n: Some(n),
                runs: Some(runs),
                genie_block: genie_t,
                ..RunConfig::new("condent", seed)
            };
            write_metadata(out, &config)?;
            writeln!(out, "mean,stderr,runs,n,method")?;
            writeln!(out, "{},{},{},{},{}", report.mean, report.stderr, report.runs, report.length, method)?;
        }
        Command::Bound {
            channel,
            param,
            seed,
            grid,
            out: path,
            budget,
            source,
        } => {
            let kind = ChannelKind::from(channel);
            let b = budget.resolve();
            let grid = grid.as_deref().map(bound::parse_values).transpose()?.map(GridSpec::square);
            let source = source.resolve()?;
            let report = match &grid {
                Some(g) => bound::grid_search_fom(kind, param, g, b, seed)?.best().clone(),
                None => bound::secrecy_bound(kind, &source, param, b, seed)?,
            };
            let config = RunConfig {
                channel: Some(kind.tag()),
                i: (kind == ChannelKind::Insertion).then_some(param),
                d: (kind == ChannelKind::Deletion).then_some(param),
                source: grid.is_none().then(|| describe_source(&source)),
                grid: grid.as_ref(),
                out: path.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::new("bound", seed)
            }
            .with_budget(b, budget.long_run);
            let rows = [report];
            match path {
                Some(p) => {
                    let file = std::io::BufWriter::new(std::fs::File::create(&p)?);
                    bound::write_csv(file, &config.metadata(), &rows)?;
                }
                None => bound::write_csv(&mut *out, &config.metadata(), &rows)?,
            }
        }
        Command::Sweep {
            channel,
            params,
            grid,
            seed,
            out: path,
            budget,
        } => {
            let kind = ChannelKind::from(channel);
            let values = bound::parse_values(&params)?;
            let grid = GridSpec::square(bound::parse_values(&grid)?);
            let b = budget.resolve();
            let config = RunConfig {
                channel: Some(kind.tag()),
                params: Some(&values),
                grid: Some(&grid),
                out: Some(path.display().to_string()),
                ..RunConfig::new("sweep", seed)
            }
            .with_budget(b, budget.long_run);
            let rows = bound::sweep_to_path(kind, &values, &grid, b, seed, &config.metadata(), &path)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Selftest => {
            let mut failed = 0;
            for (name, outcome) in selftest::run_all() {
                match outcome {
                    Ok(()) => writeln!(out, "PASS {name}")?,
                    Err(why) => {
                        failed += 1;
                        writeln!(out, "FAIL {name}: {why}")?;
                    }
                }
            }
            return Ok(i32::from(failed > 0));
        }
    }
    Ok(0)
}
