use std::collections::BTreeMap;
use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::{info, warn};

use pbc_core::adapter::{ExternalAdapter, ExternalConfig, MiniLangAdapter, TargetAdapter};
use pbc_core::http::{RetryPolicy, UreqTransport};
use pbc_core::injector::{run_campaign, CampaignConfig, RuleSet};
use pbc_core::nvd::{self, BuildContext, EntrySource, FixtureSource, LiveSource};
use pbc_core::ossfuzz::{self, FixtureIssues, IdPatterns, IssueSource, LiveIssues, TrackContext, Verdict};
use pbc_core::patch::{apply_to_tree, Direction};
use pbc_core::repos::{CloneCommand, LanguageMap, MirrorDir, RepoProvider};
use pbc_core::store::{self, DatasetStats, DEFAULT_YEAR_FLOOR};
use pbc_core::{BugRecord, ProjectRef, Source};

/// Collects bug-fix records from NVD, OSS-Fuzz and test-validated bug injection.
#[derive(Debug, Parser)]
#[command(name = "pbc", version)]
struct Cli {
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine bug-fix commits linked from an external tracker.
    #[command(subcommand)]
    Track(Track),
    /// Run an injection campaign over a test-green project.
    Inject(InjectArgs),
    /// Re-run the tests attached to records on both sides of each fix.
    Reproduce(ReproduceArgs),
    /// Counts by source, language and bug type.
    Stats(StatsArgs),
    #[command(subcommand)]
    Report(Report),
    /// Sorted, validated copy or flat CSV summary of record files.
    Export(ExportArgs),
}

#[derive(Debug, Subcommand)]
enum Track {
    /// CVE entries whose references point at GitHub patch commits.
    Nvd(NvdArgs),
    /// Commits citing OSS-Fuzz issues in their messages.
    Ossfuzz(OssFuzzArgs),
}

#[derive(Debug, Subcommand)]
enum Report {
    /// Per-year, per-source record counts.
    Years(YearsArgs),
}

#[derive(Debug, Args)]
struct SourceMode {
    /// Replay recorded responses from this directory.
    #[arg(long, conflicts_with = "live")]
    fixtures: Option<PathBuf>,
    /// Query the live service.
    #[arg(long)]
    live: bool,
    /// Service base URL in live mode.
    #[arg(long, requires = "live")]
    endpoint: Option<String>,
    /// Retries per request in live mode.
    #[arg(long, default_value_t = 4)]
    max_retries: u32,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Record file to write (JSONL, sorted by id).
    #[arg(long)]
    out: PathBuf,
    /// Merge with the records already in the output file.
    #[arg(long)]
    append: bool,
    /// Fixed record creation time (RFC 3339). Defaults to SOURCE_DATE_EPOCH
    /// when set.
    #[arg(long)]
    created_at: Option<String>,
}

#[derive(Debug, Args)]
struct NvdArgs {
    #[command(flatten)]
    mode: SourceMode,
    /// Mirror of checkouts laid out as <host>/<owner>/<name>.
    #[arg(long)]
    repos: PathBuf,
    /// Shell command that clones missing repositories; `{url}` and `{dest}`
    /// are substituted.
    #[arg(long)]
    clone_cmd: Option<String>,
    /// `owner/name = Language` lines.
    #[arg(long)]
    languages: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OssFuzzArgs {
    /// Checkout whose history is scanned.
    #[arg(long)]
    repo: PathBuf,
    #[command(flatten)]
    mode: SourceMode,
    /// Project as host/owner/name; read from the origin remote when absent.
    #[arg(long)]
    project: Option<String>,
    #[arg(long, default_value = "unknown")]
    language: String,
    /// Extra issue-id regex with one capture group. Repeatable.
    #[arg(long = "id-pattern")]
    id_patterns: Vec<String>,
    /// Reproduce records with testcases: `minilang` or an adapter config file.
    #[arg(long)]
    adapter: Option<String>,
    /// Per-test timeout in seconds during reproduction.
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// Project root.
    #[arg(long)]
    project: PathBuf,
    /// `minilang` or an adapter config file.
    #[arg(long, default_value = "minilang")]
    adapter: String,
    /// Rules to apply, e.g. `1-16` or `2,5,9-11`.
    #[arg(long, default_value = "1-16")]
    rules: RuleSet,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidates per (statement, rule).
    #[arg(long, default_value_t = 1)]
    cap: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Per-test timeout in seconds.
    #[arg(long)]
    test_timeout: Option<f64>,
    /// Campaign statistics as key=value lines.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Project identity as host/owner/name.
    #[arg(long = "project-ref")]
    project_ref: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long)]
    records: PathBuf,
    /// Git checkout holding the fix commits of tracker records.
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Project root that injection records were made from.
    #[arg(long)]
    project: Option<PathBuf>,
    #[arg(long, default_value = "minilang")]
    adapter: String,
    /// Directory that payload references resolve against; defaults to the
    /// directory of the record file.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Record files (JSONL).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Bug types listed per source.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Debug, Args)]
struct YearsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 2022)]
    cutoff: i32,
    /// Years up to this one share a row.
    #[arg(long, default_value_t = DEFAULT_YEAR_FLOOR)]
    floor: i32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Jsonl,
    CsvSummary,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    format: ExportFormat,
}

/// A run configuration that clap accepts but that cannot work.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { tracing::Level::ERROR } else { tracing::Level::INFO };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Track(Track::Nvd(a)) => track_nvd(a),
        Command::Track(Track::Ossfuzz(a)) => track_ossfuzz(a),
        Command::Inject(a) => inject(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Stats(a) => {
            let records = store::read_all(&a.input.inputs)?;
            emit(a.input.out.as_deref(), &DatasetStats::from_records(&records).render(a.top))
        }
        Command::Report(Report::Years(a)) => {
            let records = store::read_all(&a.input.inputs)?;
            emit(a.input.out.as_deref(), &store::year_report(&records, a.cutoff, a.floor).render())
        }
        Command::Export(a) => {
            let records = store::read_all(&a.input.inputs)?;
            let text = match a.format {
                ExportFormat::Jsonl => store::export_jsonl(&records)?,
                ExportFormat::CsvSummary => store::export_csv_summary(&records),
            };
            emit(a.input.out.as_deref(), &text)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn created_at(flag: &Option<String>) -> Result<Option<DateTime<Utc>>> {
    if let Some(s) = flag {
        let t = DateTime::parse_from_rfc3339(s).map_err(|e| usage(format!("--created-at {s}: {e}")))?;
        return Ok(Some(t.with_timezone(&Utc)));
    }
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(s) => {
            let secs: i64 = s.trim().parse().map_err(|_| usage(format!("SOURCE_DATE_EPOCH={s} is not an integer")))?;
            Ok(DateTime::from_timestamp(secs, 0))
        }
        Err(_) => Ok(None),
    }
}

fn write_records(out: &OutputArgs, mut records: Vec<BugRecord>) -> Result<()> {
    if out.append && out.out.exists() {
        let mut existing = store::read_records(&out.out)?;
        existing.append(&mut records);
        records = existing;
    }
    store::write_sorted(&records, &out.out)?;
    info!(records = records.len(), path = %out.out.display(), "records written");
    Ok(())
}

fn fixtures_dir(mode: &SourceMode, default: &str) -> Result<PathBuf> {
    let dir = mode.fixtures.clone().unwrap_or_else(|| PathBuf::from(default));
    if !dir.is_dir() {
        return Err(usage(format!(
            "fixtures directory {} is not readable; pass --fixtures DIR or --live",
            dir.display()
        )));
    }
    Ok(dir)
}

fn retry(mode: &SourceMode) -> RetryPolicy {
    RetryPolicy {
        max_retries: mode.max_retries,
        ..RetryPolicy::default()
    }
}

fn transport() -> Box<UreqTransport> {
    Box::new(UreqTransport::new(Duration::from_secs(60)))
}

fn track_nvd(a: NvdArgs) -> Result<()> {
    let mut source: Box<dyn EntrySource> = if a.mode.live {
        let key = std::env::var(nvd::API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let endpoint = a.mode.endpoint.as_deref().unwrap_or(nvd::DEFAULT_ENDPOINT);
        Box::new(LiveSource::new(transport(), endpoint, key).with_retry(retry(&a.mode)))
    } else {
        Box::new(FixtureSource::open(&fixtures_dir(&a.mode, "fixtures/nvd/pages")?)?)
    };
    let repos: Box<dyn RepoProvider> = match &a.clone_cmd {
        Some(t) => Box::new(CloneCommand::new(&a.repos, t.clone())),
        None => Box::new(MirrorDir::new(&a.repos)),
    };
    let languages = match &a.languages {
        Some(p) => LanguageMap::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => LanguageMap::new(),
    };
    let ctx = BuildContext {
        repos: repos.as_ref(),
        languages: &languages,
        created_at: created_at(&a.output.created_at)?,
    };
    let (records, stats) = nvd::track(source.as_mut(), &ctx)?;
    eprint!("{}", stats.report());
    write_records(&a.output, records)
}

fn parse_project(s: &str, language: &str) -> Result<ProjectRef> {
    let parts: Vec<&str> = s.split('/').collect();
    match parts.as_slice() {
        [host, owner, name] if !owner.is_empty() && !name.is_empty() => Ok(ProjectRef::new(host, owner, name, language)),
        _ => Err(usage(format!("project `{s}` is not host/owner/name"))),
    }
}

fn load_adapter(spec: &str, project_root: &Path, timeout: Option<Duration>) -> Result<Box<dyn TargetAdapter>> {
    if spec == "minilang" {
        let mut a = MiniLangAdapter::new();
        if let Some(t) = timeout {
            a = a.with_test_timeout(t);
        }
        return Ok(Box::new(a));
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(usage(format!("adapter `{spec}` is neither `minilang` nor a config file")));
    }
    let config = ExternalConfig::load(path)?;
    Ok(Box::new(ExternalAdapter::new(config, project_root.to_path_buf())))
}

fn seconds(s: f64, flag: &str) -> Result<Duration> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(usage(format!("{flag} must be a positive number of seconds")));
    }
    Ok(Duration::from_secs_f64(s))
}

fn track_ossfuzz(a: OssFuzzArgs) -> Result<()> {
    let source: Box<dyn IssueSource> = if a.mode.live {
        let endpoint = a.mode.endpoint.as_deref().unwrap_or(ossfuzz::DEFAULT_ENDPOINT);
        Box::new(LiveIssues::new(transport(), endpoint).with_retry(retry(&a.mode)))
    } else {
        Box::new(FixtureIssues::open(fixtures_dir(&a.mode, "fixtures/ossfuzz")?)?)
    };
    let patterns = IdPatterns::default()
        .with_extra(&a.id_patterns)
        .map_err(|e| usage(format!("--id-pattern: {e}")))?;
    let project = match &a.project {
        Some(p) => parse_project(p, &a.language)?,
        None => ossfuzz::project_from_remote(&a.repo, &a.language).ok_or_else(|| {
            usage(format!(
                "cannot derive a project from the origin remote of {}; pass --project host/owner/name",
                a.repo.display()
            ))
        })?,
    };
    let timeout = seconds(a.timeout, "--timeout")?;
    let adapter = a
        .adapter
        .as_deref()
        .map(|s| load_adapter(s, &a.repo, Some(timeout)))
        .transpose()?;
    let dataset_dir = a
        .output
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let ctx = TrackContext {
        project,
        dataset_dir: &dataset_dir,
        adapter: adapter.as_deref(),
        timeout: Some(timeout),
        created_at: created_at(&a.output.created_at)?,
    };
    let (records, stats) = ossfuzz::track(&a.repo, &patterns, source.as_ref(), &ctx)?;
    eprint!("{}", stats.report());
    write_records(&a.output, records)
}

fn inject(a: InjectArgs) -> Result<()> {
    if !a.project.is_dir() {
        return Err(usage(format!("project {} is not a directory", a.project.display())));
    }
    if a.cap == 0 {
        return Err(usage("--cap must be at least 1"));
    }
    let timeout = a.test_timeout.map(|t| seconds(t, "--test-timeout")).transpose()?;
    let adapter = load_adapter(&a.adapter, &a.project, timeout)?;
    let project = a
        .project_ref
        .as_deref()
        .map(|p| parse_project(p, adapter.language()))
        .transpose()?;
    let config = CampaignConfig {
        rules: a.rules.0,
        seed: a.seed,
        cap: a.cap,
        jobs: a.jobs.into(),
        test_timeout: timeout,
        project,
        created_at: created_at(&a.output.created_at)?.unwrap_or(DateTime::UNIX_EPOCH),
    };
    let (records, stats) = run_campaign(&a.project, adapter.as_ref(), &config)?;
    let report = stats.report();
    match &a.stats {
        Some(p) => fs::write(p, &report).with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{report}"),
    }
    write_records(&a.output, records)?;
    if stats.infrastructure_failures > 0 {
        bail!("{} candidates could not be evaluated", stats.infrastructure_failures);
    }
    Ok(())
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let records = store::read_records(&a.records)?;
    let timeout = seconds(a.timeout, "--timeout")?;
    let dataset_dir = a.dataset_dir.clone().unwrap_or_else(|| {
        a.records
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf()
    });
    let load = |r: &str| fs::read(dataset_dir.join(r));
    let root = a.project.as_ref().or(a.repo.as_ref()).cloned().unwrap_or_else(|| PathBuf::from("."));
    let adapter = load_adapter(&a.adapter, &root, Some(timeout))?;

    let mut verdicts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut errors = 0;
    let mut out = String::new();
    for r in &records {
        if r.tests.as_ref().is_none_or(|t| t.is_empty()) {
            *verdicts.entry("no-tests").or_default() += 1;
            continue;
        }
        let res = match r.source {
            Source::Injection => {
                let Some(project) = &a.project else {
                    return Err(usage("injection records need --project"));
                };
                let fixed = adapter.load(project)?;
                if fixed.fingerprint() != r.fix_commit {
                    warn!(id = %r.id, "project does not match the record's fix snapshot");
                    errors += 1;
                    continue;
                }
                let buggy = apply_to_tree(&fixed, &r.hunks, Direction::Reverse)?;
                ossfuzz::reproduce_trees(buggy, fixed, r.tests.as_deref().unwrap_or(&[]), &load, adapter.as_ref(), Some(timeout))
            }
            _ => {
                let Some(repo) = &a.repo else {
                    return Err(usage("tracker records need --repo"));
                };
                ossfuzz::reproduce(r, repo, &load, adapter.as_ref(), Some(timeout))
            }
        };
        match res {
            Ok(res) => {
                *verdicts.entry(res.verdict.as_str()).or_default() += 1;
                out.push_str(&format!("{}\t{}\t{}\n", r.id, r.source, res.verdict.as_str()));
                if res.verdict == Verdict::Inconclusive {
                    if let Some(d) = &res.diagnostic {
                        warn!(id = %r.id, diagnostic = %d, "inconclusive");
                    }
                }
            }
            Err(e) => {
                warn!(id = %r.id, error = %e, "reproduction failed");
                errors += 1;
            }
        }
    }
    emit(None, &out)?;
    for (k, v) in &verdicts {
        eprintln!("{k}={v}");
    }
    if errors > 0 {
        bail!("{errors} records could not be reproduced");
    }
    Ok(())
}
