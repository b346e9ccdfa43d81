//! Test-validated bug injection: mutate a green codebase statement by
//! statement, keep the mutants that break compilation or tests, and emit
//! them as records whose fix is the original code.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use tracing::{debug, info, warn};

use crate::adapter::{
    AdapterError, CompileDiagnostic, Rewrite, RuleCatalog, Statement, StatementId, TargetAdapter, TestRunOutcome,
    TestStatus,
};
use crate::model::{
    meta, BugRecord, BugType, CodeLocation, DiffHunk, FailureKind, LineSpan, ProjectRef, Source, TestKind, TestSpec,
};
use crate::tree::SourceTree;

pub mod minilang_rules;
pub mod text_rules;

/// Rule number from the injection catalog, 1 through 16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(u8);

impl RuleId {
    pub fn new(n: u8) -> Option<Self> {
        (1..=16).contains(&n).then_some(RuleId(n))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RuleId> {
        (1..=16).map(RuleId)
    }

    pub fn rule(self) -> &'static InjectionRule {
        &RULES[self.0 as usize - 1]
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Type,
    Operator,
    Literal,
    Constructor,
    Argument,
    Expression,
    Invocation,
    Compound,
    Statement,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectionRule {
    pub id: u8,
    pub name: &'static str,
    pub granularity: Granularity,
}

const fn rule(id: u8, name: &'static str, granularity: Granularity) -> InjectionRule {
    InjectionRule { id, name, granularity }
}

pub const RULES: [InjectionRule; 16] = [
    rule(1, "modify declaring type", Granularity::Type),
    rule(2, "modify operator", Granularity::Operator),
    rule(3, "modify literal", Granularity::Literal),
    rule(4, "modify constructor", Granularity::Constructor),
    rule(5, "swap argument", Granularity::Argument),
    rule(6, "modify boolean expression", Granularity::Expression),
    rule(7, "modify invocation", Granularity::Invocation),
    rule(8, "compound modification", Granularity::Compound),
    rule(9, "replace similar statement", Granularity::Statement),
    rule(10, "move statement", Granularity::Statement),
    rule(11, "insert statement", Granularity::Statement),
    rule(12, "wrap statement", Granularity::Statement),
    rule(13, "insert block", Granularity::Block),
    rule(14, "delete block", Granularity::Block),
    rule(15, "unwrap block", Granularity::Block),
    rule(16, "remove block", Granularity::Block),
];

/// A set of rules parsed from `1-16`, `2,5,9-11` and similar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet(pub Vec<RuleId>);

impl RuleSet {
    pub fn all() -> Self {
        RuleSet(RuleId::all().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rule selection `{0}`: expected numbers 1-16, ranges or a comma list")]
pub struct RuleSetError(String);

impl FromStr for RuleSet {
    type Err = RuleSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RuleSetError(s.to_string());
        let num = |t: &str| t.trim().parse::<u8>().ok().and_then(RuleId::new).ok_or_else(err);
        let mut out = Vec::new();
        for part in s.split(',') {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a > b {
                        return Err(err());
                    }
                    out.extend((a.0..=b.0).map(RuleId));
                }
                None => out.push(num(part)?),
            }
        }
        out.sort();
        out.dedup();
        Ok(RuleSet(out))
    }
}

/// Rules from `rules` that have at least one rewrite for `stmt`.
pub fn applicable_rules(catalog: &dyn RuleCatalog, stmt: &Statement, rules: &[RuleId]) -> Vec<RuleId> {
    rules
        .iter()
        .copied()
        .filter(|r| !catalog.rewrites(stmt, *r).is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantCandidate {
    pub statement: StatementId,
    pub rule: RuleId,
    /// Position among the candidates drawn for this statement and rule.
    pub ordinal: usize,
    pub seed: u64,
    pub rewrite: Rewrite,
}

fn selection_rng(seed: u64, stmt: &StatementId, rule: RuleId) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stmt.to_string().as_bytes());
    h.update([0, rule.0]);
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(key)
}

/// Up to `cap` rewrites of `stmt` under `rule`, drawn by a seeded shuffle
/// of the rule's catalog.
pub fn generate_candidates(
    catalog: &dyn RuleCatalog,
    stmt: &Statement,
    rule: RuleId,
    seed: u64,
    cap: usize,
) -> Vec<MutantCandidate> {
    let mut rewrites = catalog.rewrites(stmt, rule);
    rewrites.shuffle(&mut selection_rng(seed, &stmt.id, rule));
    rewrites
        .into_iter()
        .take(cap)
        .enumerate()
        .map(|(ordinal, rewrite)| MutantCandidate {
            statement: stmt.id.clone(),
            rule,
            ordinal,
            seed,
            rewrite,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutantOutcome {
    Benign,
    CompilationBug(CompileDiagnostic),
    BehaviorBug { failing: Vec<String>, diagnosis: BugType },
}

/// Bug type of a failed run, taken from the first failing test by name.
pub fn diagnose_failure(outcome: &TestRunOutcome) -> Option<BugType> {
    outcome.results.values().find(|s| !s.is_pass()).map(|s| match s {
        TestStatus::Fail { kind, message } => BugType::TestFailure {
            kind: *kind,
            message: message.clone(),
        },
        _ => BugType::TestFailure {
            kind: FailureKind::Timeout,
            message: "suite timeout".into(),
        },
    })
}

/// Renders, compiles and tests one candidate against the baseline.
pub fn evaluate(
    adapter: &dyn TargetAdapter,
    baseline: &SourceTree,
    statements: &[Statement],
    candidate: &MutantCandidate,
    test_timeout: Option<Duration>,
) -> Result<(MutantOutcome, SourceTree), AdapterError> {
    let mutant = crate::adapter::render_edits(baseline, statements, &candidate.rewrite.edits)?;
    let compiled = adapter.compile(&mutant)?;
    if !compiled.ok {
        let diag = compiled.first_error().cloned().unwrap_or(CompileDiagnostic {
            code: "compile error".into(),
            message: String::new(),
            file: None,
            line: None,
        });
        return Ok((MutantOutcome::CompilationBug(diag), mutant));
    }
    let run = adapter.run_tests(&mutant, test_timeout)?;
    let outcome = match diagnose_failure(&run) {
        None => MutantOutcome::Benign,
        Some(diagnosis) => MutantOutcome::BehaviorBug {
            failing: run.failing(),
            diagnosis,
        },
    };
    Ok((outcome, mutant))
}

#[derive(Debug, thiserror::Error)]
pub enum InjectError {
    #[error("baseline does not compile: {0}")]
    BaselineUncompilable(String),
    #[error("baseline has failing tests: {}", .0.join(", "))]
    BaselineRed(Vec<String>),
    #[error("baseline test results differ between two runs: {}", .0.join(", "))]
    FlakyBaseline(Vec<String>),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub rules: Vec<RuleId>,
    pub seed: u64,
    pub cap: usize,
    pub jobs: usize,
    /// Overrides the adapter's test timeout.
    pub test_timeout: Option<Duration>,
    /// Defaults to `local/local/<dir name>` in the adapter's language.
    pub project: Option<ProjectRef>,
    pub created_at: DateTime<Utc>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            rules: RuleSet::all().0,
            seed: 0,
            cap: 1,
            jobs: 1,
            test_timeout: None,
            project: None,
            created_at: DateTime::UNIX_EPOCH,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuleTally {
    pub applicable: usize,
    pub candidates: usize,
    pub benign: usize,
    pub compilation_bugs: usize,
    pub behavior_bugs: usize,
    pub infrastructure_failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignStats {
    pub statements: usize,
    pub candidates: usize,
    pub benign: usize,
    pub compilation_bugs: usize,
    pub behavior_bugs: usize,
    pub infrastructure_failures: usize,
    /// Bugs already recorded under the same id by an earlier candidate.
    pub duplicate_records: usize,
    pub wall_time: Duration,
    pub per_rule: BTreeMap<RuleId, RuleTally>,
}

impl CampaignStats {
    /// Flat `key=value` lines.
    pub fn report(&self) -> String {
        let mut out = format!(
            "statements={}\ncandidates={}\nbenign={}\ncompilation_bugs={}\nbehavior_bugs={}\ninfrastructure_failures={}\nduplicate_records={}\nwall_time_s={:.3}\n",
            self.statements,
            self.candidates,
            self.benign,
            self.compilation_bugs,
            self.behavior_bugs,
            self.infrastructure_failures,
            self.duplicate_records,
            self.wall_time.as_secs_f64(),
        );
        for (r, t) in &self.per_rule {
            out.push_str(&format!(
                "rule_{r}_applicable={}\nrule_{r}_candidates={}\nrule_{r}_benign={}\nrule_{r}_compilation_bugs={}\nrule_{r}_behavior_bugs={}\n",
                t.applicable, t.candidates, t.benign, t.compilation_bugs, t.behavior_bugs
            ));
        }
        out
    }
}

fn baseline_failures(run: &TestRunOutcome) -> Vec<String> {
    run.failing()
}

/// The single hunk between baseline and mutant covering the edited
/// statements: `before` is the mutant (buggy) text, `after` the original.
fn injection_hunk(
    baseline: &SourceTree,
    mutant: &SourceTree,
    statements: &[Statement],
    c: &MutantCandidate,
) -> Option<DiffHunk> {
    let edited: Vec<&Statement> = c
        .rewrite
        .edits
        .iter()
        .filter_map(|e| statements.iter().find(|s| s.id == e.target))
        .collect();
    let file = edited.first()?.id.file.clone();
    if edited.iter().any(|s| s.id.file != file) {
        return None;
    }
    let first = edited.iter().map(|s| s.first_line()).min()?;
    let last = edited.iter().map(|s| s.last_line()).max()?;
    let old: Vec<&str> = baseline.get(&file)?.split_inclusive('\n').collect();
    let new: Vec<&str> = mutant.get(&file).unwrap_or_default().split_inclusive('\n').collect();
    let delta = new.len() as i64 - old.len() as i64;
    let new_last = last as i64 + delta;
    let after_text = old[first as usize - 1..last as usize].concat();
    let (before_span, before_text) = if new_last < first as i64 {
        (None, String::new())
    } else {
        (
            Some(LineSpan::new(first, new_last as u32)),
            new[first as usize - 1..new_last as usize].concat(),
        )
    };
    Some(DiffHunk {
        location: CodeLocation {
            file_path: file,
            before_span,
            after_span: Some(LineSpan::new(first, last)),
        },
        before_text,
        after_text,
    })
}

fn project_for(root: &Path, adapter: &dyn TargetAdapter, config: &CampaignConfig) -> ProjectRef {
    config.project.clone().unwrap_or_else(|| {
        let name = root
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".into());
        ProjectRef::new("local", "local", &name, adapter.language())
    })
}

/// Runs a full injection campaign over the project at `root`.
///
/// Records come back in candidate order: file, statement position, rule,
/// then draw ordinal. The order does not depend on `config.jobs`.
pub fn run_campaign(
    root: &Path,
    adapter: &dyn TargetAdapter,
    config: &CampaignConfig,
) -> Result<(Vec<BugRecord>, CampaignStats), InjectError> {
    let started = Instant::now();
    let baseline = adapter.load(root)?;
    let compiled = adapter.compile(&baseline)?;
    if !compiled.ok {
        let d = compiled.first_error().cloned();
        return Err(InjectError::BaselineUncompilable(
            d.map(|d| format!("{}: {}", d.code, d.message)).unwrap_or_default(),
        ));
    }
    let first = adapter.run_tests(&baseline, config.test_timeout)?;
    let failing = baseline_failures(&first);
    if !failing.is_empty() {
        return Err(InjectError::BaselineRed(failing));
    }
    let second = adapter.run_tests(&baseline, config.test_timeout)?;
    if second != first {
        let flaky = first
            .results
            .keys()
            .chain(second.results.keys())
            .filter(|k| first.results.get(*k) != second.results.get(*k))
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        return Err(InjectError::FlakyBaseline(flaky));
    }

    let statements = adapter.statements(&baseline)?;
    let catalog = adapter.catalog(&baseline)?;
    let mut stats = CampaignStats {
        statements: statements.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    for s in &statements {
        for &rule in &config.rules {
            let drawn = generate_candidates(catalog.as_ref(), s, rule, config.seed, config.cap);
            let tally = stats.per_rule.entry(rule).or_default();
            if !drawn.is_empty() {
                tally.applicable += 1;
            }
            tally.candidates += drawn.len();
            candidates.extend(drawn);
        }
    }
    drop(catalog);
    stats.candidates = candidates.len();
    info!(statements = statements.len(), candidates = candidates.len(), "evaluating mutants");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| InjectError::Pool(e.to_string()))?;
    let results: Vec<Result<(MutantOutcome, SourceTree), AdapterError>> = pool.install(|| {
        candidates
            .par_iter()
            .map(|c| evaluate(adapter, &baseline, &statements, c, config.test_timeout))
            .collect()
    });

    let project = project_for(root, adapter, config);
    let fix_commit = baseline.fingerprint();
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (c, res) in candidates.iter().zip(results) {
        let tally = stats.per_rule.entry(c.rule).or_default();
        let (outcome, mutant) = match res {
            Ok(r) => r,
            Err(e) => {
                warn!(statement = %c.statement, rule = c.rule.0, error = %e, "candidate evaluation failed");
                stats.infrastructure_failures += 1;
                tally.infrastructure_failures += 1;
                continue;
            }
        };
        let (bug_type, tests) = match outcome {
            MutantOutcome::Benign => {
                stats.benign += 1;
                tally.benign += 1;
                continue;
            }
            MutantOutcome::CompilationBug(d) => {
                stats.compilation_bugs += 1;
                tally.compilation_bugs += 1;
                (
                    BugType::CompileDiagnostic {
                        code: d.code,
                        message: d.message,
                    },
                    None,
                )
            }
            MutantOutcome::BehaviorBug { failing, diagnosis } => {
                stats.behavior_bugs += 1;
                tally.behavior_bugs += 1;
                let tests = failing
                    .into_iter()
                    .map(|name| TestSpec {
                        name,
                        kind: TestKind::Existing,
                        payload_ref: None,
                    })
                    .collect();
                (diagnosis, Some(tests))
            }
        };
        let Some(hunk) = injection_hunk(&baseline, &mutant, &statements, c) else {
            warn!(statement = %c.statement, "edits span several files; candidate dropped");
            stats.infrastructure_failures += 1;
            continue;
        };
        let mut metadata = BTreeMap::new();
        metadata.insert(meta::RULE_ID.to_string(), c.rule.to_string());
        metadata.insert("rule_name".to_string(), c.rule.rule().name.to_string());
        metadata.insert("statement".to_string(), c.statement.to_string());
        metadata.insert("mutation".to_string(), c.rewrite.description.clone());
        metadata.insert("seed".to_string(), c.seed.to_string());
        let record = BugRecord::new(
            Source::Injection,
            project.clone(),
            fix_commit.clone(),
            mutant.fingerprint(),
            vec![hunk],
            bug_type,
            tests,
            metadata,
            config.created_at,
        );
        if !seen.insert(record.id.clone()) {
            debug!(statement = %c.statement, rule = c.rule.0, "same bug already recorded");
            stats.duplicate_records += 1;
            continue;
        }
        debug!(statement = %c.statement, rule = c.rule.0, "bug recorded");
        records.push(record);
    }
    stats.wall_time = started.elapsed();
    Ok((records, stats))
}
