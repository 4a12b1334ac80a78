//! `fgf`: command-line driver for the formal-guided fuzzing pipeline.
//!
//! Exit codes: 0 success, 1 violations or findings, 2 usage error,
//! 3 internal error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fgf_core::campaign::{parse_campaign_config, run_config, CampaignError, CampaignResult};
use fgf_core::depgraph::{build_graph, Mode, WeightVector};
use fgf_core::knowledge::{isolate_named, IsolationReport, KnowledgeError};
use fgf_core::model::{
    apply_fortification, load_model, validate, violations_to_json, FortificationKind, FortificationToggle,
    ModelError, ProtocolModel,
};
use fgf_core::planner::{
    plan_bit_level, plan_command_level, ComplexityReport, PlanError, PlanOptions, Scheme, Strategy,
};

#[derive(Parser)]
#[command(name = "fgf", version, about = "Formal-guided protocol fuzzing toolkit")]
struct Cli {
    /// Seed for every randomized step. Falls back to FGF_SEED.
    #[arg(long, global = true, env = "FGF_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model's structural invariants; prints violations as JSON.
    Validate { model: PathBuf },
    /// Security vectors of every identifier and their weighted ranking.
    Analyze {
        model: PathBuf,
        /// Weights for confidentiality, integrity, authentication, accounting.
        #[arg(long, default_value = "1,1,0.5,0.5")]
        weights: String,
        #[arg(long, value_enum, default_value = "frontier")]
        mode: ModeArg,
    },
    /// Partition identifier/property pairs under an assumption profile.
    Isolate {
        model: PathBuf,
        #[arg(long)]
        profile: String,
    },
    /// Build a fuzz plan (JSON Lines) from an isolation report.
    Plan {
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        level: LevelArg,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value = "priority")]
        scheme: SchemeArg,
    },
    /// Test-case counts per strategy as CSV.
    Complexity {
        model: PathBuf,
        /// Comma-separated command names.
        #[arg(long, value_delimiter = ',', required = true)]
        commands: Vec<String>,
        /// A strategy name or `all`.
        #[arg(long, default_value = "all")]
        strategy: String,
    },
    /// Run a campaign configuration; prints the result as JSON.
    Run {
        config: PathBuf,
        /// Worker threads; overrides the configuration.
        #[arg(long)]
        parallel: Option<usize>,
        /// Exit with status 1 when any case is a finding.
        #[arg(long)]
        strict: bool,
    },
    /// Apply fortifications and write the rewritten model.
    Fortify {
        model: PathBuf,
        #[arg(long = "toggle", required = true)]
        toggles: Vec<String>,
        /// Output path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a campaign result.
    Report {
        result: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frontier,
    Additive,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Bit,
    Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Uniform,
    Priority,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

enum Failure {
    /// Invalid input, or findings under `--strict`.
    Findings(String),
    Usage(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Findings(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Findings(e.to_string()),
        }
    }
}

impl From<KnowledgeError> for Failure {
    fn from(e: KnowledgeError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Format(_) => Failure::Findings(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Config(m) => m.into(),
            CampaignError::Plan(p) => p.into(),
            CampaignError::NonTerminalTrace => Failure::Internal(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// Writes `text` to standard output with a trailing newline. A closed pipe
/// (`fgf ... | head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
    let _ = out.flush();
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<ProtocolModel, Failure> {
    Ok(load_model(path)?)
}

fn to_json(v: &serde_json::Value) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Internal(e.to_string()))
}

fn analyze(model: &ProtocolModel, weights: &str, mode: ModeArg) -> Result<String, Failure> {
    let w = WeightVector::parse(weights)
        .ok_or_else(|| Failure::Usage(format!("--weights expects four non-negative numbers, got `{weights}`")))?;
    let mode = match mode {
        ModeArg::Frontier => Mode::Frontier,
        ModeArg::Additive => Mode::Additive,
    };
    let graph = build_graph(model);
    let mut vectors = BTreeMap::new();
    for i in &model.identifiers {
        let v = graph
            .security_vector(&i.name, mode)
            .map_err(|e| Failure::Internal(e.to_string()))?;
        vectors.insert(i.name.clone(), v.to_array());
    }
    let ranking: Vec<serde_json::Value> = graph
        .rank_identifiers(w)
        .into_iter()
        .map(|(n, s)| serde_json::json!({ "identifier": n, "score": s }))
        .collect();
    to_json(&serde_json::json!({
        "mode": format!("{mode:?}"),
        "weights": [w.c, w.i, w.au, w.ac],
        "vectors": vectors,
        "ranking": ranking,
    }))
}

fn plan(
    model: &ProtocolModel,
    report: &Path,
    level: LevelArg,
    budget: Option<usize>,
    scheme: SchemeArg,
    seed: u64,
) -> Result<String, Failure> {
    let report = IsolationReport::from_json(&read(report)?)
        .map_err(|e| Failure::Findings(format!("malformed report: {e}")))?;
    let opts = PlanOptions::seeded(seed);
    let mut plan = match level {
        LevelArg::Bit => plan_bit_level(model, &report, &opts)?,
        LevelArg::Command => {
            let scheme = match scheme {
                SchemeArg::Uniform => Scheme::UniformRandom,
                SchemeArg::Priority => Scheme::PriorityGuided,
            };
            plan_command_level(model, &report, budget.unwrap_or(usize::MAX), scheme, &opts)?
        }
    };
    if let (LevelArg::Bit, Some(b)) = (level, budget) {
        if b == 0 {
            return Err(PlanError::ZeroBudget.into());
        }
        plan.cases.truncate(b);
        let keep: Vec<&str> = plan.cases.iter().map(|c| c.case_id()).collect();
        plan.priority_scores.retain(|k, _| keep.contains(&k.as_str()));
    }
    Ok(plan.to_jsonl())
}

fn complexity(model: &ProtocolModel, commands: &[String], strategy: &str) -> Result<String, Failure> {
    let strategies = if strategy.eq_ignore_ascii_case("all") {
        Strategy::ALL.to_vec()
    } else {
        vec![Strategy::parse(strategy).ok_or_else(|| Failure::Usage(format!("unknown strategy `{strategy}`")))?]
    };
    let names: Vec<&str> = commands.iter().map(String::as_str).collect();
    Ok(ComplexityReport::compute(model, &names, &strategies)?.to_csv())
}

fn run(path: &Path, parallel: Option<usize>, seed: Option<u64>, strict: bool) -> Result<String, Failure> {
    let mut cfg = parse_campaign_config(&read(path)?)?;
    if let Some(n) = parallel {
        cfg.parallelism = n.max(1);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let out = run_config(&cfg, base)?;
    let json = out.result.to_json();
    let findings = out.result.results.iter().filter(|r| r.verdict.is_finding()).count();
    if strict && findings > 0 {
        emit(&json);
        return Err(Failure::Findings(format!("{findings} finding(s)")));
    }
    Ok(json)
}

fn fortify(model: &ProtocolModel, toggles: &[String]) -> Result<String, Failure> {
    let toggles = toggles
        .iter()
        .map(|t| {
            FortificationKind::parse(t)
                .map(FortificationToggle::new)
                .ok_or_else(|| Failure::Usage(format!("unknown fortification `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fortified = apply_fortification(model, &toggles).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(fortified.to_model_text())
}

fn report(path: &Path, format: FormatArg) -> Result<String, Failure> {
    let result = CampaignResult::from_json(&read(path)?)
        .map_err(|e| Failure::Findings(format!("malformed result: {e}")))?;
    Ok(match format {
        FormatArg::Json => result.to_json(),
        FormatArg::Csv => result.summary_csv(),
        FormatArg::Text => result.to_text(),
    })
}

fn dispatch(cli: Cli) -> Result<Option<String>, Failure> {
    let seed = cli.seed;
    let text = match cli.command {
        Command::Validate { model } => {
            let violations = validate(&load(&model)?);
            if violations.is_empty() {
                return Ok(None);
            }
            emit(&violations_to_json(&violations));
            return Err(Failure::Findings(format!("{} violation(s)", violations.len())));
        }
        Command::Analyze { model, weights, mode } => analyze(&load(&model)?, &weights, mode)?,
        Command::Isolate { model, profile } => isolate_named(&load(&model)?, &profile)?.to_json(),
        Command::Plan {
            model,
            report,
            level,
            budget,
            scheme,
        } => plan(&load(&model)?, &report, level, budget, scheme, seed.unwrap_or(0))?,
        Command::Complexity {
            model,
            commands,
            strategy,
        } => complexity(&load(&model)?, &commands, &strategy)?,
        Command::Run {
            config,
            parallel,
            strict,
        } => run(&config, parallel, seed, strict)?,
        Command::Fortify { model, toggles, out } => {
            let text = fortify(&load(&model)?, &toggles)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, text)
                        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
                    return Ok(None);
                }
                None => text,
            }
        }
        Command::Report { result, format } => report(&result, format)?,
    };
    Ok(Some(text))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(text)) => {
            emit(&text);
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (Failure::Findings(m) | Failure::Usage(m) | Failure::Internal(m)) = &f;
            eprintln!("fgf: {m}");
            ExitCode::from(f.code())
        }
    }
}
