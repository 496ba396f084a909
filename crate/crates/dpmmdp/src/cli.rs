//! Command-line surface. [`run`] parses arguments, executes one command and
//! returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpmmdp_core::bounds::{
    accuracy_bound, expected_iteration_increase_bound, min_epsilon_for_accuracy, order_preservation_bound,
    IterationBoundInput, Selection,
};
use dpmmdp_core::mechanism::{sigma_input, PrivacyParams};
use dpmmdp_core::model::{JointModel, RewardVector};
use dpmmdp_core::montecarlo::{mc_iteration_counts, mc_max_abs_error, mc_order_preservation_for, Estimate, SweepContext};
use dpmmdp_core::solver::{iteration_count, Planner};
use dpmmdp_core::synthesis::{agent_policies, synthesize, EvaluationBasis, Mode};
use serde_json::{json, Value};

use crate::catalog::{self, ExampleKind, ExampleOptions};
use crate::error::{Error, Result, EXIT_OK, EXIT_VALIDATION};
use crate::format::{to_pretty_json, ModelFile, PolicyFile, PrivateRelease, Provenance};
use crate::output::{resolve, write_file};
use crate::sweep::{fmt_f64, sweep_to_files, SweepPlan};

#[derive(Debug, Parser)]
#[command(name = "dpmmdp", version, about = "Differentially private policy synthesis for multi-agent MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the non-private model and write the optimal policy.
    Solve {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, default_value_t = 1e-6)]
        eta: f64,
        /// Policy JSON path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Privatize the rewards, plan on them and write the release.
    Privatize {
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        privacy: PrivacyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Input)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1e-6)]
        eta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form bounds, optionally next to Monte Carlo estimates.
    Bounds {
        #[command(subcommand)]
        bound: BoundCommand,
    },
    /// Cost-of-privacy sweep over an epsilon grid.
    Sweep {
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        privacy: PrivacyArgs,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Input)]
        mode: ModeArg,
        /// Reward the private policy is scored on.
        #[arg(long, value_enum, default_value_t = BasisArg::Private)]
        basis: BasisArg,
        #[arg(long, default_value_t = 1e-6)]
        eta: f64,
        /// Per-sample CSV path; the aggregate goes to `<stem>_aggregate.csv`.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Write a model (usually a built-in example) in the JSON model format.
    DumpModel {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BoundCommand {
    /// Bound on the expected largest reward error.
    Accuracy {
        #[command(flatten)]
        privacy: PrivacyArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Smallest epsilon meeting an accuracy budget.
    Epsilon {
        /// Accuracy budget(s) A.
        #[arg(long = "A", alias = "accuracy", required = true, value_delimiter = ',')]
        accuracy: Vec<f64>,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        b: f64,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Probability that the top-p and bottom-q rewards stay in place.
    Order {
        #[command(flatten)]
        privacy: PrivacyArgs,
        /// Reward vector; otherwise the reward of `--agent` in the model.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        reward: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        agent: usize,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        q: usize,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Expected extra policy-evaluation work caused by privacy.
    Iterations {
        #[command(flatten)]
        privacy: PrivacyArgs,
        #[arg(long = "r-max")]
        r_max: f64,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long, default_value_t = 1e-8)]
        eta: f64,
        #[arg(long = "gamma", default_value_t = 0.99)]
        gamma: f64,
        #[command(flatten)]
        mc: McArgs,
    },
}

/// Where the model comes from: a JSON file or a built-in example.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelSource {
    #[arg(long, conflicts_with = "example")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub example: Option<ExampleKind>,
    #[command(flatten)]
    pub options: ExampleOptions,
    /// Discount override, must lie in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Initial joint state override.
    #[arg(long)]
    pub start: Option<usize>,
}

impl ModelSource {
    pub fn is_given(&self) -> bool {
        self.model.is_some() || self.example.is_some()
    }

    /// The composed model and its initial joint state.
    pub fn load(&self) -> Result<(JointModel, usize)> {
        let (model, start) = match (&self.model, self.example) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file = ModelFile::parse(&text)?;
                (file.to_model(self.gamma)?, file.start.unwrap_or(0))
            }
            (None, Some(kind)) => {
                let env = catalog::build(kind, &self.options, self.gamma)?;
                (env.model, env.start)
            }
            (None, None) => return Err(Error::Invalid("one of --model or --example is required".into())),
        };
        let start = self.start.unwrap_or(start);
        if start >= model.state_count() {
            return Err(Error::Invalid(format!(
                "start state {start} out of range for {} joint states",
                model.state_count()
            )));
        }
        Ok((model, start))
    }
}

#[derive(Debug, Clone, Args)]
pub struct PrivacyArgs {
    /// Privacy level(s); comma-separated for a grid.
    #[arg(long, required = true, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    #[arg(long)]
    pub delta: f64,
    /// Adjacency bound on a single reward entry.
    #[arg(long)]
    pub b: f64,
}

impl PrivacyArgs {
    fn grid(&self) -> Result<Vec<PrivacyParams>> {
        if self.epsilon.is_empty() {
            return Err(Error::Invalid("epsilon grid is empty".into()));
        }
        self.epsilon
            .iter()
            .map(|&e| Ok(PrivacyParams::new(e, self.delta, self.b)?))
            .collect()
    }

    fn single(&self) -> Result<PrivacyParams> {
        match self.grid()?.as_slice() {
            [p] => Ok(*p),
            many => Err(Error::Invalid(format!("expected one epsilon, got {}", many.len()))),
        }
    }
}

/// Agent count and joint state-action count; taken from the model when
/// one is given.
#[derive(Debug, Clone, Default, Args)]
pub struct ShapeArgs {
    #[arg(long = "N")]
    pub n_agents: Option<usize>,
    #[arg(long)]
    pub nm: Option<usize>,
}

impl ShapeArgs {
    fn resolve(&self, model: Option<&JointModel>) -> Result<(usize, usize)> {
        let agents = self.n_agents.or(model.map(|m| m.agent_count()));
        let nm = self.nm.or(model.map(|m| m.joint_reward().len()));
        match (agents, nm) {
            (Some(a), Some(nm)) => Ok((a, nm)),
            _ => Err(Error::Invalid("--N and --nm are required without a model".into())),
        }
    }
}

/// Monte Carlo companion estimate.
#[derive(Debug, Clone, Default, Args)]
pub struct McArgs {
    /// Monte Carlo samples; no estimate when absent.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path for the per-epsilon table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl McArgs {
    fn samples(&self) -> Result<Option<usize>> {
        match self.samples {
            Some(0) => Err(Error::Invalid("samples must be at least 1".into())),
            other => Ok(other.map(|s| s as usize)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Input,
    Output,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Input => Mode::Input,
            ModeArg::Output => Mode::Output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Private,
    Sensitive,
}

impl From<BasisArg> for EvaluationBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Private => EvaluationBasis::Private,
            BasisArg::Sensitive => EvaluationBasis::Sensitive,
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            let path = resolve(path);
            write_file(&path, text.as_bytes())?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn write_table(out: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(row)?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    let path = resolve(path);
    write_file(&path, &bytes)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn estimate_json(e: &Estimate) -> Value {
    json!({"mean": e.mean, "std_error": e.std_error, "samples": e.samples})
}

fn cmd_solve(source: &ModelSource, eta: f64, out: Option<&Path>) -> Result<()> {
    let (model, start) = source.load()?;
    let planner = Planner::new(&model)?;
    let report = planner.value_iteration(model.joint_reward(), eta)?;
    let file = PolicyFile {
        states: model.state_count(),
        actions: model.action_count(),
        start,
        value_at_start: report.values.get(start),
        iterations: report.iterations,
        residual: report.residual,
        agent_policies: agent_policies(&report.policy, model.action_radices())?,
        joint_policy: report.policy.actions().to_vec(),
        values: report.values.as_slice().to_vec(),
    };
    emit(out, &to_pretty_json(&file)?)
}

fn cmd_privatize(source: &ModelSource, privacy: &PrivacyArgs, seed: u64, mode: Mode, eta: f64, out: Option<&Path>) -> Result<()> {
    let params = privacy.single()?;
    let (model, _) = source.load()?;
    let planner = Planner::new(&model)?;
    let result = synthesize(&planner, &model, &params, mode, seed, eta)?;
    let agent_rewards = (mode == Mode::Input).then(|| {
        result
            .private_model
            .agents()
            .iter()
            .map(|a| a.reward().as_slice().to_vec())
            .collect()
    });
    let release = PrivateRelease {
        provenance: Provenance {
            epsilon: params.epsilon(),
            delta: params.delta(),
            b: params.b(),
            sigma: result.scale.sigma(),
            seed,
            mode: mode.name().to_string(),
        },
        reward: result.private_model.joint_reward().as_slice().to_vec(),
        agent_rewards,
        iterations: result.report.iterations,
        joint_policy: result.report.policy.actions().to_vec(),
        agent_policies: result.agent_policies,
    };
    emit(out, &to_pretty_json(&release)?)
}

fn loaded(source: &ModelSource) -> Result<Option<JointModel>> {
    Ok(if source.is_given() { Some(source.load()?.0) } else { None })
}

fn cmd_accuracy(privacy: &PrivacyArgs, shape: &ShapeArgs, mc: &McArgs, source: &ModelSource) -> Result<()> {
    let model = loaded(source)?;
    let (agents, nm) = shape.resolve(model.as_ref())?;
    let samples = mc.samples()?;
    if samples.is_some() && model.is_none() {
        return Err(Error::Invalid("Monte Carlo estimates need --model or --example".into()));
    }
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for params in privacy.grid()? {
        let bound = accuracy_bound(&params, agents, nm)?;
        let mut entry = json!({"epsilon": params.epsilon(), "bound": bound});
        let mut row = vec![fmt_f64(params.epsilon()), fmt_f64(bound)];
        if let (Some(s), Some(m)) = (samples, model.as_ref()) {
            let e = mc_max_abs_error(m, &params, s, mc.seed)?;
            entry["empirical"] = estimate_json(&e);
            row.extend([fmt_f64(e.mean), fmt_f64(e.std_error), e.samples.to_string()]);
        }
        results.push(entry);
        rows.push(row);
    }
    let header: &[&str] = if samples.is_some() {
        &["epsilon", "bound", "empirical_mean", "empirical_se", "samples"]
    } else {
        &["epsilon", "bound"]
    };
    write_table(mc.out.as_deref(), header, &rows)?;
    let doc = json!({"bound": "accuracy", "N": agents, "nm": nm, "delta": privacy.delta, "b": privacy.b, "results": results});
    emit(None, &to_pretty_json(&doc)?)
}

fn cmd_epsilon(accuracy: &[f64], delta: f64, b: f64, shape: &ShapeArgs) -> Result<()> {
    let (agents, nm) = shape.resolve(None)?;
    let results = accuracy
        .iter()
        .map(|&a| {
            let epsilon = min_epsilon_for_accuracy(a, delta, b, agents, nm)?;
            Ok(json!({"A": a, "epsilon": epsilon}))
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = json!({"bound": "epsilon", "N": agents, "nm": nm, "delta": delta, "b": b, "results": results});
    emit(None, &to_pretty_json(&doc)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_order(
    privacy: &PrivacyArgs,
    reward: Option<&[f64]>,
    agent: usize,
    sel: Selection,
    mc: &McArgs,
    source: &ModelSource,
) -> Result<()> {
    let reward = match reward {
        Some(values) => RewardVector::new(values.to_vec())?,
        None => {
            let model = loaded(source)?.ok_or_else(|| Error::Invalid("order needs --reward, --model or --example".into()))?;
            let agents = model.agents();
            let a = agents
                .get(agent)
                .ok_or_else(|| Error::Invalid(format!("agent {agent} out of range for {} agents", agents.len())))?;
            a.reward().clone()
        }
    };
    sel.check(reward.len())?;
    let samples = mc.samples()?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for params in privacy.grid()? {
        let bound = order_preservation_bound(&reward, sel, &params)?;
        let sigma = sigma_input(&params)?.sigma();
        let mut entry = json!({"epsilon": params.epsilon(), "sigma": sigma, "bound": bound});
        let mut row = vec![fmt_f64(params.epsilon()), fmt_f64(bound)];
        if let Some(s) = samples {
            let e = mc_order_preservation_for(&reward, sel, &params, s, mc.seed)?;
            entry["empirical"] = estimate_json(&e);
            row.extend([fmt_f64(e.mean), fmt_f64(e.std_error), e.samples.to_string()]);
        }
        results.push(entry);
        rows.push(row);
    }
    let header: &[&str] = if samples.is_some() {
        &["epsilon", "bound", "empirical_mean", "empirical_se", "samples"]
    } else {
        &["epsilon", "bound"]
    };
    write_table(mc.out.as_deref(), header, &rows)?;
    let doc = json!({"bound": "order", "p": sel.p, "q": sel.q, "delta": privacy.delta, "b": privacy.b, "results": results});
    emit(None, &to_pretty_json(&doc)?)
}

/// One entry at `R_max`, the rest at `-R_max`.
fn iteration_reward(r_max: f64, nm: usize) -> Result<RewardVector> {
    let mut values = vec![-r_max; nm];
    if let Some(first) = values.first_mut() {
        *first = r_max;
    }
    Ok(RewardVector::new(values)?)
}

fn cmd_iterations(privacy: &PrivacyArgs, r_max: f64, shape: &ShapeArgs, eta: f64, gamma: f64, mc: &McArgs) -> Result<()> {
    let (agents, nm) = shape.resolve(None)?;
    let input = IterationBoundInput {
        r_max,
        agents,
        nm,
        eta,
        gamma,
    };
    let k1 = iteration_count(r_max, eta, gamma)?;
    let samples = mc.samples()?;
    let reward = iteration_reward(r_max, nm)?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for params in privacy.grid()? {
        let b = expected_iteration_increase_bound(&input, &params, k1)?;
        let mut entry = json!({
            "epsilon": params.epsilon(),
            "k1": k1,
            "ceiling_term": b.ceiling_term,
            "bound": b.bound,
            "bound_percent": 100.0 * b.bound / (nm as f64 * k1 as f64),
        });
        let mut row = vec![fmt_f64(params.epsilon()), k1.to_string(), b.ceiling_term.to_string(), fmt_f64(b.bound)];
        if let Some(s) = samples {
            let draws = mc_iteration_counts(&reward, &params, eta, gamma, s, mc.seed)?;
            let increase: Vec<f64> = draws.iter().map(|d| d.increase(nm)).collect();
            let e = Estimate::from_samples(&increase);
            let within = draws.iter().filter(|d| d.increase(nm) <= b.bound).count() as f64 / s as f64;
            entry["empirical"] = estimate_json(&e);
            entry["fraction_within_bound"] = json!(within);
            row.extend([fmt_f64(e.mean), fmt_f64(e.std_error), fmt_f64(within), e.samples.to_string()]);
        }
        results.push(entry);
        rows.push(row);
    }
    let header: &[&str] = if samples.is_some() {
        &["epsilon", "k1", "ceiling_term", "bound", "empirical_mean", "empirical_se", "fraction_within_bound", "samples"]
    } else {
        &["epsilon", "k1", "ceiling_term", "bound"]
    };
    write_table(mc.out.as_deref(), header, &rows)?;
    let doc = json!({"bound": "iterations", "N": agents, "nm": nm, "r_max": r_max, "eta": eta, "gamma": gamma, "results": results});
    emit(None, &to_pretty_json(&doc)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    source: &ModelSource,
    privacy: &PrivacyArgs,
    samples: u64,
    seed: u64,
    mode: Mode,
    basis: EvaluationBasis,
    eta: f64,
    out: &Path,
) -> Result<()> {
    let plan = SweepPlan {
        epsilons: privacy.epsilon.clone(),
        delta: privacy.delta,
        b: privacy.b,
        samples,
        seed,
        mode,
    };
    plan.validate()?;
    let (model, start) = source.load()?;
    let ctx = SweepContext::new(model, start, eta, basis)?;
    let (raw, agg) = sweep_to_files(&ctx, &plan, &resolve(out))?;
    eprintln!("wrote {} and {}", raw.display(), agg.display());
    Ok(())
}

fn cmd_dump(source: &ModelSource, out: Option<&Path>) -> Result<()> {
    let (model, start) = source.load()?;
    emit(out, &ModelFile::from_model(&model, Some(start)).to_json()?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve { source, eta, out } => cmd_solve(source, *eta, out.as_deref()),
        Command::Privatize {
            source,
            privacy,
            seed,
            mode,
            eta,
            out,
        } => cmd_privatize(source, privacy, *seed, (*mode).into(), *eta, out.as_deref()),
        Command::Bounds { bound } => match bound {
            BoundCommand::Accuracy {
                privacy,
                shape,
                mc,
                source,
            } => cmd_accuracy(privacy, shape, mc, source),
            BoundCommand::Epsilon { accuracy, delta, b, shape } => cmd_epsilon(accuracy, *delta, *b, shape),
            BoundCommand::Order {
                privacy,
                reward,
                agent,
                p,
                q,
                mc,
                source,
            } => cmd_order(privacy, reward.as_deref(), *agent, Selection { p: *p, q: *q }, mc, source),
            BoundCommand::Iterations {
                privacy,
                r_max,
                shape,
                eta,
                gamma,
                mc,
            } => cmd_iterations(privacy, *r_max, shape, *eta, *gamma, mc),
        },
        Command::Sweep {
            source,
            privacy,
            samples,
            seed,
            mode,
            basis,
            eta,
            out,
        } => cmd_sweep(source, privacy, *samples, *seed, (*mode).into(), (*basis).into(), *eta, out),
        Command::DumpModel { source, out } => cmd_dump(source, out.as_deref()),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
