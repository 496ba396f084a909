//! Cost-of-privacy sweeps over an epsilon grid, with CSV output.
//!
//! Work units are (epsilon, sample) pairs run on the rayon pool. Rows come
//! out ordered by epsilon (grid order) and then sample index, whatever order
//! the units finished in.

use std::io::Write;
use std::path::{Path, PathBuf};

use dpmmdp_core::mechanism::{sigma_input, PrivacyParams};
use dpmmdp_core::montecarlo::{Estimate, SweepContext, SweepRecord};
use dpmmdp_core::synthesis::Mode;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::output::{aggregate_path, PartialFile};

/// Column names of the per-sample CSV.
pub const SWEEP_HEADER: [&str; 10] = [
    "epsilon",
    "sample",
    "seed",
    "mode",
    "cost_percent",
    "max_abs_error",
    "goal_preserved",
    "k1",
    "k2",
    "computations",
];

/// Column names of the per-epsilon aggregate CSV.
pub const AGGREGATE_HEADER: [&str; 15] = [
    "epsilon",
    "mode",
    "agents",
    "samples",
    "cost_samples",
    "cost_percent_mean",
    "cost_percent_se",
    "max_abs_error_mean",
    "max_abs_error_se",
    "goal_preserved_rate",
    "goal_preserved_se",
    "k1",
    "k2_mean",
    "k2_se",
    "computations_mean",
];

/// The epsilon grid and the settings shared by every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub b: f64,
    pub samples: u64,
    pub seed: u64,
    pub mode: Mode,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Invalid("epsilon grid is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::Invalid(format!("epsilon grid entries must be positive, got {e}")));
        }
        if self.samples == 0 {
            return Err(Error::Invalid("samples must be at least 1".into()));
        }
        for &epsilon in &self.epsilons {
            sigma_input(&self.params(epsilon)?)?;
        }
        Ok(())
    }

    pub fn params(&self, epsilon: f64) -> Result<PrivacyParams> {
        Ok(PrivacyParams::new(epsilon, self.delta, self.b)?)
    }
}

/// All samples at one epsilon, in sample order.
pub fn run_epsilon(ctx: &SweepContext, plan: &SweepPlan, epsilon: f64) -> Result<Vec<SweepRecord>> {
    let params = plan.params(epsilon)?;
    (0..plan.samples)
        .into_par_iter()
        .map(|i| ctx.run(&params, plan.mode, i, plan.seed).map_err(Error::from))
        .collect()
}

/// Run the whole grid, handing each finished epsilon block to `sink`.
pub fn run_sweep(
    ctx: &SweepContext,
    plan: &SweepPlan,
    mut sink: impl FnMut(&[SweepRecord]) -> Result<()>,
) -> Result<Vec<SweepRecord>> {
    plan.validate()?;
    let mut all = Vec::with_capacity(plan.epsilons.len() * plan.samples as usize);
    for &epsilon in &plan.epsilons {
        let block = run_epsilon(ctx, plan, epsilon)?;
        sink(&block)?;
        all.extend(block);
    }
    Ok(all)
}

/// 17 significant digits, which round-trips every finite f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn mode_from_name(name: &str) -> Result<Mode> {
    match name {
        "input" => Ok(Mode::Input),
        "output" => Ok(Mode::Output),
        other => Err(Error::Invalid(format!("unknown mode {other:?}"))),
    }
}

pub fn record_fields(r: &SweepRecord) -> [String; 10] {
    [
        fmt_f64(r.epsilon),
        r.sample.to_string(),
        r.seed.to_string(),
        r.mode.name().to_string(),
        fmt_opt(r.cost_percent),
        fmt_f64(r.max_abs_error),
        r.goal_preserved.to_string(),
        r.k1.to_string(),
        r.k2.to_string(),
        r.computations.to_string(),
    ]
}

fn parse<T: std::str::FromStr>(field: &str, column: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Invalid(format!("column {column}: cannot parse {field:?}")))
}

pub fn record_from_fields(fields: &csv::StringRecord) -> Result<SweepRecord> {
    if fields.len() != SWEEP_HEADER.len() {
        return Err(Error::Invalid(format!(
            "sweep row has {} fields, expected {}",
            fields.len(),
            SWEEP_HEADER.len()
        )));
    }
    let f = |i: usize| &fields[i];
    Ok(SweepRecord {
        epsilon: parse(f(0), "epsilon")?,
        sample: parse(f(1), "sample")?,
        seed: parse(f(2), "seed")?,
        mode: mode_from_name(f(3))?,
        cost_percent: if f(4).is_empty() {
            None
        } else {
            Some(parse(f(4), "cost_percent")?)
        },
        max_abs_error: parse(f(5), "max_abs_error")?,
        goal_preserved: parse(f(6), "goal_preserved")?,
        k1: parse(f(7), "k1")?,
        k2: parse(f(8), "k2")?,
        computations: parse(f(9), "computations")?,
    })
}

fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(inner)
}

/// Streams sweep rows into `path.partial`; [`SweepWriter::finish`] renames it.
pub struct SweepWriter {
    csv: csv::Writer<PartialFile>,
}

impl SweepWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut csv = csv_writer(PartialFile::create(path)?);
        csv.write_record(SWEEP_HEADER)?;
        Ok(Self { csv })
    }

    pub fn write(&mut self, records: &[SweepRecord]) -> Result<()> {
        for r in records {
            self.csv.write_record(record_fields(r))?;
        }
        self.csv.flush().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let file = self.csv.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        file.finish()
    }
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Invalid(format!("unexpected sweep header in {}", path.display())));
    }
    reader.records().map(|row| record_from_fields(&row?)).collect()
}

/// Per-(epsilon, mode) summary of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub epsilon: f64,
    pub mode: Mode,
    pub agents: usize,
    pub samples: usize,
    /// Samples whose cost percent was defined.
    pub cost_samples: usize,
    pub cost_percent: Estimate,
    pub max_abs_error: Estimate,
    pub goal_preserved: Estimate,
    pub k1: u64,
    pub k2: Estimate,
    pub computations_mean: f64,
}

/// Group rows by (epsilon, mode) in order of first appearance.
pub fn aggregate(records: &[SweepRecord], agents: usize) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, Mode)> = Vec::new();
    for r in records {
        let key = (r.epsilon.to_bits(), r.mode);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(bits, mode)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.epsilon.to_bits() == bits && r.mode == mode)
                .collect();
            let costs: Vec<f64> = group.iter().filter_map(|r| r.cost_percent).collect();
            let column = |f: fn(&SweepRecord) -> f64| Estimate::from_samples(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                epsilon: f64::from_bits(bits),
                mode,
                agents,
                samples: group.len(),
                cost_samples: costs.len(),
                cost_percent: Estimate::from_samples(&costs),
                max_abs_error: column(|r| r.max_abs_error),
                goal_preserved: column(|r| if r.goal_preserved { 1.0 } else { 0.0 }),
                k1: group[0].k1,
                k2: column(|r| r.k2 as f64),
                computations_mean: column(|r| r.computations as f64).mean,
            }
        })
        .collect()
}

fn aggregate_fields(a: &AggregateRow) -> [String; 15] {
    let finite = |x: f64| if x.is_finite() { fmt_f64(x) } else { String::new() };
    [
        fmt_f64(a.epsilon),
        a.mode.name().to_string(),
        a.agents.to_string(),
        a.samples.to_string(),
        a.cost_samples.to_string(),
        finite(a.cost_percent.mean),
        finite(a.cost_percent.std_error),
        fmt_f64(a.max_abs_error.mean),
        fmt_f64(a.max_abs_error.std_error),
        fmt_f64(a.goal_preserved.mean),
        fmt_f64(a.goal_preserved.std_error),
        a.k1.to_string(),
        fmt_f64(a.k2.mean),
        fmt_f64(a.k2.std_error),
        fmt_f64(a.computations_mean),
    ]
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<PathBuf> {
    let mut csv = csv_writer(PartialFile::create(path)?);
    csv.write_record(AGGREGATE_HEADER)?;
    for row in rows {
        csv.write_record(aggregate_fields(row))?;
    }
    let file = csv.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    file.finish()
}

/// Run a sweep, stream the per-sample CSV to `path` and write the aggregate
/// next to it. Returns both final paths.
pub fn sweep_to_files(ctx: &SweepContext, plan: &SweepPlan, path: &Path) -> Result<(PathBuf, PathBuf)> {
    plan.validate()?;
    let mut writer = SweepWriter::create(path)?;
    let records = run_sweep(ctx, plan, |block| writer.write(block))?;
    let rows = aggregate(&records, ctx.model.agent_count());
    let raw = writer.finish()?;
    let agg = write_aggregate_csv(&aggregate_path(path), &rows)?;
    Ok((raw, agg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpmmdp_core::envs::{build_chain, ChainSpec};
    use dpmmdp_core::synthesis::EvaluationBasis;

    fn context() -> SweepContext {
        let env = build_chain(&ChainSpec::default()).unwrap();
        SweepContext::new(env.model, env.start, 1e-6, EvaluationBasis::Private).unwrap()
    }

    fn plan() -> SweepPlan {
        SweepPlan {
            epsilons: vec![0.5, 2.0],
            delta: 0.1,
            b: 2.0,
            samples: 6,
            seed: 11,
            mode: Mode::Input,
        }
    }

    #[test]
    fn rows_are_ordered_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let ctx = context();
        let (raw, agg) = sweep_to_files(&ctx, &plan(), &path).unwrap();
        let back = read_sweep_csv(&raw).unwrap();
        let direct = run_sweep(&ctx, &plan(), |_| Ok(())).unwrap();
        assert_eq!(back, direct);
        let order: Vec<(f64, u64)> = back.iter().map(|r| (r.epsilon, r.sample)).collect();
        let expected: Vec<(f64, u64)> = [0.5, 2.0].iter().flat_map(|&e| (0..6).map(move |i| (e, i))).collect();
        assert_eq!(order, expected);
        let text = std::fs::read_to_string(agg).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn aggregate_statistics() {
        let records = run_sweep(&context(), &plan(), |_| Ok(())).unwrap();
        let rows = aggregate(&records, 2);
        assert_eq!(rows.len(), 2);
        let costs: Vec<f64> = records[..6].iter().filter_map(|r| r.cost_percent).collect();
        assert_eq!(rows[0].cost_percent, Estimate::from_samples(&costs));
        assert_eq!(rows[0].samples, 6);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.524413669e-300, 66175.99, -7.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn plan_validation() {
        let mut p = plan();
        p.epsilons.clear();
        assert!(p.validate().is_err());
        let mut p = plan();
        p.epsilons.push(-1.0);
        assert!(p.validate().is_err());
        let mut p = plan();
        p.samples = 0;
        assert!(p.validate().is_err());
        let mut p = plan();
        p.delta = 0.0;
        assert!(p.validate().is_err());
        assert!(run_sweep(&context(), &p, |_| Ok(())).is_err());
    }
}
