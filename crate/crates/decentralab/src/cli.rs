//! Argument parsing and the subcommands.
//!
//! Every subcommand follows the same shape: resolve settings from the optional config file and
//! the flags, check the fields it needs, read inputs, compute, then write artifacts under
//! `--out` (or print the main table when no output directory is given).

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use decentralab_core::attribution::{attribute_blocks, node_attrition, AttributionMode};
use decentralab_core::econometrics::{
    did, event_study, lagged_did, multi_period_did, sdid_sweep, Clustering, DidOptions, PlaceboScheme, SdidOptions,
};
use decentralab_core::metrics::{
    align_series, daily_distributions, exposure_drawdown, knockout_entropy, pearson_correlation, recovery_time,
    DailyDistribution, Recovery,
};
use decentralab_core::shocklab::{simulate_event_panel, GroundTruth, Scenario};
use decentralab_core::{assemble_panel, Metric, MetricsRow, Panel};

use crate::artifact::{ArtifactWriter, Provenance};
use crate::error::CliError;
use crate::io::{self, fmt_sig9, Result};
use crate::report::{self, LagDoc, RegressionDoc, ResultSet, SdidDoc, SweepDoc};

const DEFAULT_THRESHOLD: f64 = 0.51;

#[derive(Parser, Debug)]
#[command(name = "decentralab", version, about = "Consensus decentralization metrics and shock-effect estimation")]
#[command(after_help = "Logging is controlled by DECENTRALAB_LOG (error, warn, info, debug, trace).")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// JSON run configuration; flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input file, repeatable
    #[arg(long, global = true, value_name = "FILE")]
    pub input: Vec<PathBuf>,
    #[arg(long, global = true, value_name = "YYYY-MM-DD")]
    pub event_date: Option<NaiveDate>,
    /// Treated chain id
    #[arg(long, global = true, value_name = "CHAIN")]
    pub treated: Option<String>,
    /// Days either side of the event: `30`, a range `10..50` stepped by --step, or a list `10,20,50`
    #[arg(long, global = true, value_name = "DAYS")]
    pub bandwidth: Option<String>,
    /// Step for a bandwidth range
    #[arg(long, global = true, value_name = "DAYS")]
    pub step: Option<i64>,
    /// Standard errors: none, chain, month, chain-month (two-way) or chain-x-month [default: chain-month]
    #[arg(long, global = true, value_name = "KIND")]
    pub cluster: Option<Clustering>,
    /// Absorb calendar-month fixed effects
    #[arg(long, global = true)]
    pub month_fe: bool,
    /// Control share for the Nakamoto coefficient [default: 0.51]
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Base seed for `simulate`; chain i gets seed + i
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; without it the main table goes to stdout
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Metric to analyse, repeatable: entropy, nodes, gini, nakamoto, hhi [default: all]
    #[arg(long, global = true, value_name = "NAME")]
    pub metric: Vec<Metric>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Daily metrics per chain from node-day production files
    Metrics,
    /// Attribute raw blocks to producers and aggregate to node-days
    Attribute(AttributeArgs),
    /// Difference-in-differences around the event date
    Did(DidArgs),
    /// Lead and lag treatment effects in day buckets
    LaggedDid(LaggedArgs),
    /// Separate effects during and after a shock window
    MultiperiodDid(MultiPeriodArgs),
    /// Jump and slope change of a single series at the event date
    EventStudy(SeriesArgs),
    /// Synthetic difference-in-differences, optionally over several bandwidths
    Sdid(SdidArgs),
    /// Simulate node-day production for a scenario with known ground truth
    Simulate(SimulateArgs),
    /// Repeat the DiD over bandwidths or clustering choices
    Sweep(SweepArgs),
    /// Entropy with labelled node groups removed
    Knockout(KnockoutArgs),
    /// Pre-event producers that stopped producing after the event
    Attrition(AttritionArgs),
    /// Correlation of metrics with an external series
    Correlate(CorrelateArgs),
    /// Peak-to-trough drawdown per chain around the event
    Exposure(ExposureArgs),
    /// Render result files written by the estimation commands
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
pub enum ModeArg {
    Proportional,
    Proposer,
    #[default]
    Auto,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    /// Label registry (JSON)
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// Per-chain exposure (JSON object); adds the exposure interaction
    #[arg(long)]
    pub exposures: Option<PathBuf>,
    /// Covariates in wide form: chain_id,day,<name>...
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Covariate column to include, repeatable
    #[arg(long)]
    pub covariate: Vec<String>,
    /// Interact each covariate with the treatment
    #[arg(long)]
    pub interactions: bool,
}

#[derive(Args, Debug)]
pub struct DidArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct LaggedArgs {
    /// Bucket width in days
    #[arg(long, default_value_t = 10)]
    pub lag_step: u32,
    /// Largest lead or lag bucket
    #[arg(long, default_value_t = 5)]
    pub max_lag: u32,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct MultiPeriodArgs {
    /// Last day of the during window
    #[arg(long)]
    pub during_end: Option<NaiveDate>,
    /// Let the treatment effects vary linearly with time
    #[arg(long)]
    pub time_varying: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SeriesArgs {
    /// Value column of a plain series file [default: value]
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
pub enum PlaceboArg {
    /// Donor subsets below 10 controls, leave-one-in otherwise
    #[default]
    Auto,
    LeaveOneIn,
    Subsets,
}

#[derive(Args, Debug)]
pub struct SdidArgs {
    /// Unit-weight regularization; defaults to the data-driven value
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long, value_enum, default_value_t = PlaceboArg::Auto)]
    pub placebo: PlaceboArg,
    /// Use uniform weights (plain DiD on the same window)
    #[arg(long)]
    pub uniform: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario (JSON)
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepOver {
    Bandwidth,
    Clustering,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub over: SweepOver,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct KnockoutArgs {
    /// Label registry (JSON) with node groups
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Group to exclude, repeatable
    #[arg(long)]
    pub group: Vec<String>,
}

#[derive(Args, Debug)]
pub struct AttritionArgs {
    #[arg(long, default_value_t = 30)]
    pub lookback: u32,
    #[arg(long, default_value_t = 60)]
    pub horizon: u32,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// External series with day and value columns
    #[arg(long)]
    pub with: Option<PathBuf>,
    /// Value column of the external series [default: value]
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Args, Debug)]
pub struct ExposureArgs {
    #[arg(long, default_value_t = 30)]
    pub peak_window: u32,
    #[arg(long, default_value_t = 30)]
    pub trough_window: u32,
    /// Value column [default: value]
    #[arg(long)]
    pub column: Option<String>,
}

/// File form of the shared settings, keyed like the long flags with underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    command: Option<String>,
    #[serde(default)]
    input: Vec<PathBuf>,
    event_date: Option<NaiveDate>,
    #[serde(alias = "treated_chain")]
    treated: Option<String>,
    bandwidth: Option<BandwidthSetting>,
    step: Option<i64>,
    #[serde(alias = "clustering")]
    cluster: Option<Clustering>,
    month_fe: Option<bool>,
    threshold: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    metric: Vec<Metric>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BandwidthSetting {
    Days(i64),
    List(Vec<i64>),
    Text(String),
}

/// Settings after merging the config file and the flags.
#[derive(Debug, Clone)]
struct Settings {
    inputs: Vec<PathBuf>,
    event_date: Option<NaiveDate>,
    treated: Option<String>,
    bandwidths: Option<Vec<i64>>,
    clustering: Clustering,
    month_fe: bool,
    threshold: f64,
    seed: Option<u64>,
    out: Option<PathBuf>,
    metrics: Vec<Metric>,
    config: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `30`, `10..50` (inclusive, stepped) or `10,20,50`.
pub fn parse_bandwidths(text: &str, step: Option<i64>) -> Result<Vec<i64>> {
    let bad = || usage(format!("cannot read bandwidth {text:?}"));
    let num = |s: &str| s.trim().parse::<i64>().map_err(|_| bad());
    let out = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('=')) ?);
        let step = step.unwrap_or(10);
        if step <= 0 || b < a {
            return Err(usage(format!("bandwidth range {text:?} with step {step} is empty")));
        }
        (0..).map(|i| a + i * step).take_while(|&x| x <= b).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.iter().any(|&b| b < 1) {
        return Err(usage("bandwidths must be positive day counts"));
    }
    Ok(out)
}

impl Settings {
    fn resolve(g: &GlobalArgs, command: &str) -> Result<Self> {
        let cfg: RunConfig = match &g.config {
            Some(p) => io::read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = &cfg.command {
            if c != command {
                return Err(usage(format!("config file is for `{c}` but the command is `{command}`")));
            }
        }
        let step = g.step.or(cfg.step);
        let bandwidths = match (&g.bandwidth, &cfg.bandwidth) {
            (Some(t), _) => Some(parse_bandwidths(t, step)?),
            (None, Some(BandwidthSetting::Days(d))) => Some(parse_bandwidths(&d.to_string(), step)?),
            (None, Some(BandwidthSetting::List(v))) => {
                let t: Vec<String> = v.iter().map(i64::to_string).collect();
                Some(parse_bandwidths(&t.join(","), step)?)
            }
            (None, Some(BandwidthSetting::Text(t))) => Some(parse_bandwidths(t, step)?),
            (None, None) => None,
        };
        let threshold = g.threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD);
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(usage(format!("threshold {threshold} must lie in (0, 1]")));
        }
        let metrics = if !g.metric.is_empty() {
            g.metric.clone()
        } else if !cfg.metric.is_empty() {
            cfg.metric.clone()
        } else {
            Metric::ALL.to_vec()
        };
        let mut seen = BTreeSet::new();
        let metrics = metrics.into_iter().filter(|m| seen.insert(*m)).collect();
        Ok(Settings {
            inputs: if g.input.is_empty() { cfg.input } else { g.input.clone() },
            event_date: g.event_date.or(cfg.event_date),
            treated: g.treated.clone().or(cfg.treated),
            bandwidths,
            clustering: g.cluster.or(cfg.cluster).unwrap_or(Clustering::ByChainMonth),
            month_fe: g.month_fe || cfg.month_fe.unwrap_or(false),
            threshold,
            seed: g.seed.or(cfg.seed),
            out: g.out.clone().or(cfg.out),
            metrics,
            config: g.config.clone(),
        })
    }

    fn event_date(&self, cmd: &str) -> Result<NaiveDate> {
        self.event_date.ok_or_else(|| usage(format!("{cmd} requires --event-date")))
    }

    fn treated(&self, cmd: &str) -> Result<String> {
        self.treated.clone().ok_or_else(|| usage(format!("{cmd} requires --treated")))
    }

    fn inputs(&self, cmd: &str) -> Result<&[PathBuf]> {
        if self.inputs.is_empty() {
            return Err(usage(format!("{cmd} requires at least one --input")));
        }
        Ok(&self.inputs)
    }

    fn bandwidths(&self, cmd: &str) -> Result<Vec<i64>> {
        self.bandwidths.clone().ok_or_else(|| usage(format!("{cmd} requires --bandwidth")))
    }

    /// At most one bandwidth, for commands that estimate on a single window.
    fn single_bandwidth(&self, cmd: &str) -> Result<Option<i64>> {
        match self.bandwidths.as_deref() {
            None => Ok(None),
            Some([b]) => Ok(Some(*b)),
            Some(_) => Err(usage(format!("{cmd} takes a single bandwidth; use `sweep --over bandwidth`"))),
        }
    }

    fn out(&self, cmd: &str) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| usage(format!("{cmd} requires --out")))
    }

    fn did_options(&self, model: &ModelArgs) -> DidOptions {
        DidOptions {
            with_exposure: model.exposures.is_some(),
            covariates: model.covariate.clone(),
            interactions: model.interactions,
            month_fe: self.month_fe,
            clustering: self.clustering,
        }
    }
}

/// Where a command's artifacts go.
struct Sink {
    writer: Option<ArtifactWriter>,
}

impl Sink {
    fn new(settings: &Settings, command: &[String], extra_inputs: &[&Path]) -> Result<Self> {
        let writer = match &settings.out {
            None => None,
            Some(dir) => {
                let mut inputs: Vec<PathBuf> = settings.config.iter().cloned().collect();
                inputs.extend(settings.inputs.iter().cloned());
                inputs.extend(extra_inputs.iter().map(|p| p.to_path_buf()));
                Some(ArtifactWriter::new(dir, Provenance::new(command.to_vec(), &inputs)?))
            }
        };
        Ok(Sink { writer })
    }

    /// Writes `name` under the output directory, or prints `body` when there is none.
    fn main_text(&mut self, name: &str, body: &str) -> Result<()> {
        match &mut self.writer {
            Some(w) => w.text(name, body).map(|_| ()),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.text(name, body)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.json(name, value)?;
        }
        Ok(())
    }

    fn svg(&mut self, name: &str, svg: &str) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.svg(name, svg)?;
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("decentralab: {}: {e}", e.category());
            e.exit_code()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Metrics => "metrics",
        Command::Attribute(_) => "attribute",
        Command::Did(_) => "did",
        Command::LaggedDid(_) => "lagged-did",
        Command::MultiperiodDid(_) => "multiperiod-did",
        Command::EventStudy(_) => "event-study",
        Command::Sdid(_) => "sdid",
        Command::Simulate(_) => "simulate",
        Command::Sweep(_) => "sweep",
        Command::Knockout(_) => "knockout",
        Command::Attrition(_) => "attrition",
        Command::Correlate(_) => "correlate",
        Command::Exposure(_) => "exposure",
        Command::Report => "report",
    }
}

/// Runs a parsed command line; `command` is the raw argument list recorded in provenance.
pub fn execute(cli: &Cli, command: &[String]) -> Result<()> {
    let name = command_name(&cli.command);
    let s = Settings::resolve(&cli.global, name)?;
    log::debug!("{name}: {s:?}");
    match &cli.command {
        Command::Metrics => cmd_metrics(&s, command),
        Command::Attribute(a) => cmd_attribute(&s, command, a),
        Command::Did(a) => cmd_did(&s, command, &a.model),
        Command::LaggedDid(a) => cmd_lagged(&s, command, a),
        Command::MultiperiodDid(a) => cmd_multi_period(&s, command, a),
        Command::EventStudy(a) => cmd_event_study(&s, command, a),
        Command::Sdid(a) => cmd_sdid(&s, command, a),
        Command::Simulate(a) => cmd_simulate(&s, command, a),
        Command::Sweep(a) => cmd_sweep(&s, command, a),
        Command::Knockout(a) => cmd_knockout(&s, command, a),
        Command::Attrition(a) => cmd_attrition(&s, command, a),
        Command::Correlate(a) => cmd_correlate(&s, command, a),
        Command::Exposure(a) => cmd_exposure(&s, command, a),
        Command::Report => cmd_report(&s, command),
    }
}

fn distributions(paths: &[PathBuf]) -> Result<Vec<DailyDistribution>> {
    let batch = io::read_node_days(paths)?;
    if batch.records.is_empty() {
        return Err(usage("inputs contain no production"));
    }
    Ok(daily_distributions(&batch.records)?)
}

/// Metric rows from metric tables and node-day files alike.
fn load_metric_rows(paths: &[PathBuf], threshold: f64) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    let mut node_files = Vec::new();
    for p in paths {
        if io::is_node_day_file(p)? {
            node_files.push(p.clone());
        } else {
            rows.extend(io::read_metrics_csv(p)?);
        }
    }
    if !node_files.is_empty() {
        rows.extend(distributions(&node_files)?.iter().map(|d| d.metrics_row(threshold)));
    }
    if rows.is_empty() {
        return Err(usage("inputs contain no metric rows"));
    }
    Ok(rows)
}

fn check_model_args(model: &ModelArgs, cmd: &str) -> Result<()> {
    if !model.covariate.is_empty() && model.covariates.is_none() {
        return Err(usage(format!("{cmd}: --covariate needs --covariates")));
    }
    if model.interactions && model.covariate.is_empty() {
        return Err(usage(format!("{cmd}: --interactions needs at least one --covariate")));
    }
    Ok(())
}

fn model_inputs(model: &ModelArgs) -> Vec<&Path> {
    model.exposures.iter().chain(&model.covariates).map(PathBuf::as_path).collect()
}

fn build_panel(s: &Settings, cmd: &str, model: &ModelArgs, during_end: Option<NaiveDate>) -> Result<Panel> {
    let event = s.event_date(cmd)?;
    let treated = s.treated(cmd)?;
    let inputs = s.inputs(cmd)?;
    check_model_args(model, cmd)?;
    let exposures = match &model.exposures {
        Some(p) => io::read_exposures(p)?,
        None => BTreeMap::new(),
    };
    let rows = load_metric_rows(inputs, s.threshold)?;
    let mut panel = assemble_panel(&rows, event, &treated, during_end, &exposures)?;
    for g in &panel.gaps {
        log::warn!("{} is missing {} day(s), first {}", g.chain_id, g.missing_days.len(), g.missing_days[0]);
    }
    if let Some(path) = &model.covariates {
        let all = io::read_covariates(path)?;
        for name in &model.covariate {
            let values = all
                .get(name)
                .ok_or_else(|| usage(format!("covariate {name} not found in {}", path.display())))?;
            panel.attach_covariate(name, values);
        }
    }
    Ok(panel)
}

fn gap_notes(panel: &Panel) -> Vec<String> {
    panel
        .gaps
        .iter()
        .map(|g| format!("{} has {} missing day(s); they are not imputed.", g.chain_id, g.missing_days.len()))
        .collect()
}

fn emit_results(sink: &mut Sink, stem: &str, set: &ResultSet) -> Result<()> {
    sink.json(&format!("{stem}.json"), set)?;
    sink.main_text(&format!("{stem}.txt"), &report::coefficient_table(set))
}

fn cmd_metrics(s: &Settings, command: &[String]) -> Result<()> {
    let inputs = s.inputs("metrics")?;
    let mut sink = Sink::new(s, command, &[])?;
    let rows: Vec<MetricsRow> = distributions(inputs)?.iter().map(|d| d.metrics_row(s.threshold)).collect();
    sink.main_text("metrics.csv", &io::metrics_csv(&rows))?;
    let mut series: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for r in &rows {
        series.entry(r.chain_id.clone()).or_default().push((r.day, r.entropy));
    }
    let series: Vec<_> = series.into_iter().collect();
    sink.svg("entropy.svg", &report::series_svg("Entropy (bits)", &series, s.event_date))
}

fn cmd_attribute(s: &Settings, command: &[String], a: &AttributeArgs) -> Result<()> {
    let inputs = s.inputs("attribute")?;
    let registry_path = a.registry.as_deref().ok_or_else(|| usage("attribute requires --registry"))?;
    s.out("attribute")?;
    let registry = io::read_registry(registry_path)?;
    let mut blocks = Vec::new();
    for p in inputs {
        blocks.extend(io::parse_raw_block_file(p)?);
    }
    decentralab_core::records::check_unique_heights(&blocks)?;
    let mode = match a.mode {
        ModeArg::Proportional => AttributionMode::Proportional,
        ModeArg::Proposer => AttributionMode::Proposer,
        ModeArg::Auto => AttributionMode::Auto,
    };
    let done = attribute_blocks(&blocks, &registry, mode);
    let mut sink = Sink::new(s, command, &[registry_path])?;
    sink.text("node_days.csv", &io::node_days_csv(&done.node_days))?;
    sink.text("quarantine.csv", &io::quarantine_csv(&done.quarantine))?;
    sink.text("attribution.csv", &io::outcomes_csv(&done.outcomes))?;
    if !done.quarantine.is_empty() {
        log::warn!("{} of {} blocks quarantined", done.quarantine.len(), blocks.len());
    }
    eprintln!(
        "attributed {} blocks, quarantined {}",
        blocks.len() - done.quarantine.len(),
        done.quarantine.len()
    );
    Ok(())
}

fn cmd_did(s: &Settings, command: &[String], model: &ModelArgs) -> Result<()> {
    let bandwidth = s.single_bandwidth("did")?;
    let mut panel = build_panel(s, "did", model, None)?;
    if let Some(b) = bandwidth {
        panel = panel.window(b, b);
    }
    let opts = s.did_options(model);
    let mut results = Vec::new();
    for m in &s.metrics {
        results.push(RegressionDoc::new(m.title(), &did(&panel, *m, &opts)?));
    }
    let mut notes = gap_notes(&panel);
    if let Some(b) = bandwidth {
        notes.push(format!("Window: ±{b} days around {}.", panel.event_date));
    }
    let set = ResultSet {
        command: "did".into(),
        results,
        notes,
    };
    let mut sink = Sink::new(s, command, &model_inputs(model))?;
    emit_results(&mut sink, "did", &set)
}

fn cmd_lagged(s: &Settings, command: &[String], a: &LaggedArgs) -> Result<()> {
    if a.lag_step == 0 {
        return Err(usage("--lag-step must be at least 1"));
    }
    let panel = build_panel(s, "lagged-did", &a.model, None)?;
    let opts = s.did_options(&a.model);
    let mut sink = Sink::new(s, command, &model_inputs(&a.model))?;
    let mut doc = LagDoc {
        command: "lagged-did".into(),
        lag_step: a.lag_step,
        max_lag: a.max_lag,
        results: Vec::new(),
        lags: BTreeMap::new(),
    };
    let mut text = String::new();
    for m in &s.metrics {
        let fit = lagged_did(&panel, *m, a.lag_step, a.max_lag, &opts)?;
        sink.text(&format!("lags_{}.csv", m.name()), &report::lag_csv(&fit.lags))?;
        let title = format!("{} lead and lag effects ({}-day buckets)", m.title(), a.lag_step);
        sink.svg(&format!("lags_{}.svg", m.name()), &report::lag_svg(&title, &fit.lags))?;
        text.push_str(&report::lag_table(m.title(), &fit.lags));
        text.push('\n');
        doc.results.push(RegressionDoc::new(m.title(), &fit.result));
        doc.lags.insert(m.name().into(), fit.lags);
    }
    let _ = writeln!(text, "Lag -1 is the reference bucket. * p<0.05, ** p<0.01, *** p<0.001");
    sink.json("lagged_did.json", &doc)?;
    sink.main_text("lagged_did.txt", &text)
}

fn cmd_multi_period(s: &Settings, command: &[String], a: &MultiPeriodArgs) -> Result<()> {
    let end = a.during_end.ok_or_else(|| usage("multiperiod-did requires --during-end"))?;
    let bandwidth = s.single_bandwidth("multiperiod-did")?;
    let mut panel = build_panel(s, "multiperiod-did", &a.model, Some(end))?;
    if let Some(b) = bandwidth {
        let after = b + (end - panel.event_date).num_days();
        panel = panel.window(b, after);
    }
    let opts = s.did_options(&a.model);
    let mut results = Vec::new();
    for m in &s.metrics {
        results.push(RegressionDoc::new(m.title(), &multi_period_did(&panel, *m, a.time_varying, &opts)?));
    }
    let mut notes = gap_notes(&panel);
    notes.push(format!("During window: {} to {end}.", panel.event_date));
    let set = ResultSet {
        command: "multiperiod-did".into(),
        results,
        notes,
    };
    let mut sink = Sink::new(s, command, &model_inputs(&a.model))?;
    emit_results(&mut sink, "multiperiod_did", &set)
}

fn cmd_event_study(s: &Settings, command: &[String], a: &SeriesArgs) -> Result<()> {
    let event = s.event_date("event-study")?;
    let inputs = s.inputs("event-study")?;
    let [path] = inputs else {
        return Err(usage("event-study takes exactly one --input"));
    };
    let cols = io::headers(path)?;
    let series: Vec<(String, Vec<(NaiveDate, f64)>)> = if cols.iter().any(|c| c == "chain_id") {
        let treated = s.treated("event-study on a metrics table")?;
        let rows: Vec<MetricsRow> = load_metric_rows(inputs, s.threshold)?
            .into_iter()
            .filter(|r| r.chain_id == treated)
            .collect();
        if rows.is_empty() {
            return Err(decentralab_core::Error::TreatedChainAbsent(treated).into());
        }
        s.metrics
            .iter()
            .map(|m| (m.title().to_string(), rows.iter().map(|r| (r.day, r.get(*m))).collect()))
            .collect()
    } else {
        let label = a.column.clone().unwrap_or_else(|| "value".into());
        vec![(label, io::read_series(path, a.column.as_deref())?)]
    };
    let mut sink = Sink::new(s, command, &[])?;
    let mut results = Vec::new();
    let mut notes = Vec::new();
    for (label, values) in &series {
        let r = event_study(values, event, s.clustering)?;
        let jump = r.coef("after").unwrap_or(0.0);
        let change = r.coef("after:day").unwrap_or(0.0);
        // a drop recovers under a positive slope change, a rise under a negative one
        let note = match recovery_time(jump.abs(), -jump.signum() * change) {
            Recovery::Days(d) => format!("{label}: jump {jump:.3}, recovery in {d:.1} days."),
            Recovery::NoRecovery => format!("{label}: jump {jump:.3}, no recovery implied by the slope change."),
        };
        notes.push(note);
        results.push(RegressionDoc::new(label, &r));
        let file = format!("event_study_{}.svg", label.to_lowercase().replace(' ', "_"));
        sink.svg(&file, &report::series_svg(label, &[(label.clone(), values.clone())], Some(event)))?;
    }
    let set = ResultSet {
        command: "event-study".into(),
        results,
        notes,
    };
    emit_results(&mut sink, "event_study", &set)
}

fn cmd_sdid(s: &Settings, command: &[String], a: &SdidArgs) -> Result<()> {
    let bandwidths = s.bandwidths("sdid")?;
    if let Some(z) = a.zeta {
        if !(z >= 0.0 && z.is_finite()) {
            return Err(usage("--zeta must be a non-negative number"));
        }
    }
    let panel = build_panel(s, "sdid", &ModelArgs::default(), None)?;
    let opts = SdidOptions {
        zeta_omega: a.zeta,
        placebo: match a.placebo {
            PlaceboArg::Auto => PlaceboScheme::Auto,
            PlaceboArg::LeaveOneIn => PlaceboScheme::LeaveOneIn,
            PlaceboArg::Subsets => PlaceboScheme::Subsets,
        },
        uniform_weights: a.uniform,
    };
    let mut sink = Sink::new(s, command, &[])?;
    let mut doc = SdidDoc {
        command: "sdid".into(),
        results: BTreeMap::new(),
    };
    let mut text = String::new();
    for m in &s.metrics {
        let sweep = sdid_sweep(&panel, *m, &bandwidths, &opts)?;
        sink.text(&format!("sdid_{}.csv", m.name()), &report::sdid_csv(&sweep))?;
        let _ = writeln!(text, "{}", m.title());
        text.push_str(&report::sdid_table(&sweep));
        text.push('\n');
        doc.results.insert(m.name().into(), sweep);
    }
    sink.json("sdid.json", &doc)?;
    sink.main_text("sdid.txt", &text)
}

/// Ground truth as written next to the simulated node-days.
#[derive(Debug, Serialize)]
struct TruthDoc<'a> {
    treated_chain: &'a str,
    event_date: NaiveDate,
    mean_post_att: f64,
    att_path: &'a [(NaiveDate, f64)],
    chains: &'a BTreeMap<String, GroundTruth>,
}

fn cmd_simulate(s: &Settings, command: &[String], a: &SimulateArgs) -> Result<()> {
    let path = a.scenario.as_deref().ok_or_else(|| usage("simulate requires --scenario"))?;
    s.out("simulate")?;
    let mut scenario: Scenario = io::read_json(path)?;
    if let Some(seed) = s.seed {
        scenario.treated.chain.seed = seed;
        for (i, c) in scenario.controls.iter_mut().enumerate() {
            c.chain.seed = seed.wrapping_add(i as u64 + 1);
        }
    }
    let panel = simulate_event_panel(&scenario).map_err(|e| CliError::in_file(path, e))?;
    let mut sink = Sink::new(s, command, &[path])?;
    for (chain, records) in &panel.records {
        sink.text(&format!("nodes_{chain}.csv"), &io::node_days_csv(records))?;
    }
    sink.json(
        "ground_truth.json",
        &TruthDoc {
            treated_chain: &panel.treated_chain,
            event_date: panel.event_date,
            mean_post_att: panel.mean_post_att(),
            att_path: &panel.att_path,
            chains: &panel.truths,
        },
    )?;
    sink.json("exposures.json", &panel.exposures)?;
    let mut csv = String::from("day,att\n");
    for (d, v) in &panel.att_path {
        let _ = writeln!(csv, "{d},{}", fmt_sig9(*v));
    }
    sink.text("att_path.csv", &csv)?;
    let series: Vec<(String, Vec<(NaiveDate, f64)>)> = panel
        .truths
        .iter()
        .map(|(c, t)| (c.clone(), t.days.iter().copied().zip(t.expected_entropy()).collect()))
        .collect();
    sink.svg("expected_entropy.svg", &report::series_svg("Expected entropy (bits)", &series, Some(panel.event_date)))
}

const CLUSTERINGS: [Clustering; 5] = [
    Clustering::None,
    Clustering::ByChain,
    Clustering::ByMonth,
    Clustering::ByChainMonth,
    Clustering::ByChainMonthCell,
];

fn cmd_sweep(s: &Settings, command: &[String], a: &SweepArgs) -> Result<()> {
    let (bandwidths, over) = match a.over {
        SweepOver::Bandwidth => (s.bandwidths("sweep --over bandwidth")?, "bandwidth"),
        SweepOver::Clustering => (s.single_bandwidth("sweep --over clustering")?.into_iter().collect(), "clustering"),
    };
    let panel = build_panel(s, "sweep", &a.model, None)?;
    let base = s.did_options(&a.model);
    let mut doc = SweepDoc {
        command: "sweep".into(),
        over: over.into(),
        tables: BTreeMap::new(),
    };
    let mut text = String::new();
    for m in &s.metrics {
        let mut results = Vec::new();
        match a.over {
            SweepOver::Bandwidth => {
                for b in &bandwidths {
                    let r = did(&panel.window(*b, *b), *m, &base)?;
                    results.push(RegressionDoc::new(&format!("±{b}"), &r));
                }
            }
            SweepOver::Clustering => {
                let p = match bandwidths.first() {
                    Some(b) => panel.window(*b, *b),
                    None => panel.clone(),
                };
                for c in CLUSTERINGS {
                    let opts = DidOptions { clustering: c, ..base.clone() };
                    results.push(RegressionDoc::new(c.name(), &did(&p, *m, &opts)?));
                }
            }
        }
        let set = ResultSet {
            command: "did".into(),
            results,
            notes: vec![format!("Outcome: {}.", m.title())],
        };
        let _ = writeln!(text, "{}", m.title());
        text.push_str(&report::coefficient_table(&set));
        text.push('\n');
        doc.tables.insert(m.name().into(), set);
    }
    let mut sink = Sink::new(s, command, &model_inputs(&a.model))?;
    sink.json("sweep.json", &doc)?;
    sink.main_text("sweep.txt", &text)
}

fn cmd_knockout(s: &Settings, command: &[String], a: &KnockoutArgs) -> Result<()> {
    let inputs = s.inputs("knockout")?;
    let registry_path = a.registry.as_deref().ok_or_else(|| usage("knockout requires --registry"))?;
    if a.group.is_empty() {
        return Err(usage("knockout requires at least one --group"));
    }
    let registry = io::read_registry(registry_path)?;
    let groups: BTreeSet<String> = a.group.iter().cloned().collect();
    let mut csv = String::from("chain_id,day,entropy,knockout_entropy,difference\n");
    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for d in distributions(inputs)? {
        let full = d.entropy();
        let kept = knockout_entropy(&d, &registry, &groups)
            .map_err(|e| usage(format!("{} on {}: {e}", d.chain_id(), d.day())))?;
        let _ = writeln!(csv, "{},{},{},{},{}", d.chain_id(), d.day(), fmt_sig9(full), fmt_sig9(kept), fmt_sig9(kept - full));
        let e = sums.entry(d.chain_id().into()).or_insert((0.0, 0.0, 0));
        e.0 += full;
        e.1 += kept;
        e.2 += 1;
    }
    let mut text = format!("Excluded groups: {}\n", a.group.join(", "));
    let _ = writeln!(text, "{:<16} {:>10} {:>10} {:>10}", "chain", "entropy", "knockout", "difference");
    for (chain, (full, kept, n)) in &sums {
        let n = *n as f64;
        let _ = writeln!(text, "{chain:<16} {:>10.3} {:>10.3} {:>10.3}", full / n, kept / n, (kept - full) / n);
    }
    let mut sink = Sink::new(s, command, &[registry_path])?;
    sink.text("knockout.csv", &csv)?;
    sink.main_text("knockout.txt", &text)
}

fn cmd_attrition(s: &Settings, command: &[String], a: &AttritionArgs) -> Result<()> {
    let event = s.event_date("attrition")?;
    let treated = s.treated("attrition")?;
    let inputs = s.inputs("attrition")?;
    let batch = io::read_node_days(inputs)?;
    let records: Vec<_> = batch.records.into_iter().filter(|r| r.chain_id == treated).collect();
    if records.is_empty() {
        return Err(decentralab_core::Error::TreatedChainAbsent(treated).into());
    }
    let points = node_attrition(&records, event, a.lookback, a.horizon)?;
    let mut csv = String::from("day,lost_node_count,lost_share\n");
    for p in &points {
        let _ = writeln!(csv, "{},{},{}", p.day, p.lost_node_count, fmt_sig9(p.lost_share));
    }
    let mut sink = Sink::new(s, command, &[])?;
    sink.main_text("attrition.csv", &csv)?;
    let series = vec![(treated.clone(), points.iter().map(|p| (p.day, p.lost_share)).collect())];
    sink.svg("attrition.svg", &report::series_svg(&format!("{treated}: share of pre-event production lost"), &series, None))
}

#[derive(Debug, Serialize)]
struct Correlation {
    metric: String,
    window: String,
    n: usize,
    r: f64,
}

fn cmd_correlate(s: &Settings, command: &[String], a: &CorrelateArgs) -> Result<()> {
    let treated = s.treated("correlate")?;
    let inputs = s.inputs("correlate")?;
    let with = a.with.as_deref().ok_or_else(|| usage("correlate requires --with"))?;
    let other = io::read_series(with, a.column.as_deref())?;
    let rows: Vec<MetricsRow> = load_metric_rows(inputs, s.threshold)?
        .into_iter()
        .filter(|r| r.chain_id == treated)
        .collect();
    if rows.is_empty() {
        return Err(decentralab_core::Error::TreatedChainAbsent(treated).into());
    }
    type DayFilter = Box<dyn Fn(NaiveDate) -> bool>;
    let mut windows: Vec<(&str, DayFilter)> = vec![("all", Box::new(|_| true))];
    if let Some(e) = s.event_date {
        windows.push(("pre", Box::new(move |d| d < e)));
        windows.push(("post", Box::new(move |d| d >= e)));
    }
    let mut out = Vec::new();
    for m in &s.metrics {
        for (name, keep) in &windows {
            let series: Vec<(NaiveDate, f64)> = rows.iter().filter(|r| keep(r.day)).map(|r| (r.day, r.get(*m))).collect();
            let (x, y) = align_series(&series, &other);
            let r = pearson_correlation(&x, &y)?;
            out.push(Correlation {
                metric: m.name().into(),
                window: (*name).into(),
                n: x.len(),
                r,
            });
        }
    }
    let mut csv = String::from("metric,window,n,r\n");
    for c in &out {
        let _ = writeln!(csv, "{},{},{},{}", c.metric, c.window, c.n, fmt_sig9(c.r));
    }
    let mut sink = Sink::new(s, command, &[with])?;
    sink.json("correlate.json", &serde_json::json!({ "command": "correlate", "correlations": out }))?;
    sink.main_text("correlate.csv", &csv)
}

fn cmd_exposure(s: &Settings, command: &[String], a: &ExposureArgs) -> Result<()> {
    let event = s.event_date("exposure")?;
    let inputs = s.inputs("exposure")?;
    let mut exposures = BTreeMap::new();
    for p in inputs {
        for (chain, series) in io::read_chain_series(p, a.column.as_deref())? {
            let x = exposure_drawdown(&series, event, a.peak_window, a.trough_window)
                .map_err(|e| CliError::in_file(p, e))?;
            exposures.insert(chain, x);
        }
    }
    let mut text = String::from("chain,exposure\n");
    for (c, x) in &exposures {
        let _ = writeln!(text, "{c},{}", fmt_sig9(*x));
    }
    let mut sink = Sink::new(s, command, &[])?;
    sink.json("exposures.json", &exposures)?;
    sink.main_text("exposure.csv", &text)
}

fn cmd_report(s: &Settings, command: &[String]) -> Result<()> {
    let inputs = s.inputs("report")?;
    let mut sink = Sink::new(s, command, &[])?;
    let mut text = String::new();
    for path in inputs {
        let value: serde_json::Value = io::read_json(path)?;
        let kind = value.get("command").and_then(|c| c.as_str()).unwrap_or_default().to_string();
        let bad = |e: serde_json::Error| CliError::Parse {
            path: path.clone(),
            line: 0,
            message: e.to_string(),
        };
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(text, "== {kind} ({file}) ==");
        match kind.as_str() {
            "did" | "multiperiod-did" | "event-study" => {
                let set: ResultSet = serde_json::from_value(value).map_err(bad)?;
                text.push_str(&report::coefficient_table(&set));
            }
            "lagged-did" => {
                let doc: LagDoc = serde_json::from_value(value).map_err(bad)?;
                for (metric, lags) in &doc.lags {
                    text.push_str(&report::lag_table(metric, lags));
                    let _ = writeln!(text);
                    let title = format!("{metric} lead and lag effects ({}-day buckets)", doc.lag_step);
                    sink.svg(&format!("lags_{metric}.svg"), &report::lag_svg(&title, lags))?;
                }
                let _ = writeln!(text, "Lag -1 is the reference bucket. * p<0.05, ** p<0.01, *** p<0.001");
            }
            "sdid" => {
                let doc: SdidDoc = serde_json::from_value(value).map_err(bad)?;
                for (metric, results) in &doc.results {
                    let _ = writeln!(text, "{metric}");
                    text.push_str(&report::sdid_table(results));
                }
            }
            "sweep" => {
                let doc: SweepDoc = serde_json::from_value(value).map_err(bad)?;
                for (metric, set) in &doc.tables {
                    let _ = writeln!(text, "{metric} (over {})", doc.over);
                    text.push_str(&report::coefficient_table(set));
                }
            }
            other => {
                return Err(CliError::Parse {
                    path: path.clone(),
                    line: 0,
                    message: format!("not a result file (command {other:?})"),
                })
            }
        }
        text.push('\n');
    }
    sink.main_text("report.txt", &text)
}
