use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use cvrelay::rate::{key_rate, mutual_information, post_relay_cm, RateBreakdown};
use cvrelay::sim::{
    analytic_alpha_gamma_mi, empirical_conditional_cm, empirical_mutual_information,
    gamma_alpha_beta_correlation, simulate, simulate_with_records, SimConfig,
};
use cvrelay::threshold::{
    optimal_modulation, tau_from_distance, Diagnostic, DEFAULT_OMEGA_MAX, DEFAULT_SCAN_POINTS,
};
use cvrelay::{
    attack::classify_plane, AttackKind, AttackParams, Detectors, Grid, Modulation, RateConfig,
    ThresholdSolver,
};
use rayon::prelude::*;

use crate::args::*;
use crate::config::{load_config, Config};
use crate::error::{CliError, Result};
use crate::grid::{parse_grid, GridSpec};
use crate::output::{emit, render_csv, Format, Table, Value};

pub const RATE_COLUMNS: [&str; 13] = [
    "tau", "omega", "g", "gp", "eta", "etap", "beta", "mu", "lambda", "lambda_p", "i_ab", "i_e",
    "rate",
];
pub const THRESHOLD_COLUMNS: [&str; 5] = ["tau", "d_km", "omega_root", "sign_below", "sign_above"];
pub const PLANE_COLUMNS: [&str; 4] = ["g", "gp", "class", "rate"];
pub const SAMPLE_COLUMNS: [&str; 7] = [
    "round", "alpha_q", "alpha_p", "beta_q", "beta_p", "gamma_q", "gamma_p",
];
pub const OPTIMAL_MU_COLUMNS: [&str; 9] = [
    "tau", "omega", "attack", "beta", "eta", "etap", "mu", "rate", "argmax",
];

const DEFAULT_PLANE_TAU: f64 = 0.9;
const DEFAULT_PLANE_GRID: usize = 201;
const DEFAULT_ROUNDS: u64 = 1_000_000;
const DEFAULT_MU_GRID: &str = "10:1000:10";

/// Flag values with the config file as fallback.
struct Ctx {
    cfg: Config,
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Named(AttackKind),
    Free { g: f64, gp: f64 },
}

impl Target {
    fn label(&self) -> String {
        match self {
            Target::Named(k) => k.name().to_string(),
            Target::Free { .. } => "custom".to_string(),
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

impl Ctx {
    fn new(output: &OutputArgs) -> Result<Self> {
        let cfg = match &output.config {
            Some(path) => load_config(path)?,
            None => Config::default(),
        };
        Ok(Self { cfg })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.cfg.typed(key),
        }
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
    }

    fn format(&self, o: &OutputArgs) -> Result<Format> {
        Ok(self.pick(o.format, "format")?.unwrap_or_default())
    }

    fn detectors(&self, d: &DetectorArgs) -> Result<Detectors> {
        let eta = self.pick(d.eta, "eta")?.unwrap_or(1.0);
        let etap = self.pick(d.etap, "etap")?.unwrap_or(1.0);
        Ok(Detectors::new(eta, etap)?)
    }

    fn rate_config(&self, mu: Option<f64>, beta: Option<f64>) -> Result<RateConfig> {
        let beta = self.pick(beta, "beta")?.unwrap_or(1.0);
        let cfg = match mu {
            None => RateConfig::asymptotic(),
            Some(mu) => RateConfig::finite(mu)?,
        };
        Ok(cfg.with_beta(beta)?)
    }

    /// `--tau` or `--distance`; flags win over the file as a pair.
    fn channel<T: FromStr>(&self, tau: Option<T>, distance: Option<T>) -> Result<Option<Channel<T>>>
    where
        T::Err: Display,
    {
        let (tau, distance) = if tau.is_some() || distance.is_some() {
            (tau, distance)
        } else {
            (self.cfg.typed("tau")?, self.cfg.typed("distance")?)
        };
        match (tau, distance) {
            (Some(_), Some(_)) => usage("give either --tau or --distance, not both"),
            (Some(t), None) => Ok(Some(Channel::Tau(t))),
            (None, Some(d)) => Ok(Some(Channel::Distance(d))),
            (None, None) => Ok(None),
        }
    }

    fn scalar_tau(&self, tau: Option<f64>, distance: Option<f64>) -> Result<Option<f64>> {
        Ok(match self.channel(tau, distance)? {
            Some(Channel::Tau(t)) => Some(t),
            Some(Channel::Distance(d)) => Some(tau_from_distance(d)?),
            None => None,
        })
    }

    fn free_pair(g: Option<f64>, gp: Option<f64>) -> Result<Option<Target>> {
        match (g, gp) {
            (Some(g), Some(gp)) => Ok(Some(Target::Free { g, gp })),
            (None, None) => Ok(None),
            _ => usage("--g and --gp must be given together"),
        }
    }

    fn target(&self, a: &AttackArgs) -> Result<Target> {
        if let Some(t) = Self::free_pair(a.g, a.gp)? {
            return Ok(t);
        }
        if let Some(kind) = a.attack {
            return Ok(Target::Named(kind));
        }
        if let Some(t) = Self::free_pair(self.cfg.typed("g")?, self.cfg.typed("gp")?)? {
            return Ok(t);
        }
        match self.cfg.typed::<AttackKind>("attack")? {
            Some(kind) => Ok(Target::Named(kind)),
            None => usage("--attack or --g/--gp is required"),
        }
    }
}

enum Channel<T> {
    Tau(T),
    Distance(T),
}

fn params(target: Target, tau: f64, omega: f64, det: Detectors) -> Result<AttackParams> {
    Ok(match target {
        Target::Named(kind) => {
            AttackParams::named(kind, tau, omega)?.with_efficiency(det.eta, det.etap)?
        }
        Target::Free { g, gp } => AttackParams::new(tau, omega, g, gp, det.eta, det.etap)?,
    })
}

fn mu_value(cfg: &RateConfig) -> Value {
    match cfg.modulation {
        Modulation::Asymptotic => "asymptotic".into(),
        Modulation::Finite(mu) => mu.into(),
    }
}

fn rate_row(b: &RateBreakdown) -> Vec<Value> {
    let p = &b.params;
    vec![
        p.tau.into(),
        p.omega.into(),
        p.g.into(),
        p.gp.into(),
        p.eta.into(),
        p.etap.into(),
        b.cfg.beta.into(),
        mu_value(&b.cfg),
        b.noise.lambda.into(),
        b.noise.lambda_p.into(),
        b.i_ab.into(),
        b.i_e.into(),
        b.rate.into(),
    ]
}

/// A table plus an optional non-convergence report raised after emitting.
struct Outcome {
    table: Table,
    failure: Option<String>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self {
            table,
            failure: None,
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    let output = match &command {
        Command::Rate(a) => &a.output,
        Command::Threshold(a) => &a.output,
        Command::Plane(a) => &a.output,
        Command::Sweep(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::OptimalMu(a) => &a.output,
    };
    let ctx = Ctx::new(output)?;
    let format = ctx.format(output)?;
    let outcome = match &command {
        Command::Rate(a) => rate(&ctx, a)?.into(),
        Command::Threshold(a) => threshold(&ctx, a)?,
        Command::Plane(a) => plane(&ctx, a)?.into(),
        Command::Sweep(a) => sweep(&ctx, a)?.into(),
        Command::Simulate(a) => simulate_cmd(&ctx, a)?.into(),
        Command::OptimalMu(a) => optimal_mu(&ctx, a)?.into(),
    };
    emit(&outcome.table, format, output.out.as_deref(), stdout)?;
    match outcome.failure {
        Some(msg) => Err(CliError::NonConvergence(msg)),
        None => Ok(()),
    }
}

fn rate(ctx: &Ctx, a: &RateArgs) -> Result<Table> {
    let tau = ctx
        .scalar_tau(a.tau, a.distance)?
        .ok_or_else(|| CliError::Usage("--tau or --distance is required".into()))?;
    let omega = ctx.require(a.omega, "omega")?;
    let target = ctx.target(&a.attack)?;
    let det = ctx.detectors(&a.detectors)?;
    let cfg = ctx.rate_config(ctx.pick(a.mu, "mu")?, a.beta)?;
    let b = key_rate(&params(target, tau, omega, det)?, &cfg)?;
    let mut table = Table::new(RATE_COLUMNS);
    table.push(rate_row(&b));
    Ok(table)
}

fn check_taus(taus: &[f64]) -> Result<()> {
    match taus.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        Some(t) => Err(CliError::Invalid(format!(
            "tau must lie in (0, 1], got {t}"
        ))),
        None => Ok(()),
    }
}

fn threshold(ctx: &Ctx, a: &ThresholdArgs) -> Result<Outcome> {
    let kind = ctx.require(a.attack, "attack")?;
    let grid = match ctx.channel(a.tau.clone(), a.distance.clone())? {
        Some(Channel::Tau(GridSpec(t))) => {
            check_taus(&t)?;
            Grid::Tau(t)
        }
        Some(Channel::Distance(GridSpec(d))) => {
            d.iter().try_for_each(|&x| tau_from_distance(x).map(drop))?;
            Grid::Distance(d)
        }
        None => return usage("--tau or --distance grid is required"),
    };
    let cfg = ctx.rate_config(ctx.pick(a.mu, "mu")?, a.beta)?;
    let solver = ThresholdSolver::new(cfg, ctx.detectors(&a.detectors)?)
        .with_omega_max(
            ctx.pick(a.omega_max, "omega_max")?
                .unwrap_or(DEFAULT_OMEGA_MAX),
        )
        .with_scan_points(
            ctx.pick(a.scan_points, "scan_points")?
                .unwrap_or(DEFAULT_SCAN_POINTS),
        );
    let curve = solver.threshold_curve(kind, &grid)?;

    let mut table = Table::new(THRESHOLD_COLUMNS);
    let mut failures = Vec::new();
    for pt in &curve.points {
        let head = [Value::Num(pt.tau), Value::Num(pt.distance_km)];
        if pt.roots.is_empty() {
            // no root: the signs carry the diagnostic
            let s = match &pt.diagnostic {
                Some(Diagnostic::AlwaysPositive) => 1,
                Some(Diagnostic::AlwaysNegative) => -1,
                Some(Diagnostic::Failed(msg)) => {
                    failures.push(format!("tau={}: {msg}", pt.tau));
                    0
                }
                None => 0,
            };
            let mut row = head.to_vec();
            row.extend([Value::Missing, Value::Int(s), Value::Int(s)]);
            table.push(row);
        }
        for r in &pt.roots {
            let mut row = head.to_vec();
            row.extend([
                Value::Num(r.omega),
                Value::Int(r.sign_below as i64),
                Value::Int(r.sign_above as i64),
            ]);
            table.push(row);
        }
    }
    let failure = (!failures.is_empty()).then(|| failures.join("; "));
    Ok(Outcome { table, failure })
}

fn plane(ctx: &Ctx, a: &PlaneArgs) -> Result<Table> {
    let omega = ctx.require(a.omega, "omega")?;
    let res = ctx.pick(a.grid, "grid")?.unwrap_or(DEFAULT_PLANE_GRID);
    let tau = ctx
        .scalar_tau(a.tau, a.distance)?
        .unwrap_or(DEFAULT_PLANE_TAU);
    let det = ctx.detectors(&a.detectors)?;
    let cfg = ctx.rate_config(ctx.pick(a.mu, "mu")?, a.beta)?;
    // surface parameter errors before the plane is built
    params(Target::Named(AttackKind::Collective), tau, omega, det)?;
    let cells = classify_plane(omega, res)?;
    let rows = cells
        .par_iter()
        .map(|c| {
            let rate = match AttackParams::new(tau, omega, c.g, c.gp, det.eta, det.etap) {
                Ok(p) => Value::Num(key_rate(&p, &cfg)?.rate),
                Err(_) => Value::Missing,
            };
            Ok(vec![
                c.g.into(),
                c.gp.into(),
                Value::Text(c.class.to_string()),
                rate,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(PLANE_COLUMNS);
    table.rows = rows;
    Ok(table)
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> Result<Table> {
    let targets: Vec<Target> = match Ctx::free_pair(a.g, a.gp)? {
        Some(t) => vec![t],
        None => match ctx.pick(a.attack.clone(), "attack")? {
            Some(AttackList(kinds)) => kinds.into_iter().map(Target::Named).collect(),
            None => return usage("--attack or --g/--gp is required"),
        },
    };
    let taus = match ctx.channel(a.tau.clone(), a.distance.clone())? {
        Some(Channel::Tau(GridSpec(t))) => t,
        Some(Channel::Distance(GridSpec(d))) => d
            .iter()
            .map(|&x| tau_from_distance(x))
            .collect::<cvrelay::Result<Vec<_>>>()?,
        None => return usage("--tau or --distance is required"),
    };
    check_taus(&taus)?;
    let GridSpec(omegas) = ctx.require(a.omega.clone(), "omega")?;
    let mus: Vec<Option<f64>> = match ctx.pick(a.mu.clone(), "mu")? {
        Some(GridSpec(m)) => m.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let det = ctx.detectors(&a.detectors)?;
    let beta = a.beta;
    let mut jobs = Vec::new();
    for t in &targets {
        for &tau in &taus {
            for &omega in &omegas {
                for &mu in &mus {
                    jobs.push((*t, tau, omega, mu));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(t, tau, omega, mu)| {
            let b = key_rate(&params(t, tau, omega, det)?, &ctx.rate_config(mu, beta)?)?;
            let mut row = vec![Value::Text(t.label())];
            row.extend(rate_row(&b));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(std::iter::once("attack").chain(RATE_COLUMNS));
    table.rows = rows;
    Ok(table)
}

const VARS: [&str; 4] = ["aq", "ap", "bq", "bp"];

fn simulate_cmd(ctx: &Ctx, a: &SimulateArgs) -> Result<Table> {
    let tau = ctx
        .scalar_tau(a.tau, a.distance)?
        .ok_or_else(|| CliError::Usage("--tau or --distance is required".into()))?;
    let omega = ctx.require(a.omega, "omega")?;
    let target = ctx.target(&a.attack)?;
    let det = ctx.detectors(&a.detectors)?;
    let mu = ctx.require(a.mu, "mu")?;
    let p = params(target, tau, omega, det)?;
    let sim = SimConfig {
        params: p,
        mu,
        rounds: ctx.pick(a.rounds, "rounds")?.unwrap_or(DEFAULT_ROUNDS),
        seed: ctx.pick(a.seed, "seed")?.unwrap_or(0),
    };
    let batch = if a.dump_samples.is_some() {
        simulate_with_records(&sim)?
    } else {
        simulate(&sim)?
    };
    if let (Some(path), Some(records)) = (&a.dump_samples, &batch.records) {
        dump_samples(path, records)?;
    }

    let est = empirical_conditional_cm(&batch)?;
    let mi = empirical_mutual_information(&batch)?;
    let (rho, rho_se) = gamma_alpha_beta_correlation(&batch)?;
    let model = post_relay_cm(mu, &p)?;
    let model = |i: usize, j: usize| (model.get(i, j) + if i == j { 1.0 } else { 0.0 }) / 2.0;
    let mi_ab = mutual_information(&p, &RateConfig::finite(mu)?)?;
    let mi_ag = analytic_alpha_gamma_mi(&p, mu)?;

    let mut columns: Vec<String> = [
        "tau", "omega", "g", "gp", "eta", "etap", "mu", "rounds", "seed",
    ]
    .map(String::from)
    .to_vec();
    let mut row: Vec<Value> = vec![
        p.tau.into(),
        p.omega.into(),
        p.g.into(),
        p.gp.into(),
        p.eta.into(),
        p.etap.into(),
        mu.into(),
        Value::Int(sim.rounds as i64),
        Value::Int(sim.seed as i64),
    ];
    for i in 0..4 {
        for j in i..4 {
            let tag = format!("{}_{}", VARS[i], VARS[j]);
            columns.extend([
                format!("cm_{tag}"),
                format!("se_{tag}"),
                format!("model_{tag}"),
            ]);
            row.extend([
                est.cm[i][j].into(),
                est.std_err[i][j].into(),
                model(i, j).into(),
            ]);
        }
    }
    for (name, value) in [
        ("mi_ab_given_gamma", mi.ab_given_gamma.bits),
        ("mi_ab_given_gamma_se", mi.ab_given_gamma.std_err),
        ("mi_ab_given_gamma_model", mi_ab),
        ("mi_alpha_gamma", mi.alpha_gamma.bits),
        ("mi_alpha_gamma_se", mi.alpha_gamma.std_err),
        ("mi_alpha_gamma_model", mi_ag),
        ("corr_gamma_alpha_beta", rho),
        ("corr_gamma_alpha_beta_se", rho_se),
    ] {
        columns.push(name.into());
        row.push(value.into());
    }
    let mut table = Table::new(columns);
    table.push(row);
    Ok(table)
}

fn dump_samples(path: &Path, records: &[cvrelay::sim::Record]) -> Result<()> {
    let mut table = Table::new(SAMPLE_COLUMNS);
    table.rows = records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            std::iter::once(Value::Int(k as i64))
                .chain(r.iter().map(|&x| Value::Num(x)))
                .collect()
        })
        .collect();
    let text = render_csv(&table)?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn optimal_mu(ctx: &Ctx, a: &OptimalMuArgs) -> Result<Table> {
    let tau = ctx
        .scalar_tau(a.tau, a.distance)?
        .ok_or_else(|| CliError::Usage("--tau or --distance is required".into()))?;
    let omega = ctx.require(a.omega, "omega")?;
    let kind = ctx.require(a.attack, "attack")?;
    let det = ctx.detectors(&a.detectors)?;
    let beta = ctx.pick(a.beta, "beta")?.unwrap_or(1.0);
    let GridSpec(grid) = match ctx.pick(a.mu_grid.clone(), "mu_grid")? {
        Some(g) => g,
        None => GridSpec(parse_grid(DEFAULT_MU_GRID).map_err(CliError::Usage)?),
    };
    let m = optimal_modulation(tau, omega, kind, beta, det.eta, det.etap, &grid)?;
    let mut table = Table::new(OPTIMAL_MU_COLUMNS);
    for &(mu, rate) in &m.rates {
        table.push(vec![
            tau.into(),
            omega.into(),
            kind.name().into(),
            beta.into(),
            det.eta.into(),
            det.etap.into(),
            mu.into(),
            rate.into(),
            Value::Int((mu == m.mu_star) as i64),
        ]);
    }
    Ok(table)
}
