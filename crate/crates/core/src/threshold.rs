//! Security thresholds: the thermal noise `omega` at which the key rate
//! crosses zero, as a function of transmissivity or fibre distance.
//!
//! `R(omega)` is not monotone for every attack (the positive EPR attack gets
//! *better* with more noise), so every sign change on the scan interval is
//! bracketed and refined, and each root carries the sign of `R` on either
//! side.

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{AttackKind, AttackParams};
use crate::error::{invalid, Error, Result};
use crate::rate::{key_rate, RateConfig};

/// Fibre loss in dB per km.
pub const FIBRE_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_OMEGA_MAX: f64 = 10.0;
pub const DEFAULT_SCAN_POINTS: usize = 400;
/// Bisection stops once the bracket is this narrow.
pub const ROOT_TOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;

/// `tau = 10^(-0.02 d)` for a fibre of `d_km` kilometres.
pub fn tau_from_distance(d_km: f64) -> Result<f64> {
    if !(d_km >= 0.0) || !d_km.is_finite() {
        return invalid(format!("distance must be a finite value >= 0, got {d_km}"));
    }
    Ok(10f64.powf(-d_km * FIBRE_LOSS_DB_PER_KM / 10.0))
}

pub fn distance_from_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return invalid(format!("tau must lie in (0, 1], got {tau}"));
    }
    // `+ 0.0` turns the -0 at tau = 1 into 0
    Ok(-10.0 * tau.log10() / FIBRE_LOSS_DB_PER_KM + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detectors {
    pub eta: f64,
    pub etap: f64,
}

impl Default for Detectors {
    fn default() -> Self {
        Self::ideal()
    }
}

impl Detectors {
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            etap: 1.0,
        }
    }

    pub fn new(eta: f64, etap: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0 && etap > 0.0 && etap <= 1.0) {
            return invalid(format!(
                "detector efficiencies must lie in (0, 1], got {eta}, {etap}"
            ));
        }
        Ok(Self { eta, etap })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub omega: f64,
    /// Sign of `R` just below the root: +1 or -1.
    pub sign_below: i8,
    pub sign_above: i8,
}

impl Root {
    /// `R > 0` above the root: more noise is tolerable.
    pub fn is_inverted(&self) -> bool {
        self.sign_below < 0 && self.sign_above > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "message")]
pub enum Diagnostic {
    /// `R > 0` on the whole scan interval.
    AlwaysPositive,
    /// `R < 0` on the whole scan interval; no noise is tolerable.
    AlwaysNegative,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub tau: f64,
    pub distance_km: f64,
    pub attack: AttackKind,
    pub cfg: RateConfig,
    pub detectors: Detectors,
    pub omega_max: f64,
    /// Ascending.
    pub roots: Vec<Root>,
    /// Set when `roots` is empty.
    pub diagnostic: Option<Diagnostic>,
}

impl ThresholdPoint {
    /// Largest `omega` up to which the key rate stays positive starting from
    /// the vacuum: the first root with a `(+, -)` pattern, `omega_max` when
    /// the rate is positive throughout, `None` when it is already negative at
    /// `omega = 1`.
    pub fn tolerable_omega(&self) -> Option<f64> {
        match (&self.diagnostic, self.roots.first()) {
            (Some(Diagnostic::AlwaysPositive), _) => Some(self.omega_max),
            (_, Some(r)) if r.sign_below > 0 => Some(r.omega),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCurve {
    pub points: Vec<ThresholdPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Tau(Vec<f64>),
    Distance(Vec<f64>),
}

impl Grid {
    fn taus(&self) -> Result<Vec<f64>> {
        let values = match self {
            Grid::Tau(v) | Grid::Distance(v) => v,
        };
        let increasing = values.windows(2).all(|w| w[1] > w[0]);
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        if values.is_empty() || !(increasing || decreasing) {
            return invalid("threshold grid must be non-empty and strictly monotone");
        }
        match self {
            Grid::Tau(v) => Ok(v.clone()),
            Grid::Distance(v) => v.iter().map(|&d| tau_from_distance(d)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSolver {
    pub cfg: RateConfig,
    pub detectors: Detectors,
    pub omega_max: f64,
    pub scan_points: usize,
}

impl ThresholdSolver {
    pub fn new(cfg: RateConfig, detectors: Detectors) -> Self {
        Self {
            cfg,
            detectors,
            omega_max: DEFAULT_OMEGA_MAX,
            scan_points: DEFAULT_SCAN_POINTS,
        }
    }

    pub fn with_omega_max(mut self, omega_max: f64) -> Self {
        self.omega_max = omega_max;
        self
    }

    pub fn with_scan_points(mut self, scan_points: usize) -> Self {
        self.scan_points = scan_points;
        self
    }

    /// Key rate of a named attack at `(tau, omega)` under this solver's
    /// configuration.
    pub fn rate(&self, kind: AttackKind, tau: f64, omega: f64) -> Result<f64> {
        let p = AttackParams::named(kind, tau, omega)?
            .with_efficiency(self.detectors.eta, self.detectors.etap)?;
        Ok(key_rate(&p, &self.cfg)?.rate)
    }

    pub fn threshold_omega(&self, tau: f64, kind: AttackKind) -> Result<ThresholdPoint> {
        if !(tau > 0.0 && tau <= 1.0) {
            return invalid(format!("tau must lie in (0, 1], got {tau}"));
        }
        if !(self.omega_max > 1.0) || !self.omega_max.is_finite() {
            return invalid(format!("omega_max must exceed 1, got {}", self.omega_max));
        }
        if self.scan_points < 2 {
            return invalid("at least two scan points are needed");
        }
        self.cfg.check()?;
        let f = |omega: f64| self.rate(kind, tau, omega);

        let n = self.scan_points;
        let step = (self.omega_max - 1.0) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.omega_max
                } else {
                    1.0 + i as f64 * step
                }
            })
            .collect();
        let values = grid.iter().map(|&w| f(w)).collect::<Result<Vec<_>>>()?;

        let mut roots = Vec::new();
        for i in 0..n - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let (fa, fb) = (values[i], values[i + 1]);
            if fa == 0.0 {
                // exact zero on the grid: report it once, with neighbouring signs
                let below = if i > 0 { sign(values[i - 1]) } else { 0 };
                if below != 0 && sign(fb) != 0 && below != sign(fb) {
                    roots.push(Root {
                        omega: a,
                        sign_below: below,
                        sign_above: sign(fb),
                    });
                }
                continue;
            }
            if fa * fb < 0.0 {
                let omega = bisect(&f, a, b, fa)?;
                roots.push(Root {
                    omega,
                    sign_below: sign(fa),
                    sign_above: sign(fb),
                });
            }
        }

        let diagnostic = if roots.is_empty() {
            Some(if values.iter().all(|&v| v > 0.0) {
                Diagnostic::AlwaysPositive
            } else if values.iter().all(|&v| v < 0.0) {
                Diagnostic::AlwaysNegative
            } else {
                Diagnostic::Failed("rate touches zero without changing sign".into())
            })
        } else {
            None
        };
        Ok(ThresholdPoint {
            tau,
            distance_km: distance_from_tau(tau)?,
            attack: kind,
            cfg: self.cfg,
            detectors: self.detectors,
            omega_max: self.omega_max,
            roots,
            diagnostic,
        })
    }

    /// Independent thresholds over a grid, evaluated in parallel. Points that
    /// fail carry a `Failed` diagnostic instead of aborting the curve.
    pub fn threshold_curve(&self, kind: AttackKind, grid: &Grid) -> Result<ThresholdCurve> {
        let taus = grid.taus()?;
        let points = taus
            .par_iter()
            .map(|&tau| {
                self.threshold_omega(tau, kind)
                    .unwrap_or_else(|err| ThresholdPoint {
                        tau,
                        distance_km: distance_from_tau(tau).unwrap_or(f64::NAN),
                        attack: kind,
                        cfg: self.cfg,
                        detectors: self.detectors,
                        omega_max: self.omega_max,
                        roots: Vec::new(),
                        diagnostic: Some(Diagnostic::Failed(err.to_string())),
                    })
            })
            .collect();
        Ok(ThresholdCurve { points })
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn bisect(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= ROOT_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericFailure(format!(
        "bisection did not converge on [{lo}, {hi}]"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalModulation {
    pub mu_star: f64,
    pub rate_star: f64,
    /// Every rate on the grid was negative; the argmax is still reported.
    pub all_negative: bool,
    pub rates: Vec<(f64, f64)>,
}

/// Grid argmax of the finite-modulation key rate.
#[allow(clippy::too_many_arguments)]
pub fn optimal_modulation(
    tau: f64,
    omega: f64,
    kind: AttackKind,
    beta: f64,
    eta: f64,
    etap: f64,
    mu_grid: &[f64],
) -> Result<OptimalModulation> {
    if mu_grid.is_empty() || !mu_grid.windows(2).all(|w| w[1] > w[0]) {
        return invalid("modulation grid must be non-empty and ascending");
    }
    if mu_grid[0] <= 1.0 {
        return invalid("modulation grid values must exceed 1");
    }
    let p = AttackParams::named(kind, tau, omega)?.with_efficiency(eta, etap)?;
    let rates = mu_grid
        .par_iter()
        .map(|&mu| {
            let cfg = RateConfig::finite(mu)?.with_beta(beta)?;
            Ok((mu, key_rate(&p, &cfg)?.rate))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mu_star, rate_star) =
        rates
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
    Ok(OptimalModulation {
        mu_star,
        rate_star,
        all_negative: rates.iter().all(|&(_, r)| r < 0.0),
        rates,
    })
}
