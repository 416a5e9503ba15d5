//! Post-relay covariance matrices, Eve's Holevo information, Alice and Bob's
//! conditional mutual information, and the secret-key rate.
//!
//! Two evaluation modes are supported. `Asymptotic` uses the closed forms
//! valid for large modulation, where the `log(mu)` terms of the mutual
//! information and of the Holevo bound cancel. `Finite(mu)` builds the
//! conditional covariance matrices and takes their symplectic spectra
//! numerically.
//!
//! Modes are ordered `(q_a, p_a, q_b, p_b)`, where `a` and `b` are the remote
//! modes Alice and Bob keep in the entanglement-based picture.

use std::f64::consts::E;

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use crate::attack::{named_attack, noise_params, AttackKind, AttackParams, NoisePair};
use crate::error::{invalid, Result};
use crate::gaussian::{
    entropy_h, entropy_of_spectrum, symplectic_spectrum, CovarianceMatrix, SymplecticSpectrum,
};

/// Modulation at which asymptotic breakdowns report `i_ab` and `i_e`.
pub const DEFAULT_REFERENCE_MU: f64 = 1e6;
/// Largest finite modulation accepted.
pub const MAX_MU: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "mu")]
pub enum Modulation {
    Asymptotic,
    Finite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateConfig {
    pub modulation: Modulation,
    /// Reconciliation efficiency, applied to the mutual information only.
    pub beta: f64,
    pub reference_mu: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self::asymptotic()
    }
}

impl RateConfig {
    pub fn asymptotic() -> Self {
        Self {
            modulation: Modulation::Asymptotic,
            beta: 1.0,
            reference_mu: DEFAULT_REFERENCE_MU,
        }
    }

    pub fn finite(mu: f64) -> Result<Self> {
        let cfg = Self {
            modulation: Modulation::Finite(mu),
            ..Self::asymptotic()
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = beta;
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return invalid(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if let Modulation::Finite(mu) = self.modulation {
            if !(mu > 1.0 && mu <= MAX_MU) {
                return invalid(format!(
                    "finite modulation must lie in (1, {MAX_MU:e}], got {mu}"
                ));
            }
        }
        if !(self.reference_mu > 1.0 && self.reference_mu <= MAX_MU) {
            return invalid(format!(
                "reference modulation out of range: {}",
                self.reference_mu
            ));
        }
        Ok(())
    }

    /// The modulation used for the reported breakdown.
    pub fn effective_mu(&self) -> f64 {
        match self.modulation {
            Modulation::Asymptotic => self.reference_mu,
            Modulation::Finite(mu) => mu,
        }
    }
}

/// One rate evaluation with its intermediates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBreakdown {
    pub params: AttackParams,
    pub cfg: RateConfig,
    pub noise: NoisePair,
    /// Modulation at which `i_ab`, `i_e` and the spectra were evaluated.
    pub mu: f64,
    pub spectrum_ab: SymplecticSpectrum,
    pub nu_cond: f64,
    pub i_ab: f64,
    pub i_e: f64,
    pub rate: f64,
    /// No loss and ideal detectors: Eve holds no output modes.
    pub eve_decoupled: bool,
}

fn check_mu(mu: f64) -> Result<()> {
    if !(1.0..=MAX_MU).contains(&mu) {
        return invalid(format!("modulation must lie in [1, {MAX_MU:e}], got {mu}"));
    }
    Ok(())
}

/// Alice and Bob's covariance matrix conditioned on the Bell outcome.
///
/// Entries are written in forms free of large cancellations; e.g. the
/// diagonal `mu - tau (mu^2 - 1) / (2 (tau mu + lambda))` is evaluated as
/// `(tau mu^2 + 2 lambda mu + tau) / (2 (tau mu + lambda))`.
pub fn post_relay_cm(mu: f64, p: &AttackParams) -> Result<CovarianceMatrix> {
    check_mu(mu)?;
    p.check()?;
    let n = noise_params(p)?;
    let (q_diag, q_off) = quadrature_pair(mu, p.tau, n.lambda);
    let (p_diag, p_off) = quadrature_pair(mu, p.tau, n.lambda_p);
    CovarianceMatrix::from_row_slice(
        4,
        &[
            q_diag, 0.0, q_off, 0.0, //
            0.0, p_diag, 0.0, -p_off, //
            q_off, 0.0, q_diag, 0.0, //
            0.0, -p_off, 0.0, p_diag,
        ],
    )
}

fn quadrature_pair(mu: f64, tau: f64, lambda: f64) -> (f64, f64) {
    let denom = 2.0 * (tau * mu + lambda);
    let diag = (tau * mu * mu + 2.0 * lambda * mu + tau) / denom;
    let off = tau * (mu * mu - 1.0) / denom;
    (diag, off)
}

/// The same conditional covariance matrix, assembled from the full block
/// structure of the pre-measurement state and the Bell-detection
/// conditioning sum
/// `V_ab - 1/(2 det γ) Σ_ij C_i (X_i^T γ X_j) C_j^T`.
///
/// Shares no code with [`post_relay_cm`]; the entries of `γ` are derived
/// from the relay-input blocks rather than from `lambda`.
pub fn bell_condition_blocks(mu: f64, p: &AttackParams) -> Result<CovarianceMatrix> {
    check_mu(mu)?;
    p.check()?;
    let id = Matrix2::<f64>::identity();
    let z = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let g = Matrix2::new(p.g, 0.0, 0.0, p.gp);

    // relay inputs A', B'
    let b1 = (p.tau * mu + (1.0 - p.tau) * p.omega) * id;
    let b2 = b1;
    let d = (1.0 - p.tau) * g;

    // q_- = (q_A' - q_B')/sqrt2 and p_+ = (p_A' + p_B')/sqrt2, plus the
    // vacuum admixed by the detector beam splitters (rescaled by 1/eta)
    let gamma1 = 0.5 * (b1[(0, 0)] + b2[(0, 0)] - 2.0 * d[(0, 0)]) + (1.0 - p.eta) / p.eta;
    let gamma2 = 0.5 * (b1[(1, 1)] + b2[(1, 1)] + 2.0 * d[(1, 1)]) + (1.0 - p.etap) / p.etap;
    let gamma3 = 0.0;
    let gamma = Matrix2::new(gamma1, gamma3, gamma3, gamma2);
    let det_gamma = gamma1 * gamma2 - gamma3 * gamma3;

    let x = [
        Matrix2::new(0.0, 1.0, 1.0, 0.0),
        Matrix2::new(0.0, 1.0, -1.0, 0.0),
    ];
    let corr = (p.tau * (mu * mu - 1.0)).sqrt() * z;
    let mut c = [DMatrix::<f64>::zeros(4, 2), DMatrix::<f64>::zeros(4, 2)];
    c[0].view_mut((0, 0), (2, 2)).copy_from(&corr);
    c[1].view_mut((2, 0), (2, 2)).copy_from(&corr);

    let mut sum = DMatrix::<f64>::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let kernel = x[i].transpose() * gamma * x[j];
            let kernel = DMatrix::from_column_slice(2, 2, kernel.as_slice());
            sum += &c[i] * kernel * c[j].transpose();
        }
    }
    let v_ab = DMatrix::<f64>::identity(4, 4) * mu;
    CovarianceMatrix::new(v_ab - sum / (2.0 * det_gamma))
}

/// Bob's mode conditioned on the Bell outcome and on Alice's heterodyne.
pub fn bob_conditional_cm(mu: f64, p: &AttackParams) -> Result<CovarianceMatrix> {
    check_mu(mu)?;
    p.check()?;
    let n = noise_params(p)?;
    // mu - tau(mu^2-1)/(tau(mu+1)+2 lambda), rearranged
    let entry = |lambda: f64| {
        (p.tau * (mu + 1.0) + 2.0 * lambda * mu) / (p.tau * (mu + 1.0) + 2.0 * lambda)
    };
    CovarianceMatrix::from_diagonal(&[entry(n.lambda), entry(n.lambda_p)])
}

/// Large-modulation Holevo bound at modulation `mu`.
pub fn holevo_asymptotic(tau: f64, noise: &NoisePair, mu: f64) -> Result<f64> {
    let (l, lp) = (noise.lambda, noise.lambda_p);
    Ok(
        (E * E * (l * lp).sqrt() * mu / (4.0 * tau)).log2()
            - entropy_h(conditional_nu(tau, noise))?,
    )
}

/// Large-modulation mutual information at modulation `mu`.
pub fn mutual_information_asymptotic(tau: f64, noise: &NoisePair, mu: f64) -> f64 {
    (tau * mu / (4.0 * ((tau + noise.lambda) * (tau + noise.lambda_p)).sqrt())).log2()
}

/// Limit of Bob's doubly conditional symplectic eigenvalue.
pub fn conditional_nu(tau: f64, noise: &NoisePair) -> f64 {
    ((tau + 2.0 * noise.lambda) * (tau + 2.0 * noise.lambda_p)).sqrt() / tau
}

/// The `mu`-free asymptotic key rate with ideal reconciliation.
pub fn rate_sym_closed(tau: f64, noise: &NoisePair) -> Result<f64> {
    let (l, lp) = (noise.lambda, noise.lambda_p);
    let head = (tau * tau / (E * E * (l * lp * (tau + l) * (tau + lp)).sqrt())).log2();
    Ok(head + entropy_h(conditional_nu(tau, noise))?)
}

/// Mutual information of the heterodyne outcomes, per quadrature, computed
/// from a two-mode conditional covariance matrix via the classical
/// covariance `(V + I)/2`.
pub fn mutual_information_from_cm(v: &CovarianceMatrix) -> Result<f64> {
    if v.modes() != 2 {
        return invalid("mutual information needs a two-mode covariance matrix");
    }
    let classical = |i: usize, j: usize| 0.5 * (v.get(i, j) + if i == j { 1.0 } else { 0.0 });
    let quad = |a: usize, b: usize| {
        let (va, vb, c) = (classical(a, a), classical(b, b), classical(a, b));
        0.5 * (va * vb / (va * vb - c * c)).log2()
    };
    Ok(quad(0, 2) + quad(1, 3))
}

fn finite_mutual_information(mu: f64, tau: f64, noise: &NoisePair) -> f64 {
    // the per-quadrature Gaussian mutual information of (V + I)/2 reduces to
    // 1/2 log2[(tau(mu+1) + 2 lambda)^2 / (4 (tau mu + lambda)(tau + lambda))]
    let quad = |l: f64| {
        let num = tau * (mu + 1.0) + 2.0 * l;
        0.5 * (num * num / (4.0 * (tau * mu + l) * (tau + l))).log2()
    };
    quad(noise.lambda) + quad(noise.lambda_p)
}

fn eve_decoupled(noise: &NoisePair) -> bool {
    noise.lambda * noise.lambda_p <= 0.0
}

pub fn holevo_information(p: &AttackParams, cfg: &RateConfig) -> Result<f64> {
    Ok(key_rate(p, cfg)?.i_e)
}

pub fn mutual_information(p: &AttackParams, cfg: &RateConfig) -> Result<f64> {
    Ok(key_rate(p, cfg)?.i_ab)
}

/// `rate = beta * i_ab - i_e`.
///
/// In asymptotic mode with `beta = 1` the rate is the `mu`-free closed form;
/// `i_ab` and `i_e` are reported at `cfg.reference_mu`. With `beta < 1` the
/// asymptotic rate depends on the reference modulation and is evaluated
/// there. Negative rates are returned as they are.
pub fn key_rate(p: &AttackParams, cfg: &RateConfig) -> Result<RateBreakdown> {
    cfg.check()?;
    p.check()?;
    let noise = noise_params(p)?;
    let decoupled = eve_decoupled(&noise);
    let tau = p.tau;
    let mu = cfg.effective_mu();

    let (spectrum_ab, nu_cond, i_ab, i_e, rate) = match cfg.modulation {
        Modulation::Asymptotic => {
            let spectrum_ab = asymptotic_spectrum(tau, &noise, mu);
            let nu_cond = conditional_nu(tau, &noise);
            let i_ab = mutual_information_asymptotic(tau, &noise, mu);
            if decoupled {
                (spectrum_ab, nu_cond, i_ab, 0.0, cfg.beta * i_ab)
            } else {
                let i_e = holevo_asymptotic(tau, &noise, mu)?;
                let rate = if cfg.beta == 1.0 {
                    rate_sym_closed(tau, &noise)?
                } else {
                    cfg.beta * i_ab - i_e
                };
                (spectrum_ab, nu_cond, i_ab, i_e, rate)
            }
        }
        Modulation::Finite(mu) => {
            let spectrum_ab = symplectic_spectrum(&post_relay_cm(mu, p)?)?;
            let bob = bob_conditional_cm(mu, p)?;
            let nu_cond = (bob.get(0, 0) * bob.get(1, 1)).sqrt();
            let i_ab = finite_mutual_information(mu, tau, &noise);
            let i_e = if decoupled {
                0.0
            } else {
                entropy_of_spectrum(&spectrum_ab)? - entropy_h(nu_cond)?
            };
            (spectrum_ab, nu_cond, i_ab, i_e, cfg.beta * i_ab - i_e)
        }
    };
    Ok(RateBreakdown {
        params: *p,
        cfg: *cfg,
        noise,
        mu,
        spectrum_ab,
        nu_cond,
        i_ab,
        i_e,
        rate,
        eve_decoupled: decoupled,
    })
}

fn asymptotic_spectrum(tau: f64, noise: &NoisePair, mu: f64) -> SymplecticSpectrum {
    let mut nus = vec![
        (noise.lambda * mu / tau).sqrt().max(1.0),
        (noise.lambda_p * mu / tau).sqrt().max(1.0),
    ];
    nus.sort_by(|a, b| b.total_cmp(a));
    SymplecticSpectrum::from_sorted(nus)
}

fn check_tau_omega(tau: f64, omega: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return invalid(format!("tau must lie in (0, 1], got {tau}"));
    }
    if !(omega >= 1.0) || !omega.is_finite() {
        return invalid(format!("omega must be >= 1, got {omega}"));
    }
    Ok(())
}

/// Closed form `h((tau + 2 l)/tau) + log2[tau^2 / (e^2 l (tau + l))]`
/// for equal q and p noises `l`. Infinite when `l = 0`.
fn rate_equal_noise(tau: f64, l: f64) -> Result<f64> {
    if l <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(entropy_h((tau + 2.0 * l) / tau)? + (tau * tau / (E * E * l * (tau + l))).log2())
}

/// Minimum asymptotic rate, attained by the negative EPR attack:
/// `lambda_opt = (1 - tau)(omega + sqrt(omega^2 - 1))`.
pub fn rate_min_closed(tau: f64, omega: f64) -> Result<f64> {
    check_tau_omega(tau, omega)?;
    rate_equal_noise(tau, (1.0 - tau) * (omega + (omega * omega - 1.0).sqrt()))
}

/// Asymptotic rate of two independent entangling cloners.
pub fn rate_collective_closed(tau: f64, omega: f64) -> Result<f64> {
    check_tau_omega(tau, omega)?;
    rate_equal_noise(tau, (1.0 - tau) * omega)
}

/// Asymptotic rate of a named attack with ideal detectors and reconciliation.
pub fn named_rate(kind: AttackKind, tau: f64, omega: f64) -> Result<f64> {
    let (g, gp) = named_attack(kind, omega)?;
    Ok(key_rate(
        &AttackParams::ideal(tau, omega, g, gp)?,
        &RateConfig::asymptotic(),
    )?
    .rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneMinimum {
    pub g: f64,
    pub gp: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BruteForceMinimum {
    /// Best point of the uniform grid.
    pub grid: PlaneMinimum,
    /// Grid spacing.
    pub cell: f64,
    /// Best point after zooming in on the grid minimum.
    pub refined: PlaneMinimum,
}

/// Minimizes the asymptotic rate over all physical `(g, gp)` at fixed
/// `(tau, omega)`: exhaustive search on a `resolution x resolution` grid
/// spanning `[-omega, omega]^2` (endpoints included), followed by repeated
/// local grids around the incumbent that shrink by a factor of 4 per step.
pub fn minimize_rate_over_plane(
    tau: f64,
    omega: f64,
    resolution: usize,
) -> Result<BruteForceMinimum> {
    check_tau_omega(tau, omega)?;
    if resolution < 3 {
        return invalid("resolution must be >= 3");
    }
    let eval = |g: f64, gp: f64| -> Option<f64> {
        let p = AttackParams::ideal(tau, omega, g, gp).ok()?;
        key_rate(&p, &RateConfig::asymptotic()).ok().map(|b| b.rate)
    };
    let cell = 2.0 * omega / (resolution - 1) as f64;
    let mut best: Option<PlaneMinimum> = None;
    for i in 0..resolution {
        let gp = -omega + i as f64 * cell;
        for j in 0..resolution {
            let g = -omega + j as f64 * cell;
            if let Some(rate) = eval(g, gp) {
                if best.is_none_or(|b| rate < b.rate) {
                    best = Some(PlaneMinimum { g, gp, rate });
                }
            }
        }
    }
    let grid = best.ok_or_else(|| crate::Error::NumericFailure("no physical grid point".into()))?;

    let mut refined = grid;
    let mut step = cell;
    const HALF: i32 = 8;
    while step > 1e-13 * omega {
        let centre = refined;
        let sub = step / HALF as f64;
        for i in -HALF..=HALF {
            for j in -HALF..=HALF {
                let (g, gp) = (centre.g + j as f64 * sub, centre.gp + i as f64 * sub);
                if let Some(rate) = eval(g, gp) {
                    if rate < refined.rate {
                        refined = PlaneMinimum { g, gp, rate };
                    }
                }
            }
        }
        step /= 4.0;
    }
    Ok(BruteForceMinimum {
        grid,
        cell,
        refined,
    })
}
