//! Monte Carlo simulation of the prepare, attack and relay stages in phase
//! space.
//!
//! Every quantum fluctuation is drawn as an explicit Gaussian term in
//! shot-noise units. The recorded amplitudes `alpha` and `beta` are scaled
//! so that their variance matches that of the heterodyne outcomes of the
//! entanglement-based picture, `(mu + 1)/2` per quadrature. With that
//! scaling, the covariance of `(alpha, beta)` conditioned on `gamma` should
//! reproduce `(V_ab|gamma + I)/2`.
//!
//! Rounds are processed in fixed chunks. Each chunk draws from its own
//! ChaCha stream, so results do not depend on the thread count.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use nalgebra::{Matrix2, Matrix4, Matrix4x2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::attack::AttackParams;
use crate::error::{invalid, Error, Result};
use crate::rate::MAX_MU;

const CHUNK: usize = 10_000;
/// Number of tracked variables: the six recorded ones, then the relay
/// inputs `(q_A', p_A', q_B', p_B')`.
pub const TRACKED: usize = 10;
pub const ALPHA_Q: usize = 0;
pub const ALPHA_P: usize = 1;
pub const BETA_Q: usize = 2;
pub const BETA_P: usize = 3;
pub const GAMMA_Q: usize = 4;
pub const GAMMA_P: usize = 5;
pub const RELAY_A_Q: usize = 6;
pub const RELAY_A_P: usize = 7;
pub const RELAY_B_Q: usize = 8;
pub const RELAY_B_P: usize = 9;
/// Estimators below this many rounds are refused.
pub const MIN_ESTIMATION_ROUNDS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: AttackParams,
    pub mu: f64,
    pub rounds: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        if self.rounds == 0 {
            return invalid("rounds must be positive");
        }
        if !(self.mu > 1.0 && self.mu <= MAX_MU) {
            return invalid(format!(
                "modulation must lie in (1, {MAX_MU:e}], got {}",
                self.mu
            ));
        }
        Ok(())
    }
}

/// One simulated round: `(alpha_q, alpha_p, beta_q, beta_p, gamma_q, gamma_p)`.
pub type Record = [f64; 6];

/// Streaming first and second moments (mean and co-moment sums).
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: [f64; TRACKED],
    /// `sum (x_i - mean_i)(x_j - mean_j)`.
    pub comoment: [[f64; TRACKED]; TRACKED],
}

impl Default for Moments {
    fn default() -> Self {
        Self {
            count: 0,
            mean: [0.0; TRACKED],
            comoment: [[0.0; TRACKED]; TRACKED],
        }
    }
}

impl Moments {
    pub fn push(&mut self, x: &[f64; TRACKED]) {
        self.count += 1;
        let n = self.count as f64;
        let mut delta = [0.0; TRACKED];
        for i in 0..TRACKED {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..TRACKED {
            let after = x[i] - self.mean[i];
            for j in 0..TRACKED {
                self.comoment[i][j] += after * delta[j];
            }
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut delta = [0.0; TRACKED];
        for i in 0..TRACKED {
            delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..TRACKED {
            for j in 0..TRACKED {
                self.comoment[i][j] += other.comoment[i][j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..TRACKED {
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased covariance.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.comoment[i][j] / (self.count as f64 - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub config: SimConfig,
    pub moments: Moments,
    /// Per-round records, kept only when requested.
    pub records: Option<Vec<Record>>,
}

pub fn simulate(cfg: &SimConfig) -> Result<SampleBatch> {
    run(cfg, false)
}

/// Like [`simulate`], but also keeps every round for dumping.
pub fn simulate_with_records(cfg: &SimConfig) -> Result<SampleBatch> {
    run(cfg, true)
}

fn run(cfg: &SimConfig, keep: bool) -> Result<SampleBatch> {
    cfg.check()?;
    let model = RoundModel::new(cfg);
    let chunks = cfg.rounds.div_ceil(CHUNK as u64);
    let parts: Vec<(Moments, Vec<Record>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let start = chunk * CHUNK as u64;
            let len = (cfg.rounds - start).min(CHUNK as u64) as usize;
            let mut moments = Moments::default();
            let mut records = Vec::with_capacity(if keep { len } else { 0 });
            for _ in 0..len {
                let x = model.sample(&mut rng);
                moments.push(&x);
                if keep {
                    records.push([x[0], x[1], x[2], x[3], x[4], x[5]]);
                }
            }
            (moments, records)
        })
        .collect();

    let mut moments = Moments::default();
    let mut records = keep.then(|| Vec::with_capacity(cfg.rounds as usize));
    for (m, r) in parts {
        moments.merge(&m);
        if let Some(all) = records.as_mut() {
            all.extend(r);
        }
    }
    Ok(SampleBatch {
        config: *cfg,
        moments,
        records,
    })
}

struct RoundModel {
    modulation_sd: f64,
    /// Converts a displacement into the recorded amplitude.
    record_scale: f64,
    sqrt_tau: f64,
    sqrt_loss: f64,
    /// Square-root factors of Eve's q and p covariance blocks.
    eve_q: (f64, f64),
    eve_p: (f64, f64),
    /// `sqrt((1 - eta)/eta)`, the rescaled detector vacuum.
    det_q: f64,
    det_p: f64,
}

impl RoundModel {
    fn new(cfg: &SimConfig) -> Self {
        let p = &cfg.params;
        let phi = cfg.mu - 1.0;
        // [[w, g], [g, w]] = L L^T with L = [[a, b], [a, -b]],
        // a = sqrt((w + g)/2), b = sqrt((w - g)/2)
        let factor = |g: f64| (((p.omega + g) / 2.0).sqrt(), ((p.omega - g) / 2.0).sqrt());
        Self {
            modulation_sd: phi.sqrt(),
            record_scale: ((cfg.mu + 1.0) / (2.0 * phi)).sqrt(),
            sqrt_tau: p.tau.sqrt(),
            sqrt_loss: (1.0 - p.tau).sqrt(),
            eve_q: factor(p.g),
            eve_p: factor(p.gp),
            det_q: ((1.0 - p.eta) / p.eta).sqrt(),
            det_p: ((1.0 - p.etap) / p.etap).sqrt(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; TRACKED] {
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        // displacements and the coherent states' own vacuum noise
        let disp = [
            self.modulation_sd * normal(),
            self.modulation_sd * normal(),
            self.modulation_sd * normal(),
            self.modulation_sd * normal(),
        ];
        let a_q = disp[0] + normal();
        let a_p = disp[1] + normal();
        let b_q = disp[2] + normal();
        let b_p = disp[3] + normal();

        let (z1, z2) = (normal(), normal());
        let e1_q = self.eve_q.0 * z1 + self.eve_q.1 * z2;
        let e2_q = self.eve_q.0 * z1 - self.eve_q.1 * z2;
        let (z3, z4) = (normal(), normal());
        let e1_p = self.eve_p.0 * z3 + self.eve_p.1 * z4;
        let e2_p = self.eve_p.0 * z3 - self.eve_p.1 * z4;

        let ra_q = self.sqrt_tau * a_q + self.sqrt_loss * e1_q;
        let ra_p = self.sqrt_tau * a_p + self.sqrt_loss * e1_p;
        let rb_q = self.sqrt_tau * b_q + self.sqrt_loss * e2_q;
        let rb_p = self.sqrt_tau * b_p + self.sqrt_loss * e2_p;

        // balanced beam splitter, conjugate homodynes behind inefficient detectors
        let q_minus = FRAC_1_SQRT_2 * (ra_q - rb_q) + self.det_q * normal();
        let p_plus = FRAC_1_SQRT_2 * (ra_p + rb_p) + self.det_p * normal();

        [
            disp[0] * self.record_scale,
            disp[1] * self.record_scale,
            disp[2] * self.record_scale,
            disp[3] * self.record_scale,
            FRAC_1_SQRT_2 * q_minus,
            FRAC_1_SQRT_2 * p_plus,
            ra_q,
            ra_p,
            rb_q,
            rb_p,
        ]
    }
}

/// Conditional covariance of `(alpha_q, alpha_p, beta_q, beta_p)` given
/// `gamma`, with asymptotic Gaussian standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    pub cm: [[f64; 4]; 4],
    pub std_err: [[f64; 4]; 4],
    pub rounds: u64,
}

fn check_rounds(batch: &SampleBatch) -> Result<f64> {
    let n = batch.moments.count;
    if n < MIN_ESTIMATION_ROUNDS {
        return invalid(format!(
            "need at least {MIN_ESTIMATION_ROUNDS} rounds, got {n}"
        ));
    }
    Ok(n as f64)
}

/// Residual covariance of the regression of `(alpha, beta)` on `gamma`.
pub fn empirical_conditional_cm(batch: &SampleBatch) -> Result<ConditionalEstimate> {
    let n = check_rounds(batch)?;
    let m = &batch.moments;
    let xx = Matrix4::from_fn(|i, j| m.covariance(i, j));
    let xg = Matrix4x2::from_fn(|i, j| m.covariance(i, GAMMA_Q + j));
    let gg = Matrix2::from_fn(|i, j| m.covariance(GAMMA_Q + i, GAMMA_Q + j));
    let scale = gg.amax();
    if !(scale > 0.0) || gg.determinant().abs() <= 1e-12 * scale * scale {
        return Err(Error::NumericFailure(
            "gamma has degenerate covariance".into(),
        ));
    }
    let gg_inv = gg
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure("gamma covariance is singular".into()))?;
    let resid = xx - xg * gg_inv * xg.transpose();
    // dof lost to the two regressors
    let resid = resid * (n - 1.0) / (n - 3.0);

    let mut cm = [[0.0; 4]; 4];
    let mut std_err = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            cm[i][j] = resid[(i, j)];
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            std_err[i][j] = ((cm[i][i] * cm[j][j] + cm[i][j] * cm[i][j]) / n).sqrt();
        }
    }
    Ok(ConditionalEstimate {
        cm,
        std_err,
        rounds: batch.moments.count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    pub bits: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MutualInformationEstimate {
    /// `I(alpha : beta | gamma)`, summed over quadratures.
    pub ab_given_gamma: MiEstimate,
    /// `I(alpha : gamma)`, summed over quadratures.
    pub alpha_gamma: MiEstimate,
}

/// Gaussian mutual information `-1/2 log2(1 - rho^2)` with the delta-method
/// error `|rho| / (ln 2 sqrt n)`.
fn gaussian_mi(var_a: f64, var_b: f64, cov: f64, n: f64) -> (f64, f64) {
    let rho2 = cov * cov / (var_a * var_b);
    (-0.5 * (1.0 - rho2).log2(), rho2.sqrt() / (LN_2 * n.sqrt()))
}

fn combine(parts: [(f64, f64); 2]) -> MiEstimate {
    MiEstimate {
        bits: parts[0].0 + parts[1].0,
        std_err: (parts[0].1.powi(2) + parts[1].1.powi(2)).sqrt(),
    }
}

/// Plug-in Gaussian estimates from the empirical covariances.
pub fn empirical_mutual_information(batch: &SampleBatch) -> Result<MutualInformationEstimate> {
    let n = check_rounds(batch)?;
    let cond = empirical_conditional_cm(batch)?;
    let c = &cond.cm;
    let ab = combine([
        gaussian_mi(c[0][0], c[2][2], c[0][2], n),
        gaussian_mi(c[1][1], c[3][3], c[1][3], n),
    ]);
    let m = &batch.moments;
    let ag = combine([
        gaussian_mi(
            m.covariance(ALPHA_Q, ALPHA_Q),
            m.covariance(GAMMA_Q, GAMMA_Q),
            m.covariance(ALPHA_Q, GAMMA_Q),
            n,
        ),
        gaussian_mi(
            m.covariance(ALPHA_P, ALPHA_P),
            m.covariance(GAMMA_P, GAMMA_P),
            m.covariance(ALPHA_P, GAMMA_P),
            n,
        ),
    ]);
    Ok(MutualInformationEstimate {
        ab_given_gamma: ab,
        alpha_gamma: ag,
    })
}

/// Exact `I(alpha : gamma)` of the simulated model, summed over quadratures.
/// Per quadrature `rho^2 = tau (mu - 1) / (2 gamma_k)` with `gamma_k` the
/// variance of the corresponding Bell output.
pub fn analytic_alpha_gamma_mi(params: &AttackParams, mu: f64) -> Result<f64> {
    let n = crate::attack::noise_params(params)?;
    let quad = |lambda: f64| {
        let rho2 = params.tau * (mu - 1.0) / (2.0 * (params.tau * mu + lambda));
        -0.5 * (1.0 - rho2).log2()
    };
    Ok(quad(n.lambda) + quad(n.lambda_p))
}

/// Empirical Pearson correlation between `gamma` and `alpha - conj(beta)`,
/// pooled over both quadratures, with its standard error.
pub fn gamma_alpha_beta_correlation(batch: &SampleBatch) -> Result<(f64, f64)> {
    let n = check_rounds(batch)?;
    let m = &batch.moments;
    let cov = |i, j| m.covariance(i, j);
    // q: alpha_q - beta_q ; p: alpha_p + beta_p
    let var_d = cov(ALPHA_Q, ALPHA_Q) + cov(BETA_Q, BETA_Q) - 2.0 * cov(ALPHA_Q, BETA_Q)
        + cov(ALPHA_P, ALPHA_P)
        + cov(BETA_P, BETA_P)
        + 2.0 * cov(ALPHA_P, BETA_P);
    let var_g = cov(GAMMA_Q, GAMMA_Q) + cov(GAMMA_P, GAMMA_P);
    let c =
        cov(ALPHA_Q, GAMMA_Q) - cov(BETA_Q, GAMMA_Q) + cov(ALPHA_P, GAMMA_P) + cov(BETA_P, GAMMA_P);
    let rho = c / (var_d * var_g).sqrt();
    // two independent quadratures pooled: 2n samples of the correlation
    Ok((rho, (1.0 - rho * rho) / (2.0 * n).sqrt()))
}
