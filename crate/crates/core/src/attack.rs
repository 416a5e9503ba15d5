//! Symmetric two-mode Gaussian attacks on the two relay links.
//!
//! Both links are beam splitters of transmissivity `tau` whose ancillas share
//! a Gaussian state with thermal variance `omega` and correlations
//! `G = diag(g, gp)`. Detector inefficiencies at the relay are folded into
//! the same parameter set.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute slack on the non-strict constraints, so that points computed
/// from `sqrt(omega^2 - 1)` land inside.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackParams {
    pub tau: f64,
    pub omega: f64,
    pub g: f64,
    pub gp: f64,
    pub eta: f64,
    pub etap: f64,
}

impl AttackParams {
    pub fn new(tau: f64, omega: f64, g: f64, gp: f64, eta: f64, etap: f64) -> Result<Self> {
        let p = Self {
            tau,
            omega,
            g,
            gp,
            eta,
            etap,
        };
        p.check()?;
        Ok(p)
    }

    /// Ideal detectors.
    pub fn ideal(tau: f64, omega: f64, g: f64, gp: f64) -> Result<Self> {
        Self::new(tau, omega, g, gp, 1.0, 1.0)
    }

    pub fn named(kind: AttackKind, tau: f64, omega: f64) -> Result<Self> {
        let (g, gp) = named_attack(kind, omega)?;
        Self::ideal(tau, omega, g, gp)
    }

    pub fn with_efficiency(self, eta: f64, etap: f64) -> Result<Self> {
        Self::new(self.tau, self.omega, self.g, self.gp, eta, etap)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return invalid(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        check_efficiency("eta", self.eta)?;
        check_efficiency("etap", self.etap)?;
        if !validate(self.omega, self.g, self.gp)? {
            return invalid(format!(
                "unphysical attack correlations (omega={}, g={}, g'={})",
                self.omega, self.g, self.gp
            ));
        }
        Ok(())
    }

    /// The same attack seen with q and p roles exchanged:
    /// `(g, gp, eta, etap) -> (-gp, -g, etap, eta)` swaps `lambda` and `lambda'`.
    pub fn mirrored(&self) -> Self {
        Self {
            g: -self.gp,
            gp: -self.g,
            eta: self.etap,
            etap: self.eta,
            ..*self
        }
    }
}

fn check_efficiency(name: &str, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("{name} must lie in (0, 1], got {eta}"));
    }
    Ok(())
}

/// Effective excess noises on the q and p Bell outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisePair {
    pub lambda: f64,
    pub lambda_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackClass {
    Nonphysical,
    Separable,
    Entangled,
}

impl fmt::Display for AttackClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackClass::Nonphysical => "nonphysical",
            AttackClass::Separable => "separable",
            AttackClass::Entangled => "entangled",
        })
    }
}

/// The named points of the correlation plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Independent entangling cloners, `g = gp = 0`.
    Collective,
    SepPlus,
    SepMinus,
    /// `g = -gp = omega - 1`.
    SepQcorr,
    /// `g = -gp = 1 - omega`.
    SepPcorr,
    EprPositive,
    /// The optimal attack.
    EprNegative,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::Collective,
        AttackKind::SepPlus,
        AttackKind::SepMinus,
        AttackKind::SepQcorr,
        AttackKind::SepPcorr,
        AttackKind::EprPositive,
        AttackKind::EprNegative,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Collective => "collective",
            AttackKind::SepPlus => "sep-plus",
            AttackKind::SepMinus => "sep-minus",
            AttackKind::SepQcorr => "sep-qcorr",
            AttackKind::SepPcorr => "sep-pcorr",
            AttackKind::EprPositive => "epr-positive",
            AttackKind::EprNegative => "epr-negative",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attack kind '{s}'")))
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega >= 1.0) || !omega.is_finite() {
        return invalid(format!("omega must be >= 1, got {omega}"));
    }
    Ok(())
}

/// Whether `(omega, g, gp)` describes a physical ancilla state:
/// `|g|, |gp| < omega` and `omega |g + gp| <= omega^2 + g gp - 1`.
pub fn validate(omega: f64, g: f64, gp: f64) -> Result<bool> {
    check_omega(omega)?;
    if !g.is_finite() || !gp.is_finite() {
        return invalid("correlations must be finite");
    }
    Ok(g.abs() < omega
        && gp.abs() < omega
        && omega * (g + gp).abs() <= omega * omega + g * gp - 1.0 + BOUNDARY_TOL)
}

/// Separability of the ancilla state: `omega^2 - g gp - 1 >= omega |g - gp|`.
pub fn is_separable(omega: f64, g: f64, gp: f64) -> Result<bool> {
    if !validate(omega, g, gp)? {
        return invalid(format!("unphysical attack (omega={omega}, g={g}, g'={gp})"));
    }
    Ok(omega * omega - g * gp - 1.0 + BOUNDARY_TOL >= omega * (g - gp).abs())
}

pub fn classify(omega: f64, g: f64, gp: f64) -> Result<AttackClass> {
    if !validate(omega, g, gp)? {
        return Ok(AttackClass::Nonphysical);
    }
    Ok(if is_separable(omega, g, gp)? {
        AttackClass::Separable
    } else {
        AttackClass::Entangled
    })
}

/// Correlations `(g, gp)` of a named attack. At `omega = 1` every kind
/// collapses to `(0, 0)`.
pub fn named_attack(kind: AttackKind, omega: f64) -> Result<(f64, f64)> {
    check_omega(omega)?;
    let d = omega - 1.0;
    let s = (omega * omega - 1.0).sqrt();
    Ok(match kind {
        AttackKind::Collective => (0.0, 0.0),
        AttackKind::SepPlus => (d, d),
        AttackKind::SepMinus => (-d, -d),
        AttackKind::SepQcorr => (d, -d),
        AttackKind::SepPcorr => (-d, d),
        AttackKind::EprPositive => (s, -s),
        AttackKind::EprNegative => (-s, s),
    })
}

/// `lambda = (1 - tau)(omega - g) + (1 - eta)/eta` and the p-quadrature analogue.
pub fn noise_params(p: &AttackParams) -> Result<NoisePair> {
    check_efficiency("eta", p.eta)?;
    check_efficiency("etap", p.etap)?;
    let loss = 1.0 - p.tau;
    Ok(NoisePair {
        lambda: loss * (p.omega - p.g) + (1.0 - p.eta) / p.eta,
        lambda_p: loss * (p.omega + p.gp) + (1.0 - p.etap) / p.etap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneCell {
    pub row: usize,
    pub col: usize,
    pub g: f64,
    pub gp: f64,
    pub class: AttackClass,
}

/// Classification of the square `[-omega, omega]^2` split into
/// `resolution x resolution` cells, each labelled by its center point.
/// Rows index `gp`, columns index `g`; output is row-major.
pub fn classify_plane(omega: f64, resolution: usize) -> Result<Vec<PlaneCell>> {
    check_omega(omega)?;
    if resolution < 3 {
        return invalid(format!("plane resolution must be >= 3, got {resolution}"));
    }
    let center = |i: usize| omega * ((2 * i + 1) as f64 - resolution as f64) / resolution as f64;
    let rows: Vec<Vec<PlaneCell>> = (0..resolution)
        .into_par_iter()
        .map(|row| {
            let gp = center(row);
            (0..resolution)
                .map(|col| {
                    let g = center(col);
                    let class = classify(omega, g, gp).expect("omega already validated");
                    PlaneCell {
                        row,
                        col,
                        g,
                        gp,
                        class,
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Number of 4-connected components of `class` in a row-major plane grid.
pub fn count_components(cells: &[PlaneCell], resolution: usize, class: AttackClass) -> usize {
    let mut seen = vec![false; cells.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..cells.len() {
        if seen[start] || cells[start].class != class {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (r, c) = (idx / resolution, idx % resolution);
            let mut neighbours = Vec::with_capacity(4);
            if r > 0 {
                neighbours.push(idx - resolution);
            }
            if r + 1 < resolution {
                neighbours.push(idx + resolution);
            }
            if c > 0 {
                neighbours.push(idx - 1);
            }
            if c + 1 < resolution {
                neighbours.push(idx + 1);
            }
            for n in neighbours {
                if !seen[n] && cells[n].class == class {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    components
}
