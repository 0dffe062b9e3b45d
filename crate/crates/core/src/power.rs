//! Pilot power by block-coordinate ascent on the quadratic-transform
//! surrogate, data power for weighted sum SE and max-min SINR under frozen
//! deterministic interference coefficients, and the downlink powers that make
//! duality precoding reach the uplink SINRs.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::CorrelationSet;
use crate::error::{Error, Result};
use crate::estimation::PilotPlan;
use crate::linalg::{self, c, CMat, Hpd};
use crate::rmt::DetSinrTerms;
#[allow(unused_imports)]
use num_traits::Float as _;

/// Per-user energy budgets, power caps and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Energy per coherence block `E` (mW·symbol).
    pub energy: Vec<f64>,
    /// `P = E/(τ_p+τ_u)`.
    pub cap: Vec<f64>,
    pub weights: Vec<f64>,
    pub tau_p: usize,
    pub tau_u: usize,
}

impl PowerBudget {
    /// Budget whose cap equals `power_mw` for every user, unit weights.
    pub fn uniform(users: usize, power_mw: f64, tau_p: usize, tau_u: usize) -> Result<Self> {
        if !(power_mw > 0.0) || tau_p + tau_u == 0 {
            return Err(Error::Config("power and uplink length must be positive".into()));
        }
        let e = power_mw * (tau_p + tau_u) as f64;
        Ok(PowerBudget { energy: vec![e; users], cap: vec![power_mw; users], weights: vec![1.0; users], tau_p, tau_u })
    }

    pub fn users(&self) -> usize {
        self.energy.len()
    }

    /// Largest data power `(E − p̂τ_p)/τ_u` left after the pilots.
    pub fn data_cap(&self, p_hat: &[f64]) -> Result<Vec<f64>> {
        if self.tau_u == 0 {
            return Err(Error::Config("no uplink data symbols".into()));
        }
        Ok(self
            .energy
            .iter()
            .zip(p_hat)
            .map(|(e, q)| ((e - q * self.tau_p as f64) / self.tau_u as f64).max(0.0))
            .collect())
    }

    /// Whether `p̂τ_p + pτ_u ≤ E(1 + 1e−9)` holds for every user.
    pub fn feasible(&self, p_hat: &[f64], p: &[f64]) -> bool {
        (0..self.users()).all(|u| {
            p_hat[u] > 0.0
                && p_hat[u] <= self.cap[u] * (1.0 + 1e-12)
                && p_hat[u] * self.tau_p as f64 + p[u] * self.tau_u as f64 <= self.energy[u] * (1.0 + 1e-9)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerTag {
    Uniform,
    PilotOpt,
    Sumse,
    Maxmin,
    Duality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_hat: Vec<f64>,
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
    pub tag: PowerTag,
}

impl PowerAllocation {
    /// Pilot and data powers at the cap.
    pub fn uniform(budget: &PowerBudget) -> Self {
        PowerAllocation { p_hat: budget.cap.clone(), p_ul: budget.cap.clone(), p_dl: budget.cap.clone(), tag: PowerTag::Uniform }
    }
}

/// `Σ_{j,e} ω_e tr(p̂_e R_e^j ψ_e^{j,−1} R_e^j)`.
pub fn pilot_objective(corr: &CorrelationSet, plan: &PilotPlan, p_hat: &[f64], weights: &[f64], sigma2: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..corr.cells() {
        let psi = psi_factors(corr, plan, p_hat, sigma2, j)?;
        for e in 0..corr.users() {
            let x = psi[plan.pilot[e]].solve(&corr.r[j][e]);
            total += weights[e] * p_hat[e] * linalg::trace_prod(&corr.r[j][e], &x).re;
        }
    }
    Ok(total)
}

fn psi_factors(corr: &CorrelationSet, plan: &PilotPlan, p_hat: &[f64], sigma2: f64, j: usize) -> Result<Vec<Hpd>> {
    let tau = plan.tau_p as f64;
    plan.groups()
        .iter()
        .map(|g| {
            let mut s = linalg::scaled_identity(corr.antennas, sigma2);
            for &e in g {
                linalg::axpy(&mut s, tau * p_hat[e], &corr.r[j][e]);
            }
            linalg::hermitize(&mut s);
            Hpd::new(s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotPowerResult {
    pub p_hat: Vec<f64>,
    /// Objective at the start and after every iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates `Λ_e^j = √p̂_e ψ_e^{j,−1} R_e^j` and
/// `√p̂_e = ω_e Σ_j Re tr(R_e^j Λ_e^j) / (τ_p Σ_j Σ_{r on the pilot of e} ω_r tr(Λ_r^{jH} R_e^j Λ_r^j))`,
/// capped at `P_e`. Each step cannot decrease the objective; a decrease beyond
/// round-off is reported as a numerical error.
pub fn pilot_power_opt(
    corr: &CorrelationSet,
    plan: &PilotPlan,
    budget: &PowerBudget,
    sigma2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PilotPowerResult> {
    let lk = corr.users();
    if plan.users() != lk || budget.users() != lk {
        return Err(Error::dim("pilot power inputs disagree"));
    }
    let w = &budget.weights;
    let tau = plan.tau_p as f64;
    let mut p_hat = budget.cap.clone();
    let mut objective = vec![pilot_objective(corr, plan, &p_hat, w, sigma2)?];
    for it in 1..=max_iter {
        let mut num = vec![0.0; lk];
        let mut den = vec![0.0; lk];
        for j in 0..corr.cells() {
            let psi = psi_factors(corr, plan, &p_hat, sigma2, j)?;
            let r = &corr.r[j];
            let lambda: Vec<CMat> =
                (0..lk).map(|e| psi[plan.pilot[e]].solve(&r[e]) * c(p_hat[e].sqrt(), 0.0)).collect();
            for e in 0..lk {
                num[e] += linalg::trace_prod(&r[e], &lambda[e]).re;
                for rr in plan.sharing_with_self(e) {
                    let lr = &lambda[rr];
                    den[e] += w[rr] * linalg::trace_prod(&(lr.adjoint() * &r[e]), lr).re;
                }
            }
        }
        for e in 0..lk {
            let s = if den[e] > 0.0 { w[e] * num[e] / (tau * den[e]) } else { budget.cap[e].sqrt() };
            p_hat[e] = (s * s).clamp(f64::MIN_POSITIVE, budget.cap[e]);
        }
        let obj = pilot_objective(corr, plan, &p_hat, w, sigma2)?;
        let prev = *objective.last().unwrap_or(&obj);
        objective.push(obj);
        if obj < prev * (1.0 - 1e-10) {
            return Err(Error::numerical(format!("pilot power objective decreased from {prev} to {obj}")));
        }
        if (obj - prev).abs() <= tol * obj.abs() {
            return Ok(PilotPowerResult { p_hat, objective, iterations: it, converged: true });
        }
    }
    Ok(PilotPowerResult { p_hat, objective, iterations: max_iter, converged: false })
}

/// `Σ_u ω_u log SINR_u(p)` under frozen `F`, `U`.
pub fn weighted_log_sinr(terms: &DetSinrTerms, p: &[f64], weights: &[f64], sigma2: f64) -> f64 {
    terms.sinr_with(p, sigma2).iter().zip(weights).map(|(s, w)| w * s.ln()).sum()
}

/// `Σ_u ω_u log2(1 + SINR_u)`.
pub fn weighted_sum_rate(sinr: &[f64], weights: &[f64]) -> f64 {
    sinr.iter().zip(weights).map(|(s, w)| w * (1.0 + s).log2()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub p: Vec<f64>,
    pub iterations: usize,
    /// Relative sup-norm change after every iteration.
    pub residuals: Vec<f64>,
    /// `Σ ω log SINR` at the start and after every iteration.
    pub objective: Vec<f64>,
    pub converged: bool,
}

/// Weighted sum-SE data powers under the high-SINR surrogate with frozen
/// `F`, `U`: `p_u ← min{ω_u / Σ_v ω_v F_vu/(Σ_w F_vw p_w + σ²), p0_u}`
/// from `p = p0`. Users that interfere with nobody stay at `p0`.
pub fn sumse_fixed_point(
    terms: &DetSinrTerms,
    p0: &[f64],
    weights: &[f64],
    sigma2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    let n = terms.users();
    if p0.len() != n || weights.len() != n {
        return Err(Error::dim("fixed point inputs disagree"));
    }
    let mut p = p0.to_vec();
    let mut residuals = Vec::new();
    let mut objective = vec![weighted_log_sinr(terms, &p, weights, sigma2)];
    for it in 1..=max_iter {
        let inv_den: Vec<f64> = (0..n)
            .map(|v| 1.0 / ((0..n).map(|w| terms.f[v][w] * p[w]).sum::<f64>() + sigma2))
            .collect();
        let next: Vec<f64> = (0..n)
            .map(|u| {
                let s: f64 = (0..n).map(|v| weights[v] * terms.f[v][u] * inv_den[v]).sum();
                if s > 0.0 {
                    (weights[u] / s).min(p0[u])
                } else {
                    p0[u]
                }
            })
            .collect();
        let res = (0..n).map(|u| (next[u] - p[u]).abs() / p0[u]).fold(0.0_f64, f64::max);
        residuals.push(res);
        p = next;
        objective.push(weighted_log_sinr(terms, &p, weights, sigma2));
        if res < tol {
            return Ok(FixedPointResult { p, iterations: it, residuals, objective, converged: true });
        }
    }
    Ok(FixedPointResult { p, iterations: max_iter, residuals, objective, converged: false })
}

/// Smallest powers reaching SINR `q` for every user, `q(U − qF)^{−1}σ²1`, if
/// they are positive and within `pmax`.
pub fn maxmin_feasible(terms: &DetSinrTerms, q: f64, pmax: &[f64], sigma2: f64) -> Option<Vec<f64>> {
    let n = terms.users();
    let a = DMatrix::from_fn(n, n, |u, v| if u == v { terms.u[u] } else { 0.0 } - q * terms.f[u][v]);
    let p = a.lu().solve(&DVector::from_element(n, q * sigma2))?;
    if p.iter().zip(pmax).all(|(x, m)| *x > 0.0 && *x <= *m) {
        Some(p.iter().copied().collect())
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxMinResult {
    pub p: Vec<f64>,
    pub q: f64,
    pub bisections: usize,
}

/// Largest common SINR `q` reachable within `pmax`, by bisection to relative
/// width `q_tol`. The bracket starts at ten times the largest
/// interference-free SINR and doubles while still feasible.
pub fn maxmin_bisection(terms: &DetSinrTerms, pmax: &[f64], sigma2: f64, q_tol: f64) -> Result<MaxMinResult> {
    let n = terms.users();
    if pmax.len() != n {
        return Err(Error::dim("power caps disagree with user count"));
    }
    let solo = (0..n).map(|u| pmax[u] * terms.u[u] / sigma2).fold(0.0_f64, f64::max);
    let mut hi = 10.0 * solo;
    let mut guard = 0;
    while maxmin_feasible(terms, hi, pmax, sigma2).is_some() {
        hi *= 2.0;
        guard += 1;
        if guard > 200 || !hi.is_finite() {
            return Err(Error::numerical("max-min bracket could not be closed"));
        }
    }
    let mut lo = 0.0;
    let mut best: Option<Vec<f64>> = None;
    let mut it = 0;
    while hi - lo > q_tol * lo.max(f64::MIN_POSITIVE) && it < 400 {
        let mid = 0.5 * (lo + hi);
        match maxmin_feasible(terms, mid, pmax, sigma2) {
            Some(p) => {
                lo = mid;
                best = Some(p);
            }
            None => hi = mid,
        }
        it += 1;
    }
    let p = best.ok_or_else(|| Error::numerical("no positive common SINR is feasible"))?;
    Ok(MaxMinResult { p, q: lo, bisections: it })
}

/// Downlink powers `(σ_dl²/σ_ul²)(U − ΓB^T)^{−1}(U − ΓB)p_ul`, `B = F + U`,
/// `Γ = diag(γ/(1+γ))` with `γ` the uplink SINRs at `p_ul`.
pub fn duality_power(terms: &DetSinrTerms, p_ul: &[f64], sigma2_ul: f64, sigma2_dl: f64) -> Result<Vec<f64>> {
    let n = terms.users();
    if p_ul.len() != n {
        return Err(Error::dim("uplink powers disagree with user count"));
    }
    let gamma = terms.sinr_with(p_ul, sigma2_ul);
    let g: Vec<f64> = gamma.iter().map(|s| s / (1.0 + s)).collect();
    let b = terms.b_matrix();
    let u = terms.u_matrix();
    let gd = DMatrix::from_diagonal(&DVector::from_column_slice(&g));
    let lhs = &u - &gd * b.transpose();
    let rhs = (&u - &gd * &b) * DVector::from_column_slice(p_ul);
    let x = lhs.lu().solve(&rhs).ok_or_else(|| Error::numerical("U − ΓBᵀ is singular"))?;
    Ok(x.iter().map(|v| v * sigma2_dl / sigma2_ul).collect())
}

/// A log-domain geometric program `max Σ ω_u [log U_u + x_u − log(Σ_v F_uv e^{x_v} + σ²)]`
/// subject to `x ≤ log p0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpProblem {
    pub f: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub sigma2: f64,
    pub weights: Vec<f64>,
    pub log_cap: Vec<f64>,
}

impl GpProblem {
    pub fn from_terms(terms: &DetSinrTerms, p0: &[f64], weights: &[f64], sigma2: f64) -> Self {
        GpProblem {
            f: terms.f.clone(),
            u: terms.u.clone(),
            sigma2,
            weights: weights.to_vec(),
            log_cap: p0.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|u| {
                let i: f64 = self.f[u].iter().zip(x).map(|(f, xv)| f * xv.exp()).sum();
                self.weights[u] * (self.u[u].ln() + x[u] - (i + self.sigma2).ln())
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let den: Vec<f64> = (0..n).map(|u| (0..n).map(|v| self.f[u][v] * e[v]).sum::<f64>() + self.sigma2).collect();
        (0..n)
            .map(|v| self.weights[v] - (0..n).map(|u| self.weights[u] * self.f[u][v] * e[v] / den[u]).sum::<f64>())
            .collect()
    }
}

/// Solver interface for the log-domain program.
pub trait GpBackend {
    fn name(&self) -> String;
    /// Optimal log-powers.
    fn solve(&self, problem: &GpProblem) -> Result<Vec<f64>>;
}

/// Projected gradient ascent with Armijo backtracking on the concave
/// log-domain objective over the box `x ≤ log p0`.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedGradientGp {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectedGradientGp {
    fn default() -> Self {
        ProjectedGradientGp { tol: 1e-12, max_iter: 20_000 }
    }
}

impl GpBackend for ProjectedGradientGp {
    fn name(&self) -> String {
        "projected-gradient".into()
    }

    fn solve(&self, pb: &GpProblem) -> Result<Vec<f64>> {
        let n = pb.u.len();
        let project = |x: &mut [f64]| {
            for (v, cap) in x.iter_mut().zip(&pb.log_cap) {
                *v = v.min(*cap);
            }
        };
        let mut x = pb.log_cap.clone();
        let mut obj = pb.objective(&x);
        let mut step = 1.0;
        for _ in 0..self.max_iter {
            let g = pb.gradient(&x);
            let mut accepted = false;
            for _ in 0..60 {
                let mut y: Vec<f64> = (0..n).map(|i| x[i] + step * g[i]).collect();
                project(&mut y);
                let dir: f64 = (0..n).map(|i| g[i] * (y[i] - x[i])).sum();
                let oy = pb.objective(&y);
                if oy >= obj + 1e-4 * dir {
                    let moved = (0..n).map(|i| (y[i] - x[i]).abs()).fold(0.0_f64, f64::max);
                    x = y;
                    let gain = oy - obj;
                    obj = oy;
                    accepted = true;
                    step *= 2.0;
                    if moved < self.tol || gain.abs() < self.tol * obj.abs().max(1.0) {
                        return Ok(x);
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Ok(x);
            }
        }
        Ok(x)
    }
}

/// Solves the sum-SE program through `backend`; without one the operation is
/// unavailable.
pub fn gp_solve_sumse(
    terms: &DetSinrTerms,
    p0: &[f64],
    weights: &[f64],
    sigma2: f64,
    backend: Option<&dyn GpBackend>,
) -> Result<Vec<f64>> {
    let b = backend.ok_or_else(|| Error::Unavailable("geometric-programming backend".into()))?;
    let pb = GpProblem::from_terms(terms, p0, weights, sigma2);
    Ok(b.solve(&pb)?.iter().zip(p0).map(|(x, cap)| x.exp().min(*cap)).collect())
}

/// The built-in backend, boxed.
pub fn default_gp_backend() -> Box<dyn GpBackend> {
    Box::new(ProjectedGradientGp::default())
}
