//! Deterministic equivalents for M-MMSE combining.
//!
//! Scale convention: every quantity here is in natural units of the combiner
//! bracket `Σ = Σ_e p_e ĥ_e ĥ_e^H + Σ_e p_e C_e + σ² I`, so that `T ≈ Σ^{−1}`
//! and `T'(Θ) ≈ Σ^{−1} Θ Σ^{−1}`. With the normalized bracket `Σ/M`, whose
//! columns `√(p/M)·ĥ` have covariance `R̂/M` with `R̂ = p·Ξ`, the normalized
//! equivalents are `T_norm = M·T` and `T'_norm = M²·T'`; `ξ` and `J` are
//! identical in both conventions, and the start value `1/ρ` is `M/σ²`.
//! [`DetEquilibrium::t_normalized`] and [`DetDerivative::t_prime_normalized`]
//! convert.
//!
//! The SINR terms follow the rank-one update structure of a pilot group: the
//! combiner direction `Σ_{−t}^{−1} ĥ_t` is built by absorbing the group's other
//! members one at a time into the group-free resolvent, whose equivalent is `T`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::CorrelationSet;
use crate::error::{Error, Result};
use crate::estimation::{BsEstimator, EstimationStats, PilotPlan};
use crate::linalg::{self, c, CMat, C64};
#[allow(unused_imports)]
use num_traits::Float as _;

/// Fixed-point tolerance (relative sup-norm on `ξ`).
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Inputs of the fixed point at one BS, natural units.
#[derive(Clone, Debug)]
pub struct DetSystem {
    pub bs: usize,
    /// `R̂_e = p_e Ξ_ee`.
    pub r_hat: Vec<CMat>,
    /// `Σ_e p_e C_e`.
    pub s: CMat,
    pub sigma2: f64,
}

impl DetSystem {
    pub fn new(r_hat: Vec<CMat>, s: CMat, sigma2: f64, bs: usize) -> Result<Self> {
        if r_hat.iter().any(|r| r.shape() != s.shape()) {
            return Err(Error::dim("R̂ and S disagree in size"));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::domain("noise power must be positive"));
        }
        Ok(DetSystem { bs, r_hat, s, sigma2 })
    }

    pub fn from_estimator(corr: &CorrelationSet, est: &BsEstimator, p: &[f64], sigma2: f64) -> Result<Self> {
        let m = est.antennas();
        let mut s = CMat::zeros(m, m);
        let mut r_hat = Vec::with_capacity(est.users());
        for e in 0..est.users() {
            linalg::axpy(&mut s, p[e], &est.c[e]);
            r_hat.push(est.xi(corr, e, e) * c(p[e], 0.0));
        }
        linalg::hermitize(&mut s);
        Self::new(r_hat, s, sigma2, est.bs)
    }

    pub fn antennas(&self) -> usize {
        self.s.nrows()
    }

    pub fn users(&self) -> usize {
        self.r_hat.len()
    }

    /// `(Σ_e R̂_e/(1+ξ_e) + S + σ² I)^{−1}`.
    pub fn resolvent(&self, xi: &[f64]) -> Result<CMat> {
        let mut a = self.s.clone();
        for (r, x) in self.r_hat.iter().zip(xi) {
            linalg::axpy(&mut a, 1.0 / (1.0 + x), r);
        }
        for i in 0..a.nrows() {
            a[(i, i)] += self.sigma2;
        }
        linalg::hpd_inverse(&a)
    }
}

/// Converged fixed point at one BS.
#[derive(Clone, Debug)]
pub struct DetEquilibrium {
    pub bs: usize,
    /// `T ≈ Σ^{−1}` (natural units).
    pub t: CMat,
    pub xi: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Relative sup-norm residual after every iteration.
    pub trajectory: Vec<f64>,
}

impl DetEquilibrium {
    pub fn t_normalized(&self) -> CMat {
        &self.t * c(self.t.nrows() as f64, 0.0)
    }
}

/// Iterates `ξ_e ← tr(R̂_e T(ξ))` from `ξ = M/σ²` until the relative sup-norm
/// change is at most `tol`.
pub fn theorem1_fixed_point(sys: &DetSystem, tol: f64, max_iter: usize) -> Result<DetEquilibrium> {
    let m = sys.antennas() as f64;
    let mut xi = vec![m / sys.sigma2; sys.users()];
    let mut trajectory = Vec::new();
    for it in 1..=max_iter {
        let t = sys.resolvent(&xi)?;
        let next: Vec<f64> = sys.r_hat.iter().map(|r| linalg::trace_prod_h(r, &t).re.max(0.0)).collect();
        let scale = next.iter().fold(0.0_f64, |a, &b| a.max(b));
        let res = xi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs() / b.max(1e-12 * scale).max(f64::MIN_POSITIVE))
            .fold(0.0_f64, f64::max);
        trajectory.push(res);
        xi = next;
        if res <= tol {
            let t = sys.resolvent(&xi)?;
            return Ok(DetEquilibrium { bs: sys.bs, t, xi, iterations: it, residual: res, trajectory });
        }
    }
    Err(Error::Convergence {
        what: format!("fixed point at BS {}", sys.bs),
        iterations: max_iter,
        residual: trajectory.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// The linear response of the fixed point: `J`, its spectral radius and an LU
/// factor of `I − J`.
#[derive(Clone, Debug)]
pub struct DetJacobian {
    pub j: DMatrix<f64>,
    pub spectral_radius: f64,
    /// `1/(1+ξ_e)²`.
    pub weight: Vec<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// `J_{ee'} = tr(R̂_e T R̂_{e'} T)/(1+ξ_{e'})²`.
pub fn jacobian(sys: &DetSystem, eq: &DetEquilibrium) -> Result<DetJacobian> {
    let n = sys.users();
    let y: Vec<CMat> = sys.r_hat.iter().map(|r| r * &eq.t).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for e in 0..n {
        for f in e..n {
            let v = linalg::trace_prod(&y[e], &y[f]).re.max(0.0);
            a[(e, f)] = v;
            a[(f, e)] = v;
        }
    }
    let weight: Vec<f64> = eq.xi.iter().map(|x| 1.0 / ((1.0 + x) * (1.0 + x))).collect();
    // J = A·D is similar to the symmetric D^{1/2} A D^{1/2}.
    let sym = DMatrix::from_fn(n, n, |e, f| weight[e].sqrt() * a[(e, f)] * weight[f].sqrt());
    let spectral_radius = sym.symmetric_eigenvalues().iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    if !(spectral_radius < 1.0) {
        return Err(Error::numerical(format!(
            "derivative system at BS {} has spectral radius {spectral_radius} ≥ 1",
            sys.bs
        )));
    }
    let j = DMatrix::from_fn(n, n, |e, f| a[(e, f)] * weight[f]);
    let i_minus = DMatrix::<f64>::identity(n, n) - &j;
    let lu_t = i_minus.transpose().lu();
    Ok(DetJacobian { j, spectral_radius, weight, lu: i_minus.lu(), lu_t })
}

impl DetJacobian {
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(v).ok_or_else(|| Error::numerical("I − J is singular"))
    }

    pub fn solve_transpose(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu_t.solve(g).ok_or_else(|| Error::numerical("I − J is singular"))
    }
}

/// Equivalent of `Σ^{−1} Θ Σ^{−1}` with its ingredients.
#[derive(Clone, Debug)]
pub struct DetDerivative {
    pub t_prime: CMat,
    pub xi_prime: Vec<f64>,
    pub v: Vec<f64>,
    pub spectral_radius: f64,
}

impl DetDerivative {
    pub fn t_prime_normalized(&self) -> CMat {
        let m = self.t_prime.nrows() as f64;
        &self.t_prime * c(m * m, 0.0)
    }
}

/// `T' = TΘT + T(Σ_e R̂_e ξ'_e/(1+ξ_e)²)T` with `ξ' = (I − J)^{−1} v` and
/// `v_e = tr(R̂_e TΘT)`.
pub fn theorem2_derivative(sys: &DetSystem, eq: &DetEquilibrium, jac: &DetJacobian, theta: &CMat) -> Result<DetDerivative> {
    let tt = &eq.t * theta * &eq.t;
    let v = DVector::from_iterator(sys.users(), sys.r_hat.iter().map(|r| linalg::trace_prod(r, &tt).re));
    let xp = jac.solve(&v)?;
    let mut inner = CMat::zeros(sys.antennas(), sys.antennas());
    for e in 0..sys.users() {
        linalg::axpy(&mut inner, xp[e] * jac.weight[e], &sys.r_hat[e]);
    }
    let mut t_prime = tt + &eq.t * inner * &eq.t;
    linalg::hermitize(&mut t_prime);
    Ok(DetDerivative {
        t_prime,
        xi_prime: xp.iter().copied().collect(),
        v: v.iter().copied().collect(),
        spectral_radius: jac.spectral_radius,
    })
}

/// Adjoint of `Θ ↦ tr(T'(Θ)·Ω)`: returns `Ψ` with `tr(T'(Θ)Ω) = tr(ΘΨ)` for every `Θ`.
pub fn derivative_adjoint(sys: &DetSystem, eq: &DetEquilibrium, jac: &DetJacobian, omega: &CMat) -> Result<CMat> {
    let tot = &eq.t * omega * &eq.t;
    let g = DVector::from_iterator(
        sys.users(),
        sys.r_hat.iter().zip(&jac.weight).map(|(r, w)| linalg::trace_prod(&tot, r).re * w),
    );
    let z = jac.solve_transpose(&g)?;
    let mut inner = CMat::zeros(sys.antennas(), sys.antennas());
    for e in 0..sys.users() {
        linalg::axpy(&mut inner, z[e], &sys.r_hat[e]);
    }
    let mut psi = tot + &eq.t * inner * &eq.t;
    linalg::hermitize(&mut psi);
    Ok(psi)
}

/// `tr(Ξ·A·X·B)`, the base quantity of the group recursion.
pub fn basic_f0(xi: &CMat, a: &CMat, x: &CMat, b: &CMat) -> C64 {
    linalg::trace_prod(&(xi * a), &(x * b))
}

/// Result of absorbing a pilot group into the group-free resolvent.
#[derive(Clone, Debug)]
pub struct GroupRecursion {
    /// `f[(x, y)] ≈ ĥ_x^H Q ĥ_y` after every absorbed member.
    pub f: CMat,
    /// `coef[(a, x)]`: `Q ĥ_x = Q_0 Σ_a coef[(a, x)] ĥ_a`.
    pub coef: CMat,
}

/// Absorbs the members listed in `order` (indices into the group) one at a
/// time: `f_n(x,y) = f_{n−1}(x,y) − p f_{n−1}(x,g) f_{n−1}(g,y)/(1 + p f_{n−1}(g,g))`.
/// `f0[(x, y)] = ĥ_x^H Q_0 ĥ_y` (or its equivalent) and `p[x]` are the powers.
pub fn recursive_f(f0: &CMat, p: &[f64], order: &[usize]) -> GroupRecursion {
    let n = f0.nrows();
    let mut f = f0.clone();
    let mut coef = linalg::identity(n);
    for &g in order {
        let den = 1.0 + p[g] * f[(g, g)].re;
        let row_g: Vec<C64> = (0..n).map(|y| f[(g, y)]).collect();
        let col_g: Vec<C64> = (0..n).map(|x| f[(x, g)]).collect();
        for x in 0..n {
            for y in 0..n {
                f[(x, y)] -= col_g[x] * row_g[y] * (p[g] / den);
            }
        }
        let cg = coef.column(g).into_owned();
        for x in 0..n {
            let kappa = row_g[x] * (p[g] / den);
            let mut col = coef.column_mut(x);
            col -= &cg * kappa;
        }
    }
    GroupRecursion { f, coef }
}

/// Deterministic equivalent options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Count the estimation errors of the target's own pilot group
    /// (`p_g·v^H C_g v` for the target and its pilot sharers) in the
    /// denominator. These are of the same order as the noise and
    /// non-sharing interference terms; switching them off gives the shorter
    /// form in which only non-sharing users' errors appear.
    pub group_estimation_error: bool,
}

impl Default for DetOptions {
    fn default() -> Self {
        DetOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, group_estimation_error: true }
    }
}

/// Deterministic SINR terms for every user at its serving BS, flattened
/// indices throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetSinrTerms {
    pub users_per_cell: usize,
    pub p: Vec<f64>,
    pub sigma2: f64,
    /// `δ_u`, desired-signal term.
    pub delta: Vec<f64>,
    /// `|δ_{u,e}|` for pilot sharers `e` (zero elsewhere), row `u`.
    pub delta_coh: Vec<Vec<f64>>,
    /// `μ_{u,e}` for users `e` off the pilot of `u` (zero elsewhere), row `u`.
    pub mu: Vec<Vec<f64>>,
    /// Own-group estimation-error terms `tr(Ψ_u C_g)` for `g` on the pilot of
    /// `u` (including `u`); included in `F` only when enabled in the options.
    pub group_error: Vec<Vec<f64>>,
    pub group_error_included: bool,
    /// `δ''_u`, combiner-norm term.
    pub delta_pp: Vec<f64>,
    pub sinr: Vec<f64>,
    /// `F[u][v]`: interference that user `v` causes to user `u` per unit power.
    pub f: Vec<Vec<f64>>,
    /// Diagonal of `U`.
    pub u: Vec<f64>,
    /// Largest spectral radius of `J` across BSs.
    pub max_spectral_radius: f64,
    /// Fixed-point iterations per BS.
    pub iterations: Vec<usize>,
}

impl DetSinrTerms {
    pub fn users(&self) -> usize {
        self.delta.len()
    }

    /// Uplink SINRs `p_u U_uu/(Σ_v F_uv p_v + σ²)` under frozen `F`, `U`.
    pub fn sinr_with(&self, p: &[f64], sigma2: f64) -> Vec<f64> {
        (0..self.users())
            .map(|u| {
                let i: f64 = self.f[u].iter().zip(p).map(|(f, q)| f * q).sum();
                p[u] * self.u[u] / (i + sigma2)
            })
            .collect()
    }

    /// Downlink SINRs `ρ_u U_uu/(Σ_v F_vu ρ_v + σ²)` for duality precoding.
    pub fn downlink_sinr_with(&self, rho: &[f64], sigma2: f64) -> Vec<f64> {
        (0..self.users())
            .map(|u| {
                let i: f64 = (0..self.users()).map(|v| self.f[v][u] * rho[v]).sum();
                rho[u] * self.u[u] / (i + sigma2)
            })
            .collect()
    }

    pub fn f_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.users(), self.users(), |a, b| self.f[a][b])
    }

    pub fn u_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.u))
    }

    /// `B = F + U`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.f_matrix() + self.u_matrix()
    }

    /// `diag(SINR)` at the powers the terms were computed for.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.sinr))
    }
}

/// All statistics needed at one BS.
struct BsContext<'a> {
    corr: &'a CorrelationSet,
    est: &'a BsEstimator,
    sys: DetSystem,
    eq: DetEquilibrium,
    jac: DetJacobian,
}

impl BsContext<'_> {
    /// `f0[(x,y)] = tr(T Ξ_{y,x})` over a group.
    fn f0(&self, group: &[usize]) -> CMat {
        let n = group.len();
        let mut f = CMat::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = linalg::trace_prod(&self.eq.t, &self.est.xi(self.corr, group[b], group[a]));
                f[(a, b)] = v;
                f[(b, a)] = v.conj();
            }
            f[(a, a)] = c(f[(a, a)].re, 0.0);
        }
        f
    }

    /// Covariance `τ B ψ^{−1} B^H` of `Σ_a w_a ĥ_a` for users `group` on one pilot.
    fn combination_cov(&self, group: &[usize], w: &[C64]) -> CMat {
        let m = self.est.antennas();
        let r = &self.corr.r[self.est.bs];
        let mut b = CMat::zeros(m, m);
        for (&g, &wg) in group.iter().zip(w) {
            b += &r[g] * (wg * self.est.p_hat[g].sqrt());
        }
        let t = self.est.pilot[group[0]];
        let x = self.est.psi_solve(t, &b.adjoint());
        let mut omega = (&b * x) * c(self.est.tau_p as f64, 0.0);
        linalg::hermitize(&mut omega);
        omega
    }
}

/// Deterministic SINR of every user at its serving BS for M-MMSE combining.
pub fn deterministic_sinr(
    corr: &CorrelationSet,
    stats: &EstimationStats,
    plan: &PilotPlan,
    p: &[f64],
    sigma2: f64,
    opts: &DetOptions,
) -> Result<DetSinrTerms> {
    let lk = plan.users();
    let kk = plan.users_per_cell;
    if p.len() != lk || corr.users() != lk || stats.per_bs.len() != corr.cells() {
        return Err(Error::dim("deterministic SINR inputs disagree"));
    }
    let groups = plan.groups();
    let mut out = DetSinrTerms {
        users_per_cell: kk,
        p: p.to_vec(),
        sigma2,
        delta: vec![0.0; lk],
        delta_coh: vec![vec![0.0; lk]; lk],
        mu: vec![vec![0.0; lk]; lk],
        group_error: vec![vec![0.0; lk]; lk],
        group_error_included: opts.group_estimation_error,
        delta_pp: vec![0.0; lk],
        sinr: vec![0.0; lk],
        f: vec![vec![0.0; lk]; lk],
        u: vec![0.0; lk],
        max_spectral_radius: 0.0,
        iterations: Vec::with_capacity(corr.cells()),
    };
    for j in 0..corr.cells() {
        let est = &stats.per_bs[j];
        let sys = DetSystem::from_estimator(corr, est, p, sigma2)?;
        let eq = theorem1_fixed_point(&sys, opts.tol, opts.max_iter)?;
        let jac = jacobian(&sys, &eq)?;
        out.max_spectral_radius = out.max_spectral_radius.max(jac.spectral_radius);
        out.iterations.push(eq.iterations);
        let ctx = BsContext { corr, est, sys, eq, jac };

        let f0s: Vec<CMat> = groups.iter().map(|g| if g.is_empty() { CMat::zeros(0, 0) } else { ctx.f0(g) }).collect();
        // Interference covariance of each user once its own pilot group is
        // removed from the resolvent, plus its estimation error.
        let mut interf = Vec::with_capacity(lk);
        for e in 0..lk {
            let grp = &groups[plan.pilot[e]];
            let pos = grp.iter().position(|&x| x == e).unwrap_or(0);
            let pg: Vec<f64> = grp.iter().map(|&g| p[g]).collect();
            let n = grp.len();
            let mut sys_m = linalg::identity(n);
            for a in 0..n {
                for b in 0..n {
                    sys_m[(a, b)] += f0s[plan.pilot[e]][(a, b)] * pg[a];
                }
            }
            let mut rhs = nalgebra::DVector::<C64>::zeros(n);
            rhs[pos] = linalg::ONE;
            let d = linalg::solve_complex(&sys_m, &rhs)?;
            let w: Vec<C64> = d.iter().copied().collect();
            let mut k = ctx.combination_cov(grp, &w);
            k += &est.c[e];
            interf.push(k);
        }

        for tgt in j * kk..(j + 1) * kk {
            let grp = &groups[plan.pilot[tgt]];
            let pos = grp.iter().position(|&x| x == tgt).unwrap_or(0);
            let pg: Vec<f64> = grp.iter().map(|&g| p[g]).collect();
            let order: Vec<usize> = (0..grp.len()).filter(|&a| a != pos).collect();
            let rec = recursive_f(&f0s[plan.pilot[tgt]], &pg, &order);
            let delta = rec.f[(pos, pos)].re;
            let w: Vec<C64> = rec.coef.column(pos).iter().copied().collect();
            let omega = ctx.combination_cov(grp, &w);
            let psi = derivative_adjoint(&ctx.sys, &ctx.eq, &ctx.jac, &omega)?;
            let dpp = linalg::trace(&psi).re;
            if !(delta > 0.0 && dpp > 0.0) {
                return Err(Error::numerical(format!("degenerate deterministic terms for user {tgt}")));
            }
            out.delta[tgt] = delta;
            out.delta_pp[tgt] = dpp;
            for (a, &g) in grp.iter().enumerate() {
                out.group_error[tgt][g] = linalg::trace_prod_h(&psi, &est.c[g]).re.max(0.0);
                if g != tgt {
                    out.delta_coh[tgt][g] = rec.f[(pos, a)].norm();
                }
            }
            for e in 0..lk {
                if plan.pilot[e] != plan.pilot[tgt] {
                    out.mu[tgt][e] = linalg::trace_prod_h(&psi, &interf[e]).re.max(0.0);
                }
            }
        }
    }
    for u in 0..lk {
        let dpp = out.delta_pp[u];
        out.u[u] = out.delta[u] * out.delta[u] / dpp;
        for v in 0..lk {
            let mut f = if plan.pilot[v] == plan.pilot[u] {
                if v == u {
                    0.0
                } else {
                    out.delta_coh[u][v] * out.delta_coh[u][v]
                }
            } else {
                out.mu[u][v]
            };
            if opts.group_estimation_error {
                f += out.group_error[u][v];
            }
            out.f[u][v] = f / dpp;
        }
    }
    out.sinr = out.sinr_with(p, sigma2);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVec};
    use crate::rng::{complex_gaussian, stream, Domain};

    #[test]
    fn recursion_matches_sherman_morrison() {
        let m = 5;
        let mut rng = stream(4, Domain::Search, 0, 0, 0);
        let h: Vec<CVec> = (0..4).map(|_| CVec::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
        let x = CMat::from_fn(m, m, |_, _| complex_gaussian(&mut rng, 1.0));
        let q0_inv = &x * x.adjoint() + linalg::identity(m);
        let q0 = linalg::hpd_inverse(&q0_inv).unwrap();
        let p = [0.7, 1.3, 0.4, 2.0];
        let f0 = CMat::from_fn(4, 4, |a, b| h[a].dotc(&(&q0 * &h[b])));
        let order = [2usize, 0, 3];
        let rec = recursive_f(&f0, &p, &order);
        let mut qn_inv = q0_inv.clone();
        for &g in &order {
            qn_inv += &h[g] * h[g].adjoint() * c(p[g], 0.0);
        }
        let qn = linalg::hpd_inverse(&qn_inv).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = h[a].dotc(&(&qn * &h[b]));
                assert!((rec.f[(a, b)] - want).norm() < 1e-10 * (1.0 + want.norm()));
            }
            let lhs = &qn * &h[a];
            let mut rhs = CVec::zeros(m);
            for (b, hb) in h.iter().enumerate() {
                rhs += &q0 * hb * rec.coef[(b, a)];
            }
            assert!((lhs - rhs).norm() < 1e-10);
        }
        let other = recursive_f(&f0, &p, &[3, 2, 0]);
        assert!((other.f[(1, 1)] - rec.f[(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn quadratic_oracle_for_identity_correlations() {
        let (m, lk, s2) = (32usize, 24usize, 0.5);
        let sys = DetSystem::new(vec![linalg::identity(m); lk], CMat::zeros(m, m), s2, 0).unwrap();
        let eq = theorem1_fixed_point(&sys, 1e-12, 5000).unwrap();
        let rho = s2 / m as f64;
        let cp = lk as f64 / m as f64;
        let b = rho + cp - 1.0;
        let root = (-b + (b * b + 4.0 * rho).sqrt()) / (2.0 * rho);
        for &x in &eq.xi {
            assert!((x - root).abs() < 1e-9 * root, "{x} vs {root}");
        }
    }

    #[test]
    fn noise_dominated_limit() {
        let m = 8;
        let r = crate::channel::exponential_matrix(1.0, 0.2, 0.5, m).unwrap();
        let s2 = 1e8;
        let sys = DetSystem::new(vec![r.clone(), r], CMat::zeros(m, m), s2, 0).unwrap();
        let eq = theorem1_fixed_point(&sys, 1e-12, 100).unwrap();
        assert!(linalg::frobenius(&(&eq.t - linalg::scaled_identity(m, 1.0 / s2))) < 1e-6 / s2);
    }

    #[test]
    fn derivative_of_zero_and_scalar_case() {
        let (beta, s2) = (2.0, 0.5);
        let sys = DetSystem::new(vec![CMat::from_element(1, 1, c(beta, 0.0))], CMat::zeros(1, 1), s2, 0).unwrap();
        let eq = theorem1_fixed_point(&sys, 1e-14, 1000).unwrap();
        let jac = jacobian(&sys, &eq).unwrap();
        let zero = theorem2_derivative(&sys, &eq, &jac, &CMat::zeros(1, 1)).unwrap();
        assert_eq!(zero.t_prime[(0, 0)], c(0.0, 0.0));
        let d = theorem2_derivative(&sys, &eq, &jac, &linalg::identity(1)).unwrap();
        let t = eq.t[(0, 0)].re;
        let jj = beta * t * beta * t / (1.0 + eq.xi[0]).powi(2);
        let want = t * t / (1.0 - jj);
        assert!((d.t_prime[(0, 0)].re - want).abs() < 1e-12 * want);
    }

    #[test]
    fn adjoint_identity() {
        let m = 6;
        let mk = |phi: f64, r: f64| crate::channel::exponential_matrix(1.0, phi, r, m).unwrap();
        let sys = DetSystem::new(vec![mk(0.1, 0.6), mk(1.0, 0.3), mk(2.0, 0.8)], mk(0.5, 0.2) * c(0.1, 0.0), 0.3, 0).unwrap();
        let eq = theorem1_fixed_point(&sys, 1e-13, 1000).unwrap();
        let jac = jacobian(&sys, &eq).unwrap();
        let omega = mk(0.7, 0.5);
        let theta = mk(-0.4, 0.9) + linalg::identity(m);
        let psi = derivative_adjoint(&sys, &eq, &jac, &omega).unwrap();
        let d = theorem2_derivative(&sys, &eq, &jac, &theta).unwrap();
        let lhs = linalg::trace_prod(&d.t_prime, &omega);
        let rhs = linalg::trace_prod(&theta, &psi);
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
    }

    #[test]
    fn basic_f0_identity_arguments() {
        let xi = crate::channel::exponential_matrix(2.0, 0.3, 0.5, 4).unwrap();
        let i = linalg::identity(4);
        assert!((basic_f0(&xi, &i, &i, &i) - linalg::trace(&xi)).norm() < 1e-14);
        assert_eq!(basic_f0(&CMat::zeros(4, 4), &i, &xi, &i), c(0.0, 0.0));
    }
}
