//! Orthogonal pilot book, pilot plans with their sharing sets, and per-BS
//! MMSE channel estimation of every user in the network.
//!
//! The correlator output for pilot `t` is normalized as `ȳ_t = Y·φ_t/√τ_p`,
//! so that `cov(ȳ_t) = ψ_t` and `ĥ_e = √(τ_p p̂_e)·R_e ψ_t^{−1} ȳ_t` has
//! covariance `Ξ_ee = τ_p p̂_e R_e ψ_t^{−1} R_e`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelBatch, ChannelRealization, CorrelationSet};
use crate::error::{Error, Result};
use crate::linalg::{self, cis, CMat, CVec, Hpd};
use crate::rng::complex_gaussian_matrix;
#[allow(unused_imports)]
use num_traits::Float as _;

/// `τ_p` mutually orthogonal pilots stored as the columns of a scaled DFT matrix.
#[derive(Clone, Debug)]
pub struct PilotBook {
    pub phi: CMat,
}

impl PilotBook {
    pub fn tau_p(&self) -> usize {
        self.phi.ncols()
    }
}

/// Pilot book with entry `(a, b) = exp(i·2π·ab/τ_p)`.
pub fn build_pilot_book(tau_p: usize) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(Error::Config("tau_p must be at least 1".into()));
    }
    let t = tau_p as f64;
    let phi = CMat::from_fn(tau_p, tau_p, |a, b| cis(2.0 * PI * ((a * b) % tau_p) as f64 / t));
    Ok(PilotBook { phi })
}

/// Pilot index of every user (flattened index `e = l·K + k`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub users_per_cell: usize,
    pub tau_p: usize,
    pub pilot: Vec<usize>,
}

impl PilotPlan {
    pub fn new(pilot: Vec<usize>, tau_p: usize, users_per_cell: usize) -> Result<Self> {
        if users_per_cell == 0 || pilot.len() % users_per_cell != 0 {
            return Err(Error::dim(format!("{} users not divisible by K = {users_per_cell}", pilot.len())));
        }
        if let Some(&t) = pilot.iter().find(|&&t| t >= tau_p) {
            return Err(Error::Config(format!("pilot index {t} outside book of size {tau_p}")));
        }
        Ok(PilotPlan { users_per_cell, tau_p, pilot })
    }

    /// Every user on its own pilot.
    pub fn orthogonal(cells: usize, users_per_cell: usize) -> Self {
        let lk = cells * users_per_cell;
        PilotPlan { users_per_cell, tau_p: lk, pilot: (0..lk).collect() }
    }

    /// User `k` of every cell on pilot `k mod τ_p`.
    pub fn reuse_by_index(cells: usize, users_per_cell: usize, tau_p: usize) -> Self {
        let pilot = (0..cells * users_per_cell).map(|e| (e % users_per_cell) % tau_p).collect();
        PilotPlan { users_per_cell, tau_p, pilot }
    }

    pub fn users(&self) -> usize {
        self.pilot.len()
    }

    pub fn cells(&self) -> usize {
        self.pilot.len() / self.users_per_cell
    }

    /// Users on pilot `t`, ascending.
    pub fn group(&self, t: usize) -> Vec<usize> {
        (0..self.users()).filter(|&e| self.pilot[e] == t).collect()
    }

    /// All pilot groups, indexed by pilot.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = alloc::vec![Vec::new(); self.tau_p];
        for (e, &t) in self.pilot.iter().enumerate() {
            g[t].push(e);
        }
        g
    }

    /// Users sharing the pilot of `e`, excluding `e`.
    pub fn sharing(&self, e: usize) -> Vec<usize> {
        let t = self.pilot[e];
        (0..self.users()).filter(|&x| x != e && self.pilot[x] == t).collect()
    }

    /// Users sharing the pilot of `e`, including `e`.
    pub fn sharing_with_self(&self, e: usize) -> Vec<usize> {
        self.group(self.pilot[e])
    }

    pub fn shares(&self, a: usize, b: usize) -> bool {
        self.pilot[a] == self.pilot[b]
    }
}

/// Received pilot matrices `Y_j = Σ √p̂_e h_e^j φ_{t_e}^H + N_j`, one `M × τ_p`
/// matrix per BS.
pub fn received_pilot_signal<R: rand::Rng + ?Sized>(
    plan: &PilotPlan,
    book: &PilotBook,
    p_hat: &[f64],
    channels: &ChannelRealization,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<CMat>> {
    if book.tau_p() != plan.tau_p || p_hat.len() != plan.users() {
        return Err(Error::dim("pilot book, plan and powers disagree"));
    }
    let mut out = Vec::with_capacity(channels.h.len());
    for hj in &channels.h {
        let m = hj.first().map_or(0, |h| h.len());
        let mut y = complex_gaussian_matrix(rng, m, plan.tau_p, sigma2);
        for (e, h) in hj.iter().enumerate() {
            let phi = book.phi.column(plan.pilot[e]);
            y += h * phi.adjoint() * linalg::c(p_hat[e].sqrt(), 0.0);
        }
        out.push(y);
    }
    Ok(out)
}

/// Normalized correlator outputs `ȳ_t = Y·φ_t/√τ_p` for every pilot.
pub fn correlate_pilots(y: &CMat, book: &PilotBook) -> Vec<CVec> {
    let s = 1.0 / (book.tau_p() as f64).sqrt();
    (0..book.tau_p()).map(|t| (y * book.phi.column(t)) * linalg::c(s, 0.0)).collect()
}

/// Statistics-only MMSE estimator for one BS: `ψ` per pilot, `R ψ^{−1}` and
/// the error covariance `C` per user.
#[derive(Clone, Debug)]
pub struct BsEstimator {
    pub bs: usize,
    pub tau_p: usize,
    pub pilot: Vec<usize>,
    pub p_hat: Vec<f64>,
    /// `ψ_t` for every pilot.
    pub psi: Vec<CMat>,
    /// `R_e ψ_{t_e}^{−1}`.
    pub r_psi_inv: Vec<CMat>,
    /// `C_e = R_e − Ξ_ee`.
    pub c: Vec<CMat>,
    psi_chol: Vec<Hpd>,
}

impl BsEstimator {
    pub fn new(corr: &CorrelationSet, bs: usize, plan: &PilotPlan, p_hat: &[f64], sigma2: f64) -> Result<Self> {
        let lk = corr.users();
        if plan.users() != lk || p_hat.len() != lk {
            return Err(Error::dim(format!(
                "plan has {} users, powers {}, correlation set {lk}",
                plan.users(),
                p_hat.len()
            )));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::domain("uplink noise power must be positive"));
        }
        let m = corr.antennas;
        let tau = plan.tau_p as f64;
        let r = &corr.r[bs];
        let mut psi = Vec::with_capacity(plan.tau_p);
        let mut psi_chol = Vec::with_capacity(plan.tau_p);
        for group in plan.groups() {
            let mut s = linalg::scaled_identity(m, sigma2);
            for &g in &group {
                linalg::axpy(&mut s, tau * p_hat[g], &r[g]);
            }
            linalg::hermitize(&mut s);
            psi_chol.push(Hpd::new(s.clone())?);
            psi.push(s);
        }
        let mut r_psi_inv = Vec::with_capacity(lk);
        let mut c = Vec::with_capacity(lk);
        for e in 0..lk {
            let t = plan.pilot[e];
            let a = psi_chol[t].solve(&r[e]).adjoint();
            let mut ce = &r[e] - (&a * &r[e]) * linalg::c(tau * p_hat[e], 0.0);
            linalg::hermitize(&mut ce);
            r_psi_inv.push(a);
            c.push(ce);
        }
        Ok(BsEstimator {
            bs,
            tau_p: plan.tau_p,
            pilot: plan.pilot.clone(),
            p_hat: p_hat.to_vec(),
            psi,
            r_psi_inv,
            c,
            psi_chol,
        })
    }

    pub fn users(&self) -> usize {
        self.pilot.len()
    }

    pub fn antennas(&self) -> usize {
        self.psi.first().map_or(0, |p| p.nrows())
    }

    /// `ψ_t^{−1}·X`.
    pub fn psi_solve(&self, t: usize, x: &CMat) -> CMat {
        self.psi_chol[t].solve(x)
    }

    /// Estimate scaling `√(τ_p p̂_e)`.
    pub fn gain(&self, e: usize) -> f64 {
        (self.tau_p as f64 * self.p_hat[e]).sqrt()
    }

    /// Cross-covariance `Ξ_{a,b} = E[ĥ_a ĥ_b^H]`; zero when `a` and `b` use different pilots.
    pub fn xi(&self, corr: &CorrelationSet, a: usize, b: usize) -> CMat {
        let m = self.antennas();
        if self.pilot[a] != self.pilot[b] {
            return CMat::zeros(m, m);
        }
        let s = self.tau_p as f64 * (self.p_hat[a] * self.p_hat[b]).sqrt();
        let mut x = (&self.r_psi_inv[a] * &corr.r[self.bs][b]) * linalg::c(s, 0.0);
        if a == b {
            linalg::hermitize(&mut x);
        }
        x
    }

    /// Alignment map `Υ = √(p̂_other/p̂_target)·R_other·R_target^+` with the
    /// pseudo-inverse taken on eigenvalues above `1e−10·λ_max`. Returns the map
    /// and the numerical rank of `R_target`.
    pub fn upsilon(&self, corr: &CorrelationSet, target: usize, other: usize) -> (CMat, usize) {
        let r = &corr.r[self.bs];
        let (pinv, rank) = linalg::pinv_psd(&r[target], 1e-10);
        let s = (self.p_hat[other] / self.p_hat[target]).sqrt();
        ((&r[other] * pinv) * linalg::c(s, 0.0), rank)
    }

    /// Estimates of all users from the normalized correlator outputs `ȳ_t`.
    pub fn estimate(&self, ybar: &[CVec]) -> Vec<CVec> {
        (0..self.users())
            .map(|e| (&self.r_psi_inv[e] * &ybar[self.pilot[e]]) * linalg::c(self.gain(e), 0.0))
            .collect()
    }

    /// Estimates of all users from the raw `M × τ_p` pilot matrix.
    pub fn estimate_from_pilots(&self, y: &CMat, book: &PilotBook) -> Vec<CVec> {
        self.estimate(&correlate_pilots(y, book))
    }

    /// Batched estimates: `ybar[t]` is `M × B`; returns one `M × B` matrix per user.
    pub fn estimate_batch(&self, ybar: &[CMat]) -> Vec<CMat> {
        (0..self.users())
            .map(|e| (&self.r_psi_inv[e] * &ybar[self.pilot[e]]) * linalg::c(self.gain(e), 0.0))
            .collect()
    }
}

/// Estimators for every BS of the network.
#[derive(Clone, Debug)]
pub struct EstimationStats {
    pub per_bs: Vec<BsEstimator>,
}

impl EstimationStats {
    pub fn new(corr: &CorrelationSet, plan: &PilotPlan, p_hat: &[f64], sigma2: f64) -> Result<Self> {
        let per_bs = (0..corr.cells())
            .map(|j| BsEstimator::new(corr, j, plan, p_hat, sigma2))
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimationStats { per_bs })
    }
}

/// Estimates of one block at one BS, with the statistics that produced them.
#[derive(Clone, Debug)]
pub struct EstimationResult {
    pub bs: usize,
    pub h_hat: Vec<CVec>,
}

/// MMSE estimates at BS `j` from its received pilot matrix.
pub fn mmse_estimate(y: &CMat, book: &PilotBook, est: &BsEstimator) -> Result<EstimationResult> {
    if y.ncols() != book.tau_p() || book.tau_p() != est.tau_p || y.nrows() != est.antennas() {
        return Err(Error::dim("pilot matrix does not match estimator"));
    }
    Ok(EstimationResult { bs: est.bs, h_hat: est.estimate_from_pilots(y, book) })
}

/// Normalized correlator outputs for a batch of blocks at BS `j`:
/// `ȳ_t = √τ_p Σ_{e on t} √p̂_e H_e + W_t`, where `noise[t]` holds `W_t ~ CN(0, σ²)`.
pub fn pilot_batch(batch: &ChannelBatch, j: usize, plan: &PilotPlan, p_hat: &[f64], noise: &[CMat]) -> Vec<CMat> {
    let tau = plan.tau_p as f64;
    let mut out: Vec<CMat> = noise.iter().take(plan.tau_p).cloned().collect();
    for (e, h) in batch.h[j].iter().enumerate() {
        linalg::axpy(&mut out[plan.pilot[e]], (tau * p_hat[e]).sqrt(), h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frobenius};

    #[test]
    fn pilot_books_are_orthogonal() {
        assert_eq!(build_pilot_book(1).unwrap().phi[(0, 0)], c(1.0, 0.0));
        for tau in 1..=64 {
            let b = build_pilot_book(tau).unwrap();
            let g = b.phi.adjoint() * &b.phi;
            for i in 0..tau {
                for k in 0..tau {
                    let want = if i == k { tau as f64 } else { 0.0 };
                    assert!((g[(i, k)] - c(want, 0.0)).norm() <= 1e-10, "tau {tau}");
                }
            }
        }
        assert!(build_pilot_book(0).is_err());
    }

    #[test]
    fn sharing_sets() {
        let plan = PilotPlan::new(alloc::vec![0, 1, 0, 2, 1, 0], 3, 2).unwrap();
        assert_eq!(plan.sharing(0), alloc::vec![2, 5]);
        assert_eq!(plan.sharing_with_self(2), alloc::vec![0, 2, 5]);
        assert_eq!(plan.sharing(3), Vec::<usize>::new());
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(plan.shares(a, b), plan.shares(b, a));
                assert_eq!(plan.sharing(a).contains(&b), a != b && plan.pilot[a] == plan.pilot[b]);
            }
        }
        assert!(PilotPlan::new(alloc::vec![0, 3], 3, 1).is_err());
    }

    #[test]
    fn scalar_wiener_filter() {
        let (beta, p, s2, tau) = (2.0, 0.5, 0.3, 1usize);
        let corr = CorrelationSet::from_matrices(alloc::vec![alloc::vec![linalg::scaled_identity(3, beta)]], 1).unwrap();
        let plan = PilotPlan::orthogonal(1, 1);
        let est = BsEstimator::new(&corr, 0, &plan, &[p], s2).unwrap();
        let t = tau as f64;
        let var = t * p * beta * beta / (t * p * beta + s2);
        let xi = est.xi(&corr, 0, 0);
        assert!(frobenius(&(xi - linalg::scaled_identity(3, var))) < 1e-14);
        let h = CVec::from_element(3, c(1.0, -0.5));
        let ybar = alloc::vec![&h * c((t * p).sqrt(), 0.0)];
        let hh = est.estimate(&ybar);
        let w = t * p * beta / (t * p * beta + s2);
        assert!((&hh[0] - &h * c(w, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn noiseless_limit_recovers_channel() {
        let r = crate::channel::exponential_matrix(1.0, 0.4, 0.6, 6).unwrap();
        let corr = CorrelationSet::from_matrices(alloc::vec![alloc::vec![r]], 1).unwrap();
        let plan = PilotPlan::orthogonal(1, 1);
        let est = BsEstimator::new(&corr, 0, &plan, &[1.0], 1e-13).unwrap();
        let h = CVec::from_fn(6, |n, _| c(n as f64 * 0.1 - 0.2, 0.3));
        let book = build_pilot_book(1).unwrap();
        let y = &h * book.phi.column(0).adjoint();
        let hh = est.estimate_from_pilots(&y, &book);
        assert!((&hh[0] - &h).norm() < 1e-9 * h.norm());
    }

    #[test]
    fn superposition_of_shared_pilot() {
        let book = build_pilot_book(4).unwrap();
        let plan = PilotPlan::new(alloc::vec![2, 2], 4, 1).unwrap();
        let h1 = CVec::from_fn(3, |n, _| c(1.0 + n as f64, 0.5));
        let h2 = CVec::from_fn(3, |n, _| c(-0.3, n as f64));
        let ch = ChannelRealization { h: alloc::vec![alloc::vec![h1.clone(), h2.clone()]] };
        let mut rng = crate::rng::stream(0, crate::rng::Domain::PilotNoise, 0, 0, 0);
        let y = received_pilot_signal(&plan, &book, &[0.5, 2.0], &ch, 1e-300, &mut rng).unwrap();
        let got = &y[0] * book.phi.column(2) / c(4.0, 0.0);
        let want = &h1 * c(0.5f64.sqrt(), 0.0) + &h2 * c(2.0f64.sqrt(), 0.0);
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn estimate_plus_error_is_correlation() {
        let m = 8;
        let r0 = crate::channel::gaussian_scattering_matrix(1.0, 0.3, 0.35, m, 50).unwrap();
        let r1 = crate::channel::gaussian_scattering_matrix(0.2, 1.3, 0.35, m, 50).unwrap();
        let corr = CorrelationSet::from_matrices(alloc::vec![alloc::vec![r0.clone(), r1]], 1).unwrap();
        let plan = PilotPlan::new(alloc::vec![0, 0], 1, 1).unwrap();
        let est = BsEstimator::new(&corr, 0, &plan, &[1.0, 0.7], 0.01).unwrap();
        let sum = est.xi(&corr, 0, 0) + &est.c[0];
        assert!(frobenius(&(sum - r0)) < 1e-10);
        let x01 = est.xi(&corr, 0, 1);
        let x10 = est.xi(&corr, 1, 0);
        assert!(frobenius(&(x01 - x10.adjoint())) < 1e-12);
    }
}
