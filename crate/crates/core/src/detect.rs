//! Uplink combiners, the generalized Rayleigh-quotient SINR, spectral
//! efficiency, and duality-based downlink precoding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, Hpd};
#[allow(unused_imports)]
use num_traits::Float as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombinerKind {
    Mf,
    Smmse,
    Pmmse { gamma: f64 },
    Mmmse,
}

impl CombinerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CombinerKind::Pmmse { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(Error::Config(format!("P-MMSE threshold {gamma} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CombinerKind::Mf => "MF",
            CombinerKind::Smmse => "S-MMSE",
            CombinerKind::Pmmse { .. } => "P-MMSE",
            CombinerKind::Mmmse => "M-MMSE",
        }
    }
}

/// Users whose gain to BS `j` is at least `gamma` times the weakest own-cell
/// gain. `beta_j[e]` is the gain of user `e` to BS `j`; the result is ascending
/// and always contains BS `j`'s own users.
pub fn user_subset(beta_j: &[f64], users_per_cell: usize, j: usize, gamma: f64) -> Vec<usize> {
    let own = j * users_per_cell..(j + 1) * users_per_cell;
    let weakest = beta_j[own.clone()].iter().copied().fold(f64::INFINITY, f64::min);
    let thr = gamma * weakest;
    (0..beta_j.len()).filter(|e| own.contains(e) || beta_j[*e] >= thr).collect()
}

/// `Σ_{e∈members} p_e (ĥ_e ĥ_e^H + C_e) + extra + σ² I`.
fn bracket(h_hat: &[CVec], c_set: &[CMat], p: &[f64], sigma2: f64, members: &[usize], extra: Option<&CMat>) -> CMat {
    let m = h_hat[0].len();
    let mut a = linalg::scaled_identity(m, sigma2);
    for &e in members {
        a.gerc(c(p[e], 0.0), &h_hat[e], &h_hat[e], c(1.0, 0.0));
        linalg::axpy(&mut a, p[e], &c_set[e]);
    }
    if let Some(x) = extra {
        a += x;
    }
    linalg::hermitize(&mut a);
    a
}

fn solve_targets(a: CMat, h_hat: &[CVec], targets: &[usize]) -> Result<Vec<CVec>> {
    let chol = Hpd::new(a)?;
    Ok(targets.iter().map(|&e| chol.solve_vec(&h_hat[e])).collect())
}

pub fn mf_combiner(h_hat: &[CVec], targets: &[usize]) -> Vec<CVec> {
    targets.iter().map(|&e| h_hat[e].clone()).collect()
}

/// Multi-cell MMSE combiners for `targets` from all network estimates at one BS.
pub fn mmmse_combiner(h_hat: &[CVec], c_set: &[CMat], p: &[f64], sigma2: f64, targets: &[usize]) -> Result<Vec<CVec>> {
    let all: Vec<usize> = (0..h_hat.len()).collect();
    solve_targets(bracket(h_hat, c_set, p, sigma2, &all, None), h_hat, targets)
}

/// Single-cell MMSE combiners for the users of cell `j`; other cells enter
/// only through `p·R`.
pub fn smmse_combiner(
    h_hat: &[CVec],
    c_set: &[CMat],
    r: &[CMat],
    p: &[f64],
    sigma2: f64,
    j: usize,
    users_per_cell: usize,
) -> Result<Vec<CVec>> {
    let own: Vec<usize> = (j * users_per_cell..(j + 1) * users_per_cell).collect();
    let mut other = CMat::zeros(h_hat[0].len(), h_hat[0].len());
    for e in (0..h_hat.len()).filter(|e| !own.contains(e)) {
        linalg::axpy(&mut other, p[e], &r[e]);
    }
    solve_targets(bracket(h_hat, c_set, p, sigma2, &own, Some(&other)), h_hat, &own)
}

/// Partial MMSE combiners restricted to the user subset `subset`.
pub fn pmmse_combiner(
    h_hat: &[CVec],
    c_set: &[CMat],
    p: &[f64],
    sigma2: f64,
    subset: &[usize],
    targets: &[usize],
) -> Result<Vec<CVec>> {
    solve_targets(bracket(h_hat, c_set, p, sigma2, subset, None), h_hat, targets)
}

/// Effective SINR of `target` with combiner `v`, treating every other user's
/// estimate and every estimation error as interference.
pub fn instantaneous_sinr(v: &CVec, h_hat: &[CVec], c_set: &[CMat], p: &[f64], sigma2: f64, target: usize) -> f64 {
    if v.norm_squared() == 0.0 {
        return 0.0;
    }
    let num = p[target] * v.dotc(&h_hat[target]).norm_sqr();
    let mut den = sigma2 * v.norm_squared();
    for e in 0..h_hat.len() {
        den += p[e] * linalg::quad_form(v, &c_set[e], v).re;
        if e != target {
            den += p[e] * v.dotc(&h_hat[e]).norm_sqr();
        }
    }
    num / den
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::domain("no samples"));
        }
        let n = x.len() as f64;
        let mean = pairwise_sum(x) / n;
        let var = if x.len() > 1 {
            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(MeanEstimate { mean, std_err: (var / n).sqrt(), samples: x.len() })
    }
}

/// Pairwise summation; the result depends only on the order of `x`.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Uplink SE in bit/s/Hz: `(1 − (τ_p+τ_d)/τ_c)·mean(log2(1+SINR))`.
pub fn uplink_se(sinr: &[f64], tau_c: usize, tau_p: usize, tau_d: usize) -> Result<MeanEstimate> {
    let pre = prelog(tau_c, tau_p + tau_d)?;
    let mut est = MeanEstimate::from_samples(&sinr.iter().map(|s| (1.0 + s).log2()).collect::<Vec<_>>())?;
    est.mean *= pre;
    est.std_err *= pre;
    Ok(est)
}

/// `1 − overhead/τ_c`.
pub fn prelog(tau_c: usize, overhead: usize) -> Result<f64> {
    if tau_c == 0 || overhead > tau_c {
        return Err(Error::domain(format!("overhead {overhead} exceeds coherence block {tau_c}")));
    }
    Ok(1.0 - overhead as f64 / tau_c as f64)
}

/// `w = v/√E{‖v‖²}`.
pub fn duality_precoder(v: &CVec, mean_sq_norm: f64) -> Result<CVec> {
    if !(mean_sq_norm > 0.0) {
        return Err(Error::domain("zero-norm combiner"));
    }
    Ok(v / c(mean_sq_norm.sqrt(), 0.0))
}

/// Per-BS combiner evaluation on whole coherence blocks. Statistics-only
/// parts of the brackets are precomputed once per drop.
#[derive(Clone, Debug)]
pub struct BsDetector {
    pub bs: usize,
    pub kind: CombinerKind,
    pub users_per_cell: usize,
    p: Vec<f64>,
    /// `Σ_e p_e C_e + σ² I`.
    full_static: CMat,
    /// Static part of the combiner bracket (unused for MF and M-MMSE).
    comb_static: CMat,
    /// Users whose estimates enter the combiner bracket.
    members: Vec<usize>,
}

impl BsDetector {
    /// `c_set` and `r` are BS `j`'s error covariances and correlation matrices
    /// of all users; `subset` is required for P-MMSE.
    pub fn new(
        bs: usize,
        kind: CombinerKind,
        users_per_cell: usize,
        c_set: &[CMat],
        r: &[CMat],
        p: &[f64],
        sigma2: f64,
        subset: Option<&[usize]>,
    ) -> Result<Self> {
        kind.validate()?;
        let lk = c_set.len();
        if p.len() != lk || r.len() != lk {
            return Err(Error::dim("detector inputs disagree in user count"));
        }
        let m = c_set[0].nrows();
        let mut full_static = linalg::scaled_identity(m, sigma2);
        for e in 0..lk {
            linalg::axpy(&mut full_static, p[e], &c_set[e]);
        }
        linalg::hermitize(&mut full_static);
        let own: Vec<usize> = (bs * users_per_cell..(bs + 1) * users_per_cell).collect();
        let (members, comb_static) = match kind {
            CombinerKind::Mf | CombinerKind::Mmmse => ((0..lk).collect(), full_static.clone()),
            CombinerKind::Smmse => {
                let mut s = linalg::scaled_identity(m, sigma2);
                for e in 0..lk {
                    let src = if own.contains(&e) { &c_set[e] } else { &r[e] };
                    linalg::axpy(&mut s, p[e], src);
                }
                linalg::hermitize(&mut s);
                (own.clone(), s)
            }
            CombinerKind::Pmmse { .. } => {
                let sub = subset.ok_or_else(|| Error::Config("P-MMSE needs a user subset".into()))?;
                let mut s = linalg::scaled_identity(m, sigma2);
                for &e in sub {
                    linalg::axpy(&mut s, p[e], &c_set[e]);
                }
                linalg::hermitize(&mut s);
                (sub.to_vec(), s)
            }
        };
        Ok(BsDetector { bs, kind, users_per_cell, p: p.to_vec(), full_static, comb_static, members })
    }

    fn gram(&self, h_hat: &CMat, members: Option<&[usize]>, base: &CMat) -> CMat {
        let mut a = base.clone();
        match members {
            None => {
                let mut hp = h_hat.clone();
                for (e, mut col) in hp.column_iter_mut().enumerate() {
                    col *= c(self.p[e], 0.0);
                }
                a.gemm(c(1.0, 0.0), &hp, &h_hat.adjoint(), c(1.0, 0.0));
            }
            Some(sub) => {
                for &e in sub {
                    let col = h_hat.column(e);
                    a.gerc(c(self.p[e], 0.0), &col, &col, c(1.0, 0.0));
                }
            }
        }
        linalg::hermitize(&mut a);
        a
    }

    /// Combiners (`M × K`) and effective SINRs of the BS's own users for one
    /// block, given all estimates at this BS as the columns of `h_hat`.
    pub fn evaluate(&self, h_hat: &CMat) -> Result<(CMat, Vec<f64>)> {
        let k0 = self.bs * self.users_per_cell;
        let kk = self.users_per_cell;
        let own = h_hat.columns(k0, kk).into_owned();
        let full = self.gram(h_hat, None, &self.full_static);
        let v = match self.kind {
            CombinerKind::Mf => own.clone(),
            CombinerKind::Mmmse => Hpd::new(full.clone())?.solve(&own),
            _ => Hpd::new(self.gram(h_hat, Some(&self.members), &self.comb_static))?.solve(&own),
        };
        let av = &full * &v;
        let mut sinr = vec![0.0; kk];
        for k in 0..kk {
            let vk = v.column(k);
            let g = vk.dotc(&own.column(k));
            let num = self.p[k0 + k] * g.norm_sqr();
            let total = vk.dotc(&av.column(k)).re;
            let den = total - num;
            sinr[k] = if num == 0.0 { 0.0 } else { num / den.max(f64::MIN_POSITIVE) };
        }
        Ok((v, sinr))
    }
}

/// Monte Carlo accumulator for the downlink expectations of duality precoding.
/// Users are flattened; BS `j` serves users `jK..(j+1)K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownlinkAccumulator {
    pub users: usize,
    pub users_per_cell: usize,
    pub blocks: usize,
    /// `Σ v_e^H h_e` over blocks, as (re, im).
    pub gain: Vec<(f64, f64)>,
    /// `Σ ‖v_e‖²`.
    pub norm2: Vec<f64>,
    /// `cross[src·LK + dst] = Σ |v_src^H h_dst|`², with `h_dst` taken at the BS of `src`.
    pub cross: Vec<f64>,
}

impl DownlinkAccumulator {
    pub fn new(users: usize, users_per_cell: usize) -> Self {
        DownlinkAccumulator {
            users,
            users_per_cell,
            blocks: 0,
            gain: vec![(0.0, 0.0); users],
            norm2: vec![0.0; users],
            cross: vec![0.0; users * users],
        }
    }

    /// Adds one block at BS `j`: `v` are its combiners (`M × K`) and `h` the
    /// true channels of all users to BS `j` (`M × LK`). Call [`Self::end_block`]
    /// once all BSs are added.
    pub fn add(&mut self, j: usize, v: &CMat, h: &CMat) {
        let g = v.adjoint() * h;
        for k in 0..self.users_per_cell {
            let src = j * self.users_per_cell + k;
            let d = g[(k, src)];
            self.gain[src].0 += d.re;
            self.gain[src].1 += d.im;
            self.norm2[src] += v.column(k).norm_squared();
            for dst in 0..self.users {
                self.cross[src * self.users + dst] += g[(k, dst)].norm_sqr();
            }
        }
    }

    pub fn end_block(&mut self) {
        self.blocks += 1;
    }

    pub fn merge(&mut self, o: &DownlinkAccumulator) {
        self.blocks += o.blocks;
        for e in 0..self.users {
            self.gain[e].0 += o.gain[e].0;
            self.gain[e].1 += o.gain[e].1;
            self.norm2[e] += o.norm2[e];
        }
        for (a, b) in self.cross.iter_mut().zip(&o.cross) {
            *a += b;
        }
    }

    /// Downlink SINRs with powers `rho` and precoders `w = v/√E{‖v‖²}`.
    pub fn sinr(&self, rho: &[f64], sigma2_dl: f64) -> Result<Vec<f64>> {
        if self.blocks == 0 || rho.len() != self.users {
            return Err(Error::dim("downlink accumulator is empty or powers disagree"));
        }
        let n = self.blocks as f64;
        let mean_norm: Vec<f64> = self.norm2.iter().map(|x| x / n).collect();
        (0..self.users)
            .map(|u| {
                let a = (self.gain[u].0 / n).powi(2) + (self.gain[u].1 / n).powi(2);
                if mean_norm[u] == 0.0 {
                    return Ok(0.0);
                }
                let sig = rho[u] * a / mean_norm[u];
                let mut tot = sigma2_dl;
                for src in 0..self.users {
                    if mean_norm[src] > 0.0 {
                        tot += rho[src] * self.cross[src * self.users + u] / n / mean_norm[src];
                    }
                }
                Ok(sig / (tot - sig))
            })
            .collect()
    }
}
