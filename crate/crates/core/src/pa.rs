//! Pilot assignment: trace-metric greedy schemes (full, scalable and
//! cosine-normalized), weighted-graph single-cell baselines, the orthogonal
//! benchmark and information-exchange accounting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::channel::CorrelationSet;
use crate::error::{Error, Result};
use crate::estimation::PilotPlan;
use crate::linalg::{self, c, CMat, Hpd};
use crate::rmt::{self, DetOptions, DetSystem};
#[allow(unused_imports)]
use num_traits::Float as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricVariant {
    /// `Σ_j tr(R_a^j R_b^j)`.
    RawTrace,
    /// `Σ_j tr(R_a^j R_b^j)/(‖R_a^j‖_F ‖R_b^j‖_F)`.
    Cosine,
}

/// Symmetric pairwise metric over flattened users, zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetricTable {
    pub users: usize,
    pub variant: MetricVariant,
    /// Row-major `LK × LK`.
    pub w: Vec<f64>,
    /// Whether a pair is visible to at least one BS (all pairs when unrestricted).
    pub linked: Vec<bool>,
}

impl TraceMetricTable {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.w[a * self.users + b]
    }

    #[inline]
    pub fn is_linked(&self, a: usize, b: usize) -> bool {
        self.linked[a * self.users + b]
    }

    /// Table from an explicit symmetric weight matrix (row-major).
    pub fn from_weights(users: usize, w: Vec<f64>, variant: MetricVariant) -> Result<Self> {
        if w.len() != users * users {
            return Err(Error::dim("weight matrix is not LK × LK"));
        }
        let mut linked = vec![true; users * users];
        for a in 0..users {
            linked[a * users + a] = false;
        }
        Ok(TraceMetricTable { users, variant, w, linked })
    }

    /// `Σ_{a<b sharing a pilot} W(a,b)`.
    pub fn shared_weight(&self, plan: &PilotPlan) -> f64 {
        let mut s = 0.0;
        for a in 0..self.users {
            for b in a + 1..self.users {
                if plan.shares(a, b) {
                    s += self.get(a, b);
                }
            }
        }
        s
    }
}

/// Pairwise metric table. With `restriction`, BS `j` contributes to a pair
/// only when both users belong to `restriction[j]`.
pub fn build_metric_table(
    corr: &CorrelationSet,
    variant: MetricVariant,
    restriction: Option<&[Vec<usize>]>,
) -> Result<TraceMetricTable> {
    let lk = corr.users();
    if let Some(r) = restriction {
        if r.len() != corr.cells() {
            return Err(Error::dim("one user subset per BS expected"));
        }
    }
    let mut w = vec![0.0; lk * lk];
    let mut linked = vec![restriction.is_none(); lk * lk];
    for j in 0..corr.cells() {
        let rj = &corr.r[j];
        let members: Vec<usize> = match restriction {
            Some(r) => r[j].clone(),
            None => (0..lk).collect(),
        };
        let norms: Vec<f64> = match variant {
            MetricVariant::RawTrace => vec![1.0; lk],
            MetricVariant::Cosine => rj.iter().map(linalg::frobenius).collect(),
        };
        for (ia, &a) in members.iter().enumerate() {
            for &b in &members[ia + 1..] {
                let t = linalg::trace_prod_h(&rj[a], &rj[b]).re.max(0.0);
                let den = norms[a] * norms[b];
                let v = if den > 0.0 { t / den } else { 0.0 };
                w[a * lk + b] += v;
                w[b * lk + a] += v;
                linked[a * lk + b] = true;
                linked[b * lk + a] = true;
            }
        }
    }
    for a in 0..lk {
        linked[a * lk + a] = false;
    }
    Ok(TraceMetricTable { users: lk, variant, w, linked })
}

/// A partition of the users into pilot groups and the induced plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotGroups {
    pub groups: Vec<Vec<usize>>,
    pub plan: PilotPlan,
}

impl PilotGroups {
    fn from_assignment(pilot: Vec<usize>, tau_p: usize, users_per_cell: usize) -> Result<Self> {
        let plan = PilotPlan::new(pilot, tau_p, users_per_cell)?;
        let groups = plan.groups().into_iter().filter(|g| !g.is_empty()).collect();
        Ok(PilotGroups { groups, plan })
    }

    /// Number of non-empty groups.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// How users left after the first greedy loop pick a pilot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase2Rule {
    /// Join the pilot whose current members have the smallest summed metric.
    GroupSum,
    /// Join the pilot of the assigned user with the smallest pairwise metric.
    NearestAnchor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyOptions {
    pub phase2: Phase2Rule,
    /// Literal reading of the first loop: a selected pair is put on the SAME
    /// pilot instead of on two fresh ones.
    pub literal_phase1: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { phase2: Phase2Rule::GroupSum, literal_phase1: false }
    }
}

fn check_tau(tau_p: usize, users: usize) -> Result<()> {
    if tau_p == 0 || tau_p > users {
        return Err(Error::Config(format!("tau_p = {tau_p} must lie in [1, LK = {users}]")));
    }
    Ok(())
}

/// Descending by weight, ties by lowest `(a, b)`.
fn sorted_pairs(metric: &TraceMetricTable) -> Vec<(usize, usize)> {
    let n = metric.users;
    let mut pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|&(a, b)| metric.is_linked(a, b)).collect();
    pairs.sort_by(|x, y| match metric.get(y.0, y.1).total_cmp(&metric.get(x.0, x.1)) {
        Ordering::Equal => x.cmp(y),
        o => o,
    });
    pairs
}

/// Two-loop greedy on a metric table. First loop: strongest-interfering
/// pairs receive fresh pilots, one pilot per newly assigned user, until the
/// pilots run out. Second loop: every remaining user, most interfering first,
/// joins a pilot according to `opts.phase2`.
pub fn greedy_pa(metric: &TraceMetricTable, tau_p: usize, users_per_cell: usize, opts: &GreedyOptions) -> Result<PilotGroups> {
    let n = metric.users;
    check_tau(tau_p, n)?;
    let mut pilot: Vec<Option<usize>> = vec![None; n];
    let mut eta = tau_p;
    let mut next = 0usize;
    for (a, b) in sorted_pairs(metric) {
        if eta == 0 {
            break;
        }
        if opts.literal_phase1 {
            match (pilot[a], pilot[b]) {
                (None, None) => {
                    pilot[a] = Some(next);
                    eta -= 1;
                    if eta > 0 {
                        pilot[b] = Some(next);
                        eta -= 1;
                    }
                    next += 1;
                }
                (Some(t), None) => {
                    pilot[b] = Some(t);
                    eta -= 1;
                }
                (None, Some(t)) => {
                    pilot[a] = Some(t);
                    eta -= 1;
                }
                _ => {}
            }
        } else {
            for u in [a, b] {
                if pilot[u].is_none() && eta > 0 {
                    pilot[u] = Some(next);
                    next += 1;
                    eta -= 1;
                }
            }
        }
    }
    if next == 0 {
        // No linked pairs at all (e.g. a single user): open one pilot.
        pilot[0] = Some(0);
        next = 1;
    }
    let total: Vec<f64> = (0..n).map(|u| (0..n).map(|v| metric.get(u, v)).sum()).collect();
    let mut rest: Vec<usize> = (0..n).filter(|&u| pilot[u].is_none()).collect();
    rest.sort_by(|&x, &y| match total[y].total_cmp(&total[x]) {
        Ordering::Equal => x.cmp(&y),
        o => o,
    });
    for u in rest {
        let choice = match opts.phase2 {
            Phase2Rule::GroupSum => {
                let mut cost = vec![0.0; next];
                for v in 0..n {
                    if let Some(t) = pilot[v] {
                        cost[t] += metric.get(u, v);
                    }
                }
                argmin(&cost)
            }
            Phase2Rule::NearestAnchor => {
                let mut best: Option<(f64, usize)> = None;
                for v in 0..n {
                    if let Some(t) = pilot[v] {
                        let w = metric.get(u, v);
                        if best.is_none_or(|(bw, _)| w < bw) {
                            best = Some((w, t));
                        }
                    }
                }
                best.map_or(0, |(_, t)| t)
            }
        };
        pilot[u] = Some(choice);
    }
    let pilot: Vec<usize> = pilot.into_iter().map(|t| t.unwrap_or(0)).collect();
    PilotGroups::from_assignment(pilot, tau_p, users_per_cell)
}

fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v < x[best] {
            best = i;
        }
    }
    best
}

/// Greedy scheme on the full trace metric.
pub fn multicell_pa(metric: &TraceMetricTable, tau_p: usize, users_per_cell: usize) -> Result<PilotGroups> {
    greedy_pa(metric, tau_p, users_per_cell, &GreedyOptions::default())
}

/// Greedy scheme on the subset-restricted trace metric.
pub fn scalable_pa(restricted: &TraceMetricTable, tau_p: usize, users_per_cell: usize) -> Result<PilotGroups> {
    greedy_pa(restricted, tau_p, users_per_cell, &GreedyOptions::default())
}

/// Greedy scheme on the cosine-normalized metric.
pub fn extended_orthogonality_pa(cosine: &TraceMetricTable, tau_p: usize, users_per_cell: usize) -> Result<PilotGroups> {
    greedy_pa(cosine, tau_p, users_per_cell, &GreedyOptions::default())
}

/// Every user on its own pilot (`τ_p = LK`).
pub fn contamination_free_pa(cells: usize, users_per_cell: usize) -> PilotGroups {
    let plan = PilotPlan::orthogonal(cells, users_per_cell);
    PilotGroups { groups: (0..plan.users()).map(|e| vec![e]).collect(), plan }
}

/// Large-scale-fading edge weights `ζ_{a,b} = (β_b^{j}/β_a^{j})² + (β_a^{l}/β_b^{l})²`
/// between users `a` in cell `j` and `b` in cell `l ≠ j`; zero within a cell.
pub fn zhu_weights(beta: &[Vec<f64>], users_per_cell: usize) -> Vec<f64> {
    let lk = beta[0].len();
    let mut w = vec![0.0; lk * lk];
    for a in 0..lk {
        for b in 0..lk {
            let (j, l) = (a / users_per_cell, b / users_per_cell);
            if j != l {
                w[a * lk + b] = (beta[j][b] / beta[j][a]).powi(2) + (beta[l][a] / beta[l][b]).powi(2);
            }
        }
    }
    w
}

/// Edge weights `ζ_{a,b} = |δ_{a,b}|²/δ_a² + |δ_{b,a}|²/δ_b²` from the
/// deterministic terms of the pair when only `a` and `b` share a pilot and the
/// resolvent equivalent is that of the contamination-free network.
pub fn proposed_weights(
    corr: &CorrelationSet,
    p_hat: &[f64],
    p: &[f64],
    tau_p: usize,
    sigma2: f64,
    opts: &DetOptions,
) -> Result<Vec<f64>> {
    let lk = corr.users();
    let kk = corr.users_per_cell;
    let tau = tau_p as f64;
    let m = corr.antennas;
    // ratio[a*lk+b] = |δ_{a,b}|²/δ_a² at the serving BS of a.
    let mut ratio = vec![0.0; lk * lk];
    for j in 0..corr.cells() {
        let r = &corr.r[j];
        let mut r_hat = Vec::with_capacity(lk);
        let mut s = CMat::zeros(m, m);
        for e in 0..lk {
            let psi = &r[e] * c(tau * p_hat[e], 0.0) + linalg::scaled_identity(m, sigma2);
            let xi = (&r[e] * Hpd::new(psi)?.solve(&r[e])) * c(tau * p_hat[e], 0.0);
            linalg::axpy(&mut s, p[e], &(&r[e] - &xi));
            r_hat.push(xi * c(p[e], 0.0));
        }
        linalg::hermitize(&mut s);
        let sys = DetSystem::new(r_hat, s, sigma2, j)?;
        let eq = rmt::theorem1_fixed_point(&sys, opts.tol, opts.max_iter)?;
        let t_r: Vec<CMat> = r.iter().map(|re| &eq.t * re).collect();
        for a in j * kk..(j + 1) * kk {
            for b in (0..lk).filter(|b| b / kk != j) {
                let mut psi = &r[a] * c(tau * p_hat[a], 0.0) + &r[b] * c(tau * p_hat[b], 0.0);
                for i in 0..m {
                    psi[(i, i)] += sigma2;
                }
                let chol = Hpd::new(psi)?;
                let pair = [a, b];
                let psi_r = [chol.solve(&r[a]), chol.solve(&r[b])];
                let mut f0 = CMat::zeros(2, 2);
                for x in 0..2 {
                    for y in 0..2 {
                        // tr(T Ξ_{y,x}), Ξ_{y,x} = τ√(p̂p̂) R_y ψ^{−1} R_x.
                        let g = tau * (p_hat[pair[x]] * p_hat[pair[y]]).sqrt();
                        f0[(x, y)] = linalg::trace_prod(&t_r[pair[y]], &psi_r[x]) * g;
                    }
                }
                let rec = rmt::recursive_f(&f0, &[p[a], p[b]], &[1]);
                let d = rec.f[(0, 0)].re;
                ratio[a * lk + b] = if d > 0.0 { rec.f[(0, 1)].norm_sqr() / (d * d) } else { f64::INFINITY };
            }
        }
    }
    let mut w = vec![0.0; lk * lk];
    for a in 0..lk {
        for b in 0..lk {
            if a / kk != b / kk {
                w[a * lk + b] = ratio[a * lk + b] + ratio[b * lk + a];
            }
        }
    }
    Ok(w)
}

/// Weighted-graph assignment, cell by cell. Within a cell users go in order of
/// decreasing total edge weight and each takes the pilot, unused by its own
/// cell, with the smallest summed weight to users already on it.
pub fn singlecell_weighted_pa(weights: &[f64], cells: usize, users_per_cell: usize, tau_p: usize) -> Result<PilotGroups> {
    let lk = cells * users_per_cell;
    if weights.len() != lk * lk {
        return Err(Error::dim("weight matrix is not LK × LK"));
    }
    if tau_p < users_per_cell || tau_p > lk {
        return Err(Error::Config(format!(
            "weighted-graph assignment needs K = {users_per_cell} ≤ tau_p = {tau_p} ≤ LK"
        )));
    }
    let total: Vec<f64> = (0..lk).map(|u| weights[u * lk..(u + 1) * lk].iter().sum()).collect();
    let mut pilot: Vec<Option<usize>> = vec![None; lk];
    for l in 0..cells {
        let mut users: Vec<usize> = (l * users_per_cell..(l + 1) * users_per_cell).collect();
        users.sort_by(|&x, &y| match total[y].total_cmp(&total[x]) {
            Ordering::Equal => x.cmp(&y),
            o => o,
        });
        let mut used = vec![false; tau_p];
        for u in users {
            let mut cost = vec![0.0; tau_p];
            for v in 0..lk {
                if let Some(t) = pilot[v] {
                    cost[t] += weights[u * lk + v];
                }
            }
            let mut best: Option<usize> = None;
            for t in 0..tau_p {
                if !used[t] && best.is_none_or(|b| cost[t] < cost[b]) {
                    best = Some(t);
                }
            }
            let t = best.expect("tau_p ≥ K leaves a free pilot");
            used[t] = true;
            pilot[u] = Some(t);
        }
    }
    PilotGroups::from_assignment(pilot.into_iter().map(|t| t.unwrap_or(0)).collect(), tau_p, users_per_cell)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaScheme {
    Multicell,
    Scalable,
    ExtendedOrthogonality,
    Zhu,
    ProposedSinglecell,
    ContaminationFree,
}

impl PaScheme {
    pub fn label(&self) -> &'static str {
        match self {
            PaScheme::Multicell => "multicell",
            PaScheme::Scalable => "scalable",
            PaScheme::ExtendedOrthogonality => "extended",
            PaScheme::Zhu => "zhu",
            PaScheme::ProposedSinglecell => "proposed_singlecell",
            PaScheme::ContaminationFree => "contamination_free",
        }
    }
}

/// Real values each BS shares for a scheme.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub scheme: String,
    pub per_bs: Vec<u64>,
    pub total: u64,
}

/// Exchange counts: `LK(LK−1)/2` per BS for the full trace metric (and its
/// cosine variant), `|I_j|(|I_j|−1)/2` for the restricted one, `LK` gains per
/// BS for the weighted-graph baselines and none for the orthogonal benchmark.
pub fn overhead_report(scheme: PaScheme, cells: usize, users_per_cell: usize, subsets: Option<&[Vec<usize>]>) -> Result<OverheadReport> {
    let lk = (cells * users_per_cell) as u64;
    let per_bs: Vec<u64> = match scheme {
        PaScheme::Multicell | PaScheme::ExtendedOrthogonality => vec![lk * (lk - 1) / 2; cells],
        PaScheme::Scalable => {
            let s = subsets.ok_or_else(|| Error::Config("scalable overhead needs the user subsets".into()))?;
            if s.len() != cells {
                return Err(Error::dim("one subset per BS expected"));
            }
            s.iter().map(|i| (i.len() as u64) * (i.len() as u64).saturating_sub(1) / 2).collect()
        }
        PaScheme::Zhu | PaScheme::ProposedSinglecell => vec![lk; cells],
        PaScheme::ContaminationFree => vec![0; cells],
    };
    let total = per_bs.iter().sum();
    Ok(OverheadReport { scheme: scheme.label().into(), per_bs, total })
}
