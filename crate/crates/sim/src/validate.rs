//! Estimator and deterministic-equivalent property checks against Monte Carlo.

use mimo_core::channel::{
    dft_basis, exponential_matrix, gaussian_scattering_matrix, ChannelSampler, CorrelationModel, CorrelationSet,
    DEFAULT_QUADRATURE_ORDER,
};
use mimo_core::detect::{instantaneous_sinr, mf_combiner, mmmse_combiner, CombinerKind};
use mimo_core::estimation::{build_pilot_book, pilot_batch, received_pilot_signal, EstimationStats, PilotPlan};
use mimo_core::geometry::{dbm_to_mw, LargeScaleFading, NetworkConfig};
use mimo_core::linalg::{self, c, CMat, Hpd};
use mimo_core::power::duality_power;
use mimo_core::rmt::{
    deterministic_sinr, jacobian, theorem1_fixed_point, theorem2_derivative, DetOptions, DetSystem, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use mimo_core::rng::{complex_gaussian_matrix, stream, Domain};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run_drop, Arm, DropSetup};
use crate::error::{Context, Result};

/// Two cells of four users, four pilots reused by index, 20° Gaussian scattering.
pub fn small_network(m: usize) -> (NetworkConfig, CorrelationModel) {
    (NetworkConfig::with_dims(1, 2, 4, m, 4), CorrelationModel::gaussian(20.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessPoint {
    pub antennas: usize,
    /// Mean over users and drops of `|E{SINR} − SINR_det|/SINR_det`, printed form.
    pub literal_gap: f64,
    /// Same with the pilot-group estimation-error terms.
    pub complete_gap: f64,
    pub max_spectral_radius: f64,
}

/// Deterministic vs Monte Carlo M-MMSE SINR on [`small_network`] at uniform
/// 20 dBm powers.
pub fn det_tightness(antennas: &[usize], drops: usize, blocks: usize, master: u64) -> Result<Vec<TightnessPoint>> {
    let mut out = Vec::new();
    for &m in antennas {
        let (cfg, model) = small_network(m);
        let lk = cfg.total_users();
        let p = vec![dbm_to_mw(20.0); lk];
        let plan = PilotPlan::reuse_by_index(cfg.cells, cfg.users_per_cell, cfg.tau_p);
        let (mut lit, mut full, mut rho) = (0.0, 0.0, 0.0_f64);
        for d in 0..drops {
            let drop = DropSetup::new(&cfg, &model, master, d)?;
            let arm = Arm::new(&drop, plan.clone(), p.clone(), p.clone(), CombinerKind::Mmmse)?;
            let mc = run_drop(&drop, std::slice::from_ref(&arm), master, blocks, 25)?.remove(0);
            for (ge, acc) in [(false, &mut lit), (true, &mut full)] {
                let opts = DetOptions { group_estimation_error: ge, ..Default::default() };
                let det = deterministic_sinr(&drop.corr, &arm.stats, &plan, &p, cfg.sigma2_ul, &opts)
                    .context(|| format!("M = {m}, drop {d}"))?;
                rho = rho.max(det.max_spectral_radius);
                *acc += (0..lk).map(|u| (mc.user_sinr[u] - det.sinr[u]).abs() / det.sinr[u]).sum::<f64>() / lk as f64;
            }
        }
        out.push(TightnessPoint {
            antennas: m,
            literal_gap: lit / drops as f64,
            complete_gap: full / drops as f64,
            max_spectral_radius: rho,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLawReport {
    pub antennas: usize,
    pub realizations: usize,
    pub mc_trace: f64,
    pub det_trace: f64,
    pub mc_trace_sq: f64,
    pub det_trace_sq: f64,
    /// Worst relative error over the BSs.
    pub trace_rel_err: f64,
    pub trace_sq_rel_err: f64,
}

/// `(1/M)tr Σ` and `(1/M)tr Σ²` of the M-MMSE resolvent
/// `Σ = (Σ_e p ĥ_eĥ_e^H + Σ_e p C_e + σ²I)^{−1}` against `tr T` and `tr T'(I)`.
pub fn trace_laws(m: usize, realizations: usize, master: u64) -> Result<TraceLawReport> {
    let (cfg, model) = small_network(m);
    let lk = cfg.total_users();
    let p = vec![dbm_to_mw(20.0); lk];
    let s2 = cfg.sigma2_ul;
    let plan = PilotPlan::reuse_by_index(cfg.cells, cfg.users_per_cell, cfg.tau_p);
    let drop = DropSetup::new(&cfg, &model, master, 0)?;
    let stats = EstimationStats::new(&drop.corr, &plan, &p, s2).context(|| "trace laws".into())?;
    let mut rng = stream(master, Domain::Channels, u64::MAX, 0, 0);
    let batch = drop.sampler.sample_batch(&mut rng, realizations);
    let mut report = TraceLawReport {
        antennas: m,
        realizations,
        mc_trace: 0.0,
        det_trace: 0.0,
        mc_trace_sq: 0.0,
        det_trace_sq: 0.0,
        trace_rel_err: 0.0,
        trace_sq_rel_err: 0.0,
    };
    for j in 0..cfg.cells {
        let ctx = || format!("trace laws, BS {j}");
        let est = &stats.per_bs[j];
        let sys = DetSystem::from_estimator(&drop.corr, est, &p, s2).context(ctx)?;
        let eq = theorem1_fixed_point(&sys, DEFAULT_TOL, DEFAULT_MAX_ITER).context(ctx)?;
        let jac = jacobian(&sys, &eq).context(ctx)?;
        let der = theorem2_derivative(&sys, &eq, &jac, &linalg::identity(m)).context(ctx)?;
        let mut nrng = stream(master, Domain::PilotNoise, u64::MAX, 0, j as u64);
        let noise: Vec<CMat> = (0..plan.tau_p).map(|_| complex_gaussian_matrix(&mut nrng, m, realizations, s2)).collect();
        let h_hat = est.estimate_batch(&pilot_batch(&batch, j, &plan, &p, &noise));
        let base = &sys.s + linalg::scaled_identity(m, s2);
        let (mut tr, mut tr2) = (0.0, 0.0);
        for b in 0..realizations {
            let mut a = base.clone();
            for (e, he) in h_hat.iter().enumerate() {
                let col = he.column(b);
                a.gerc(c(p[e], 0.0), &col, &col, c(1.0, 0.0));
            }
            linalg::hermitize(&mut a);
            let sigma = Hpd::new(a).context(ctx)?.inverse();
            tr += linalg::trace(&sigma).re;
            tr2 += linalg::frobenius(&sigma).powi(2);
        }
        let n = realizations as f64;
        let (mc, mc2) = (tr / n, tr2 / n);
        let (dt, dt2) = (linalg::trace(&eq.t).re, linalg::trace(&der.t_prime).re);
        let (e1, e2) = ((mc - dt).abs() / dt, (mc2 - dt2).abs() / dt2);
        if j == 0 || e1 > report.trace_rel_err {
            report.trace_rel_err = e1;
            report.mc_trace = mc / m as f64;
            report.det_trace = dt / m as f64;
        }
        if j == 0 || e2 > report.trace_sq_rel_err {
            report.trace_sq_rel_err = e2;
            report.mc_trace_sq = mc2 / m as f64;
            report.det_trace_sq = dt2 / m as f64;
        }
    }
    Ok(report)
}

/// Correlation set of two single-user cells whose channels occupy disjoint
/// quarters of the DFT basis at both BSs.
pub fn disjoint_support_pair(m: usize) -> Result<CorrelationSet> {
    let f = dft_basis(m);
    let q = m / 4;
    let block = |start: usize, beta: f64| {
        let cols = f.columns(start, q);
        (&cols * cols.adjoint()) * c(beta * m as f64 / q as f64, 0.0)
    };
    let r = vec![vec![block(0, 1.0), block(2 * q, 0.4)], vec![block(q, 0.3), block(3 * q, 1.0)]];
    CorrelationSet::from_matrices(r, 1).context(|| "disjoint support pair".into())
}

/// Two single-user cells sharing a pilot, 10° Gaussian scattering around
/// nominal angles 6° apart at BS 0, so the angular spectra partly overlap.
pub fn overlapping_gaussian_pair(m: usize) -> Result<CorrelationSet> {
    let asd = 10f64.to_radians();
    let g = |beta: f64, phi_deg: f64| gaussian_scattering_matrix(beta, phi_deg.to_radians(), asd, m, DEFAULT_QUADRATURE_ORDER);
    let ctx = || "overlapping Gaussian pair".to_string();
    let r = vec![
        vec![g(1.0, 60.0).context(ctx)?, g(0.4, 66.0).context(ctx)?],
        vec![g(0.3, 45.0).context(ctx)?, g(1.0, 81.0).context(ctx)?],
    ];
    CorrelationSet::from_matrices(r, 1).context(ctx)
}

pub const PAIR_SIGMA2: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPoint {
    pub antennas: usize,
    /// `p_b|δ_{a,b}|²/(p_a δ_a²)` for the disjoint-support pair (worst user).
    pub det_ratio_disjoint: f64,
    /// The same ratio for the overlapping Gaussian pair.
    pub det_ratio_gaussian: f64,
    /// `p_b|E{v_a^H h_b}|²/(p_a|E{v_a^H h_a}|²)` for the overlapping Gaussian pair at BS 0, debiased.
    pub mc_share_gaussian: f64,
}

fn coherent_ratio(corr: &CorrelationSet, plan: &PilotPlan, p: &[f64]) -> Result<f64> {
    let stats = EstimationStats::new(corr, plan, p, PAIR_SIGMA2).context(|| "coherent ratio".into())?;
    let det = deterministic_sinr(corr, &stats, plan, p, PAIR_SIGMA2, &DetOptions::default())
        .context(|| "coherent ratio".into())?;
    Ok((0..2)
        .map(|u| {
            let e = 1 - u;
            p[e] * det.delta_coh[u][e].powi(2) / (p[u] * det.delta[u].powi(2))
        })
        .fold(0.0, f64::max))
}

pub fn zero_contamination(antennas: &[usize], blocks: usize, master: u64) -> Result<Vec<ContaminationPoint>> {
    let plan = PilotPlan::new(vec![0, 0], 1, 1).context(|| "pair plan".into())?;
    let p = [1.0, 1.0];
    let book = build_pilot_book(1).context(|| "pilot book".into())?;
    let mut out = Vec::new();
    for &m in antennas {
        let disjoint = coherent_ratio(&disjoint_support_pair(m)?, &plan, &p)?;
        let corr = overlapping_gaussian_pair(m)?;
        let det_g = coherent_ratio(&corr, &plan, &p)?;
        let stats = EstimationStats::new(&corr, &plan, &p, PAIR_SIGMA2).context(|| "pair".into())?;
        let sampler = ChannelSampler::new(&corr).context(|| "pair".into())?;
        let mut rng = stream(master, Domain::Channels, m as u64, 0, 0);
        let (mut sig, mut int, mut int_sq) = (c(0.0, 0.0), c(0.0, 0.0), 0.0);
        for _ in 0..blocks {
            let ch = sampler.sample(&mut rng);
            let y = received_pilot_signal(&plan, &book, &p, &ch, PAIR_SIGMA2, &mut rng).context(|| "pair".into())?;
            let est = &stats.per_bs[0];
            let hh = est.estimate_from_pilots(&y[0], &book);
            let v = mmmse_combiner(&hh, &est.c, &p, PAIR_SIGMA2, &[0]).context(|| "pair".into())?;
            sig += v[0].dotc(&ch.h[0][0]);
            let z = v[0].dotc(&ch.h[0][1]);
            int += z;
            int_sq += z.norm_sqr();
        }
        let n = blocks as f64;
        let (sig, int) = (sig / n, int / n);
        // |mean|² minus its noise bias var/N.
        let coherent = int.norm_sqr() - (int_sq / n - int.norm_sqr()) / (n - 1.0);
        out.push(ContaminationPoint {
            antennas: m,
            det_ratio_disjoint: disjoint,
            det_ratio_gaussian: det_g,
            mc_share_gaussian: p[1] * coherent / (p[0] * sig.norm_sqr()),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRatioReport {
    pub antennas: usize,
    pub mc_sinr: Vec<f64>,
    pub limit: Vec<f64>,
    pub max_rel_err: f64,
}

/// Gains `beta[j][e]` of the two-cell, two-user uncorrelated example.
pub fn beta_ratio_gains() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.9, 0.5, 0.4], vec![0.45, 0.4, 1.0, 0.8]]
}

/// MF on uncorrelated fading with two pilots reused by index, compared with
/// `β_{jk}²/Σ_{sharers} β²`.
pub fn beta_ratio_limit(m: usize, blocks: usize, master: u64) -> Result<BetaRatioReport> {
    let (l, k, sigma2) = (2, 2, 0.01);
    let beta = beta_ratio_gains();
    let lsf = LargeScaleFading::from_betas(beta.clone());
    let ctx = || "beta ratio".to_string();
    let corr = CorrelationSet::build(m, k, &lsf, &CorrelationModel::Uncorrelated).context(ctx)?;
    let plan = PilotPlan::reuse_by_index(l, k, k);
    let p = vec![1.0; l * k];
    let stats = EstimationStats::new(&corr, &plan, &p, sigma2).context(ctx)?;
    let sampler = ChannelSampler::new(&corr).context(ctx)?;
    let book = build_pilot_book(plan.tau_p).context(ctx)?;
    let mut rng = stream(master, Domain::Channels, m as u64, 1, 0);
    let mut acc = vec![0.0; l * k];
    for _ in 0..blocks {
        let ch = sampler.sample(&mut rng);
        let y = received_pilot_signal(&plan, &book, &p, &ch, sigma2, &mut rng).context(ctx)?;
        for j in 0..l {
            let est = &stats.per_bs[j];
            let hh = est.estimate_from_pilots(&y[j], &book);
            let targets: Vec<usize> = (j * k..(j + 1) * k).collect();
            for (v, &t) in mf_combiner(&hh, &targets).iter().zip(&targets) {
                acc[t] += instantaneous_sinr(v, &hh, &est.c, &p, sigma2, t);
            }
        }
    }
    let mc_sinr: Vec<f64> = acc.iter().map(|a| a / blocks as f64).collect();
    let limit: Vec<f64> = (0..l * k)
        .map(|u| {
            let j = u / k;
            let den: f64 = plan.sharing(u).iter().map(|&e| beta[j][e].powi(2)).sum();
            beta[j][u].powi(2) / den
        })
        .collect();
    let max_rel_err = mc_sinr.iter().zip(&limit).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    Ok(BetaRatioReport { antennas: m, mc_sinr, limit, max_rel_err })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub instances: usize,
    pub max_rel_err: f64,
    pub min_downlink_power: f64,
}

/// Downlink SINR after the duality power transfer vs uplink SINR, for random
/// uplink powers on a two-cell, three-user network (three pilots).
pub fn duality_check(instances: usize, m: usize, master: u64) -> Result<DualityReport> {
    let cfg = NetworkConfig::with_dims(1, 2, 3, m, 3);
    let drop = DropSetup::new(&cfg, &CorrelationModel::gaussian(20.0), master, 0)?;
    let plan = PilotPlan::reuse_by_index(2, 3, 3);
    let lk = cfg.total_users();
    let pmax = dbm_to_mw(20.0);
    let mut rng = stream(master, Domain::Instances, 5, 0, 0);
    let (mut worst, mut min_p) = (0.0_f64, f64::INFINITY);
    for i in 0..instances {
        let ctx = || format!("duality instance {i}");
        let p_ul: Vec<f64> = (0..lk).map(|_| pmax * rng.random_range(0.05..1.0)).collect();
        let stats = EstimationStats::new(&drop.corr, &plan, &vec![pmax; lk], cfg.sigma2_ul).context(ctx)?;
        let det = deterministic_sinr(&drop.corr, &stats, &plan, &p_ul, cfg.sigma2_ul, &DetOptions::default()).context(ctx)?;
        let p_dl = duality_power(&det, &p_ul, cfg.sigma2_ul, cfg.sigma2_dl).context(ctx)?;
        let up = det.sinr_with(&p_ul, cfg.sigma2_ul);
        let dn = det.downlink_sinr_with(&p_dl, cfg.sigma2_dl);
        for u in 0..lk {
            worst = worst.max((up[u] - dn[u]).abs() / up[u]);
            min_p = min_p.min(p_dl[u]);
        }
    }
    Ok(DualityReport { instances, max_rel_err: worst, min_downlink_power: min_p })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    /// `max ‖Ξ_ee + C_e − R_e‖_F/‖R_e‖_F`.
    pub xi_plus_c_err: f64,
    /// Largest `|mean|/std_err` of `Re`/`Im` of `ĥ^H(h − ĥ)` over users and BSs.
    pub orthogonality_max_z: f64,
    pub orthogonality_samples: usize,
    /// `max ‖ĥ_b − Υ ĥ_a‖/‖ĥ_b‖` over sharing pairs and realizations.
    pub alignment_err: f64,
    /// `max |1 − |⟨ĥ_a,ĥ_b⟩|/(‖ĥ_a‖‖ĥ_b‖)|` for sharers under uncorrelated fading.
    pub collinearity_err: f64,
}

pub fn estimation_identities(samples: usize, master: u64) -> Result<EstimationReport> {
    let ctx = || "estimation identities".to_string();
    let (l, k, tau) = (2, 2, 2);
    let s2 = 0.1;
    let plan = PilotPlan::reuse_by_index(l, k, tau);
    let p = vec![1.0; l * k];
    let book = build_pilot_book(tau).context(ctx)?;
    let beta = beta_ratio_gains();

    // Full-rank correlations: Ξ + C = R, orthogonality, alignment.
    let m = 8;
    let r: Vec<Vec<CMat>> = (0..l)
        .map(|j| (0..l * k).map(|e| exponential_matrix(beta[j][e], 0.3 * e as f64 + j as f64, 0.5, m)).collect())
        .collect::<mimo_core::Result<_>>()
        .context(ctx)?;
    let corr = CorrelationSet::from_matrices(r, k).context(ctx)?;
    let stats = EstimationStats::new(&corr, &plan, &p, s2).context(ctx)?;
    let mut xi_err = 0.0_f64;
    for (j, est) in stats.per_bs.iter().enumerate() {
        for e in 0..l * k {
            let sum = est.xi(&corr, e, e) + &est.c[e];
            xi_err = xi_err.max(linalg::frobenius(&(sum - &corr.r[j][e])) / linalg::frobenius(&corr.r[j][e]));
        }
    }
    let sampler = ChannelSampler::new(&corr).context(ctx)?;
    let mut rng = stream(master, Domain::Channels, 6, 0, 0);
    let n_stats = l * l * k;
    let mut sum = vec![(0.0, 0.0); n_stats];
    let mut sq = vec![(0.0, 0.0); n_stats];
    let mut align = 0.0_f64;
    for _ in 0..samples {
        let ch = sampler.sample(&mut rng);
        let y = received_pilot_signal(&plan, &book, &p, &ch, s2, &mut rng).context(ctx)?;
        for j in 0..l {
            let est = &stats.per_bs[j];
            let hh = est.estimate_from_pilots(&y[j], &book);
            for e in 0..l * k {
                let z = hh[e].dotc(&(&ch.h[j][e] - &hh[e]));
                let s = &mut sum[j * l * k + e];
                s.0 += z.re;
                s.1 += z.im;
                let q = &mut sq[j * l * k + e];
                q.0 += z.re * z.re;
                q.1 += z.im * z.im;
                for b in plan.sharing(e) {
                    let (ups, _) = est.upsilon(&corr, e, b);
                    let d = (&hh[b] - &ups * &hh[e]).norm() / hh[b].norm();
                    align = align.max(d);
                }
            }
        }
    }
    let n = samples as f64;
    let z_of = |s: f64, q: f64| {
        let mean = s / n;
        let var = (q / n - mean * mean) * n / (n - 1.0);
        mean.abs() / (var / n).sqrt()
    };
    let max_z = (0..n_stats).map(|i| z_of(sum[i].0, sq[i].0).max(z_of(sum[i].1, sq[i].1))).fold(0.0, f64::max);

    // Uncorrelated fading: sharers' estimates are collinear.
    let lsf = LargeScaleFading::from_betas(beta);
    let corr_u = CorrelationSet::build(m, k, &lsf, &CorrelationModel::Uncorrelated).context(ctx)?;
    let stats_u = EstimationStats::new(&corr_u, &plan, &p, s2).context(ctx)?;
    let sampler_u = ChannelSampler::new(&corr_u).context(ctx)?;
    let mut coll = 0.0_f64;
    for _ in 0..100 {
        let ch = sampler_u.sample(&mut rng);
        let y = received_pilot_signal(&plan, &book, &p, &ch, s2, &mut rng).context(ctx)?;
        for j in 0..l {
            let hh = stats_u.per_bs[j].estimate_from_pilots(&y[j], &book);
            for a in 0..l * k {
                for b in plan.sharing(a) {
                    let cs = hh[a].dotc(&hh[b]).norm() / (hh[a].norm() * hh[b].norm());
                    coll = coll.max((1.0 - cs).abs());
                }
            }
        }
    }
    Ok(EstimationReport {
        xi_plus_c_err: xi_err,
        orthogonality_max_z: max_z,
        orthogonality_samples: samples,
        alignment_err: align,
        collinearity_err: coll,
    })
}

/// One named check with its measured value and pass threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

/// The property suite run by the `validate` subcommand; `scale` multiplies
/// the Monte Carlo sample counts.
pub fn run_suite(master: u64, scale: f64) -> Result<Vec<Check>> {
    let n = |x: f64| ((x * scale).round() as usize).max(10);
    let mut checks = Vec::new();
    let est = estimation_identities(n(10_000.0), master)?;
    checks.push(Check::at_most("xi_plus_c_equals_r", est.xi_plus_c_err, 1e-10));
    checks.push(Check::at_most("estimate_error_orthogonality_z", est.orthogonality_max_z, 3.0));
    checks.push(Check::at_most("alignment_identity", est.alignment_err, 1e-8));
    checks.push(Check::at_most("uncorrelated_collinearity", est.collinearity_err, 1e-10));
    let tl = trace_laws(64, n(200.0), master)?;
    checks.push(Check::at_most("trace_law_t", tl.trace_rel_err, 0.03));
    checks.push(Check::at_most("trace_law_t_prime", tl.trace_sq_rel_err, 0.05));
    let du = duality_check(50, 32, master)?;
    checks.push(Check::at_most("duality_sinr_match", du.max_rel_err, 1e-9));
    let zc = zero_contamination(&[128], n(200.0), master)?;
    checks.push(Check::at_most("disjoint_support_coherent_ratio", zc[0].det_ratio_disjoint, 1e-6));
    let br = beta_ratio_limit(256, n(1000.0), master)?;
    checks.push(Check::at_most("mf_beta_ratio_limit", br.max_rel_err, 0.10));
    let tight = det_tightness(&[128], 1, n(1000.0), master)?;
    checks.push(Check::at_most("det_mc_gap_m128", tight[0].complete_gap, 0.05));
    Ok(checks)
}
