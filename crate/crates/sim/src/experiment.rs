//! Sweep points × drops × arms, aggregated into result records.

use std::time::Instant;

use mimo_core::detect::{pairwise_sum, CombinerKind, MeanEstimate};
use mimo_core::estimation::{EstimationStats, PilotPlan};
use mimo_core::geometry::dbm_to_mw;
use mimo_core::pa::{
    build_metric_table, contamination_free_pa, extended_orthogonality_pa, multicell_pa, overhead_report, proposed_weights,
    scalable_pa, singlecell_weighted_pa, zhu_weights, MetricVariant, PaScheme,
};
use mimo_core::power::{maxmin_bisection, pilot_power_opt, sumse_fixed_point, PowerBudget};
use mimo_core::rmt::{deterministic_sinr, DetOptions, DetSinrTerms};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, PointSpec, PowerScheme};
use crate::engine::{run_drop, Arm, DropSetup};
use crate::error::{Context, Result, SimError};

pub const PILOT_TOL: f64 = 1e-6;
pub const FIXED_POINT_TOL: f64 = 1e-8;
pub const FIXED_POINT_MAX_ITER: usize = 200;
pub const BISECTION_TOL: f64 = 1e-4;

/// Aggregate of one arm at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub pa: String,
    pub combiner: String,
    pub power: String,
    pub drops: usize,
    pub blocks: usize,
    /// Mean sum SE per cell, bit/s/Hz.
    pub sum_se_per_cell: f64,
    /// Standard error over all (drop, block) samples.
    pub sum_se_std_err: f64,
    /// Standard error over the per-drop means (absent with one drop).
    pub sum_se_drop_std_err: Option<f64>,
    /// Mean sum SE per cell of every drop.
    pub drop_sum_se: Vec<f64>,
    /// Per-user SE of every drop, drop-major.
    pub per_user_se: Vec<f64>,
    /// Deterministic-equivalent sum SE per cell (M-MMSE arms).
    pub det_sum_se_per_cell: Option<f64>,
    /// Mean over users and drops of `|E{SINR} − SINR_det| / SINR_det`.
    pub det_gap: Option<f64>,
    /// Real values each BS exchanges for the pilot assignment, averaged over BSs and drops.
    pub exchange_per_bs: f64,
    /// Wall-clock seconds for the sweep point; written only to the timing file.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// One optimizer iteration, for convergence plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub sweep_value: f64,
    pub pa: String,
    pub power: String,
    pub stage: String,
    pub iteration: usize,
    pub objective: f64,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    /// Trajectories of the first drop.
    pub trajectories: Vec<TrajectoryRow>,
}

/// Powers of one arm, with the optimizer traces that produced them.
#[derive(Clone, Debug)]
pub struct Allocation {
    pub p_hat: Vec<f64>,
    pub p: Vec<f64>,
    pub budget: PowerBudget,
    pub pilot_trace: Option<Vec<f64>>,
    pub data_trace: Option<(Vec<f64>, Vec<f64>)>,
}

/// Pilot plan of `pa` in a drop and the per-BS exchange count it needs.
pub fn build_plan(
    pa: PaScheme,
    drop: &DropSetup,
    tau_p: usize,
    gamma: f64,
    power_mw: f64,
    opts: &DetOptions,
) -> Result<(PilotPlan, f64)> {
    let ctx = || format!("drop {}, {} pilot assignment", drop.index, pa.label());
    let (l, k) = (drop.corr.cells(), drop.cfg.users_per_cell);
    let lk = l * k;
    let mut subsets = None;
    let groups = match pa {
        PaScheme::Multicell => {
            let t = build_metric_table(&drop.corr, MetricVariant::RawTrace, None).context(ctx)?;
            multicell_pa(&t, tau_p, k)
        }
        PaScheme::Scalable => {
            let s = drop.subsets(gamma);
            let t = build_metric_table(&drop.corr, MetricVariant::RawTrace, Some(&s)).context(ctx)?;
            subsets = Some(s);
            scalable_pa(&t, tau_p, k)
        }
        PaScheme::ExtendedOrthogonality => {
            let t = build_metric_table(&drop.corr, MetricVariant::Cosine, None).context(ctx)?;
            extended_orthogonality_pa(&t, tau_p, k)
        }
        PaScheme::Zhu => singlecell_weighted_pa(&zhu_weights(&drop.lsf.beta, k), l, k, tau_p),
        PaScheme::ProposedSinglecell => {
            let p = vec![power_mw; lk];
            let w = proposed_weights(&drop.corr, &p, &p, tau_p, drop.cfg.sigma2_ul, opts).context(ctx)?;
            singlecell_weighted_pa(&w, l, k, tau_p)
        }
        PaScheme::ContaminationFree => Ok(contamination_free_pa(l, k)),
    }
    .context(ctx)?;
    let report = overhead_report(pa, l, k, subsets.as_deref()).context(ctx)?;
    Ok((groups.plan, report.total as f64 / l as f64))
}

/// Deterministic SINR terms of M-MMSE at the given powers.
pub fn det_terms(drop: &DropSetup, plan: &PilotPlan, p_hat: &[f64], p: &[f64], opts: &DetOptions) -> Result<DetSinrTerms> {
    let ctx = || format!("drop {}, deterministic SINR", drop.index);
    let s2 = drop.cfg.sigma2_ul;
    let stats = EstimationStats::new(&drop.corr, plan, p_hat, s2).context(ctx)?;
    deterministic_sinr(&drop.corr, &stats, plan, p, s2, opts).context(ctx)
}

/// Pilot and data powers of `scheme` for `plan` under a cap of `power_mw`.
pub fn allocate(
    scheme: PowerScheme,
    drop: &DropSetup,
    plan: &PilotPlan,
    power_mw: f64,
    opts: &DetOptions,
) -> Result<Allocation> {
    let ctx = || format!("drop {}, {} power", drop.index, scheme.label());
    let cfg = &drop.cfg;
    let s2 = cfg.sigma2_ul;
    let tau_u = cfg.tau_c.saturating_sub(cfg.tau_d + plan.tau_p);
    let budget = PowerBudget::uniform(plan.users(), power_mw, plan.tau_p, tau_u).context(ctx)?;
    let mut pilot_trace = None;
    let p_hat = if scheme.optimizes_pilots() {
        let r = pilot_power_opt(&drop.corr, plan, &budget, s2, PILOT_TOL, FIXED_POINT_MAX_ITER).context(ctx)?;
        if !r.converged {
            return Err(non_convergence(ctx(), "pilot power alternation", r.iterations, &r.objective));
        }
        pilot_trace = Some(r.objective);
        r.p_hat
    } else {
        budget.cap.clone()
    };
    let p0 = budget.data_cap(&p_hat).context(ctx)?;
    let mut data_trace = None;
    let p = match scheme {
        PowerScheme::Uniform | PowerScheme::PilotOpt => p0,
        PowerScheme::Sumse | PowerScheme::PilotSumse => {
            let terms = det_terms(drop, plan, &p_hat, &p0, opts)?;
            let r = sumse_fixed_point(&terms, &p0, &budget.weights, s2, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER).context(ctx)?;
            if !r.converged {
                return Err(SimError::Core {
                    context: ctx(),
                    source: mimo_core::Error::Convergence {
                        what: "sum-SE fixed point".into(),
                        iterations: r.iterations,
                        residual: r.residuals.last().copied().unwrap_or(f64::NAN),
                    },
                });
            }
            data_trace = Some((r.objective, r.residuals));
            r.p
        }
        PowerScheme::Maxmin | PowerScheme::PilotMaxmin => {
            let terms = det_terms(drop, plan, &p_hat, &p0, opts)?;
            maxmin_bisection(&terms, &p0, s2, BISECTION_TOL).context(ctx)?.p
        }
    };
    if !budget.feasible(&p_hat, &p) {
        return Err(SimError::Core { context: ctx(), source: mimo_core::Error::Numerical("energy budget violated".into()) });
    }
    Ok(Allocation { p_hat, p, budget, pilot_trace, data_trace })
}

fn non_convergence(context: String, what: &str, iterations: usize, objective: &[f64]) -> SimError {
    let residual = match objective {
        [.., a, b] => ((b - a) / b).abs(),
        _ => f64::NAN,
    };
    SimError::Core { context, source: mimo_core::Error::Convergence { what: what.into(), iterations, residual } }
}

struct ArmMeta {
    pa: PaScheme,
    power: PowerScheme,
    combiner: CombinerKind,
    det: Option<DetSinrTerms>,
    exchange: f64,
}

#[derive(Default)]
struct ArmAcc {
    blocks: Vec<f64>,
    drop_means: Vec<f64>,
    users: Vec<f64>,
    det_se: Vec<f64>,
    gaps: Vec<f64>,
    exchange: Vec<f64>,
}

/// Runs every sweep point of `spec` on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let opts = DetOptions { group_estimation_error: spec.group_estimation_error, ..Default::default() };
    let mut out = RunOutput::default();
    for &value in &spec.sweep.values {
        let start = Instant::now();
        let point = spec.point(value)?;
        let (records, traj) = run_point(spec, &point, &opts)?;
        let wall = start.elapsed().as_secs_f64();
        out.records.extend(records.into_iter().map(|mut r| {
            r.wall_clock_s = wall;
            r
        }));
        out.trajectories.extend(traj);
    }
    Ok(out)
}

fn run_point(spec: &ExperimentSpec, point: &PointSpec, opts: &DetOptions) -> Result<(Vec<ResultRecord>, Vec<TrajectoryRow>)> {
    let power_mw = dbm_to_mw(point.power_dbm);
    let cfg = &point.network;
    let mut accs: Vec<ArmAcc> = Vec::new();
    let mut labels: Vec<(PaScheme, PowerScheme, CombinerKind)> = Vec::new();
    let mut traj = Vec::new();
    for d in 0..spec.drops {
        let drop = DropSetup::new(cfg, &point.correlation, spec.seed, d)?;
        let mut arms = Vec::new();
        let mut metas = Vec::new();
        for &pa in &spec.pa_schemes {
            let (plan, exchange) = build_plan(pa, &drop, cfg.tau_p, point.gamma, power_mw, opts)?;
            for &power in &spec.power_schemes {
                let alloc = allocate(power, &drop, &plan, power_mw, opts)?;
                if d == 0 {
                    push_traces(&mut traj, point.value, pa, power, &alloc);
                }
                let want_det = spec.deterministic && spec.combiners.contains(&CombinerKind::Mmmse);
                let det = if want_det { Some(det_terms(&drop, &plan, &alloc.p_hat, &alloc.p, opts)?) } else { None };
                for &combiner in &spec.combiners {
                    arms.push(Arm::new(&drop, plan.clone(), alloc.p_hat.clone(), alloc.p.clone(), combiner)?);
                    let det = if combiner == CombinerKind::Mmmse { det.clone() } else { None };
                    metas.push(ArmMeta { pa, power, combiner, det, exchange });
                }
            }
        }
        let stats = run_drop(&drop, &arms, spec.seed, spec.blocks, spec.chunk_blocks)?;
        if accs.is_empty() {
            accs = (0..arms.len()).map(|_| ArmAcc::default()).collect();
            labels = metas.iter().map(|m| (m.pa, m.power, m.combiner)).collect();
        }
        for ((acc, st), (meta, arm)) in accs.iter_mut().zip(&stats).zip(metas.iter().zip(&arms)) {
            acc.blocks.extend_from_slice(&st.block_sum_se);
            acc.drop_means.push(pairwise_sum(&st.block_sum_se) / st.block_sum_se.len() as f64);
            acc.users.extend_from_slice(&st.user_se);
            acc.exchange.push(meta.exchange);
            if let Some(det) = &meta.det {
                let l = drop.corr.cells() as f64;
                let se: f64 = det.sinr.iter().map(|s| arm.prelog * (1.0 + s).log2()).sum();
                acc.det_se.push(se / l);
                let g: Vec<f64> =
                    det.sinr.iter().zip(&st.user_sinr).map(|(d, m)| (m - d).abs() / d).collect();
                acc.gaps.push(pairwise_sum(&g) / g.len() as f64);
            }
        }
    }
    let mut records = Vec::with_capacity(accs.len());
    for (acc, (pa, power, combiner)) in accs.iter().zip(&labels) {
        let pooled = MeanEstimate::from_samples(&acc.blocks).context(|| "aggregation".into())?;
        let by_drop = if acc.drop_means.len() > 1 {
            Some(MeanEstimate::from_samples(&acc.drop_means).context(|| "aggregation".into())?.std_err)
        } else {
            None
        };
        let mean_of = |x: &[f64]| if x.is_empty() { None } else { Some(pairwise_sum(x) / x.len() as f64) };
        records.push(ResultRecord {
            sweep_axis: spec.sweep.axis.label().into(),
            sweep_value: point.value,
            pa: pa.label().into(),
            combiner: combiner.label().into(),
            power: power.label().into(),
            drops: spec.drops,
            blocks: spec.blocks,
            sum_se_per_cell: pooled.mean,
            sum_se_std_err: pooled.std_err,
            sum_se_drop_std_err: by_drop,
            drop_sum_se: acc.drop_means.clone(),
            per_user_se: acc.users.clone(),
            det_sum_se_per_cell: mean_of(&acc.det_se),
            det_gap: mean_of(&acc.gaps),
            exchange_per_bs: mean_of(&acc.exchange).unwrap_or(0.0),
            wall_clock_s: 0.0,
        });
    }
    Ok((records, traj))
}

fn push_traces(traj: &mut Vec<TrajectoryRow>, value: f64, pa: PaScheme, power: PowerScheme, a: &Allocation) {
    let row = |stage: &str, iteration: usize, objective: f64, residual: Option<f64>| TrajectoryRow {
        sweep_value: value,
        pa: pa.label().into(),
        power: power.label().into(),
        stage: stage.into(),
        iteration,
        objective,
        residual,
    };
    if let Some(obj) = &a.pilot_trace {
        for (i, o) in obj.iter().enumerate() {
            let res = (i > 0).then(|| ((o - obj[i - 1]) / o).abs());
            traj.push(row("pilot", i, *o, res));
        }
    }
    if let Some((obj, res)) = &a.data_trace {
        for (i, o) in obj.iter().enumerate() {
            traj.push(row("data", i, *o, (i > 0).then(|| res[i - 1])));
        }
    }
}
