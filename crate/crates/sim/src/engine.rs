//! Monte Carlo evaluation of several arms on common channel draws.
//!
//! Blocks are split into fixed-size chunks; every chunk draws its channels and
//! pilot noise from streams keyed by (drop, chunk, BS), so arms see the same
//! randomness and results do not depend on how chunks are scheduled.

use mimo_core::channel::{ChannelBatch, ChannelSampler, CorrelationModel, CorrelationSet};
use mimo_core::detect::{pairwise_sum, prelog, user_subset, BsDetector, CombinerKind};
use mimo_core::estimation::{pilot_batch, EstimationStats, PilotPlan};
use mimo_core::geometry::{drop_users, LargeScaleFading, NetworkConfig};
use mimo_core::linalg::CMat;
use mimo_core::rng::{complex_gaussian_matrix, stream, Domain};
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Context, Result};

/// Geometry, correlations and channel sampler of one drop.
#[derive(Clone, Debug)]
pub struct DropSetup {
    pub index: usize,
    pub cfg: NetworkConfig,
    pub lsf: LargeScaleFading,
    pub corr: CorrelationSet,
    pub sampler: ChannelSampler,
}

/// Seed of the user drop `index` under `master`.
pub fn drop_seed(master: u64, index: usize) -> u64 {
    stream(master, Domain::Positions, index as u64, u64::MAX, 0).next_u64()
}

impl DropSetup {
    pub fn new(cfg: &NetworkConfig, model: &CorrelationModel, master: u64, index: usize) -> Result<Self> {
        let ctx = || format!("drop {index}");
        let drop = drop_users(cfg, drop_seed(master, index)).context(ctx)?;
        let lsf = LargeScaleFading::from_drop(cfg, &drop).context(ctx)?;
        Self::from_lsf(cfg, lsf, model, index)
    }

    pub fn from_lsf(cfg: &NetworkConfig, lsf: LargeScaleFading, model: &CorrelationModel, index: usize) -> Result<Self> {
        let ctx = || format!("drop {index}");
        let corr = CorrelationSet::build(cfg.antennas, cfg.users_per_cell, &lsf, model).context(ctx)?;
        Self::from_corr(cfg, lsf, corr, index)
    }

    pub fn from_corr(cfg: &NetworkConfig, lsf: LargeScaleFading, corr: CorrelationSet, index: usize) -> Result<Self> {
        let sampler = ChannelSampler::new(&corr).context(|| format!("drop {index}"))?;
        Ok(DropSetup { index, cfg: cfg.clone(), lsf, corr, sampler })
    }

    /// P-MMSE / scalable-PA user subsets of every BS.
    pub fn subsets(&self, gamma: f64) -> Vec<Vec<usize>> {
        let k = self.cfg.users_per_cell;
        (0..self.corr.cells()).map(|j| user_subset(&self.lsf.beta[j], k, j, gamma)).collect()
    }
}

/// Everything needed to evaluate one (plan, powers, combiner) arm in a drop.
#[derive(Clone, Debug)]
pub struct Arm {
    pub plan: PilotPlan,
    pub p_hat: Vec<f64>,
    pub p: Vec<f64>,
    pub combiner: CombinerKind,
    pub stats: EstimationStats,
    pub prelog: f64,
    detectors: Vec<BsDetector>,
}

impl Arm {
    pub fn new(
        drop: &DropSetup,
        plan: PilotPlan,
        p_hat: Vec<f64>,
        p: Vec<f64>,
        combiner: CombinerKind,
    ) -> Result<Self> {
        let ctx = || format!("drop {}, {} arm", drop.index, combiner.label());
        let cfg = &drop.cfg;
        let s2 = cfg.sigma2_ul;
        let stats = EstimationStats::new(&drop.corr, &plan, &p_hat, s2).context(ctx)?;
        let subsets = match combiner {
            CombinerKind::Pmmse { gamma } => Some(drop.subsets(gamma)),
            _ => None,
        };
        let detectors = (0..drop.corr.cells())
            .map(|j| {
                BsDetector::new(
                    j,
                    combiner,
                    cfg.users_per_cell,
                    &stats.per_bs[j].c,
                    &drop.corr.r[j],
                    &p,
                    s2,
                    subsets.as_ref().map(|s| s[j].as_slice()),
                )
            })
            .collect::<mimo_core::Result<Vec<_>>>()
            .context(ctx)?;
        // Pilots beyond τ_d come out of the uplink data phase.
        let prelog = prelog(cfg.tau_c, cfg.tau_d + plan.tau_p).context(ctx)?;
        Ok(Arm { plan, p_hat, p, combiner, stats, prelog, detectors })
    }
}

/// Monte Carlo outcome of one arm in one drop.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmDropStats {
    /// `prelog·E{log2(1+SINR)}` per user.
    pub user_se: Vec<f64>,
    /// `E{SINR}` per user.
    pub user_sinr: Vec<f64>,
    /// Sum SE per cell of every block, in block order.
    pub block_sum_se: Vec<f64>,
}

struct ChunkOut {
    log_sum: Vec<Vec<f64>>,
    sinr_sum: Vec<Vec<f64>>,
    block_se: Vec<Vec<f64>>,
}

fn run_chunk(drop: &DropSetup, arms: &[Arm], master: u64, chunk: usize, nb: usize) -> Result<ChunkOut> {
    let cfg = &drop.cfg;
    let (l, lk, m) = (drop.corr.cells(), drop.corr.users(), drop.corr.antennas);
    let s2 = cfg.sigma2_ul;
    let tau_max = arms.iter().map(|a| a.plan.tau_p).max().unwrap_or(0);
    let d = drop.index as u64;
    let mut rng = stream(master, Domain::Channels, d, chunk as u64, 0);
    let batch: ChannelBatch = drop.sampler.sample_batch(&mut rng, nb);
    let noise: Vec<Vec<CMat>> = (0..l)
        .map(|j| {
            let mut rng = stream(master, Domain::PilotNoise, d, chunk as u64, j as u64);
            (0..tau_max).map(|_| complex_gaussian_matrix(&mut rng, m, nb, s2)).collect()
        })
        .collect();
    let mut out = ChunkOut {
        log_sum: vec![vec![0.0; lk]; arms.len()],
        sinr_sum: vec![vec![0.0; lk]; arms.len()],
        block_se: vec![vec![0.0; nb]; arms.len()],
    };
    let k = cfg.users_per_cell;
    let mut h_hat = CMat::zeros(m, lk);
    for (ai, arm) in arms.iter().enumerate() {
        let mut block_log = vec![0.0; nb];
        for j in 0..l {
            let ybar = pilot_batch(&batch, j, &arm.plan, &arm.p_hat, &noise[j]);
            let est = arm.stats.per_bs[j].estimate_batch(&ybar);
            for b in 0..nb {
                for (e, he) in est.iter().enumerate() {
                    h_hat.set_column(e, &he.column(b));
                }
                let (_, sinr) = arm.detectors[j]
                    .evaluate(&h_hat)
                    .context(|| format!("drop {}, chunk {chunk}, BS {j}, {} arm", drop.index, arm.combiner.label()))?;
                for (i, s) in sinr.iter().enumerate() {
                    let u = j * k + i;
                    let lg = (1.0 + s).log2();
                    out.log_sum[ai][u] += lg;
                    out.sinr_sum[ai][u] += s;
                    block_log[b] += lg;
                }
            }
        }
        for b in 0..nb {
            out.block_se[ai][b] = arm.prelog * block_log[b] / l as f64;
        }
    }
    Ok(out)
}

/// Runs `blocks` coherence blocks of every arm in the drop. Chunks run on the
/// current rayon pool and are reduced in chunk order.
pub fn run_drop(drop: &DropSetup, arms: &[Arm], master: u64, blocks: usize, chunk_blocks: usize) -> Result<Vec<ArmDropStats>> {
    let lk = drop.corr.users();
    let chunks: Vec<(usize, usize)> =
        (0..blocks.div_ceil(chunk_blocks)).map(|c| (c, chunk_blocks.min(blocks - c * chunk_blocks))).collect();
    let outs = chunks
        .par_iter()
        .map(|&(c, nb)| run_chunk(drop, arms, master, c, nb))
        .collect::<Vec<_>>();
    let mut log_sum = vec![vec![Vec::with_capacity(chunks.len()); lk]; arms.len()];
    let mut sinr_sum = vec![vec![Vec::with_capacity(chunks.len()); lk]; arms.len()];
    let mut block_se = vec![Vec::with_capacity(blocks); arms.len()];
    for o in outs {
        let o = o?;
        for a in 0..arms.len() {
            for u in 0..lk {
                log_sum[a][u].push(o.log_sum[a][u]);
                sinr_sum[a][u].push(o.sinr_sum[a][u]);
            }
            block_se[a].extend_from_slice(&o.block_se[a]);
        }
    }
    let n = blocks as f64;
    Ok((0..arms.len())
        .map(|a| ArmDropStats {
            user_se: log_sum[a].iter().map(|x| arms[a].prelog * pairwise_sum(x) / n).collect(),
            user_sinr: sinr_sum[a].iter().map(|x| pairwise_sum(x) / n).collect(),
            block_sum_se: std::mem::take(&mut block_se[a]),
        })
        .collect())
}
