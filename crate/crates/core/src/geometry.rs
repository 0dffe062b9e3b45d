//! Square-grid network layout, user drops with a wrap-around torus, and
//! large-scale fading.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Pathloss at 1 km in dB.
pub const PATHLOSS_AT_1KM_DB: f64 = -148.1;
/// Pathloss slope in dB per decade of distance.
pub const PATHLOSS_SLOPE_DB: f64 = 37.6;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    linear_to_db(mw)
}

/// Large-scale gain in dB at distance `d_km` with shadowing `z_db`.
pub fn pathloss_db(d_km: f64, z_db: f64) -> Result<f64> {
    if !(d_km > 0.0) || !d_km.is_finite() {
        return Err(Error::domain(format!("pathloss distance must be positive, got {d_km}")));
    }
    Ok(PATHLOSS_AT_1KM_DB - PATHLOSS_SLOPE_DB * d_km.log10() + z_db)
}

/// Flattened 1-based user index `e = (l−1)K + k` for 1-based `(l, k)`.
pub fn flatten_index(l: usize, k: usize, k_per_cell: usize, cells: usize) -> Result<usize> {
    if l == 0 || l > cells || k == 0 || k > k_per_cell {
        return Err(Error::domain(format!(
            "user ({l}, {k}) outside {cells} cells x {k_per_cell} users"
        )));
    }
    Ok((l - 1) * k_per_cell + k)
}

/// Static description of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of cells `L`.
    pub cells: usize,
    /// Users per cell `K`.
    pub users_per_cell: usize,
    /// BS antennas `M`.
    pub antennas: usize,
    pub cell_side_km: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub wrap_around: bool,
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_u: usize,
    pub tau_d: usize,
    /// Uplink noise power in mW.
    pub sigma2_ul: f64,
    /// Downlink noise power in mW.
    pub sigma2_dl: f64,
    pub bandwidth_hz: f64,
    pub min_distance_km: f64,
    pub shadowing_std_db: f64,
    pub rng_seed: u64,
}

impl NetworkConfig {
    /// 2×2 grid of 0.5 km cells, 20 MHz, −94 dBm noise, τ_c = 200 split evenly
    /// between uplink (pilots + data) and downlink.
    pub fn with_dims(cells_rows: usize, cells_cols: usize, k: usize, m: usize, tau_p: usize) -> Self {
        let tau_c = 200;
        let tau_d = tau_c / 2;
        NetworkConfig {
            cells: cells_rows * cells_cols,
            users_per_cell: k,
            antennas: m,
            cell_side_km: 0.5,
            grid_rows: cells_rows,
            grid_cols: cells_cols,
            wrap_around: true,
            tau_c,
            tau_p,
            tau_u: tau_c - tau_d - tau_p,
            tau_d,
            sigma2_ul: dbm_to_mw(-94.0),
            sigma2_dl: dbm_to_mw(-94.0),
            bandwidth_hz: 20e6,
            min_distance_km: 0.035,
            shadowing_std_db: 10.0,
            rng_seed: 0,
        }
    }

    /// Total number of users `LK`.
    pub fn total_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Serving cell of flattened user `e`.
    pub fn cell_of(&self, e: usize) -> usize {
        e / self.users_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: alloc::string::String| Err(Error::Config(m));
        let msg = |m: &str| alloc::string::String::from(m);
        if self.cells == 0 || self.users_per_cell == 0 || self.antennas == 0 {
            return err(format!(
                "L, K, M must be positive (got {}, {}, {})",
                self.cells, self.users_per_cell, self.antennas
            ));
        }
        if self.grid_rows * self.grid_cols != self.cells {
            return err(format!(
                "grid {}x{} does not hold {} cells",
                self.grid_rows, self.grid_cols, self.cells
            ));
        }
        if self.tau_p + self.tau_u + self.tau_d != self.tau_c {
            return err(format!(
                "tau_p + tau_u + tau_d = {} differs from tau_c = {}",
                self.tau_p + self.tau_u + self.tau_d,
                self.tau_c
            ));
        }
        if self.tau_p == 0 || self.tau_p > self.total_users() {
            return err(format!("tau_p = {} must lie in [1, LK = {}]", self.tau_p, self.total_users()));
        }
        if !(self.cell_side_km > 0.0) || !(self.min_distance_km > 0.0) {
            return err(msg("cell side and min distance must be positive"));
        }
        if 2.0 * self.min_distance_km >= self.cell_side_km {
            return err(format!(
                "min distance {} km leaves no room in a {} km cell",
                self.min_distance_km, self.cell_side_km
            ));
        }
        if !(self.sigma2_ul > 0.0) || !(self.sigma2_dl > 0.0) {
            return err(msg("noise powers must be positive"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return err(msg("shadowing std must be non-negative"));
        }
        Ok(())
    }

    /// Position of BS `l` (cell center), in km.
    pub fn bs_position(&self, l: usize) -> [f64; 2] {
        let r = l / self.grid_cols;
        let c = l % self.grid_cols;
        [(c as f64 + 0.5) * self.cell_side_km, (r as f64 + 0.5) * self.cell_side_km]
    }

    fn extent(&self) -> [f64; 2] {
        [self.grid_cols as f64 * self.cell_side_km, self.grid_rows as f64 * self.cell_side_km]
    }

    /// Shortest displacement from `a` to `b`, over torus images when wrap-around is on.
    pub fn displacement(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let direct = [b[0] - a[0], b[1] - a[1]];
        if !self.wrap_around {
            return direct;
        }
        let ext = self.extent();
        let mut best = direct;
        let mut best_d = f64::INFINITY;
        for sx in [-1.0, 0.0, 1.0] {
            for sy in [-1.0, 0.0, 1.0] {
                let d = [direct[0] + sx * ext[0], direct[1] + sy * ext[1]];
                let n = d[0].hypot(d[1]);
                if n < best_d {
                    best_d = n;
                    best = d;
                }
            }
        }
        best
    }

    /// Distance between two points, taking wrap-around into account.
    pub fn wrap_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = self.displacement(a, b);
        d[0].hypot(d[1])
    }
}

/// Wrap-around distance on a torus of the given extent (km).
pub fn wrap_distance(a: [f64; 2], b: [f64; 2], extent: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = b[0] + sx * extent[0] - a[0];
            let dy = b[1] + sy * extent[1] - a[1];
            best = best.min(dx.hypot(dy));
        }
    }
    best
}

/// One realization of user positions and shadowing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserDrop {
    /// Position of every user (flattened index), km.
    pub positions: Vec<[f64; 2]>,
    /// Serving cell of every user.
    pub serving: Vec<usize>,
    /// Shadowing in dB, `shadowing[j][e]` towards BS `j`.
    pub shadowing_db: Vec<Vec<f64>>,
}

/// Drop `K` users uniformly in every cell, at least `min_distance_km` from the serving BS.
pub fn drop_users(cfg: &NetworkConfig, seed: u64) -> Result<UserDrop> {
    cfg.validate()?;
    let lk = cfg.total_users();
    let side = cfg.cell_side_km;
    let mut pos_rng = rng::stream(seed, Domain::Positions, 0, 0, 0);
    let mut positions = Vec::with_capacity(lk);
    let mut serving = Vec::with_capacity(lk);
    for e in 0..lk {
        let l = cfg.cell_of(e);
        let bs = cfg.bs_position(l);
        let origin = [bs[0] - side / 2.0, bs[1] - side / 2.0];
        loop {
            let p = [
                origin[0] + side * pos_rng.random::<f64>(),
                origin[1] + side * pos_rng.random::<f64>(),
            ];
            if (p[0] - bs[0]).hypot(p[1] - bs[1]) >= cfg.min_distance_km {
                positions.push(p);
                break;
            }
        }
        serving.push(l);
    }
    let mut sh_rng = rng::stream(seed, Domain::Shadowing, 0, 0, 0);
    let shadowing_db = (0..cfg.cells)
        .map(|_| (0..lk).map(|_| cfg.shadowing_std_db * rng::standard_normal(&mut sh_rng)).collect())
        .collect();
    Ok(UserDrop { positions, serving, shadowing_db })
}

/// Large-scale fading of one drop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleFading {
    /// Linear gain `beta[j][e]` from user `e` to BS `j`.
    pub beta: Vec<Vec<f64>>,
    /// Wrap-around distance `dist_km[j][e]`.
    pub dist_km: Vec<Vec<f64>>,
    /// Angle of user `e` seen from BS `j`, radians in `(−π, π]`.
    pub angle: Vec<Vec<f64>>,
}

impl LargeScaleFading {
    pub fn from_drop(cfg: &NetworkConfig, drop: &UserDrop) -> Result<Self> {
        let lk = cfg.total_users();
        if drop.positions.len() != lk || drop.shadowing_db.len() != cfg.cells {
            return Err(Error::dim("drop does not match network configuration"));
        }
        let mut beta = Vec::with_capacity(cfg.cells);
        let mut dist_km = Vec::with_capacity(cfg.cells);
        let mut angle = Vec::with_capacity(cfg.cells);
        for j in 0..cfg.cells {
            let bs = cfg.bs_position(j);
            let mut b = Vec::with_capacity(lk);
            let mut d = Vec::with_capacity(lk);
            let mut a = Vec::with_capacity(lk);
            for e in 0..lk {
                let disp = cfg.displacement(bs, drop.positions[e]);
                let dist = disp[0].hypot(disp[1]);
                b.push(db_to_linear(pathloss_db(dist, drop.shadowing_db[j][e])?));
                d.push(dist);
                a.push(disp[1].atan2(disp[0]));
            }
            beta.push(b);
            dist_km.push(d);
            angle.push(a);
        }
        Ok(LargeScaleFading { beta, dist_km, angle })
    }

    /// Build directly from a gain table (angles zero, distances unknown).
    pub fn from_betas(beta: Vec<Vec<f64>>) -> Self {
        let angle = beta.iter().map(|r| alloc::vec![0.0; r.len()]).collect();
        let dist_km = beta.iter().map(|r| alloc::vec![f64::NAN; r.len()]).collect();
        LargeScaleFading { beta, dist_km, angle }
    }

    pub fn cells(&self) -> usize {
        self.beta.len()
    }

    pub fn users(&self) -> usize {
        self.beta.first().map_or(0, |r| r.len())
    }
}
