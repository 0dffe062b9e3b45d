//! Spatial correlation models for a half-wavelength ULA and Rayleigh channel sampling.
//!
//! All kernels use the same phase convention as [`steering_vector`]: a ray
//! arriving from angle `φ` produces the phase `−π·n·cos φ` at antenna `n`, and
//! correlation matrices are `R = β·E[a(φ) a(φ)^H]`.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LargeScaleFading;
use crate::linalg::{self, c, cis, CMat, CVec, C64, ZERO};
use crate::rng::complex_gaussian_matrix;

/// Smallest accepted Gauss–Hermite order.
pub const MIN_QUADRATURE_ORDER: usize = 16;
/// Default Gauss–Hermite order.
pub const DEFAULT_QUADRATURE_ORDER: usize = 50;

/// Array response `a_n = exp(−iπ·n·cos φ)`, `n = 0..M−1`.
pub fn steering_vector(phi: f64, m: usize) -> CVec {
    let step = -PI * phi.cos();
    CVec::from_iterator(m, (0..m).map(|n| cis(step * n as f64)))
}

/// Unitary DFT basis whose column `m` is the normalized steering vector at
/// `cos φ_m = −1 + 2m/M` (0-based).
pub fn dft_basis(m: usize) -> CMat {
    let s = 1.0 / (m as f64).sqrt();
    let mut v = CMat::zeros(m, m);
    for col in 0..m {
        let cphi = -1.0 + 2.0 * col as f64 / m as f64;
        for n in 0..m {
            v[(n, col)] = cis(-PI * cphi * n as f64) * s;
        }
    }
    v
}

/// How the nominal angle of each (BS, user) pair is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalAngle {
    /// Angle of the user as seen from the BS (wrap-around displacement).
    Geometric,
    /// The same fixed angle (radians) for every pair.
    Fixed(f64),
}

/// Spatial correlation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationModel {
    /// Gaussian local scattering around the nominal angle.
    GaussianScattering { asd_deg: f64, quadrature_order: usize, angles: NominalAngle },
    /// `β·r^{|n−m|}·e^{i(n−m)φ̄}`.
    Exponential { r: f64, angles: NominalAngle },
    /// `β·I`.
    Uncorrelated,
}

impl CorrelationModel {
    pub fn gaussian(asd_deg: f64) -> Self {
        CorrelationModel::GaussianScattering {
            asd_deg,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            angles: NominalAngle::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CorrelationModel::GaussianScattering { asd_deg, quadrature_order, .. } => {
                if !(asd_deg > 0.0) || !asd_deg.is_finite() {
                    return Err(Error::Config(format!("ASD must be positive, got {asd_deg}")));
                }
                if quadrature_order < MIN_QUADRATURE_ORDER {
                    return Err(Error::Config(format!(
                        "quadrature order {quadrature_order} below {MIN_QUADRATURE_ORDER}"
                    )));
                }
            }
            CorrelationModel::Exponential { r, .. } => {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config(format!("correlation factor {r} outside [0, 1]")));
                }
            }
            CorrelationModel::Uncorrelated => {}
        }
        Ok(())
    }
}

/// Gauss–Hermite nodes and weights for the standard normal density
/// (Golub–Welsch). Weights sum to one.
pub fn gauss_hermite_normal(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
}

/// Quadrature rule for expectations over a standard normal variable.
#[derive(Clone, Debug)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    /// Gauss–Hermite rule of the given order.
    pub fn gauss_hermite(order: usize) -> Self {
        let (nodes, weights) = gauss_hermite_normal(order);
        NormalRule { nodes, weights }
    }

    /// Equispaced rule on `[−9, 9]` able to integrate `e^{iωx}` against the
    /// normal density for `|ω| ≤ max_freq` to double precision.
    pub fn uniform(max_freq: f64) -> Self {
        let h = 2.0 * PI / (max_freq + 12.0);
        let half = (9.0 / h).ceil() as i64;
        let mut nodes = Vec::with_capacity((2 * half + 1) as usize);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for i in -half..=half {
            let x = i as f64 * h;
            nodes.push(x);
            weights.push((-0.5 * x * x).exp());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        NormalRule { nodes, weights }
    }

    /// The rule used for a Gaussian-scattering kernel on `m` antennas: Gauss–Hermite
    /// of the requested order when it resolves the kernel's highest phase
    /// frequency `π(M−1)σ`, the equispaced rule otherwise.
    pub fn for_kernel(m: usize, asd_rad: f64, order: usize) -> Self {
        let freq = PI * (m.saturating_sub(1)) as f64 * asd_rad;
        if (order as f64) >= gauss_hermite_required_order(freq) {
            NormalRule::gauss_hermite(order)
        } else {
            NormalRule::uniform(freq)
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Hermite order that integrates `e^{iωx}` against the normal density
/// to about 1e−12 absolute error.
pub fn gauss_hermite_required_order(freq: f64) -> f64 {
    0.75 * freq * freq + 2.0 * freq + 16.0
}

/// Toeplitz generator `g(Δ) = E[exp(−iπΔ cos(φ̄ + σx))]`, `Δ = 0..M−1`.
fn gaussian_generator(nominal: f64, asd_rad: f64, m: usize, rule: &NormalRule) -> Vec<C64> {
    let mut g = alloc::vec![ZERO; m];
    for (&x, &w) in rule.nodes.iter().zip(rule.weights.iter()) {
        let step = cis(-PI * (nominal + asd_rad * x).cos());
        let mut z = c(w, 0.0);
        for gd in g.iter_mut() {
            *gd += z;
            z *= step;
        }
    }
    g[0] = c(1.0, 0.0);
    g
}

fn toeplitz_hermitian(beta: f64, g: &[C64]) -> CMat {
    let m = g.len();
    CMat::from_fn(m, m, |n, k| if n >= k { g[n - k] * beta } else { g[k - n].conj() * beta })
}

/// Gaussian local scattering correlation matrix with ASD given in radians.
pub fn gaussian_scattering_matrix(
    beta: f64,
    nominal: f64,
    asd_rad: f64,
    m: usize,
    quadrature_order: usize,
) -> Result<CMat> {
    if !(asd_rad > 0.0) {
        return Err(Error::domain(format!("ASD must be positive, got {asd_rad}")));
    }
    if quadrature_order < MIN_QUADRATURE_ORDER {
        return Err(Error::Config(format!(
            "quadrature order {quadrature_order} below {MIN_QUADRATURE_ORDER}"
        )));
    }
    let rule = NormalRule::for_kernel(m, asd_rad, quadrature_order);
    Ok(toeplitz_hermitian(beta, &gaussian_generator(nominal, asd_rad, m, &rule)))
}

/// Gaussian scattering matrix evaluated with an explicit rule.
pub fn gaussian_scattering_with_rule(beta: f64, nominal: f64, asd_rad: f64, m: usize, rule: &NormalRule) -> CMat {
    toeplitz_hermitian(beta, &gaussian_generator(nominal, asd_rad, m, rule))
}

/// Exponential correlation model `β·r^{|n−m|}·e^{i(n−m)φ̄}`.
pub fn exponential_matrix(beta: f64, nominal: f64, r: f64, m: usize) -> Result<CMat> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("correlation factor {r} outside [0, 1]")));
    }
    let g: Vec<C64> = (0..m).map(|d| cis(d as f64 * nominal) * r.powi(d as i32)).collect();
    Ok(toeplitz_hermitian(beta, &g))
}

/// `Re tr(Ra·Rb)` for Hermitian PSD inputs, clamped at zero.
pub fn trace_product(ra: &CMat, rb: &CMat) -> Result<f64> {
    if ra.shape() != rb.shape() || ra.nrows() != ra.ncols() {
        return Err(Error::dim(format!("trace product of {:?} and {:?}", ra.shape(), rb.shape())));
    }
    Ok(linalg::trace_prod_h(ra, rb).re.max(0.0))
}

/// Correlation matrices `R[j][e]` of every user `e` towards every BS `j`.
#[derive(Clone, Debug)]
pub struct CorrelationSet {
    pub antennas: usize,
    pub users_per_cell: usize,
    pub r: Vec<Vec<CMat>>,
    pub beta: Vec<Vec<f64>>,
    pub nominal: Vec<Vec<f64>>,
}

impl CorrelationSet {
    pub fn build(m: usize, users_per_cell: usize, lsf: &LargeScaleFading, model: &CorrelationModel) -> Result<Self> {
        model.validate()?;
        let rule = match *model {
            CorrelationModel::GaussianScattering { asd_deg, quadrature_order, .. } => {
                Some(NormalRule::for_kernel(m, asd_deg.to_radians(), quadrature_order))
            }
            _ => None,
        };
        let angle_of = |j: usize, e: usize, policy: NominalAngle| match policy {
            NominalAngle::Geometric => lsf.angle[j][e],
            NominalAngle::Fixed(a) => a,
        };
        let mut r = Vec::with_capacity(lsf.cells());
        let mut nominal = Vec::with_capacity(lsf.cells());
        for j in 0..lsf.cells() {
            let mut rj = Vec::with_capacity(lsf.users());
            let mut nj = Vec::with_capacity(lsf.users());
            for e in 0..lsf.users() {
                let beta = lsf.beta[j][e];
                let (mat, phi) = match *model {
                    CorrelationModel::GaussianScattering { asd_deg, angles, .. } => {
                        let phi = angle_of(j, e, angles);
                        let rule = rule.as_ref().expect("rule built for gaussian model");
                        (gaussian_scattering_with_rule(beta, phi, asd_deg.to_radians(), m, rule), phi)
                    }
                    CorrelationModel::Exponential { r, angles } => {
                        let phi = angle_of(j, e, angles);
                        (exponential_matrix(beta, phi, r, m)?, phi)
                    }
                    CorrelationModel::Uncorrelated => (linalg::scaled_identity(m, beta), 0.0),
                };
                rj.push(mat);
                nj.push(phi);
            }
            r.push(rj);
            nominal.push(nj);
        }
        Ok(CorrelationSet { antennas: m, users_per_cell, r, beta: lsf.beta.clone(), nominal })
    }

    /// Wrap explicit matrices; `beta` is read off the mean diagonal.
    pub fn from_matrices(r: Vec<Vec<CMat>>, users_per_cell: usize) -> Result<Self> {
        let m = r.first().and_then(|row| row.first()).map_or(0, |x| x.nrows());
        let lk = r.first().map_or(0, |row| row.len());
        if users_per_cell == 0 || lk % users_per_cell != 0 {
            return Err(Error::dim(format!("{lk} users not divisible by K = {users_per_cell}")));
        }
        for row in &r {
            if row.len() != lk || row.iter().any(|x| x.nrows() != m || x.ncols() != m) {
                return Err(Error::dim("correlation matrices of inconsistent size"));
            }
        }
        let beta = r
            .iter()
            .map(|row| row.iter().map(|x| linalg::trace(x).re / m as f64).collect())
            .collect();
        let nominal = r.iter().map(|row| alloc::vec![0.0; row.len()]).collect();
        Ok(CorrelationSet { antennas: m, users_per_cell, r, beta, nominal })
    }

    pub fn cells(&self) -> usize {
        self.r.len()
    }

    pub fn users(&self) -> usize {
        self.r.first().map_or(0, |row| row.len())
    }
}

/// One channel draw per (BS, user).
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: Vec<Vec<CVec>>,
}

/// Channel draws for a batch of blocks: `h[j][e]` is `M × blocks`.
#[derive(Clone, Debug)]
pub struct ChannelBatch {
    pub blocks: usize,
    pub h: Vec<Vec<CMat>>,
}

/// Pre-factorized `R^{1/2}` for every (BS, user).
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    pub sqrt: Vec<Vec<CMat>>,
}

impl ChannelSampler {
    pub fn new(corr: &CorrelationSet) -> Result<Self> {
        let m = corr.antennas;
        let mut sqrt = Vec::with_capacity(corr.cells());
        for (j, row) in corr.r.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (e, r) in row.iter().enumerate() {
                let (s, min_eig) = linalg::psd_sqrt(r);
                let scale = linalg::trace(r).re.abs() / m.max(1) as f64;
                if min_eig < -1e-10 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Model { bs: j, user: e, min_eig });
                }
                out.push(s);
            }
            sqrt.push(out);
        }
        Ok(ChannelSampler { sqrt })
    }

    pub fn cells(&self) -> usize {
        self.sqrt.len()
    }

    pub fn users(&self) -> usize {
        self.sqrt.first().map_or(0, |r| r.len())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let h = self
            .sqrt
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| {
                        let g = complex_gaussian_matrix(rng, s.nrows(), 1, 1.0);
                        let v = s * g;
                        DVector::from_column_slice(v.as_slice())
                    })
                    .collect()
            })
            .collect();
        ChannelRealization { h }
    }

    pub fn sample_batch<R: rand::Rng + ?Sized>(&self, rng: &mut R, blocks: usize) -> ChannelBatch {
        let h = self
            .sqrt
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| {
                        let g = complex_gaussian_matrix(rng, s.nrows(), blocks, 1.0);
                        s * g
                    })
                    .collect()
            })
            .collect();
        ChannelBatch { blocks, h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector(PI / 2.0, 5);
        assert!(a.iter().all(|z| close(*z, c(1.0, 0.0), 1e-15)));
        let a = steering_vector(0.0, 2);
        assert!(close(a[0], c(1.0, 0.0), 0.0));
        assert!(close(a[1], c(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn grid_steering_vectors_are_orthogonal() {
        let m = 16;
        for p in 0..m {
            for q in 0..m {
                if p == q {
                    continue;
                }
                let cp = -1.0 + 2.0 * p as f64 / m as f64;
                let cq = -1.0 + 2.0 * q as f64 / m as f64;
                let a = steering_vector(cp.acos(), m);
                let b = steering_vector(cq.acos(), m);
                assert!(a.dotc(&b).norm() / (m as f64) < 1e-12, "{p} {q}");
            }
        }
    }

    #[test]
    fn dft_basis_is_unitary() {
        assert!(close(dft_basis(1)[(0, 0)], c(1.0, 0.0), 1e-15));
        let v = dft_basis(64);
        let err = linalg::frobenius(&(v.adjoint() * &v - linalg::identity(64)));
        assert!(err < 1e-10);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite_normal(20);
        let mom = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((mom(0) - 1.0).abs() < 1e-13);
        assert!(mom(1).abs() < 1e-13);
        assert!((mom(2) - 1.0).abs() < 1e-12);
        assert!((mom(4) - 3.0).abs() < 1e-11);
        assert!((mom(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_hermite_order_rule_is_sufficient() {
        for &freq in &[0.5, 2.0, 5.0, 10.0] {
            let order = gauss_hermite_required_order(freq).ceil() as usize;
            let rule = NormalRule::gauss_hermite(order);
            let v: C64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| cis(freq * x) * *w).sum();
            let exact = (-freq * freq / 2.0).exp();
            assert!((v - c(exact, 0.0)).norm() < 1e-10, "freq {freq}: {v} vs {exact}");
        }
    }

    #[test]
    fn uniform_rule_integrates_oscillations() {
        for &freq in &[1.0, 30.0, 120.0, 400.0] {
            let rule = NormalRule::uniform(freq);
            let v: C64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| cis(freq * x) * *w).sum();
            let exact = (-freq * freq / 2.0).exp();
            assert!((v - c(exact, 0.0)).norm() < 1e-12, "freq {freq}");
        }
    }

    #[test]
    fn gaussian_matrix_diagonal_and_hermitian() {
        let r = gaussian_scattering_matrix(2.5, 0.7, 10f64.to_radians(), 32, 50).unwrap();
        for n in 0..32 {
            assert_eq!(r[(n, n)], c(2.5, 0.0));
        }
        assert!(linalg::hermitian_defect(&r) < 1e-15);
        let (vals, _) = linalg::eigh(&r);
        assert!(vals[0] > -1e-10 * 2.5);
        assert!(gaussian_scattering_matrix(1.0, 0.0, 0.0, 4, 50).is_err());
        assert!(matches!(gaussian_scattering_matrix(1.0, 0.0, 0.1, 4, 8), Err(Error::Config(_))));
    }

    #[test]
    fn gaussian_matrix_small_spread_is_nearly_rank_one() {
        let phi = 1.1;
        let r = gaussian_scattering_matrix(1.0, phi, 1e-6, 8, 50).unwrap();
        let a = steering_vector(phi, 8);
        let rank1 = &a * a.adjoint();
        assert!(linalg::frobenius(&(r - rank1)) < 1e-4);
    }

    #[test]
    fn exponential_examples() {
        let r = exponential_matrix(3.0, 0.4, 0.0, 5).unwrap();
        assert!(linalg::frobenius(&(r - linalg::scaled_identity(5, 3.0))) < 1e-15);
        let r = exponential_matrix(2.0, 0.0, 1.0, 4).unwrap();
        assert!(r.iter().all(|z| close(*z, c(2.0, 0.0), 1e-15)));
        let r = exponential_matrix(1.5, 0.3, 0.5, 8).unwrap();
        let (vals, _) = linalg::eigh(&r);
        assert!(vals[0] >= -1e-12);
        assert!((linalg::trace(&r).re - 12.0).abs() < 1e-12);
        assert!(exponential_matrix(1.0, 0.0, 1.5, 4).is_err());
    }

    #[test]
    fn trace_product_examples() {
        let a = gaussian_scattering_matrix(1.0, 0.3, 0.2, 8, 50).unwrap();
        assert_eq!(trace_product(&a, &CMat::zeros(8, 8)).unwrap(), 0.0);
        let v = dft_basis(16);
        let x = v.column(2).into_owned();
        let y = v.column(9).into_owned();
        let ra = &x * x.adjoint();
        let rb = &y * y.adjoint();
        assert!(trace_product(&ra, &rb).unwrap() <= 1e-10);
        assert!(trace_product(&ra, &CMat::zeros(4, 4)).is_err());
    }

    #[test]
    fn sampler_handles_degenerate_matrices() {
        let zero = CMat::zeros(4, 4);
        let v = dft_basis(4).column(1).into_owned();
        let rank1 = &v * v.adjoint() * c(2.0, 0.0);
        let set = CorrelationSet::from_matrices(alloc::vec![alloc::vec![zero, rank1]], 2).unwrap();
        let s = ChannelSampler::new(&set).unwrap();
        let mut rng = crate::rng::stream(1, crate::rng::Domain::Channels, 0, 0, 0);
        for _ in 0..10 {
            let h = s.sample(&mut rng);
            assert!(h.h[0][0].norm() == 0.0);
            let h1 = &h.h[0][1];
            let proj = v.dotc(h1);
            assert!((h1 - &v * proj).norm() < 1e-12 * h1.norm().max(1.0));
        }
    }

    #[test]
    fn sampler_rejects_indefinite_matrix() {
        let mut bad = linalg::identity(3);
        bad[(2, 2)] = c(-0.5, 0.0);
        let set = CorrelationSet::from_matrices(alloc::vec![alloc::vec![bad]], 1).unwrap();
        assert!(matches!(ChannelSampler::new(&set), Err(Error::Model { bs: 0, user: 0, .. })));
    }
}
