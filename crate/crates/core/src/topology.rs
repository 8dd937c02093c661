use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Mat;

// Independent RNG streams carved out of the single top-level seed.
pub(crate) const STREAM_GEOMETRY: u64 = 1;
pub(crate) const STREAM_SHADOWING: u64 = 2;
pub(crate) const STREAM_MONTECARLO_BASE: u64 = 1 << 32;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// System parameters. Powers are linear watts; `noise_power` is the receiver
/// noise floor they are normalised against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub area_side: f64,
    pub d0: f64,
    pub nu: f64,
    pub shadow_std_db: f64,
    pub noise_power: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_pd: usize,
    pub p_ul_pilot: f64,
    pub p_p: f64,
    pub p_s: f64,
    pub p_d: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m: 32,
            n: 32,
            k: 10,
            l: 10,
            area_side: 800.0,
            d0: 1.0,
            nu: 2.4,
            shadow_std_db: 8.0,
            noise_power: 1.0,
            tau_c: 196,
            tau_p: 10,
            tau_pd: 10,
            p_ul_pilot: 1.0,
            p_p: 1.0,
            p_s: 0.5,
            p_d: 1.0,
            seed: 0,
        }
    }
}

/// NOMA user grouping: `a` primary clusters of `k` users, `b` secondary
/// clusters of `l` users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NomaShape {
    pub a: usize,
    pub k: usize,
    pub b: usize,
    pub l: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Oma,
    Noma(NomaShape),
}

impl SystemConfig {
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidConfig(s.to_string()));
        if self.m == 0 || self.n == 0 || self.k == 0 || self.l == 0 {
            return bad("AP and user counts must be positive");
        }
        if !(self.area_side > 0.0) || !(self.d0 > 0.0) || !(self.nu > 0.0) {
            return bad("area_side, d0 and nu must be positive");
        }
        if !(self.shadow_std_db >= 0.0) || !(self.noise_power > 0.0) {
            return bad("shadow_std_db must be >= 0 and noise_power > 0");
        }
        for (name, p) in [
            ("p_ul_pilot", self.p_ul_pilot),
            ("p_p", self.p_p),
            ("p_s", self.p_s),
            ("p_d", self.p_d),
        ] {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be a finite power >= 0")));
            }
        }
        if self.tau_p == 0 || self.tau_p + self.tau_pd >= self.tau_c {
            return Err(Error::Overhead {
                overhead: self.tau_p + self.tau_pd,
                tau_c: self.tau_c,
            });
        }
        let needed = match mode {
            Mode::Oma => self.k.max(self.l),
            Mode::Noma(s) => {
                if s.a * s.k != self.k || s.b * s.l != self.l || s.a == 0 || s.b == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "NOMA shape {}x{} / {}x{} does not cover K={} / L={}",
                        s.a, s.k, s.b, s.l, self.k, self.l
                    )));
                }
                s.a.max(s.b)
            }
        };
        if self.tau_p < needed {
            return Err(Error::PilotLength {
                tau_p: self.tau_p,
                needed,
            });
        }
        Ok(())
    }

    fn norm(&self, p: f64) -> f64 {
        p / self.noise_power
    }

    /// P_P relative to the noise floor.
    pub fn p_p_norm(&self) -> f64 {
        self.norm(self.p_p)
    }

    pub fn p_s_norm(&self) -> f64 {
        self.norm(self.p_s)
    }

    pub fn p_ul_norm(&self) -> f64 {
        self.norm(self.p_ul_pilot)
    }

    /// P_{p,d} = tau_pd * P_d, noise-normalised.
    pub fn p_pd_norm(&self) -> f64 {
        self.tau_pd as f64 * self.norm(self.p_d)
    }
}

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub area_side: f64,
    pub pap_positions: Vec<Point>,
    pub sap_positions: Vec<Point>,
    pub pu_positions: Vec<Point>,
    pub su_positions: Vec<Point>,
}

/// Large-scale fading. zeta_f: M x K, zeta_g: N x L, zeta_u: N x K (S-AP to PU),
/// zeta_v: M x L (P-AP to SU).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    pub zeta_f: Mat,
    pub zeta_g: Mat,
    pub zeta_u: Mat,
    pub zeta_v: Mat,
}

impl LinkGains {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.zeta_f.nrows(),
            self.zeta_g.nrows(),
            self.zeta_f.ncols(),
            self.zeta_g.ncols(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, k, l) = self.dims();
        if self.zeta_u.shape() != (n, k) || self.zeta_v.shape() != (m, l) {
            return Err(Error::Shape("cross-link gain matrices".into()));
        }
        let all = [&self.zeta_f, &self.zeta_g, &self.zeta_u, &self.zeta_v];
        if all.iter().any(|z| z.iter().any(|x| !(*x > 0.0) || !x.is_finite())) {
            return Err(Error::InvalidConfig("large-scale gains must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub delta_p: Mat,
    pub delta_s: Mat,
}

impl ClusterAssignment {
    pub fn full(m: usize, k: usize, n: usize, l: usize) -> Self {
        ClusterAssignment {
            delta_p: Mat::from_element(m, k, 1.0),
            delta_s: Mat::from_element(n, l, 1.0),
        }
    }
}

fn uniform_points(rng: &mut ChaCha8Rng, count: usize, side: f64) -> Vec<Point> {
    (0..count)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect()
}

pub fn generate_topology(cfg: &SystemConfig) -> NetworkGeometry {
    let mut rng = stream_rng(cfg.seed, STREAM_GEOMETRY);
    let side = cfg.area_side;
    let pap_positions = uniform_points(&mut rng, cfg.m, side);
    let sap_positions = uniform_points(&mut rng, cfg.n, side);
    let pu_positions = uniform_points(&mut rng, cfg.k, side);
    let su_positions = uniform_points(&mut rng, cfg.l, side);
    NetworkGeometry {
        area_side: side,
        pap_positions,
        sap_positions,
        pu_positions,
        su_positions,
    }
}

/// zeta = (d0 / max(d, d0))^nu * 10^(phi_db / 10)
pub fn large_scale_gain(d: f64, d0: f64, nu: f64, phi_db: f64) -> f64 {
    (d0 / d.max(d0)).powf(nu) * 10f64.powf(phi_db / 10.0)
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn gain_matrix(
    aps: &[Point],
    users: &[Point],
    cfg: &SystemConfig,
    rng: &mut ChaCha8Rng,
) -> Mat {
    let mut z = Mat::zeros(aps.len(), users.len());
    for (i, ap) in aps.iter().enumerate() {
        for (j, u) in users.iter().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            let phi = cfg.shadow_std_db * g;
            z[(i, j)] = large_scale_gain(dist(ap, u), cfg.d0, cfg.nu, phi);
        }
    }
    z
}

pub fn compute_large_scale(geo: &NetworkGeometry, cfg: &SystemConfig) -> LinkGains {
    let mut rng = stream_rng(cfg.seed, STREAM_SHADOWING);
    let zeta_f = gain_matrix(&geo.pap_positions, &geo.pu_positions, cfg, &mut rng);
    let zeta_g = gain_matrix(&geo.sap_positions, &geo.su_positions, cfg, &mut rng);
    let zeta_u = gain_matrix(&geo.sap_positions, &geo.pu_positions, cfg, &mut rng);
    let zeta_v = gain_matrix(&geo.pap_positions, &geo.su_positions, cfg, &mut rng);
    LinkGains {
        zeta_f,
        zeta_g,
        zeta_u,
        zeta_v,
    }
}

fn top_per_column(z: &Mat, keep: usize) -> Mat {
    let mut delta = Mat::zeros(z.nrows(), z.ncols());
    for c in 0..z.ncols() {
        let mut idx: Vec<usize> = (0..z.nrows()).collect();
        // descending gain, lower AP index first on ties
        idx.sort_by(|&a, &b| z[(b, c)].total_cmp(&z[(a, c)]).then(a.cmp(&b)));
        for &r in idx.iter().take(keep) {
            delta[(r, c)] = 1.0;
        }
    }
    delta
}

/// User-centric clustering: each PU is served by its `m_p` strongest P-APs
/// and each SU by its `n_s` strongest S-APs.
pub fn cluster_aps(gains: &LinkGains, m_p: usize, n_s: usize) -> Result<ClusterAssignment> {
    let (m, n, _, _) = gains.dims();
    if m_p == 0 || m_p > m {
        return Err(Error::ClusterSize { size: m_p, max: m });
    }
    if n_s == 0 || n_s > n {
        return Err(Error::ClusterSize { size: n_s, max: n });
    }
    Ok(ClusterAssignment {
        delta_p: top_per_column(&gains.zeta_f, m_p),
        delta_s: top_per_column(&gains.zeta_g, n_s),
    })
}

/// Co-located baseline: every AP moved to the centre of the area.
pub fn colocate(geo: &NetworkGeometry) -> NetworkGeometry {
    let c = geo.area_side / 2.0;
    NetworkGeometry {
        area_side: geo.area_side,
        pap_positions: vec![[c, c]; geo.pap_positions.len()],
        sap_positions: vec![[c, c]; geo.sap_positions.len()],
        pu_positions: geo.pu_positions.clone(),
        su_positions: geo.su_positions.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_and_decade_gain() {
        assert_eq!(large_scale_gain(1.0, 1.0, 2.4, 0.0), 1.0);
        assert_relative_eq!(large_scale_gain(10.0, 1.0, 2.4, 0.0), 0.003981071705534973, max_relative = 1e-12);
        // closer than d0 is clamped
        assert_eq!(large_scale_gain(0.01, 1.0, 2.4, 0.0), 1.0);
    }

    #[test]
    fn paper_pack_geometry() {
        let cfg = SystemConfig::default();
        let geo = generate_topology(&cfg);
        let all: Vec<_> = geo
            .pap_positions
            .iter()
            .chain(&geo.sap_positions)
            .chain(&geo.pu_positions)
            .chain(&geo.su_positions)
            .collect();
        assert_eq!(all.len(), 84);
        assert!(all.iter().all(|p| (0.0..=800.0).contains(&p[0]) && (0.0..=800.0).contains(&p[1])));
        assert_eq!(geo, generate_topology(&cfg));
    }

    #[test]
    fn unit_area_single_ap() {
        let cfg = SystemConfig { area_side: 1.0, m: 1, n: 1, k: 1, l: 1, ..Default::default() };
        let geo = generate_topology(&cfg);
        assert_eq!(geo.pap_positions.len(), 1);
        let p = geo.pap_positions[0];
        assert!(p[0] <= 1.0 && p[1] <= 1.0);
    }

    #[test]
    fn cluster_by_gain() {
        let z = Mat::from_column_slice(3, 1, &[0.5, 0.2, 0.9]);
        let gains = LinkGains {
            zeta_f: z.clone(),
            zeta_g: z.clone(),
            zeta_u: z.clone(),
            zeta_v: z,
        };
        let c = cluster_aps(&gains, 2, 3).unwrap();
        assert_eq!(c.delta_p.as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(c.delta_s.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn cluster_tie_goes_to_lower_index() {
        let z = Mat::from_column_slice(3, 1, &[0.3, 0.7, 0.7]);
        let gains = LinkGains {
            zeta_f: z.clone(),
            zeta_g: z.clone(),
            zeta_u: z.clone(),
            zeta_v: z,
        };
        let c = cluster_aps(&gains, 1, 1).unwrap();
        assert_eq!(c.delta_p.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(cluster_aps(&gains, 0, 1).is_err());
        assert!(cluster_aps(&gains, 4, 1).is_err());
    }

    #[test]
    fn colocate_centre_and_idempotent() {
        let cfg = SystemConfig::default();
        let geo = generate_topology(&cfg);
        let co = colocate(&geo);
        assert!(co.pap_positions.iter().chain(&co.sap_positions).all(|p| *p == [400.0, 400.0]));
        assert_eq!(co.pu_positions, geo.pu_positions);
        assert_eq!(co.su_positions, geo.su_positions);
        assert_eq!(colocate(&co), co);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let ok = SystemConfig::default();
        assert!(ok.validate(Mode::Oma).is_ok());
        let short = SystemConfig { tau_p: 5, ..ok.clone() };
        assert!(matches!(short.validate(Mode::Oma), Err(Error::PilotLength { .. })));
        let long = SystemConfig { tau_p: 100, tau_pd: 96, ..ok.clone() };
        assert!(matches!(long.validate(Mode::Oma), Err(Error::Overhead { .. })));
        let shape = NomaShape { a: 5, k: 2, b: 5, l: 2 };
        assert!(ok.validate(Mode::Noma(shape)).is_ok());
        let bad_shape = NomaShape { a: 3, k: 2, b: 5, l: 2 };
        assert!(ok.validate(Mode::Noma(bad_shape)).is_err());
    }
}
