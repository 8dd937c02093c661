use serde::{Deserialize, Serialize};

use cfshare_core::{CrossTermForm, Mode, NomaShape, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    #[default]
    Oma,
    Noma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Csi {
    #[default]
    Statistical,
    Dlpilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    #[default]
    Uniform,
    Maxmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    PPDbw,
    ITDb,
    Users,
    Aps,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::PPDbw => "p_p_dbw",
            SweepAxis::ITDb => "i_t_db",
            SweepAxis::Users => "users",
            SweepAxis::Aps => "aps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Flat experiment description. In NOMA mode `k`/`l` are cluster sizes and
/// `a`/`b` cluster counts; in OMA mode `k`/`l` are the user counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub mode: Access,
    pub csi: Csi,
    pub allocation: Allocation,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub format: Format,

    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub a: usize,
    pub b: usize,
    /// shared pilots; defaults to full sharing
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// APs serving each PU / SU; all of them when unset
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_s: Option<usize>,

    pub area_side: f64,
    pub d0: f64,
    pub nu: f64,
    pub shadow_std_db: f64,
    pub noise_power_dbw: f64,
    pub tau_c: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_pd: Option<usize>,

    pub p_ul_pilot_dbw: f64,
    pub p_p_dbw: f64,
    pub p_s_ratio: f64,
    pub p_d_dbw: f64,
    /// interference threshold at every PU, dB above the noise floor
    pub i_t_db: f64,

    pub sic_theta: f64,
    pub colocated: bool,
    pub noma_lambda_contamination: bool,
    pub cross_terms: CrossTermForm,
    pub epsilon: f64,
    pub rel_tol: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            mode: Access::Oma,
            csi: Csi::Statistical,
            allocation: Allocation::Uniform,
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
            trials: 100_000,
            seed: 0,
            output: None,
            format: Format::Csv,
            m: 32,
            n: 32,
            k: 10,
            l: 10,
            a: 5,
            b: 5,
            q: None,
            m_p: None,
            n_s: None,
            area_side: 800.0,
            d0: 1.0,
            nu: 2.4,
            shadow_std_db: 8.0,
            noise_power_dbw: -60.0,
            tau_c: 196,
            tau_p: None,
            tau_pd: None,
            p_ul_pilot_dbw: 0.0,
            p_p_dbw: 0.0,
            p_s_ratio: 0.5,
            p_d_dbw: 0.0,
            i_t_db: 0.0,
            sic_theta: 1.0,
            colocated: false,
            noma_lambda_contamination: false,
            cross_terms: CrossTermForm::Coherent,
            epsilon: 1e-3,
            rel_tol: 0.02,
        }
    }
}

fn dbw(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always representable")
    }

    pub fn shape(&self) -> NomaShape {
        NomaShape { a: self.a, k: self.k, b: self.b, l: self.l }
    }

    pub fn core_mode(&self) -> Mode {
        match self.mode {
            Access::Oma => Mode::Oma,
            Access::Noma => Mode::Noma(self.shape()),
        }
    }

    /// Total PUs and SUs.
    pub fn users(&self) -> (usize, usize) {
        match self.mode {
            Access::Oma => (self.k, self.l),
            Access::Noma => (self.a * self.k, self.b * self.l),
        }
    }

    /// Pilot-carrying groups per system: users in OMA, clusters in NOMA.
    pub fn pilot_groups(&self) -> (usize, usize) {
        match self.mode {
            Access::Oma => (self.k, self.l),
            Access::Noma => (self.a, self.b),
        }
    }

    pub fn q(&self) -> usize {
        let (x, y) = self.pilot_groups();
        self.q.unwrap_or(x.min(y))
    }

    pub fn tau_p(&self) -> usize {
        let (x, y) = self.pilot_groups();
        self.tau_p.unwrap_or(x.max(y))
    }

    pub fn tau_pd(&self) -> usize {
        let (x, y) = self.pilot_groups();
        self.tau_pd.unwrap_or(x.max(y))
    }

    pub fn noise_power(&self) -> f64 {
        dbw(self.noise_power_dbw)
    }

    /// Interference threshold over the noise floor.
    pub fn i_t_norm(&self) -> f64 {
        dbw(self.i_t_db)
    }

    pub fn system_config(&self) -> SystemConfig {
        let (k, l) = self.users();
        let p_p = dbw(self.p_p_dbw);
        SystemConfig {
            m: self.m,
            n: self.n,
            k,
            l,
            area_side: self.area_side,
            d0: self.d0,
            nu: self.nu,
            shadow_std_db: self.shadow_std_db,
            noise_power: self.noise_power(),
            tau_c: self.tau_c,
            tau_p: self.tau_p(),
            tau_pd: self.tau_pd(),
            p_ul_pilot: dbw(self.p_ul_pilot_dbw),
            p_p,
            p_s: self.p_s_ratio * p_p,
            p_d: dbw(self.p_d_dbw),
            seed: self.seed,
        }
    }

    /// Copy with one sweep value applied.
    pub fn at(&self, value: f64) -> Result<Self, String> {
        let mut s = self.clone();
        let count = |v: f64| -> Result<usize, String> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(format!("sweep value {v} is not a positive integer"))
            }
        };
        match self.sweep_axis {
            SweepAxis::None => {}
            SweepAxis::PPDbw => s.p_p_dbw = value,
            SweepAxis::ITDb => s.i_t_db = value,
            SweepAxis::Users => {
                let v = count(value)?;
                match self.mode {
                    Access::Oma => {
                        s.k = v;
                        s.l = v;
                    }
                    Access::Noma => {
                        if v % self.k != 0 || v % self.l != 0 {
                            return Err(format!("{v} users do not fill clusters of {} / {}", self.k, self.l));
                        }
                        s.a = v / self.k;
                        s.b = v / self.l;
                    }
                }
                s.q = self.q.map(|q| q.min(v));
            }
            SweepAxis::Aps => {
                let v = count(value)?;
                s.m = v;
                s.n = v;
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.mode == Access::Noma && self.allocation == Allocation::Maxmin {
            return Err("max-min power control is defined for OMA only".into());
        }
        if !(self.p_s_ratio >= 0.0) {
            return Err("p_s_ratio must be nonnegative".into());
        }
        if !(self.rel_tol >= 0.0) {
            return Err("rel_tol must be nonnegative".into());
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(format!("sweep over {} has no values", self.sweep_axis.label()));
        }
        self.system_config().validate(self.core_mode()).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentSpec::from_toml("m = 4\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn defaults_fill_in() {
        let s = ExperimentSpec::from_toml("mode = \"noma\"\na = 2\nk = 2\nb = 2\nl = 2\n").unwrap();
        assert_eq!(s.users(), (4, 4));
        assert_eq!(s.q(), 2);
        assert_eq!(s.tau_p(), 2);
        assert_eq!(s.system_config().k, 4);
    }

    #[test]
    fn round_trip() {
        let mut s = ExperimentSpec { q: Some(1), sweep_axis: SweepAxis::ITDb, ..Default::default() };
        s.sweep_values = vec![-20.0, 0.5, 30.0];
        let back = ExperimentSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn sweep_application() {
        let s = ExperimentSpec { mode: Access::Noma, k: 2, l: 2, sweep_axis: SweepAxis::Users, ..Default::default() };
        let p = s.at(6.0).unwrap();
        assert_eq!((p.a, p.b), (3, 3));
        assert!(s.at(5.0).is_err());
        assert!(s.at(2.5).is_err());
        let s = ExperimentSpec { sweep_axis: SweepAxis::Aps, ..Default::default() };
        assert_eq!(s.at(16.0).unwrap().n, 16);
    }

    #[test]
    fn noma_maxmin_rejected() {
        let s = ExperimentSpec { mode: Access::Noma, allocation: Allocation::Maxmin, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
