use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, KvFile};
use crate::scalar::Scalar;

/// Magic-formula shape coefficients of one axle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireCoeffs<S = f64> {
    pub b: S,
    pub c: S,
    pub d: S,
    pub e: S,
}

/// Single-track, tire and actuator parameters.
///
/// Generic so the same model can be evaluated on plain floats and on
/// tape variables during identification. Steering and wheel-speed limits
/// are plain constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<S = f64> {
    /// Mass (kg).
    pub m: S,
    /// Yaw inertia (kg·m²).
    pub iz: S,
    /// CoG to front axle (m).
    pub lf: S,
    /// CoG to rear axle (m).
    pub lr: S,
    /// Effective wheel radius (m).
    pub r_w: S,
    /// Tire-track friction scale.
    pub mu: S,
    pub front: TireCoeffs<S>,
    pub rear: TireCoeffs<S>,
    /// Steering servo time constant (s).
    pub t_delta: S,
    /// Wheel-speed controller time constant (s).
    pub t_omega: S,
    /// Aerodynamic drag (N·s²/m²).
    pub c_drag: S,
    /// Rolling resistance (N).
    pub c_roll: S,
    pub delta_max: f64,
    pub omega_max: f64,
}

/// Nominal 1/8-scale car. Placeholder values to be replaced by an
/// identified parameter file.
impl Default for VehicleParams<f64> {
    fn default() -> Self {
        Self {
            m: 3.3,
            iz: 0.045,
            lf: 0.16,
            lr: 0.17,
            r_w: 0.05,
            mu: 1.0,
            front: TireCoeffs { b: 5.0, c: 1.5, d: 1.0, e: 0.3 },
            rear: TireCoeffs { b: 5.5, c: 1.5, d: 1.0, e: 0.3 },
            t_delta: 0.1,
            t_omega: 0.1,
            c_drag: 0.1,
            c_roll: 0.5,
            delta_max: 0.5,
            omega_max: 160.0,
        }
    }
}

/// Scalar parameters addressable by name (for files, randomization and
/// identification).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    M,
    Iz,
    Lf,
    Lr,
    RW,
    Mu,
    TireBF,
    TireCF,
    TireDF,
    TireEF,
    TireBR,
    TireCR,
    TireDR,
    TireER,
    TDelta,
    TOmega,
    CDrag,
    CRoll,
}

impl ParamId {
    pub const ALL: [ParamId; 18] = [
        ParamId::M,
        ParamId::Iz,
        ParamId::Lf,
        ParamId::Lr,
        ParamId::RW,
        ParamId::Mu,
        ParamId::TireBF,
        ParamId::TireCF,
        ParamId::TireDF,
        ParamId::TireEF,
        ParamId::TireBR,
        ParamId::TireCR,
        ParamId::TireDR,
        ParamId::TireER,
        ParamId::TDelta,
        ParamId::TOmega,
        ParamId::CDrag,
        ParamId::CRoll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::M => "m",
            ParamId::Iz => "iz",
            ParamId::Lf => "lf",
            ParamId::Lr => "lr",
            ParamId::RW => "r_w",
            ParamId::Mu => "mu",
            ParamId::TireBF => "tire_b_f",
            ParamId::TireCF => "tire_c_f",
            ParamId::TireDF => "tire_d_f",
            ParamId::TireEF => "tire_e_f",
            ParamId::TireBR => "tire_b_r",
            ParamId::TireCR => "tire_c_r",
            ParamId::TireDR => "tire_d_r",
            ParamId::TireER => "tire_e_r",
            ParamId::TDelta => "t_delta",
            ParamId::TOmega => "t_omega",
            ParamId::CDrag => "c_drag",
            ParamId::CRoll => "c_roll",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl<S: Copy> VehicleParams<S> {
    pub fn get(&self, id: ParamId) -> S {
        match id {
            ParamId::M => self.m,
            ParamId::Iz => self.iz,
            ParamId::Lf => self.lf,
            ParamId::Lr => self.lr,
            ParamId::RW => self.r_w,
            ParamId::Mu => self.mu,
            ParamId::TireBF => self.front.b,
            ParamId::TireCF => self.front.c,
            ParamId::TireDF => self.front.d,
            ParamId::TireEF => self.front.e,
            ParamId::TireBR => self.rear.b,
            ParamId::TireCR => self.rear.c,
            ParamId::TireDR => self.rear.d,
            ParamId::TireER => self.rear.e,
            ParamId::TDelta => self.t_delta,
            ParamId::TOmega => self.t_omega,
            ParamId::CDrag => self.c_drag,
            ParamId::CRoll => self.c_roll,
        }
    }

    pub fn set(&mut self, id: ParamId, v: S) {
        let slot = match id {
            ParamId::M => &mut self.m,
            ParamId::Iz => &mut self.iz,
            ParamId::Lf => &mut self.lf,
            ParamId::Lr => &mut self.lr,
            ParamId::RW => &mut self.r_w,
            ParamId::Mu => &mut self.mu,
            ParamId::TireBF => &mut self.front.b,
            ParamId::TireCF => &mut self.front.c,
            ParamId::TireDF => &mut self.front.d,
            ParamId::TireEF => &mut self.front.e,
            ParamId::TireBR => &mut self.rear.b,
            ParamId::TireCR => &mut self.rear.c,
            ParamId::TireDR => &mut self.rear.d,
            ParamId::TireER => &mut self.rear.e,
            ParamId::TDelta => &mut self.t_delta,
            ParamId::TOmega => &mut self.t_omega,
            ParamId::CDrag => &mut self.c_drag,
            ParamId::CRoll => &mut self.c_roll,
        };
        *slot = v;
    }

    /// Builds a parameter set of another scalar type field by field.
    pub fn map<T: Copy>(&self, mut f: impl FnMut(ParamId, S) -> T) -> VehicleParams<T> {
        let mut g = |id| f(id, self.get(id));
        VehicleParams {
            m: g(ParamId::M),
            iz: g(ParamId::Iz),
            lf: g(ParamId::Lf),
            lr: g(ParamId::Lr),
            r_w: g(ParamId::RW),
            mu: g(ParamId::Mu),
            front: TireCoeffs {
                b: g(ParamId::TireBF),
                c: g(ParamId::TireCF),
                d: g(ParamId::TireDF),
                e: g(ParamId::TireEF),
            },
            rear: TireCoeffs {
                b: g(ParamId::TireBR),
                c: g(ParamId::TireCR),
                d: g(ParamId::TireDR),
                e: g(ParamId::TireER),
            },
            t_delta: g(ParamId::TDelta),
            t_omega: g(ParamId::TOmega),
            c_drag: g(ParamId::CDrag),
            c_roll: g(ParamId::CRoll),
            delta_max: self.delta_max,
            omega_max: self.omega_max,
        }
    }
}

impl<S: Scalar> VehicleParams<S> {
    pub fn values(&self) -> VehicleParams<f64> {
        self.map(|_, v| v.value())
    }
}

impl VehicleParams<f64> {
    pub fn lift<S: Scalar>(&self) -> VehicleParams<S> {
        self.map(|_, v| S::cst(v))
    }

    pub fn validate(&self) -> Result<()> {
        for id in [
            ParamId::M,
            ParamId::Iz,
            ParamId::Lf,
            ParamId::Lr,
            ParamId::RW,
            ParamId::Mu,
            ParamId::TDelta,
            ParamId::TOmega,
            ParamId::TireBF,
            ParamId::TireBR,
            ParamId::TireDF,
            ParamId::TireDR,
        ] {
            let v = self.get(id);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{} must be positive, got {v}", id.name())));
            }
        }
        for id in [ParamId::TireCF, ParamId::TireCR] {
            let v = self.get(id);
            if !(v > 1.0 && v <= 2.0) {
                return Err(Error::Config(format!("{} must lie in (1, 2], got {v}", id.name())));
            }
        }
        for id in [ParamId::CDrag, ParamId::CRoll] {
            if !(self.get(id) >= 0.0 && self.get(id).is_finite()) {
                return Err(Error::Config(format!("{} must be non-negative", id.name())));
            }
        }
        if !(self.front.e.is_finite() && self.rear.e.is_finite()) {
            return Err(Error::Config("tire_e must be finite".into()));
        }
        if !(self.delta_max > 0.0 && self.omega_max > 0.0) {
            return Err(Error::Config("delta_max and omega_max must be positive".into()));
        }
        Ok(())
    }

    /// Applies `name = value` entries on top of `self`.
    pub fn apply_kv(&mut self, kv: &KvFile) -> Result<()> {
        let mut known: Vec<&str> = ParamId::ALL.iter().map(|p| p.name()).collect();
        known.extend(["delta_max", "omega_max"]);
        kv.check_known(&known)?;
        for id in ParamId::ALL {
            if let Some(v) = kv.get::<f64>(id.name())? {
                self.set(id, v);
            }
        }
        kv.set_if("delta_max", &mut self.delta_max)?;
        kv.set_if("omega_max", &mut self.omega_max)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Self::default();
        p.apply_kv(&KvFile::parse(text)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(&str, String)> = ParamId::ALL
            .iter()
            .map(|&id| (id.name(), kv::fmt_f64(self.get(id))))
            .collect();
        pairs.push(("delta_max", kv::fmt_f64(self.delta_max)));
        pairs.push(("omega_max", kv::fmt_f64(self.omega_max)));
        kv::render(pairs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
