//! Problem definitions: equations, parameters, boundary data and the
//! manufactured solution used for verification.

use serde::{Deserialize, Serialize};

use crate::mesh::{Point, Side};
use crate::{Error, Result};

/// Which equations a run integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Navier-Stokes with the rotation term; generates observations.
    NseDns,
    /// Navier-Stokes without rotation, nudged toward observations.
    NseNudged,
    BoussinesqDns,
    BoussinesqNudged,
}

impl ModelKind {
    pub fn is_boussinesq(self) -> bool {
        matches!(self, ModelKind::BoussinesqDns | ModelKind::BoussinesqNudged)
    }

    pub fn is_nudged(self) -> bool {
        matches!(self, ModelKind::NseNudged | ModelKind::BoussinesqNudged)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundarySpec {
    /// Exact trace of the manufactured velocity.
    Manufactured,
    /// No-slip walls; for Boussinesq runs hot left wall, cold right wall,
    /// adiabatic top and bottom.
    Cavity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingSpec {
    /// Body force computed from the manufactured solution.
    Manufactured,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Kinematic viscosity (NSE kinds).
    pub nu: f64,
    /// Prandtl number (Boussinesq kinds); also the momentum diffusion coefficient.
    pub pr: f64,
    pub ra: f64,
    /// Rotation rate; acts only in the DNS kinds.
    pub omega: f64,
    /// Nudging strength; acts only in the nudged kinds.
    pub chi: f64,
    pub gravity: [f64; 2],
    pub boundary: BoundarySpec,
    pub forcing: ForcingSpec,
    /// Constant heat source.
    pub gamma: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl ModelSpec {
    /// Manufactured flow with `nu = omega = 1`, `chi = 100`, `t in [0, 2]`.
    pub fn manufactured(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            nu: 1.0,
            pr: 0.0,
            ra: 0.0,
            omega: 1.0,
            chi: 100.0,
            gravity: [0.0, 1.0],
            boundary: BoundarySpec::Manufactured,
            forcing: ForcingSpec::Manufactured,
            gamma: 0.0,
            t_final: 2.0,
            dt: 0.125,
        }
    }

    /// Differentially heated cavity at `Pr = 0.71`, `Ra = 1e4`, `omega = 5e6`, `dt = 1e-3`.
    pub fn cavity(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            nu: 0.0,
            pr: 0.71,
            ra: 1e4,
            omega: 5e6,
            chi: 1.0,
            gravity: [0.0, 1.0],
            boundary: BoundarySpec::Cavity,
            forcing: ForcingSpec::Zero,
            gamma: 0.0,
            t_final: 50.0,
            dt: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonnegative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
            }
        };
        if self.kind.is_boussinesq() {
            positive("pr", self.pr)?;
            nonnegative("ra", self.ra)?;
            if self.boundary != BoundarySpec::Cavity {
                return Err(Error::Config("Boussinesq runs require the cavity boundary".into()));
            }
        } else {
            positive("nu", self.nu)?;
        }
        nonnegative("omega", self.omega)?;
        nonnegative("chi", self.chi)?;
        positive("t_final", self.t_final)?;
        positive("dt", self.dt)?;
        if self.forcing == ForcingSpec::Manufactured && self.kind.is_boussinesq() {
            return Err(Error::Config("manufactured forcing is defined for NSE runs only".into()));
        }
        Ok(())
    }

    /// Momentum diffusion coefficient.
    pub fn viscosity(&self) -> f64 {
        if self.kind.is_boussinesq() {
            self.pr
        } else {
            self.nu
        }
    }

    /// Coefficient of the rotation operator in the stepped equations.
    pub fn rotation(&self) -> f64 {
        if self.kind.is_nudged() {
            0.0
        } else {
            self.omega
        }
    }

    /// Coefficient of the nudging operator in the stepped equations.
    pub fn nudging(&self) -> f64 {
        if self.kind.is_nudged() {
            self.chi
        } else {
            0.0
        }
    }

    /// The same problem as the assimilating model.
    pub fn nudged(&self, chi: f64) -> ModelSpec {
        let kind = if self.kind.is_boussinesq() { ModelKind::BoussinesqNudged } else { ModelKind::NseNudged };
        ModelSpec { kind, chi, ..self.clone() }
    }

    /// The same problem as the data-generating model.
    pub fn dns(&self, omega: f64) -> ModelSpec {
        let kind = if self.kind.is_boussinesq() { ModelKind::BoussinesqDns } else { ModelKind::NseDns };
        ModelSpec { kind, omega, ..self.clone() }
    }

    /// Body force of the data-generating dynamics (the same force drives the
    /// nudged model).
    pub fn forcing_fn(&self) -> impl Fn(Point, f64) -> [f64; 2] + Send + Sync + Clone {
        let (spec, nu, omega) = (self.forcing, self.nu, self.omega);
        move |p, t| match spec {
            ForcingSpec::Zero => [0.0, 0.0],
            ForcingSpec::Manufactured => manufactured_forcing(&ManufacturedSolution, nu, omega, true)(p, t),
        }
    }

    pub fn boundary_velocity(&self, side: Side, t: f64) -> impl Fn(Point) -> [f64; 2] {
        boundary_velocity(self.boundary, side, t)
    }
}

/// `u = e^t (cos y, sin x)`, `p = (x - y)(1 + t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ManufacturedSolution;

impl ManufacturedSolution {
    pub fn velocity(&self, p: Point, t: f64) -> [f64; 2] {
        let e = t.exp();
        [e * p[1].cos(), e * p[0].sin()]
    }

    pub fn pressure(&self, p: Point, t: f64) -> f64 {
        (p[0] - p[1]) * (1.0 + t)
    }

    /// `grad[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, p: Point, t: f64) -> [[f64; 2]; 2] {
        let e = t.exp();
        [[0.0, -e * p[1].sin()], [e * p[0].cos(), 0.0]]
    }

    pub fn velocity_laplacian(&self, p: Point, t: f64) -> [f64; 2] {
        let e = t.exp();
        [-e * p[1].cos(), -e * p[0].sin()]
    }

    pub fn velocity_time_derivative(&self, p: Point, t: f64) -> [f64; 2] {
        self.velocity(p, t)
    }

    pub fn pressure_gradient(&self, _p: Point, t: f64) -> [f64; 2] {
        [1.0 + t, -(1.0 + t)]
    }

    pub fn divergence(&self, p: Point, t: f64) -> f64 {
        let g = self.velocity_gradient(p, t);
        g[0][0] + g[1][1]
    }
}

/// Rotation `R(u) = (-u_2, u_1)`.
pub fn rotate(u: [f64; 2]) -> [f64; 2] {
    [-u[1], u[0]]
}

/// `f = u_t + u.grad u - nu lap u + grad p + omega R(u)` (rotation only if requested).
pub fn manufactured_forcing(
    ms: &ManufacturedSolution,
    nu: f64,
    omega: f64,
    include_rotation: bool,
) -> impl Fn(Point, f64) -> [f64; 2] + Send + Sync + Clone {
    let ms = *ms;
    move |p, t| {
        let u = ms.velocity(p, t);
        let g = ms.velocity_gradient(p, t);
        let lap = ms.velocity_laplacian(p, t);
        let ut = ms.velocity_time_derivative(p, t);
        let gp = ms.pressure_gradient(p, t);
        let r = rotate(u);
        let w = if include_rotation { omega } else { 0.0 };
        let mut f = [0.0; 2];
        for i in 0..2 {
            let conv = u[0] * g[i][0] + u[1] * g[i][1];
            f[i] = ut[i] + conv - nu * lap[i] + gp[i] + w * r[i];
        }
        f
    }
}

/// Dirichlet velocity data on one side.
pub fn boundary_velocity(spec: BoundarySpec, _side: Side, t: f64) -> impl Fn(Point) -> [f64; 2] {
    move |p| match spec {
        BoundarySpec::Cavity => [0.0, 0.0],
        BoundarySpec::Manufactured => ManufacturedSolution.velocity(p, t),
    }
}

/// Dirichlet temperature on one side of the cavity; `None` marks an adiabatic side.
pub fn boundary_temperature(side: Side) -> Option<f64> {
    match side {
        Side::Left => Some(1.0),
        Side::Right => Some(0.0),
        Side::Bottom | Side::Top => None,
    }
}
