//! Deep-space reconfiguration: double-integrator spacecraft driven by a PD law
//! on relative positions, with the relative force command allocated every step.

use nalgebra::DVector;

use crate::allocator::{self, AllocationResult, Allocator, EpsilonGrid};
use crate::error::{Error, Result};
use crate::formation::{self, FormationState, RelativeForce, ThrustVector};

/// Maneuver parameters. Vectors are stacked per spacecraft (or per pair for
/// relative quantities).
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverConfig {
    pub dim: usize,
    /// kg, one per spacecraft.
    pub masses: Vec<f64>,
    /// Position gain, 1/s².
    pub kappa: f64,
    /// Damping gain, 1/s.
    pub rho: f64,
    /// Desired relative positions, m.
    pub xi_des: DVector<f64>,
    /// Initial absolute positions, m.
    pub x0: DVector<f64>,
    /// Initial velocities, m/s.
    pub v0: DVector<f64>,
    /// Step, s.
    pub dt: f64,
    /// Horizon, s.
    pub t_final: f64,
    pub epsilon_grid: EpsilonGrid,
}

impl ManeuverConfig {
    /// Places spacecraft 1 at the origin and chains the rest along `xi0`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_relative(
        dim: usize,
        masses: Vec<f64>,
        kappa: f64,
        rho: f64,
        xi_des: DVector<f64>,
        xi0: &DVector<f64>,
        v0: Option<DVector<f64>>,
        dt: f64,
        t_final: f64,
        epsilon_grid: EpsilonGrid,
    ) -> Result<Self> {
        if dim == 0 || xi0.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "initial relative positions of length {} do not fit dimension {dim}",
                xi0.len()
            )));
        }
        let count = xi0.len() / dim + 1;
        let mut x0 = DVector::zeros(dim * count);
        for i in 1..count {
            for k in 0..dim {
                x0[i * dim + k] = x0[(i - 1) * dim + k] + xi0[(i - 1) * dim + k];
            }
        }
        let v0 = v0.unwrap_or_else(|| DVector::zeros(dim * count));
        let cfg = Self { dim, masses, kappa, rho, xi_des, x0, v0, dt, t_final, epsilon_grid };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn count(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.count();
        if n < 2 {
            return Err(Error::InvalidFormationSize(n));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidDimension(self.dim));
        }
        if self.masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidInput("masses must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidInput(
                "gains kappa and rho must both be positive for a stable closed loop".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if !(self.t_final >= self.dt * (1.0 - 1e-9)) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput("t_final must be at least dt".into()));
        }
        let rel = self.dim * (n - 1);
        for (name, len, want) in [
            ("xi_des", self.xi_des.len(), rel),
            ("x0", self.x0.len(), self.dim * n),
            ("v0", self.v0.len(), self.dim * n),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch(format!("{name} has {len} entries, expected {want}")));
            }
        }
        Ok(())
    }

    /// Mass used by the command law: the formation's mean mass.
    pub fn command_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() / self.masses.len() as f64
    }

    pub fn step_count(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// PD relative force command `−mκ(ξ − ξ_des) − mϱ ξ̇`.
pub fn command_law(xi: &DVector<f64>, xi_dot: &DVector<f64>, cfg: &ManeuverConfig) -> Result<RelativeForce> {
    if xi.len() != cfg.xi_des.len() || xi_dot.len() != cfg.xi_des.len() {
        return Err(Error::DimensionMismatch("relative state does not match xi_des".into()));
    }
    let m = cfg.command_mass();
    let f = (xi - &cfg.xi_des) * (-m * cfg.kappa) - xi_dot * (m * cfg.rho);
    RelativeForce::new(cfg.dim, f)
}

/// Everything logged for one step. Quantities are taken at the start of the
/// step; the allocation is held over `[t, t + dt)`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub time: f64,
    pub positions: DVector<f64>,
    pub velocities: DVector<f64>,
    pub xi: DVector<f64>,
    pub f_cmd: RelativeForce,
    pub allocation: AllocationResult,
    /// `Σᵢ‖Tᵢ‖ dt`, N·s.
    pub propellant_increment: f64,
    pub propellant_cumulative: f64,
    pub thruster_only_increment: f64,
    /// `‖B T + ΔF_C − ΔF_cmd‖` for this step's allocation.
    pub command_residual: f64,
    /// The allocator errored and thruster-only was used instead.
    pub allocator_failed: bool,
}

impl StepRecord {
    pub fn percent_error(&self) -> Option<f64> {
        self.allocation.percent_error
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub dim: usize,
    pub count: usize,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ManeuverSummary {
    pub avg_percent_error: f64,
    pub propellant_used: f64,
    pub propellant_thruster_only: f64,
    pub reduction_percent: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub steps: usize,
    pub fallback_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ManeuverRun {
    pub log: TrajectoryLog,
    pub summary: ManeuverSummary,
    pub final_positions: DVector<f64>,
    pub final_velocities: DVector<f64>,
}

/// Advances one step: allocate, hold forces, integrate with RK4.
pub fn step(
    positions: &DVector<f64>,
    velocities: &DVector<f64>,
    time: f64,
    cfg: &ManeuverConfig,
    allocator: &dyn Allocator,
) -> Result<(DVector<f64>, DVector<f64>, StepRecord)> {
    let state = FormationState::new(cfg.dim, positions.clone())?;
    let xi = state.relative_positions();
    let xi_dot = relative(velocities, cfg.dim);
    let f_cmd = command_law(&xi, &xi_dot, cfg)?;

    let (allocation, allocator_failed) = match allocator.allocate(&state, &f_cmd, &cfg.epsilon_grid) {
        Ok(a) => (a, false),
        Err(_) => (allocator::ThrusterOnlyAllocator.allocate(&state, &f_cmd, &cfg.epsilon_grid)?, true),
    };

    let coulomb = formation::coulomb_forces(&state, &allocation.charges)?;
    let total = &allocation.thrust.values + coulomb;
    let accel = DVector::from_fn(total.len(), |k, _| total[k] / cfg.masses[k / cfg.dim]);
    let (next_x, next_v) = rk4_constant_force(positions, velocities, &accel, cfg.dt);

    let command_residual =
        allocator::command_residual(&state, &f_cmd, &allocation.charges, &allocation.thrust)?;
    let record = StepRecord {
        time,
        positions: positions.clone(),
        velocities: velocities.clone(),
        xi,
        propellant_increment: allocation.propellant_proxy() * cfg.dt,
        propellant_cumulative: 0.0,
        thruster_only_increment: allocation.thruster_only_proxy() * cfg.dt,
        f_cmd,
        allocation,
        command_residual,
        allocator_failed,
    };
    Ok((next_x, next_v, record))
}

/// Runs the whole maneuver.
pub fn run_maneuver(cfg: &ManeuverConfig, allocator: &dyn Allocator) -> Result<ManeuverRun> {
    cfg.validate()?;
    let mut x = cfg.x0.clone();
    let mut v = cfg.v0.clone();
    let steps = cfg.step_count();
    let mut log = TrajectoryLog { dim: cfg.dim, count: cfg.count(), records: Vec::with_capacity(steps) };

    let mut cumulative = 0.0;
    for k in 0..steps {
        let (nx, nv, mut record) = step(&x, &v, k as f64 * cfg.dt, cfg, allocator)?;
        cumulative += record.propellant_increment;
        record.propellant_cumulative = cumulative;
        log.records.push(record);
        x = nx;
        v = nv;
    }

    let errors: Vec<f64> = log.records.iter().filter_map(StepRecord::percent_error).collect();
    let avg_percent_error = if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 };
    let propellant_used = cumulative;
    let propellant_thruster_only: f64 = log.records.iter().map(|r| r.thruster_only_increment).sum();
    let reduction_percent = if propellant_thruster_only > 0.0 {
        100.0 * (1.0 - propellant_used / propellant_thruster_only)
    } else {
        0.0
    };
    let initial_error = (relative(&cfg.x0, cfg.dim) - &cfg.xi_des).norm();
    let final_error = (relative(&x, cfg.dim) - &cfg.xi_des).norm();
    let fallback_steps = log
        .records
        .iter()
        .filter(|r| r.allocator_failed || r.allocation.degraded)
        .count();

    Ok(ManeuverRun {
        summary: ManeuverSummary {
            avg_percent_error,
            propellant_used,
            propellant_thruster_only,
            reduction_percent,
            initial_error,
            final_error,
            steps,
            fallback_steps,
        },
        log,
        final_positions: x,
        final_velocities: v,
    })
}

fn relative(stacked: &DVector<f64>, dim: usize) -> DVector<f64> {
    let n = stacked.len() / dim;
    DVector::from_fn(dim * (n - 1), |k, _| stacked[k + dim] - stacked[k])
}

// Classical RK4 on (x, v) with the acceleration held over the step.
fn rk4_constant_force(
    x: &DVector<f64>,
    v: &DVector<f64>,
    accel: &DVector<f64>,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let deriv = |vel: &DVector<f64>| (vel.clone(), accel.clone());
    let (k1x, k1v) = deriv(v);
    let (k2x, k2v) = deriv(&(v + &k1v * (dt / 2.0)));
    let (k3x, k3v) = deriv(&(v + &k2v * (dt / 2.0)));
    let (k4x, k4v) = deriv(&(v + &k3v * dt));
    let nx = x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
    let nv = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    (nx, nv)
}

/// Total thrust over the formation, used to check the centroid stays unforced.
pub fn net_thrust(t: &ThrustVector) -> DVector<f64> {
    let mut sum = DVector::zeros(t.dim);
    for i in 0..t.count() {
        sum += t.of(i);
    }
    sum
}
