//! Radial semilinear wave equation `u_tt = Delta_g u + |u|^p`.
//!
//! `Delta_g u = r^{1-n} (r^{n-1} alpha u_r)_r` is discretized by finite
//! volumes with exact control volumes, so the origin needs no special case
//! (the first cell is the ball `r < dr/2`) and the discrete operator is
//! symmetric with real, negative spectrum for every admissible metric.
//! `u = 0` is imposed at the outer radius, which the support cone never
//! reaches. Time stepping is velocity Verlet (leapfrog), whose three-point
//! stencil moves the numerical support by at most one cell per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::metric::MetricField;
use crate::quadrature::radial_weights;
use crate::scalar::{from_usize, lit, Scalar};
use crate::special::sphere_area;

/// Radial initial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile<T> {
    /// `height (1 - (r / radius)^2)^4` on `r < radius`.
    Bump { radius: T, height: T },
    Zero,
}

impl<T: Scalar> Profile<T> {
    pub fn eval(&self, r: T) -> T {
        match *self {
            Profile::Bump { radius, height } => {
                let x = r / radius;
                if x >= T::one() {
                    T::zero()
                } else {
                    height * (T::one() - x * x).powi(4)
                }
            }
            Profile::Zero => T::zero(),
        }
    }

    pub fn support_radius(&self) -> T {
        match *self {
            Profile::Bump { radius, .. } => radius,
            Profile::Zero => T::zero(),
        }
    }
}

/// `u(0) = eps u0`, `u_t(0) = eps u1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData<T> {
    pub eps: T,
    pub u0: Profile<T>,
    pub u1: Profile<T>,
}

impl<T: Scalar> InitialData<T> {
    /// `u0 = u1 = (1 - (r/R_0)^2)^4` with `R_0 = 1.5`.
    /// Default bump pair: radius 1.5 and height 8, which puts `eps` in
    /// `[0.5, 1]` inside the regime where critical blow-up is observable
    /// within a desk-scale horizon.
    pub fn bump(eps: T) -> Self {
        Self::bump_with(eps, lit(1.5), lit(8.0))
    }

    pub fn bump_with(eps: T, radius: T, height: T) -> Self {
        let p = Profile::Bump { radius, height };
        Self { eps, u0: p, u1: p }
    }

    pub fn support_radius(&self) -> T {
        self.u0.support_radius().max(self.u1.support_radius())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= T::zero()) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!("eps must be >= 0, got {}", self.eps)));
        }
        for p in [self.u0, self.u1] {
            if let Profile::Bump { radius, height } = p {
                if !(radius > T::zero() && height > T::zero()) || !radius.is_finite() || !height.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "bump radius and height must be positive, got {radius} and {height}"
                    )));
                }
            }
        }
        if matches!((self.u0, self.u1), (Profile::Zero, Profile::Zero)) {
            return Err(Error::InvalidParameter("initial data vanish identically".into()));
        }
        Ok(())
    }
}

/// Right-hand side nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity<T> {
    /// `|u|^p`.
    Power { p: T },
    /// Linear flow.
    Off,
}

impl<T: Scalar> Nonlinearity<T> {
    #[inline]
    fn eval(&self, u: T) -> T {
        match *self {
            Nonlinearity::Power { p } => u.abs().powf(p),
            Nonlinearity::Off => T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub dr: T,
    /// `dt <= cfl dr / sqrt(max alpha)`; at most 0.9.
    pub cfl: T,
    pub t_max: T,
    pub blowup_threshold: T,
    /// Snapshot cadence; the time step divides it exactly.
    pub snapshot_dt: T,
    /// Support radius `R` of the cone check.
    pub r_support: T,
    /// Outer radius; defaults to `t_max + R + 1`.
    pub domain_radius: Option<T>,
    /// Exponent of the recorded `\int |u|^p`; defaults to the nonlinearity's
    /// power, or 2 for the linear flow.
    pub lp_exponent: Option<T>,
    /// Re-run the final window at `dt/2` and `dt/4` after blow-up.
    pub bracket: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            dr: lit(0.02),
            cfl: lit(0.9),
            t_max: lit(30.0),
            blowup_threshold: lit(1e6),
            snapshot_dt: lit(0.05),
            r_support: lit(2.0),
            domain_radius: None,
            lp_exponent: None,
            bracket: true,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if !pos(self.dr) || !pos(self.t_max) || !pos(self.snapshot_dt) || !pos(self.blowup_threshold) || !pos(self.r_support) {
            return Err(Error::InvalidParameter(
                "dr, t_max, snapshot_dt, blowup_threshold and R must be positive".into(),
            ));
        }
        if !(self.cfl > T::zero() && self.cfl <= lit(0.9)) {
            return Err(Error::InvalidParameter(format!("cfl must lie in (0, 0.9], got {}", self.cfl)));
        }
        Ok(())
    }
}

/// Discrete solution at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState<T> {
    pub t: T,
    pub u: Vec<T>,
    /// `u_t`.
    pub v: Vec<T>,
    acc: Vec<T>,
    /// Every node beyond `front` is exactly zero in `u` and `v`.
    front: usize,
}

impl<T: Scalar> WaveState<T> {
    pub fn max_abs(&self) -> T {
        self.u[..=self.front].iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }

    /// Index past which the state is identically zero.
    pub fn front(&self) -> usize {
        self.front
    }
}

/// Spatial operator and nonlinearity on a fixed grid.
#[derive(Debug, Clone)]
pub struct WaveSolver<T> {
    grid: RadialGrid<T>,
    /// `r^{n-1} alpha / dr` at the faces `r_{i+1/2}`.
    face: Vec<T>,
    /// Exact control volumes `\int r^{n-1} dr` (sphere area omitted).
    volume: Vec<T>,
    nonlinearity: Nonlinearity<T>,
    dimension: usize,
    dt_max: T,
    dt_stable: T,
}

impl<T: Scalar> WaveSolver<T> {
    pub fn new(metric: &MetricField<T>, grid: RadialGrid<T>, nonlinearity: Nonlinearity<T>) -> Self {
        let n = metric.dimension();
        let dr = grid.dr();
        let len = grid.len();
        let half = lit::<T>(0.5);
        let nf = from_usize::<T>(n);
        let face: Vec<T> = (0..len - 1)
            .map(|i| {
                let r = (from_usize::<T>(i) + half) * dr;
                r.powi(n as i32 - 1) * metric.alpha(r) / dr
            })
            .collect();
        let volume: Vec<T> = (0..len)
            .map(|i| {
                let lo = if i == 0 { T::zero() } else { (from_usize::<T>(i) - half) * dr };
                let hi = if i == len - 1 { grid.r(i) } else { (from_usize::<T>(i) + half) * dr };
                (hi.powi(n as i32) - lo.powi(n as i32)) / nf
            })
            .collect();
        // Gershgorin bound on the symmetrized operator V^{-1/2} K V^{-1/2}.
        let mut rho = T::zero();
        for i in 0..len - 1 {
            let left = if i > 0 { face[i - 1] } else { T::zero() };
            let mut row = (left + face[i]) / volume[i];
            if i > 0 {
                row = row + face[i - 1] / (volume[i] * volume[i - 1]).sqrt();
            }
            if i + 2 < len {
                row = row + face[i] / (volume[i] * volume[i + 1]).sqrt();
            }
            rho = rho.max(row);
        }
        Self {
            grid,
            face,
            volume,
            nonlinearity,
            dimension: n,
            dt_max: lit::<T>(0.9) * dr / metric.max_alpha().sqrt(),
            dt_stable: lit::<T>(2.0) / rho.sqrt(),
        }
    }

    pub fn grid(&self) -> &RadialGrid<T> {
        &self.grid
    }

    /// Largest admissible time step: the CFL limit `0.9 dr / sqrt(max alpha)`,
    /// further capped by the leapfrog stability bound of the discrete
    /// operator (binding only near the origin in three dimensions).
    pub fn dt_max(&self) -> T {
        self.dt_max.min(self.dt_stable)
    }

    /// State at `t = 0` from `eps u0`, `eps u1`.
    pub fn initial_state(&self, data: &InitialData<T>) -> WaveState<T> {
        let len = self.grid.len();
        let mut u: Vec<T> = (0..len).map(|i| data.eps * data.u0.eval(self.grid.r(i))).collect();
        let mut v: Vec<T> = (0..len).map(|i| data.eps * data.u1.eval(self.grid.r(i))).collect();
        u[len - 1] = T::zero();
        v[len - 1] = T::zero();
        let front = (0..len)
            .rev()
            .find(|&i| u[i] != T::zero() || v[i] != T::zero())
            .unwrap_or(0);
        let mut state = WaveState {
            t: T::zero(),
            u,
            v,
            acc: vec![T::zero(); len],
            front,
        };
        self.accelerate(&mut state);
        state
    }

    /// `Delta_g u + |u|^p` as flux differences over control volumes.
    fn accelerate(&self, state: &mut WaveState<T>) {
        let len = self.grid.len();
        let top = (state.front + 1).min(len - 2);
        let u = &state.u;
        let acc = &mut state.acc;
        let mut inflow = T::zero();
        for i in 0..=top {
            let outflow = self.face[i] * (u[i + 1] - u[i]);
            acc[i] = (outflow - inflow) / self.volume[i] + self.nonlinearity.eval(u[i]);
            inflow = outflow;
        }
    }

    /// One velocity-Verlet step.
    pub fn step(&self, state: &mut WaveState<T>, dt: T) -> Result<()> {
        if !(dt > T::zero()) || dt > self.dt_max() * lit(1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} exceeds the stable step {}",
                self.dt_max()
            )));
        }
        let len = self.grid.len();
        let half = dt / lit(2.0);
        let top = (state.front + 1).min(len - 2);
        for i in 0..=top {
            state.v[i] = state.v[i] + half * state.acc[i];
            state.u[i] = state.u[i] + dt * state.v[i];
        }
        state.front = top;
        self.accelerate(state);
        for i in 0..=top {
            state.v[i] = state.v[i] + half * state.acc[i];
        }
        state.t = state.t + dt;
        Ok(())
    }

    /// Discrete linear energy `(1/2) \int (u_t^2 + alpha u_r^2) dx`.
    pub fn energy(&self, state: &WaveState<T>) -> T {
        let top = (state.front + 1).min(self.grid.len() - 2);
        let mut acc = T::zero();
        for i in 0..=top {
            let du = state.u[i + 1] - state.u[i];
            acc = acc + self.volume[i] * state.v[i] * state.v[i] + self.face[i] * du * du;
        }
        acc * sphere_area::<T>(self.dimension) / lit(2.0)
    }
}

/// One row of the recorded time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow<T> {
    pub t: T,
    pub max_abs_u: T,
    pub l2_norm: T,
    /// `\int |u|^p dx` with the record's `lp_exponent`.
    pub lp_integral: T,
    pub energy: T,
    /// `\int_{|x| > t+R} |u| dx / \int |u| dx`.
    pub outside_fraction: T,
}

/// `u` at a snapshot time, truncated after its last nonzero node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub t: T,
    pub u: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Blowup,
    NoBlowupWithinHorizon,
}

/// Blow-up time estimates from the base step and its refinements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupBracket<T> {
    /// Threshold crossing time at the base step.
    pub estimate: T,
    pub t_lo: T,
    pub t_hi: T,
    /// `(dt, crossing time)` for every resolution tried.
    pub estimates: Vec<(T, T)>,
}

impl<T: Scalar> BlowupBracket<T> {
    /// `(t_hi - t_lo) / estimate`.
    pub fn relative_width(&self) -> T {
        (self.t_hi - self.t_lo) / self.estimate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord<T> {
    pub config_hash: Option<String>,
    pub metric: MetricField<T>,
    pub data: InitialData<T>,
    pub nonlinearity: Nonlinearity<T>,
    pub config: SolverConfig<T>,
    pub grid: RadialGrid<T>,
    pub dt: T,
    pub lp_exponent: T,
    pub series: Vec<SeriesRow<T>>,
    pub snapshots: Vec<Snapshot<T>>,
    pub termination: Termination,
    pub blowup: Option<BlowupBracket<T>>,
    pub max_outside_fraction: T,
}

impl<T: Scalar> RunRecord<T> {
    pub fn dimension(&self) -> usize {
        self.metric.dimension()
    }

    /// Snapshot `k` padded with zeros to the full grid.
    pub fn snapshot_u(&self, k: usize) -> Vec<T> {
        let mut u = self.snapshots[k].u.clone();
        u.resize(self.grid.len(), T::zero());
        u
    }

    /// Time of the last snapshot.
    pub fn t_final(&self) -> T {
        self.snapshots.last().map_or(T::zero(), |s| s.t)
    }
}

fn series_row<T: Scalar>(solver: &WaveSolver<T>, weights: &[T], state: &WaveState<T>, lp: T, r_support: T) -> SeriesRow<T> {
    let top = state.front.min(weights.len() - 1);
    let cone = state.t + r_support;
    let (mut l2, mut lpi, mut mass, mut outside) = (T::zero(), T::zero(), T::zero(), T::zero());
    for i in 0..=top {
        let a = state.u[i].abs();
        l2 = l2 + weights[i] * a * a;
        lpi = lpi + weights[i] * a.powf(lp);
        mass = mass + weights[i] * a;
        if solver.grid.r(i) > cone {
            outside = outside + weights[i] * a;
        }
    }
    SeriesRow {
        t: state.t,
        max_abs_u: state.max_abs(),
        l2_norm: l2.sqrt(),
        lp_integral: lpi,
        energy: solver.energy(state),
        outside_fraction: if mass > T::zero() { outside / mass } else { T::zero() },
    }
}

fn blown_up<T: Scalar>(state: &WaveState<T>, threshold: T) -> bool {
    let m = state.max_abs();
    !(m <= threshold)
}

/// Integrates `state` with step `dt` until the threshold is crossed or
/// `t_end` is passed; returns the crossing time.
fn crossing_time<T: Scalar>(solver: &WaveSolver<T>, mut state: WaveState<T>, dt: T, threshold: T, t_end: T) -> Result<Option<T>> {
    while state.t < t_end {
        solver.step(&mut state, dt)?;
        if blown_up(&state, threshold) {
            return Ok(Some(state.t));
        }
    }
    Ok(None)
}

/// Integrates until blow-up or `t_max`, recording series and snapshots.
pub fn run_until_blowup<T: Scalar>(
    data: &InitialData<T>,
    metric: &MetricField<T>,
    nonlinearity: Nonlinearity<T>,
    config: &SolverConfig<T>,
) -> Result<RunRecord<T>> {
    data.validate()?;
    config.validate()?;
    if let Nonlinearity::Power { p } = nonlinearity {
        if !(p > T::one()) {
            return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
        }
    }
    if data.support_radius() > config.r_support {
        return Err(Error::InvalidParameter(format!(
            "data support {} exceeds R = {}",
            data.support_radius(),
            config.r_support
        )));
    }
    let radius = config
        .domain_radius
        .unwrap_or(config.t_max + config.r_support + T::one());
    let grid = RadialGrid::new(radius, config.dr)?;
    let solver = WaveSolver::new(metric, grid, nonlinearity);
    let dt_cfl = (config.cfl * grid.dr() / metric.max_alpha().sqrt()).min(solver.dt_max());
    let steps_per_snapshot = (config.snapshot_dt / dt_cfl).ceil().to_usize().unwrap_or(1).max(1);
    let dt = config.snapshot_dt / from_usize(steps_per_snapshot);
    let lp = config.lp_exponent.unwrap_or(match nonlinearity {
        Nonlinearity::Power { p } => p,
        Nonlinearity::Off => lit(2.0),
    });
    let weights = radial_weights(metric.dimension(), grid.dr(), grid.len());

    let mut state = solver.initial_state(data);
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let mut checkpoints: Vec<WaveState<T>> = Vec::new();
    let mut max_outside = T::zero();
    let mut record = |state: &WaveState<T>, series: &mut Vec<SeriesRow<T>>, snapshots: &mut Vec<Snapshot<T>>| {
        let row = series_row(&solver, &weights, state, lp, config.r_support);
        max_outside = max_outside.max(row.outside_fraction);
        series.push(row);
        let last = state.u.iter().rposition(|v| *v != T::zero()).map_or(0, |i| i + 1);
        snapshots.push(Snapshot {
            t: state.t,
            u: state.u[..last].to_vec(),
        });
    };
    record(&state, &mut series, &mut snapshots);
    checkpoints.push(state.clone());

    let mut step_index = 0usize;
    let mut blowup_at = None;
    // Stop exactly on the snapshot grid at or past t_max.
    let total_snapshots = (config.t_max / config.snapshot_dt).ceil().to_usize().unwrap_or(0);
    let total_steps = total_snapshots * steps_per_snapshot;
    while step_index < total_steps {
        solver.step(&mut state, dt)?;
        step_index += 1;
        // Snapshot times are exact multiples of the cadence.
        state.t = dt * from_usize(step_index);
        if blown_up(&state, config.blowup_threshold) {
            blowup_at = Some(state.t);
            break;
        }
        if step_index % steps_per_snapshot == 0 {
            record(&state, &mut series, &mut snapshots);
            checkpoints.push(state.clone());
            if checkpoints.len() > 64 {
                checkpoints.drain(..32);
            }
        }
    }

    let (termination, blowup) = match blowup_at {
        None => (Termination::NoBlowupWithinHorizon, None),
        Some(estimate) => {
            let mut estimates = vec![(dt, estimate)];
            if config.bracket {
                let back = (lit::<T>(10.0) * dt).max(lit::<T>(0.05) * estimate);
                let start = checkpoints
                    .iter()
                    .rev()
                    .find(|c| c.t <= estimate - back)
                    .unwrap_or(&checkpoints[0])
                    .clone();
                let horizon = estimate + (estimate - start.t) * lit(4.0) + dt;
                for div in [2.0, 4.0] {
                    let fine = dt / lit(div);
                    if let Some(tc) = crossing_time(&solver, start.clone(), fine, config.blowup_threshold, horizon)? {
                        estimates.push((fine, tc));
                    }
                }
            }
            let t_lo = estimates.iter().map(|e| e.1).fold(T::infinity(), T::min);
            let t_hi = estimates.iter().map(|e| e.1).fold(T::zero(), T::max);
            (
                Termination::Blowup,
                Some(BlowupBracket {
                    estimate,
                    t_lo,
                    t_hi,
                    estimates,
                }),
            )
        }
    };
    Ok(RunRecord {
        config_hash: None,
        metric: *metric,
        data: *data,
        nonlinearity,
        config: *config,
        grid,
        dt,
        lp_exponent: lp,
        series,
        snapshots,
        termination,
        blowup,
        max_outside_fraction: max_outside,
    })
}
