//! Single-phase incompressible flow on the unit square: two-point flux
//! finite volumes for pressure, explicit first-order upwind transport for
//! the water saturation, and the production metrics derived from them.
//!
//! Pressure and saturation are coupled one way only (unit mobility), so the
//! pressure is solved once, the face fluxes are frozen, and the saturation
//! is stepped explicitly under a CFL limit. The discrete scheme conserves
//! mass to rounding at every step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::linsolve::{pcg, LinearOp};
use crate::math;

/// Water-cut threshold defining the breakthrough time.
pub const BREAKTHROUGH_WATER_CUT: f64 = 0.01;

/// Isotropic positive permeability on the simulation grid.
#[derive(Clone, Debug)]
pub struct PermField {
    field: Field,
}

impl PermField {
    /// Validate an already-exponentiated permeability field.
    pub fn new(field: Field) -> Result<Self> {
        if let Some(bad) = field.values().iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Contract(alloc::format!(
                "permeability must be positive and finite, got {bad}"
            )));
        }
        Ok(PermField { field })
    }

    /// `a = exp(y)` from a log-permeability field.
    pub fn from_log(log_perm: &Field) -> Result<Self> {
        PermField::new(log_perm.map(math::exp))
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn nx(&self) -> usize {
        self.field.nx()
    }

    pub fn ny(&self) -> usize {
        self.field.ny()
    }
}

/// Injection/production layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Injector at cell (0,0), producer at (nx-1, ny-1), no-flow boundary.
    QuarterFiveSpot,
    /// Uniform inflow over the left side, outflow over the right side,
    /// no-flow top and bottom.
    UniformFlow,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::QuarterFiveSpot => "quarter_five_spot",
            ProblemKind::UniformFlow => "uniform_flow",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quarter_five_spot" => Ok(ProblemKind::QuarterFiveSpot),
            "uniform_flow" => Ok(ProblemKind::UniformFlow),
            other => Err(Error::Config(alloc::format!(
                "unknown flow problem `{other}`"
            ))),
        }
    }
}

/// Flow problem on the unit square with homogeneous porosity, unit total
/// rate by default, and the pressure pinned to 0 at the center cell.
#[derive(Clone, Copy, Debug)]
pub struct FlowProblem {
    pub kind: ProblemKind,
    pub porosity: f64,
    pub rate: f64,
}

impl FlowProblem {
    pub fn new(kind: ProblemKind) -> Self {
        FlowProblem {
            kind,
            porosity: 0.2,
            rate: 1.0,
        }
    }

    pub fn quarter_five_spot() -> Self {
        Self::new(ProblemKind::QuarterFiveSpot)
    }

    pub fn uniform_flow() -> Self {
        Self::new(ProblemKind::UniformFlow)
    }

    /// Pore volume of the unit-square reservoir.
    pub fn pore_volume(&self) -> f64 {
        self.porosity
    }

    /// `PVI = q_in * t / V_phi`.
    pub fn pvi_of_time(&self, t: f64) -> f64 {
        self.rate * t / self.pore_volume()
    }

    pub fn time_of_pvi(&self, pvi: f64) -> f64 {
        pvi * self.pore_volume() / self.rate
    }
}

/// Numerical controls for the pressure solve and the transport stepping.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub t_end: f64,
    /// Times (not PVI) at which to keep saturation snapshots.
    pub snapshot_times: Vec<f64>,
    pub cfl_factor: f64,
    pub cg_tol: f64,
    /// Iteration cap as a multiple of the unknown count.
    pub cg_max_factor: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 0.4,
            snapshot_times: vec![0.05],
            cfl_factor: 0.9,
            cg_tol: 1e-10,
            cg_max_factor: 10,
        }
    }
}

/// Volumetric face fluxes, positive along +x / +y.
///
/// `fx` has `(nx+1) * ny` entries (`fx[j*(nx+1)+i]` between cells `(i-1,j)`
/// and `(i,j)`), `fy` has `nx * (ny+1)`.
#[derive(Clone, Debug)]
pub struct FaceFlux {
    pub nx: usize,
    pub ny: usize,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl FaceFlux {
    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.fx[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.fy[j * self.nx + i]
    }

    /// Face-centered velocities: flux divided by face length.
    pub fn velocities(&self) -> (Vec<f64>, Vec<f64>) {
        let hx = 1.0 / self.nx as f64;
        let hy = 1.0 / self.ny as f64;
        (
            self.fx.iter().map(|f| f / hy).collect(),
            self.fy.iter().map(|f| f / hx).collect(),
        )
    }

    /// Net volumetric outflow of a cell through its four faces.
    pub fn divergence(&self, i: usize, j: usize) -> f64 {
        self.x(i + 1, j) - self.x(i, j) + self.y(i, j + 1) - self.y(i, j)
    }
}

/// Cell sources (volumetric rates, positive = injection).
fn sources(prob: &FlowProblem, nx: usize, ny: usize) -> Vec<f64> {
    let mut q = vec![0.0; nx * ny];
    match prob.kind {
        ProblemKind::QuarterFiveSpot => {
            q[0] = prob.rate;
            q[nx * ny - 1] = -prob.rate;
        }
        ProblemKind::UniformFlow => {
            // Boundary influx enters the balance like a source; the faces
            // themselves are added to the flux field after the solve.
            let per_cell = prob.rate / ny as f64;
            for j in 0..ny {
                q[j * nx] += per_cell;
                q[j * nx + nx - 1] -= per_cell;
            }
        }
    }
    q
}

/// The assembled TPFA pressure system (symmetric positive definite after
/// pinning the center cell to zero).
pub struct PressureSystem {
    nx: usize,
    ny: usize,
    /// Interior x-face transmissibilities, boundary entries zero.
    tx: Vec<f64>,
    ty: Vec<f64>,
    pin: usize,
    rhs: Vec<f64>,
}

impl PressureSystem {
    pub fn new(perm: &PermField, prob: &FlowProblem) -> Self {
        let (nx, ny) = (perm.nx(), perm.ny());
        let a = perm.field().values();
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        let harm = |p: f64, q: f64| 2.0 * p * q / (p + q);

        let mut tx = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                tx[j * (nx + 1) + i] = harm(a[j * nx + i - 1], a[j * nx + i]) * hy / hx;
            }
        }
        let mut ty = vec![0.0; nx * (ny + 1)];
        for j in 1..ny {
            for i in 0..nx {
                ty[j * nx + i] = harm(a[(j - 1) * nx + i], a[j * nx + i]) * hx / hy;
            }
        }

        // "Center" pins cell (nx/2, ny/2), 0-indexed.
        let pin = (ny / 2) * nx + nx / 2;
        let mut rhs = sources(prob, nx, ny);
        rhs[pin] = 0.0;
        PressureSystem {
            nx,
            ny,
            tx,
            ty,
            pin,
            rhs,
        }
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn pin_cell(&self) -> usize {
        self.pin
    }
}

impl LinearOp for PressureSystem {
    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if c == self.pin {
                    y[c] = x[c];
                    continue;
                }
                let mut acc = 0.0;
                let mut couple = |t: f64, nb: usize| {
                    // Pinned neighbor is a known zero: keep the diagonal
                    // term, drop the coupling.
                    acc += t * x[c];
                    if nb != self.pin {
                        acc -= t * x[nb];
                    }
                };
                let tl = self.tx[j * (nx + 1) + i];
                if tl != 0.0 {
                    couple(tl, c - 1);
                }
                let tr = self.tx[j * (nx + 1) + i + 1];
                if tr != 0.0 {
                    couple(tr, c + 1);
                }
                let td = self.ty[j * nx + i];
                if td != 0.0 {
                    couple(td, c - nx);
                }
                let tu = self.ty[(j + 1) * nx + i];
                if tu != 0.0 {
                    couple(tu, c + nx);
                }
                y[c] = acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut d = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if c == self.pin {
                    d[c] = 1.0;
                    continue;
                }
                d[c] = self.tx[j * (nx + 1) + i]
                    + self.tx[j * (nx + 1) + i + 1]
                    + self.ty[j * nx + i]
                    + self.ty[(j + 1) * nx + i];
            }
        }
        d
    }
}

/// Solve the pressure equation and derive the face fluxes (Darcy law on
/// interior faces, prescribed values on inflow/outflow boundary faces).
pub fn solve_pressure(
    perm: &PermField,
    prob: &FlowProblem,
    cfg: &SimConfig,
) -> Result<(Field, FaceFlux)> {
    let (nx, ny) = (perm.nx(), perm.ny());
    let sys = PressureSystem::new(perm, prob);
    let n = nx * ny;
    let sol = pcg(&sys, &sys.rhs, cfg.cg_tol, cfg.cg_max_factor * n)?;
    let p = Field::new(nx, ny, sol.x)?;

    let mut flux = FaceFlux {
        nx,
        ny,
        fx: vec![0.0; (nx + 1) * ny],
        fy: vec![0.0; nx * (ny + 1)],
    };
    for j in 0..ny {
        for i in 1..nx {
            flux.fx[j * (nx + 1) + i] =
                sys.tx[j * (nx + 1) + i] * (p.at(i - 1, j) - p.at(i, j));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            flux.fy[j * nx + i] = sys.ty[j * nx + i] * (p.at(i, j - 1) - p.at(i, j));
        }
    }
    if prob.kind == ProblemKind::UniformFlow {
        let per_face = prob.rate / ny as f64;
        for j in 0..ny {
            flux.fx[j * (nx + 1)] = per_face;
            flux.fx[j * (nx + 1) + nx] = per_face;
        }
    }
    Ok((p, flux))
}

/// Largest stable time step: `factor * phi * min_c(cell volume / outflux_c)`.
pub fn cfl_dt(flux: &FaceFlux, prob: &FlowProblem, factor: f64) -> f64 {
    let (nx, ny) = (flux.nx, flux.ny);
    let cell_vol = 1.0 / (nx as f64 * ny as f64);
    let producer = producer_cell(prob, nx, ny);
    let mut min_ratio = f64::INFINITY;
    for j in 0..ny {
        for i in 0..nx {
            let mut out = (-flux.x(i, j)).max(0.0)
                + flux.x(i + 1, j).max(0.0)
                + (-flux.y(i, j)).max(0.0)
                + flux.y(i, j + 1).max(0.0);
            if Some(j * nx + i) == producer {
                out += prob.rate;
            }
            if out > 0.0 {
                min_ratio = min_ratio.min(cell_vol / out);
            }
        }
    }
    factor * prob.porosity * min_ratio
}

fn producer_cell(prob: &FlowProblem, nx: usize, ny: usize) -> Option<usize> {
    match prob.kind {
        ProblemKind::QuarterFiveSpot => Some(nx * ny - 1),
        ProblemKind::UniformFlow => None,
    }
}

/// Water volumes (in and out) moved during one step.
#[derive(Clone, Copy, Debug, Default)]
pub struct MassBalance {
    pub water_in: f64,
    pub water_out: f64,
}

/// One explicit upwind step. Errors if `dt` exceeds the CFL limit of the
/// flux field. Returns the advanced saturation (clamped to `[0,1]`, which
/// changes values by at most a couple of ulps) and the step's water volumes.
pub fn advance_saturation(
    s: &Field,
    flux: &FaceFlux,
    prob: &FlowProblem,
    dt: f64,
) -> Result<(Field, MassBalance)> {
    let (nx, ny) = (flux.nx, flux.ny);
    let limit = cfl_dt(flux, prob, 1.0);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Contract(alloc::format!(
            "dt {dt} exceeds the CFL limit {limit}"
        )));
    }
    let cell_vol = 1.0 / (nx as f64 * ny as f64);
    let scale = dt / (prob.porosity * cell_vol);
    let sv = s.values();
    let mut delta = vec![0.0; nx * ny];
    let mut balance = MassBalance::default();

    // Interior x-faces: donor-cell upwinding.
    for j in 0..ny {
        for i in 1..nx {
            let f = flux.x(i, j);
            if f == 0.0 {
                continue;
            }
            let (donor, receiver) = if f >= 0.0 {
                (j * nx + i - 1, j * nx + i)
            } else {
                (j * nx + i, j * nx + i - 1)
            };
            let w = math::abs(f) * sv[donor] * scale;
            delta[donor] -= w;
            delta[receiver] += w;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let f = flux.y(i, j);
            if f == 0.0 {
                continue;
            }
            let (donor, receiver) = if f >= 0.0 {
                ((j - 1) * nx + i, j * nx + i)
            } else {
                (j * nx + i, (j - 1) * nx + i)
            };
            let w = math::abs(f) * sv[donor] * scale;
            delta[donor] -= w;
            delta[receiver] += w;
        }
    }

    match prob.kind {
        ProblemKind::QuarterFiveSpot => {
            // Injected fluid is pure water; the producer removes the local
            // mixture.
            delta[0] += prob.rate * scale;
            balance.water_in = prob.rate * dt;
            let prod = nx * ny - 1;
            let removed = prob.rate * sv[prod] * scale;
            delta[prod] -= removed;
            balance.water_out = prob.rate * sv[prod] * dt;
        }
        ProblemKind::UniformFlow => {
            for j in 0..ny {
                let fin = flux.x(0, j);
                delta[j * nx] += fin * scale;
                balance.water_in += fin * dt;
                let fout = flux.x(nx, j);
                let donor = j * nx + nx - 1;
                delta[donor] -= fout * sv[donor] * scale;
                balance.water_out += fout * sv[donor] * dt;
            }
        }
    }

    let next: Vec<f64> = sv
        .iter()
        .zip(&delta)
        .map(|(&v, &d)| (v + d).clamp(0.0, 1.0))
        .collect();
    Ok((Field::new(nx, ny, next)?, balance))
}

/// Instantaneous produced water fraction. Quarter-five spot: the producer
/// cell saturation (unit mobility makes fractional flow equal saturation).
/// Uniform flow: the outflux-weighted mean saturation of the right-boundary
/// donor cells.
pub fn water_cut(s: &Field, flux: &FaceFlux, prob: &FlowProblem) -> f64 {
    let (nx, ny) = (flux.nx, flux.ny);
    match prob.kind {
        ProblemKind::QuarterFiveSpot => s.at(nx - 1, ny - 1),
        ProblemKind::UniformFlow => {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..ny {
                let f = flux.x(nx, j);
                num += f * s.at(nx - 1, j);
                den += f;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        }
    }
}

/// First time (in PVI here, but the unit follows the series) at which the
/// water cut reaches 1%, linearly interpolated between bracketing samples;
/// `None` if the threshold is never reached.
pub fn breakthrough_time(series: &[(f64, f64)]) -> Option<f64> {
    let threshold = BREAKTHROUGH_WATER_CUT;
    let mut prev: Option<(f64, f64)> = None;
    for &(t, wc) in series {
        if wc >= threshold {
            return Some(match prev {
                None => t,
                Some((t0, w0)) => {
                    if wc > w0 {
                        t0 + (threshold - w0) * (t - t0) / (wc - w0)
                    } else {
                        t
                    }
                }
            });
        }
        prev = Some((t, wc));
    }
    None
}

/// Full propagated solution of one realization.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub pressure: Field,
    pub flux: FaceFlux,
    /// `(time, saturation)` at each requested snapshot time.
    pub snapshots: Vec<(f64, Field)>,
    /// `(pvi, water_cut)` per step, starting at `(0, 0)`.
    pub water_cut: Vec<(f64, f64)>,
    /// Breakthrough in PVI, when reached.
    pub breakthrough: Option<f64>,
    pub dt: f64,
    pub steps: usize,
}

/// Solve pressure once, then transport the initially oil-filled reservoir
/// to `t_end`, recording the water-cut series and snapshots.
pub fn simulate(perm: &PermField, prob: &FlowProblem, cfg: &SimConfig) -> Result<FlowSolution> {
    if cfg
        .snapshot_times
        .iter()
        .any(|&t| t < 0.0 || t > cfg.t_end + 1e-12)
    {
        return Err(Error::Contract(alloc::format!(
            "snapshot times {:?} must lie within [0, {}]",
            cfg.snapshot_times,
            cfg.t_end
        )));
    }
    let (pressure, flux) = solve_pressure(perm, prob, cfg)?;
    let dt_cfl = cfl_dt(&flux, prob, cfg.cfl_factor);
    if !(dt_cfl.is_finite() && dt_cfl > 0.0) {
        return Err(Error::Numerical(alloc::format!(
            "degenerate CFL step {dt_cfl}"
        )));
    }

    let mut events: Vec<f64> = cfg.snapshot_times.clone();
    events.push(cfg.t_end);
    events.sort_by(|a, b| a.partial_cmp(b).expect("snapshot times are finite"));
    events.dedup();

    let mut s = Field::zeros(flux.nx, flux.ny);
    let mut snapshots = Vec::new();
    let mut curve = vec![(0.0, 0.0)];
    let mut t = 0.0;
    let mut steps = 0;
    for &event in &events {
        while t < event {
            let remaining = event - t;
            let dt = if remaining <= dt_cfl * (1.0 + 1e-9) {
                remaining
            } else {
                dt_cfl
            };
            let (next, _) = advance_saturation(&s, &flux, prob, dt)?;
            s = next;
            t = if dt == remaining { event } else { t + dt };
            steps += 1;
            let wc = water_cut(&s, &flux, prob);
            if !wc.is_finite() {
                return Err(Error::Numerical("water cut became non-finite".into()));
            }
            curve.push((prob.pvi_of_time(t), wc));
        }
        if cfg.snapshot_times.contains(&event) {
            snapshots.push((event, s.clone()));
        }
    }

    let breakthrough = breakthrough_time(&curve);
    Ok(FlowSolution {
        pressure,
        flux,
        snapshots,
        water_cut: curve,
        breakthrough,
        dt: dt_cfl,
        steps,
    })
}
