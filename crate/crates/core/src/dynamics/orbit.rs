//! Closed orbits around a generic extremum.
//!
//! A loop is represented by its polar radius `r(theta)` in a frame centred on
//! the fixed point whose axes are scaled so that the quadratic part of `H`
//! becomes round. The loops are labelled by their radius `rho` on the
//! reference ray `theta = 0`, which orders them by enclosed area even where
//! `E(A)` is not monotone. Period, action and angle averages are periodic
//! trapezoid sums in `theta`, which converge geometrically; node counts are
//! doubled until the action and period are stable.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use serde::Serialize;

use super::fixed_point::{sym_eigen2, Classification, FixedPointReport};
use super::integrator::{dp5_step, next_step, Tolerances};
use super::SmoothHamiltonian;
use crate::error::{Error, Result};

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Affine frame `z = center + L w` with `det L = 1`. The first axis points
/// along the minor axis of the quadratic level ellipse.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Frame {
    pub center: [f64; 2],
    pub l: [[f64; 2]; 2],
    pub l_inv: [[f64; 2]; 2],
}

impl Frame {
    pub fn from_fixed_point(fp: &FixedPointReport) -> Result<Self> {
        fp.ensure_extremum()?;
        let (ev, vecs) = sym_eigen2(&fp.hessian);
        // largest |eigenvalue| first
        let (first, second) = if ev[0].abs() >= ev[1].abs() { (0, 1) } else { (1, 0) };
        let (l1, l2) = (ev[first].abs(), ev[second].abs());
        let c = (l1 * l2).powf(0.25);
        let a = [vecs[first][0] * c / l1.sqrt(), vecs[first][1] * c / l1.sqrt()];
        let mut b = [vecs[second][0] * c / l2.sqrt(), vecs[second][1] * c / l2.sqrt()];
        if a[0] * b[1] - a[1] * b[0] < 0.0 {
            b = [-b[0], -b[1]];
        }
        let l = [[a[0], b[0]], [a[1], b[1]]];
        let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
        let l_inv = [[l[1][1] / det, -l[0][1] / det], [-l[1][0] / det, l[0][0] / det]];
        Ok(Frame { center: [fp.x, fp.p], l, l_inv })
    }

    pub fn point(&self, r: f64, theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        self.point_dir(r, [c, s])
    }

    fn point_dir(&self, r: f64, u: [f64; 2]) -> [f64; 2] {
        [
            self.center[0] + r * (self.l[0][0] * u[0] + self.l[0][1] * u[1]),
            self.center[1] + r * (self.l[1][0] * u[0] + self.l[1][1] * u[1]),
        ]
    }

    fn direction(&self, u: [f64; 2]) -> [f64; 2] {
        [self.l[0][0] * u[0] + self.l[0][1] * u[1], self.l[1][0] * u[0] + self.l[1][1] * u[1]]
    }

    pub fn to_local(&self, z: [f64; 2]) -> [f64; 2] {
        let d = [z[0] - self.center[0], z[1] - self.center[1]];
        [self.l_inv[0][0] * d[0] + self.l_inv[0][1] * d[1], self.l_inv[1][0] * d[0] + self.l_inv[1][1] * d[1]]
    }

    fn vec_to_local(&self, v: [f64; 2]) -> [f64; 2] {
        [self.l_inv[0][0] * v[0] + self.l_inv[0][1] * v[1], self.l_inv[1][0] * v[0] + self.l_inv[1][1] * v[1]]
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContourNode {
    pub theta: f64,
    pub r: f64,
    pub x: f64,
    pub p: f64,
    /// `|dt / dtheta|` along the flow.
    pub dt_dtheta: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrbitSample {
    pub t: f64,
    pub x: f64,
    pub p: f64,
}

/// Diagnostics of the time integration of the flow over one period.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowDiagnostics {
    /// Return time to the transversal section.
    pub period: f64,
    /// `(1/2pi) |oint p dx|` accumulated along the integrated trajectory.
    pub action: f64,
    /// `max |H - E| / |E - E_fixed|` along the trajectory.
    pub max_energy_drift: f64,
    /// Distance between the start point and the return point, in frame units.
    pub closure_error: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Orbit {
    pub energy: f64,
    /// Period `T > 0`.
    pub period: f64,
    /// Action `A >= 0`.
    pub action: f64,
    /// Signed frequency `dE/dA`; its magnitude is `2 pi / T`.
    pub frequency: f64,
    /// Reference-ray radius labelling the loop.
    pub radius: f64,
    /// Time-stamped points from the integrated flow (empty unless requested).
    pub samples: Vec<OrbitSample>,
    pub flow: Option<FlowDiagnostics>,
    pub nodes: Vec<ContourNode>,
    pub frame: Frame,
    /// `+1` when nodes run counter-clockwise in the local frame.
    pub orientation: f64,
}

impl Orbit {
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.nodes.reverse();
        out.orientation = -self.orientation;
        out.samples.reverse();
        out
    }

    /// CSV rows `t,x,p,H` of the flow samples.
    pub fn write_samples_csv<W: Write>(&self, h: &SmoothHamiltonian, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,p,H")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.x, s.p, h.value(s.x, s.p))?;
        }
        Ok(())
    }
}

/// `(A, omega)` from the loop: `A = (1/2pi)|oint p dx|`, the line integral
/// in polar form `(1/2) oint r^2 dtheta` (the frame has unit Jacobian).
pub fn action_and_frequency(orbit: &Orbit) -> (f64, f64) {
    let m = orbit.nodes.len() as f64;
    let signed: f64 = orbit.orientation * orbit.nodes.iter().map(|n| 0.5 * n.r * n.r).sum::<f64>() * (2.0 * PI / m);
    let action = signed.abs() / (2.0 * PI);
    let period: f64 = orbit.nodes.iter().map(|n| n.dt_dtheta).sum::<f64>() * (2.0 * PI / m);
    (action, orbit.frequency.signum() * 2.0 * PI / period)
}

/// Time average `(1/T) oint F dt`, equal to the angle average.
pub fn orbit_average<F: Fn(f64, f64) -> f64>(orbit: &Orbit, f: F) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for n in &orbit.nodes {
        num += f(n.x, n.p) * n.dt_dtheta;
        den += n.dt_dtheta;
    }
    num / den
}

/// Numerical settings of the orbit machinery.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrbitOptions {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Relative stability of action and period under node doubling.
    pub quadrature_tol: f64,
    pub flow_rtol: f64,
    pub section_time_tol: f64,
    pub max_flow_steps: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            min_nodes: 64,
            max_nodes: 1 << 15,
            quadrature_tol: 1e-14,
            flow_rtol: 1e-11,
            section_time_tol: 1e-13,
            max_flow_steps: 2_000_000,
        }
    }
}

struct RawContour {
    nodes: Vec<ContourNode>,
    action: f64,
    period: f64,
}

/// Orbit family around one generic extremum.
#[derive(Clone, Debug)]
pub struct OrbitEngine {
    h: SmoothHamiltonian,
    fp: FixedPointReport,
    frame: Frame,
    ceiling: Option<f64>,
    rising: bool,
    /// `(radius, action)` of the ceiling loop, computed on first use.
    top: OnceLock<Result<(f64, f64)>>,
    pub options: OrbitOptions,
}

impl OrbitEngine {
    pub fn new(h: &SmoothHamiltonian, fp: &FixedPointReport) -> Result<Self> {
        let isotropic =
            fp.classification == Classification::NonGeneric && h.is_rotation_invariant() && fp.x.hypot(fp.p) <= 1e-8;
        let (frame, rising) = if isotropic {
            // a function of I with a flat centre: circles about the origin
            let frame = Frame { center: [0.0, 0.0], l: IDENTITY, l_inv: IDENTITY };
            let e0 = h.value(0.0, 0.0);
            let rising = [1e-3, 1e-2, 1e-1, 1.0]
                .iter()
                .map(|r| h.value(*r, 0.0) - e0)
                .find(|d| *d != 0.0)
                .ok_or_else(|| Error::NonGeneric { x: fp.x, p: fp.p, det: fp.hessian_det })?
                > 0.0;
            (frame, rising)
        } else {
            (Frame::from_fixed_point(fp)?, fp.classification == Classification::GenericMinimum)
        };
        let mut fp = fp.clone();
        fp.x = frame.center[0];
        fp.p = frame.center[1];
        Ok(OrbitEngine {
            h: h.clone(),
            fp,
            frame,
            ceiling: None,
            rising,
            top: OnceLock::new(),
            options: OrbitOptions::default(),
        })
    }

    /// True when energy increases away from the fixed point.
    pub fn is_minimum(&self) -> bool {
        self.rising
    }

    /// Upper energy bound of the working window (below any separatrix).
    pub fn with_ceiling(mut self, ceiling: Option<f64>) -> Self {
        self.ceiling = ceiling;
        self.top = OnceLock::new();
        self
    }

    pub fn with_options(mut self, options: OrbitOptions) -> Self {
        self.options = options;
        self.top = OnceLock::new();
        self
    }

    pub fn hamiltonian(&self) -> &SmoothHamiltonian {
        &self.h
    }

    pub fn fixed_point(&self) -> &FixedPointReport {
        &self.fp
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn ceiling(&self) -> Option<f64> {
        self.ceiling
    }

    fn radial(&self, r: f64, u: [f64; 2]) -> (f64, f64) {
        let z = self.frame.point_dir(r, u);
        let d = self.frame.direction(u);
        let g = self.h.gradient(z[0], z[1]);
        (self.h.value(z[0], z[1]), g[0] * d[0] + g[1] * d[1])
    }

    /// Newton on `H(r) = E` along direction `u`, started at `r0`.
    fn solve_radius(&self, energy: f64, u: [f64; 2], r0: f64, sign: f64) -> Option<f64> {
        let mut r = r0;
        for _ in 0..80 {
            let (v, d) = self.radial(r, u);
            if !(d * sign > 0.0) || !v.is_finite() {
                return None;
            }
            let mut step = (v - energy) / d;
            let cap = 0.25 * r;
            if step.abs() > cap {
                step = cap * step.signum();
            }
            let next = r - step;
            if next <= 0.0 {
                return None;
            }
            let done = (next - r).abs() <= 4.0 * f64::EPSILON * r;
            r = next;
            if done {
                let (v, d) = self.radial(r, u);
                return Some(r - (v - energy) / d);
            }
        }
        None
    }

    fn contour(&self, rho: f64, m: usize) -> Result<RawContour> {
        let (energy, d0) = self.radial(rho, [1.0, 0.0]);
        let sign = d0.signum();
        if d0 == 0.0 || !d0.is_finite() {
            return Err(Error::OrbitNotClosed(format!("level set is tangent to the reference ray at radius {rho}")));
        }
        let mut nodes = Vec::with_capacity(m);
        let dtheta = 2.0 * PI / m as f64;
        let mut prev = rho;
        let mut prev2 = rho;
        for k in 0..=m {
            let theta = k as f64 * dtheta;
            let (s, c) = theta.sin_cos();
            let u = [c, s];
            let r = if k == 0 {
                rho
            } else {
                let guess = if k >= 2 { (2.0 * prev - prev2).max(0.5 * prev) } else { prev };
                self.solve_radius(energy, u, guess, sign)
                    .or_else(|| self.solve_radius(energy, u, prev, sign))
                    .ok_or_else(|| {
                        Error::OrbitNotClosed(format!(
                            "lost the level set E = {energy} at theta = {theta:.6} (separatrix or non-star-shaped loop)"
                        ))
                    })?
            };
            if k == m {
                if (r - rho).abs() > 1e-9 * rho {
                    return Err(Error::OrbitNotClosed(format!("loop does not close: r(2pi) = {r}, r(0) = {rho}")));
                }
                break;
            }
            let z = self.frame.point_dir(r, u);
            let g = self.h.gradient(z[0], z[1]);
            let zdot = [g[1], -g[0]];
            let wdot = self.frame.vec_to_local(zdot);
            let w = [r * c, r * s];
            let cross = w[0] * wdot[1] - w[1] * wdot[0];
            if cross == 0.0 || !cross.is_finite() {
                return Err(Error::OrbitNotClosed(format!("flow stalls on the loop at theta = {theta:.6}")));
            }
            nodes.push(ContourNode { theta, r, x: z[0], p: z[1], dt_dtheta: (r * r / cross).abs() });
            prev2 = prev;
            prev = r;
        }
        let action = nodes.iter().map(|n| 0.5 * n.r * n.r).sum::<f64>() / m as f64;
        let period = nodes.iter().map(|n| n.dt_dtheta).sum::<f64>() * dtheta;
        Ok(RawContour { nodes, action, period })
    }

    /// The loop through the reference-ray point at radius `rho`.
    pub fn orbit_at_radius(&self, rho: f64) -> Result<Orbit> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {rho}")));
        }
        let (energy, d0) = self.radial(rho, [1.0, 0.0]);
        let mut m = self.options.min_nodes;
        let mut last = self.contour(rho, m)?;
        loop {
            m *= 2;
            if m > self.options.max_nodes {
                return Err(Error::OrbitNotClosed(format!(
                    "contour quadrature did not converge with {} nodes",
                    self.options.max_nodes
                )));
            }
            let next = self.contour(rho, m)?;
            let tol = self.options.quadrature_tol;
            let stable = (next.action - last.action).abs() <= tol * next.action
                && (next.period - last.period).abs() <= tol * next.period;
            last = next;
            if stable {
                break;
            }
        }
        let frequency = d0.signum() * 2.0 * PI / last.period;
        Ok(Orbit {
            energy,
            period: last.period,
            action: last.action,
            frequency,
            radius: rho,
            samples: Vec::new(),
            flow: None,
            nodes: last.nodes,
            frame: self.frame,
            orientation: 1.0,
        })
    }

    /// Radius of the first crossing of `H = E` along the reference ray.
    pub fn radius_for_energy(&self, energy: f64) -> Result<f64> {
        let e0 = self.fp.energy;
        let gap = energy - e0;
        let omega0 = self.fp.hessian_det.abs().sqrt();
        let rising = self.rising;
        if gap == 0.0 || (gap > 0.0) != rising {
            return Err(Error::InvalidArgument(format!(
                "energy {energy} is on the wrong side of the fixed-point energy {e0}"
            )));
        }
        let guess = if omega0 > 0.0 { (2.0 * gap.abs() / omega0).sqrt() } else { 1.0 };
        let f = |r: f64| self.radial(r, [1.0, 0.0]).0 - energy;
        let below = f(0.0);
        let mut lo = 0.0;
        let mut r = guess * 1e-3;
        let mut hi = None;
        for _ in 0..400 {
            let v = f(r);
            if !v.is_finite() {
                break;
            }
            if v.signum() != below.signum() {
                hi = Some(r);
                break;
            }
            lo = r;
            r *= 1.05;
        }
        let mut hi = hi.ok_or_else(|| {
            Error::OrbitNotClosed(format!("level set E = {energy} not reached along the reference ray"))
        })?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid).signum() == below.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Closed loop at energy `E` (contour only, no flow integration).
    pub fn orbit_at_energy(&self, energy: f64) -> Result<Orbit> {
        let rho = self.radius_for_energy(energy)?;
        self.orbit_at_radius(rho)
    }

    /// Action at the window ceiling, if one is declared.
    pub fn max_action(&self) -> Result<Option<f64>> {
        Ok(self.top_loop()?.map(|t| t.1))
    }

    fn top_loop(&self) -> Result<Option<(f64, f64)>> {
        match self.ceiling {
            Some(c) => self.top.get_or_init(|| self.orbit_at_energy(c).map(|o| (o.radius, o.action))).clone().map(Some),
            None => Ok(None),
        }
    }

    /// Loop enclosing action `A`. Solves `A(rho) = A` by safeguarded
    /// secant steps in `rho^2`, on which `A` is nearly linear.
    pub fn orbit_of_action(&self, action: f64) -> Result<Orbit> {
        if !(action > 0.0) || !action.is_finite() {
            return Err(Error::InvalidArgument(format!("action must be positive, got {action}")));
        }
        let eval = |s: f64| -> Result<(f64, Orbit)> {
            let o = self.orbit_at_radius(s.sqrt())?;
            Ok((o.action - action, o))
        };
        // A(0) = 0 brackets from below; the ceiling loop (or an expanding
        // search that backs off when loops stop closing) from above
        let (sa, fa, oa) = (0.0, -action, None);
        let (sb, fb, ob) = match self.top_loop()? {
            Some((radius, max_action)) => {
                if action > max_action {
                    return Err(Error::OutOfWindow { action, max_action });
                }
                let s = radius * radius;
                let (f, o) = eval(s)?;
                (s, f, o)
            }
            None => {
                let mut good = 0.0;
                let mut s = 2.0 * action;
                let mut found = None;
                for _ in 0..200 {
                    match eval(s) {
                        Ok((f, o)) if f >= 0.0 => {
                            found = Some((s, f, o));
                            break;
                        }
                        Ok(_) => {
                            good = s;
                            s *= 1.5;
                        }
                        Err(_) if s - good > 1e-12 * s => s = 0.5 * (good + s),
                        Err(e) => return Err(e),
                    }
                }
                found.ok_or_else(|| Error::OrbitNotClosed(format!("could not bracket action {action}")))?
            }
        };
        if fb == 0.0 {
            return Ok(ob);
        }
        let (mut sa, mut fa, mut oa, mut sb, mut fb, mut ob) = (sa, fa, oa, sb, fb, ob);
        // Illinois false position
        let mut side = 0;
        for _ in 0..200 {
            let s = (sa * fb - sb * fa) / (fb - fa);
            let (f, o) = eval(s)?;
            if f.abs() <= 1e-15 * action || (sb - sa).abs() <= 1e-15 * s {
                return Ok(o);
            }
            if f.signum() == fa.signum() {
                sa = s;
                fa = f;
                oa = Some(o);
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                sb = s;
                fb = f;
                ob = o;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        let best = match oa {
            Some(oa) if (oa.action - action).abs() < (ob.action - action).abs() => oa,
            _ => ob,
        };
        if (best.action - action).abs() <= 1e-12 * action {
            Ok(best)
        } else {
            Err(Error::OrbitNotClosed(format!("action inversion stalled at {action}")))
        }
    }

    /// `E(A)`.
    pub fn energy_of_action(&self, action: f64) -> Result<f64> {
        Ok(self.orbit_of_action(action)?.energy)
    }

    /// Integrates the flow `xdot = H_p, pdot = -H_x` once around `orbit`,
    /// recording samples and the return time to the section `w_2 = 0`.
    pub fn integrate_flow(&self, orbit: &Orbit) -> Result<(Vec<OrbitSample>, FlowDiagnostics)> {
        let start = self.frame.point(orbit.radius, 0.0);
        let energy = orbit.energy;
        let gap = (energy - self.fp.energy).abs();
        let h = &self.h;
        let rhs = |_t: f64, y: &[f64; 3]| {
            let g = h.gradient(y[0], y[1]);
            [g[1], -g[0], y[1] * g[1]]
        };
        let scale = self.frame.l.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) * orbit.radius;
        let tol = Tolerances { rtol: self.options.flow_rtol, atol: 1e-3 * self.options.flow_rtol * scale };
        let section = |y: &[f64; 3]| self.frame.to_local([y[0], y[1]])[1];
        let dir0 = {
            let d = rhs(0.0, &[start[0], start[1], 0.0]);
            self.frame.vec_to_local([d[0], d[1]])[1].signum()
        };
        let mut y = [start[0], start[1], 0.0];
        let mut t = 0.0;
        let mut hstep = orbit.period / 200.0;
        let mut samples = vec![OrbitSample { t, x: y[0], p: y[1] }];
        let mut drift = 0.0f64;
        let mut half_turn = false;
        let mut steps = 0usize;
        loop {
            if steps >= self.options.max_flow_steps {
                return Err(Error::OrbitNotClosed(format!(
                    "section not re-crossed within {} steps",
                    self.options.max_flow_steps
                )));
            }
            let (yn, err) = dp5_step(&rhs, t, &y, hstep, tol);
            if err > 1.0 {
                hstep = next_step(hstep, err);
                continue;
            }
            steps += 1;
            let g_old = section(&y);
            let g_new = section(&yn);
            if self.frame.to_local([yn[0], yn[1]])[0] < 0.0 {
                half_turn = true;
            }
            let crossed = half_turn && g_old * dir0 < 0.0 && g_new * dir0 >= 0.0;
            if crossed {
                // bisection on the step length from the last accepted state
                let (mut a, mut b) = (0.0, hstep);
                while b - a > self.options.section_time_tol {
                    let mid = 0.5 * (a + b);
                    let (ym, _) = dp5_step(&rhs, t, &y, mid, tol);
                    if section(&ym) * dir0 < 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let tau = 0.5 * (a + b);
                let (yf, _) = dp5_step(&rhs, t, &y, tau, tol);
                let tf = t + tau;
                drift = drift.max((h.value(yf[0], yf[1]) - energy).abs() / gap);
                samples.push(OrbitSample { t: tf, x: yf[0], p: yf[1] });
                let wf = self.frame.to_local([yf[0], yf[1]]);
                let closure = (wf[0] - orbit.radius).hypot(wf[1]);
                return Ok((
                    samples,
                    FlowDiagnostics {
                        period: tf,
                        action: yf[2].abs() / (2.0 * PI),
                        max_energy_drift: drift,
                        closure_error: closure,
                        steps,
                    },
                ));
            }
            t += hstep;
            y = yn;
            drift = drift.max((h.value(y[0], y[1]) - energy).abs() / gap);
            samples.push(OrbitSample { t, x: y[0], p: y[1] });
            hstep = next_step(hstep, err);
        }
    }
}

/// Traces the closed orbit at energy `E` around `fp`: contour quadrature for
/// period, action and averages, plus one integrated period of the flow for
/// time-stamped samples.
pub fn trace_orbit(h: &SmoothHamiltonian, energy: f64, fp: &FixedPointReport) -> Result<Orbit> {
    let engine = OrbitEngine::new(h, fp)?;
    let mut orbit = engine.orbit_at_energy(energy)?;
    let (samples, flow) = engine.integrate_flow(&orbit)?;
    orbit.samples = samples;
    orbit.flow = Some(flow);
    Ok(orbit)
}

/// `E(A)` inside the window bounded by `ceiling`.
pub fn energy_of_action(
    h: &SmoothHamiltonian,
    fp: &FixedPointReport,
    action: f64,
    ceiling: Option<f64>,
) -> Result<f64> {
    OrbitEngine::new(h, fp)?.with_ceiling(ceiling).energy_of_action(action)
}
