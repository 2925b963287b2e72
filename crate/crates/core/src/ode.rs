//! Deterministic price-moments dynamics: classical RK4 in log-time
//! `s = ln tau`, limit detection, the symmetric scalar reduction and
//! equicorrelated steady states.
//!
//! In log-time the system reads `dU/ds = e`, `dV/ds = tau e e^T` with
//! `e = P(U, V) - U`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::moments::{ols_price, posted_price, MomentState};

/// Stability budget for one RK4 substep, in units of the local price
/// sensitivity `tau |e| p_max / V_ii`. Steps are split when a small
/// exploration variance makes the early transient fast.
const SUBSTEP_BUDGET: f64 = 0.25;
const MAX_SUBSTEPS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Macro step in `s = ln tau`.
    pub log_time_step: f64,
    pub tau_end: f64,
    /// Price tolerance used by limit detection.
    pub convergence_tol: f64,
    /// Keep every `record_every`-th macro step in a trajectory. The last
    /// step is always kept.
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            log_time_step: 1e-3,
            tau_end: 100.0,
            convergence_tol: 1e-6,
            record_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.log_time_step > 0.0 && self.log_time_step.is_finite()) {
            return Err(Error::domain("log_time_step > 0 violated"));
        }
        if !(self.tau_end >= 1.0 && self.tau_end.is_finite()) {
            return Err(Error::domain("tau_end >= 1 violated"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::domain("convergence_tol > 0 violated"));
        }
        if self.record_every == 0 {
            return Err(Error::domain("record_every >= 1 violated"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeTrajectory {
    pub taus: Vec<f64>,
    pub states: Vec<MomentState>,
    pub prices: Vec<DVector<f64>>,
    pub gaps: Vec<DVector<f64>>,
}

impl OdeTrajectory {
    fn push(&mut self, params: &MarketParams, state: MomentState) {
        let p = posted_price(params, &state);
        self.gaps.push(&p - &state.u);
        self.prices.push(p);
        self.taus.push(state.tau);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn terminal_price(&self) -> &DVector<f64> {
        self.prices.last().expect("trajectory holds the initial state")
    }

    pub fn terminal_state(&self) -> &MomentState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with columns `tau,firm,U,P,e`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,firm,U,P,e")?;
        for (k, state) in self.states.iter().enumerate() {
            for i in 0..state.n_firms() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    self.taus[k], i, state.u[i], self.prices[k][i], self.gaps[k][i]
                )?;
            }
        }
        Ok(())
    }

    /// CSV with columns `tau,i,j,V`, upper triangle only.
    pub fn write_v_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,i,j,V")?;
        for (k, state) in self.states.iter().enumerate() {
            let n = state.n_firms();
            for i in 0..n {
                for j in i..n {
                    writeln!(w, "{},{},{},{}", self.taus[k], i, j, state.v[(i, j)])?;
                }
            }
        }
        Ok(())
    }
}

/// Right-hand side in scaled time: `dU = e / tau`, `dV = e e^T`.
pub fn ode_rhs(params: &MarketParams, state: &MomentState) -> (DVector<f64>, DMatrix<f64>) {
    let e = posted_price(params, state) - &state.u;
    let dv = &e * e.transpose();
    (e / state.tau, dv)
}

/// Fixed-step RK4 over a flat state vector with stability substepping.
struct Stepper {
    y: Vec<f64>,
    s: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(y: Vec<f64>, s: f64) -> Self {
        let n = y.len();
        Stepper {
            y,
            s,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn rk4<F: Fn(f64, &[f64], &mut [f64])>(&mut self, h: f64, rhs: &F) {
        let [k1, k2, k3, k4] = &mut self.k;
        rhs(self.s, &self.y, k1);
        for (t, (y, k)) in self.tmp.iter_mut().zip(self.y.iter().zip(k1.iter())) {
            *t = y + 0.5 * h * k;
        }
        rhs(self.s + 0.5 * h, &self.tmp, k2);
        for (t, (y, k)) in self.tmp.iter_mut().zip(self.y.iter().zip(k2.iter())) {
            *t = y + 0.5 * h * k;
        }
        rhs(self.s + 0.5 * h, &self.tmp, k3);
        for (t, (y, k)) in self.tmp.iter_mut().zip(self.y.iter().zip(k3.iter())) {
            *t = y + h * k;
        }
        rhs(self.s + h, &self.tmp, k4);
        for (i, y) in self.y.iter_mut().enumerate() {
            *y += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.s += h;
    }

    /// One macro step of length `h`, split into as many equal RK4 substeps
    /// as the local rate `rate(s, y)` requires.
    fn step<F, R>(&mut self, h: f64, rhs: &F, rate: &R) -> Result<()>
    where
        F: Fn(f64, &[f64], &mut [f64]),
        R: Fn(f64, &[f64]) -> f64,
    {
        let r = rate(self.s, &self.y);
        let m = if r.is_finite() {
            ((h * r / SUBSTEP_BUDGET).ceil() as usize).clamp(1, MAX_SUBSTEPS)
        } else {
            MAX_SUBSTEPS
        };
        let sub = h / m as f64;
        for _ in 0..m {
            self.rk4(sub, rhs);
        }
        if self.y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::StepSize { tau: self.s.exp() })
        }
    }

    /// Macro steps from the current `s` to exactly `s_target`, each no
    /// longer than `h`. Calls `on_step` after every macro step.
    fn advance<F, R, C>(
        &mut self,
        s_target: f64,
        h: f64,
        rhs: &F,
        rate: &R,
        mut on_step: C,
    ) -> Result<()>
    where
        F: Fn(f64, &[f64], &mut [f64]),
        R: Fn(f64, &[f64]) -> f64,
        C: FnMut(usize, bool, &Self),
    {
        let span = s_target - self.s;
        if span <= 0.0 {
            return Ok(());
        }
        let n = ((span / h) - 1e-9).ceil().max(1.0) as usize;
        let hh = span / n as f64;
        let s0 = self.s;
        for k in 0..n {
            self.step(hh, rhs, rate)?;
            // re-anchor to avoid drift from repeated addition
            self.s = if k + 1 == n {
                s_target
            } else {
                s0 + hh * (k + 1) as f64
            };
            on_step(k, k + 1 == n, self);
        }
        Ok(())
    }
}

/// N-firm system on the flat layout `[U_0..U_{N-1}, V row-major]`.
struct MomentSystem {
    params: MarketParams,
    n: usize,
}

impl MomentSystem {
    fn pack(state: &MomentState) -> Vec<f64> {
        let n = state.n_firms();
        let mut y = Vec::with_capacity(n + n * n);
        y.extend(state.u.iter());
        for i in 0..n {
            for j in 0..n {
                y.push(state.v[(i, j)]);
            }
        }
        y
    }

    fn unpack(&self, s: f64, y: &[f64]) -> MomentState {
        let n = self.n;
        MomentState {
            tau: s.exp(),
            u: DVector::from_column_slice(&y[..n]),
            v: DMatrix::from_row_slice(n, n, &y[n..]),
        }
    }

    fn gaps(&self, y: &[f64], e: &mut [f64]) {
        let n = self.n;
        let (u, v) = y.split_at(n);
        let usum: f64 = u.iter().sum();
        let m = (n - 1) as f64;
        for i in 0..n {
            let row = &v[i * n..(i + 1) * n];
            let vii = row[i];
            let vbar = (row.iter().sum::<f64>() - vii) / m;
            let ubar = (usum - u[i]) / m;
            e[i] = ols_price(&self.params, u[i], ubar, vii, vbar) - u[i];
        }
    }

    fn rhs(&self, s: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let tau = s.exp();
        let (du, dv) = dy.split_at_mut(n);
        self.gaps(y, du);
        for i in 0..n {
            for j in 0..n {
                dv[i * n + j] = tau * du[i] * du[j];
            }
        }
    }

    fn rate(&self, s: f64, y: &[f64]) -> f64 {
        let n = self.n;
        let mut e = vec![0.0; n];
        self.gaps(y, &mut e);
        let emax = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vmin = (0..n).map(|i| y[n + i * n + i]).fold(f64::INFINITY, f64::min);
        s.exp() * emax * self.params.p_max / vmin
    }
}

/// Incremental integrator of the N-firm system.
pub struct MomentIntegrator {
    system: MomentSystem,
    stepper: Stepper,
    h: f64,
}

impl MomentIntegrator {
    pub fn new(params: &MarketParams, state: &MomentState, log_time_step: f64) -> Result<Self> {
        if state.n_firms() != params.n_firms {
            return Err(Error::domain("state dimension differs from n_firms"));
        }
        if !(log_time_step > 0.0) {
            return Err(Error::domain("log_time_step > 0 violated"));
        }
        if !(state.tau >= 1.0) || (0..state.n_firms()).any(|i| !(state.v[(i, i)] > 0.0)) {
            return Err(Error::domain("initial state needs tau >= 1 and V_ii > 0"));
        }
        Ok(MomentIntegrator {
            system: MomentSystem {
                params: *params,
                n: state.n_firms(),
            },
            stepper: Stepper::new(MomentSystem::pack(state), state.tau.ln()),
            h: log_time_step,
        })
    }

    pub fn tau(&self) -> f64 {
        self.stepper.s.exp()
    }

    pub fn state(&self) -> MomentState {
        self.system.unpack(self.stepper.s, &self.stepper.y)
    }

    pub fn prices(&self) -> DVector<f64> {
        posted_price(&self.system.params, &self.state())
    }

    pub fn advance_to(&mut self, tau: f64) -> Result<()> {
        self.advance_recording(tau, |_, _, _| {})
    }

    fn advance_recording<C>(&mut self, tau: f64, mut on_step: C) -> Result<()>
    where
        C: FnMut(usize, bool, MomentState),
    {
        let sys = &self.system;
        self.stepper.advance(
            tau.ln(),
            self.h,
            &|s, y, dy| sys.rhs(s, y, dy),
            &|s, y| sys.rate(s, y),
            |k, last, st| on_step(k, last, sys.unpack(st.s, &st.y)),
        )
    }
}

fn exploration_state(params: &MarketParams, mu: &[f64], sigma: &[f64]) -> Result<MomentState> {
    if mu.len() != params.n_firms || sigma.len() != params.n_firms {
        return Err(Error::domain("mu and sigma need one entry per firm"));
    }
    if mu.iter().any(|&m| m < params.p_min || m > params.p_max) {
        return Err(Error::domain("mu must lie in [p_min, p_max]"));
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::domain("sigma > 0 violated"));
    }
    Ok(MomentState::from_exploration(mu, sigma))
}

/// Trajectory from the post-exploration state `U = mu`, `V = diag(sigma^2)`
/// at `tau = 1` up to `config.tau_end`.
pub fn integrate(
    params: &MarketParams,
    mu: &[f64],
    sigma: &[f64],
    config: &IntegratorConfig,
) -> Result<OdeTrajectory> {
    integrate_from(params, &exploration_state(params, mu, sigma)?, config)
}

pub fn integrate_from(
    params: &MarketParams,
    state: &MomentState,
    config: &IntegratorConfig,
) -> Result<OdeTrajectory> {
    config.validate()?;
    let mut integ = MomentIntegrator::new(params, state, config.log_time_step)?;
    let mut traj = OdeTrajectory::default();
    traj.push(params, state.clone());
    let every = config.record_every;
    integ.advance_recording(config.tau_end, |k, last, st| {
        if last || (k + 1) % every == 0 {
            traj.push(params, st);
        }
    })?;
    Ok(traj)
}

/// Posted prices at each of `taus` (ascending, all `>= 1`), landing on
/// every requested time exactly.
pub fn prices_at(
    params: &MarketParams,
    mu: &[f64],
    sigma: &[f64],
    taus: &[f64],
    log_time_step: f64,
) -> Result<Vec<DVector<f64>>> {
    let state = exploration_state(params, mu, sigma)?;
    let mut integ = MomentIntegrator::new(params, &state, log_time_step)?;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau < integ.tau() * (1.0 - 1e-12) {
            return Err(Error::domain("sample taus must be ascending and >= 1"));
        }
        integ.advance_to(tau)?;
        out.push(integ.prices());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    pub tol: f64,
    pub tau_ceiling: f64,
    pub log_time_step: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            tol: 1e-6,
            tau_ceiling: 1e8,
            log_time_step: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LimitPrice {
    pub prices: DVector<f64>,
    /// First decade checkpoint at which the stability test passed.
    pub tau: f64,
    pub state: MomentState,
}

/// Integrates decade by decade until `max |e| < tol` and the posted price
/// moved less than `tol` over the last decade. Hitting the ceiling returns
/// [`Error::NotConverged`] with the final state.
pub fn limit_price(
    params: &MarketParams,
    mu: &[f64],
    sigma: &[f64],
    config: &LimitConfig,
) -> Result<LimitPrice> {
    limit_price_from(params, &exploration_state(params, mu, sigma)?, config)
}

pub fn limit_price_from(
    params: &MarketParams,
    state: &MomentState,
    config: &LimitConfig,
) -> Result<LimitPrice> {
    if !(config.tol > 0.0) || !(config.tau_ceiling > state.tau) {
        return Err(Error::domain("limit detection needs tol > 0 and a ceiling above tau"));
    }
    let mut integ = MomentIntegrator::new(params, state, config.log_time_step)?;
    let mut prev = integ.prices();
    let mut tau = state.tau;
    loop {
        tau = (tau * 10.0).min(config.tau_ceiling);
        integ.advance_to(tau)?;
        let st = integ.state();
        let p = posted_price(params, &st);
        let gap = (&p - &st.u).amax();
        let drift = (&p - &prev).amax();
        if gap < config.tol && drift < config.tol {
            return Ok(LimitPrice {
                prices: p,
                tau,
                state: st,
            });
        }
        if tau >= config.tau_ceiling {
            return Err(Error::NotConverged {
                state: Box::new(st),
            });
        }
        prev = p;
    }
}

/// Symmetric scalar path: running mean `u`, own moment `v`, common cross
/// moment `C`, with `v = C + sigma^2` throughout.
#[derive(Clone, Debug, Default)]
pub struct ScalarTrajectory {
    pub sigma: f64,
    pub taus: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
}

impl ScalarTrajectory {
    fn push(&mut self, params: &MarketParams, tau: f64, u: f64, c: f64) {
        let s2 = self.sigma * self.sigma;
        self.taus.push(tau);
        self.u.push(u);
        self.c.push(c);
        self.v.push(c + s2);
        self.p.push(scalar_price(params, u, c, s2));
    }
}

/// Symmetric posted price as a function of `(u, C)`.
fn scalar_price(params: &MarketParams, u: f64, c_moment: f64, sigma2: f64) -> f64 {
    // own moment v = C + sigma^2, every rival covariance equals C
    ols_price(params, u, u, c_moment + sigma2, c_moment)
}

/// Reduced dynamics of a symmetric start `mu = s 1`, `Sigma = sigma^2 I`:
/// `du/ds = p - u`, `dC/ds = tau (p - u)^2`.
pub fn symmetric_reduce(
    params: &MarketParams,
    s: f64,
    sigma: f64,
    config: &IntegratorConfig,
) -> Result<ScalarTrajectory> {
    config.validate()?;
    if s < params.p_min || s > params.p_max {
        return Err(Error::domain("s must lie in [p_min, p_max]"));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma > 0 violated"));
    }
    let s2 = sigma * sigma;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let e = scalar_price(params, y[0], y[1], s2) - y[0];
        dy[0] = e;
        dy[1] = t.exp() * e * e;
    };
    let rate = |t: f64, y: &[f64]| {
        let e = scalar_price(params, y[0], y[1], s2) - y[0];
        t.exp() * e.abs() * params.p_max / (y[1] + s2)
    };
    let mut traj = ScalarTrajectory {
        sigma,
        ..Default::default()
    };
    traj.push(params, 1.0, s, 0.0);
    let mut stepper = Stepper::new(vec![s, 0.0], 0.0);
    let every = config.record_every;
    let mut rows = Vec::new();
    stepper.advance(config.tau_end.ln(), config.log_time_step, &rhs, &rate, |k, last, st| {
        if last || (k + 1) % every == 0 {
            rows.push((st.s.exp(), st.y[0], st.y[1]));
        }
    })?;
    for (tau, u, c) in rows {
        traj.push(params, tau, u, c);
    }
    Ok(traj)
}

/// Closed-form limit of a symmetric start at `s`: `s` itself on
/// `[p_NE, min(p_M, p_max)]`, the capped monopoly price otherwise.
pub fn symmetric_limit(params: &MarketParams, s: f64) -> f64 {
    let top = params.capped_monopoly();
    if s >= params.nash_price() && s <= top {
        s
    } else {
        top
    }
}

/// Lowest price sustainable by an equicorrelated steady state,
/// `a (N-1) / ((N-1)(2b - c) + c)`.
pub fn cooper_min_price(params: &MarketParams) -> f64 {
    let m = (params.n_firms - 1) as f64;
    params.a * m / (m * (2.0 * params.b - params.c) + params.c)
}

#[derive(Clone, Debug)]
pub struct CooperSteadyState {
    pub rho: f64,
    pub state: MomentState,
}

/// Initial state `U = p_star 1`, `V = sigma2 ((1 - rho) I + rho 1 1^T)` that
/// the dynamics leave fixed.
pub fn cooper_steady_state(
    params: &MarketParams,
    p_star: f64,
    sigma2: f64,
) -> Result<CooperSteadyState> {
    let lo = cooper_min_price(params).max(params.p_min);
    let hi = params.capped_monopoly();
    let slack = 1e-12 * hi;
    if !(p_star >= lo - slack && p_star <= hi + slack) {
        return Err(Error::Range(format!(
            "p_star = {p_star} outside [{lo}, {hi}]"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::domain("sigma2 > 0 violated"));
    }
    let n = params.n_firms;
    let floor = -1.0 / (n - 1) as f64;
    let rho = crate::cone::conduct_from_price(params, p_star).clamp(floor, 1.0);
    let v = DMatrix::from_fn(n, n, |i, j| if i == j { sigma2 } else { rho * sigma2 });
    Ok(CooperSteadyState {
        rho,
        state: MomentState {
            tau: 1.0,
            u: DVector::from_element(n, p_star),
            v,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn duopoly() -> MarketParams {
        MarketParams::reference_duopoly()
    }

    fn cfg(tau_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            tau_end,
            ..Default::default()
        }
    }

    #[test]
    fn nash_start_is_stationary() {
        let p = duopoly();
        let ne = p.nash_price();
        let st = MomentState::from_exploration(&[ne, ne], &[0.05, 0.05]);
        let (du, dv) = ode_rhs(&p, &st);
        assert!(du.amax() < 1e-15 && dv.amax() < 1e-30);
        let traj = integrate(&p, &[ne, ne], &[0.05, 0.05], &cfg(100.0)).unwrap();
        for pr in &traj.prices {
            assert!((pr - DVector::from_element(2, ne)).amax() < 1e-14);
        }
    }

    #[test]
    fn rhs_covariance_is_rank_one_psd() {
        let p = duopoly().with_n_firms(3);
        let mut st = MomentState::from_exploration(&[0.7, 0.9, 0.6], &[0.05, 0.03, 0.04]);
        st.tau = 3.0;
        let (du, dv) = ode_rhs(&p, &st);
        let e = posted_price(&p, &st) - &st.u;
        assert_relative_eq!(du, &e / 3.0, epsilon = 1e-15);
        assert_relative_eq!(dv.clone(), dv.transpose());
        let eig = dv.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0] > -1e-15 && ev[1].abs() < 1e-15);
        assert_relative_eq!(ev[2], e.norm_squared(), epsilon = 1e-14);
    }

    #[test]
    fn step_refinement_is_self_consistent() {
        let p = duopoly();
        let mu = [0.75, 0.85];
        let sigma = [0.05, 0.05];
        let coarse = integrate(&p, &mu, &sigma, &cfg(100.0)).unwrap();
        let fine = integrate(
            &p,
            &mu,
            &sigma,
            &IntegratorConfig {
                log_time_step: 1e-3 / 16.0,
                record_every: 1000,
                ..cfg(100.0)
            },
        )
        .unwrap();
        let d = (coarse.terminal_price() - fine.terminal_price()).amax();
        assert!(d < 1e-4, "step refinement moved terminal price by {d}");
        assert_relative_eq!(fine.terminal_state().tau, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_low_start_ends_supra_competitive() {
        let p = duopoly();
        let traj = integrate(&p, &[0.66, 0.66], &[0.05, 0.05], &cfg(100.0)).unwrap();
        assert!(traj.terminal_price().iter().all(|&x| x > p.nash_price()));
    }

    #[test]
    fn trajectory_invariants() {
        let p = duopoly().with_n_firms(3);
        let traj = integrate(&p, &[0.7, 0.9, 0.8], &[0.05, 0.02, 0.04], &cfg(50.0)).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].tau > w[0].tau);
            for i in 0..3 {
                assert!(w[1].v[(i, i)] >= w[0].v[(i, i)]);
            }
        }
        assert_eq!(traj.taus[0], 1.0);
    }

    #[test]
    fn sampled_prices_land_on_requested_times() {
        let p = duopoly();
        let mu = [0.8, 0.7];
        let sigma = [0.02, 0.02];
        let at = prices_at(&p, &mu, &sigma, &[2.0, 6.0, 100.0], 1e-3).unwrap();
        let direct = integrate(&p, &mu, &sigma, &cfg(6.0)).unwrap();
        assert!((&at[1] - direct.terminal_price()).amax() < 1e-12);
        assert!(prices_at(&p, &mu, &sigma, &[6.0, 2.0], 1e-3).is_err());
    }

    #[test]
    fn record_stride_keeps_endpoint() {
        let p = duopoly();
        let traj = integrate(
            &p,
            &[0.8, 0.7],
            &[0.02, 0.02],
            &IntegratorConfig {
                record_every: 1000,
                ..cfg(100.0)
            },
        )
        .unwrap();
        // ceil(ln 100 / 1e-3) = 4606 steps
        assert_eq!(traj.len(), 1 + 4 + 1);
        assert_relative_eq!(*traj.taus.last().unwrap(), 100.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let p = duopoly();
        assert!(integrate(&p, &[0.8], &[0.02], &cfg(10.0)).is_err());
        assert!(integrate(&p, &[0.8, 1.2], &[0.02, 0.02], &cfg(10.0)).is_err());
        assert!(integrate(&p, &[0.8, 0.8], &[0.0, 0.02], &cfg(10.0)).is_err());
        assert!(integrate(&p, &[0.8, 0.8], &[0.02, 0.02], &cfg(0.5)).is_err());
    }

    #[test]
    fn symmetric_interior_start_stays_put() {
        let p = duopoly();
        let lim = limit_price(&p, &[0.8, 0.8], &[1e-3, 1e-3], &LimitConfig::default()).unwrap();
        assert!((lim.prices.add_scalar(-0.8)).amax() < 0.02, "{}", lim.prices);
        let red = symmetric_reduce(&p, 0.8, 1e-3, &cfg(1e6)).unwrap();
        assert!((red.u.last().unwrap() - 0.8).abs() < 0.02);
    }

    #[test]
    fn symmetric_low_start_rises_to_monopoly() {
        let p = duopoly();
        let lim = limit_price(&p, &[0.5, 0.5], &[1e-3, 1e-3], &LimitConfig::default()).unwrap();
        assert!((lim.prices.add_scalar(-1.0)).amax() < 0.02, "{}", lim.prices);
    }

    #[test]
    fn scalar_reduction_matches_full_system() {
        let p = duopoly().with_n_firms(4);
        for &s in &[0.55, 0.7, 0.9] {
            let sigma = 0.03;
            let red = symmetric_reduce(&p, s, sigma, &cfg(100.0)).unwrap();
            let full = integrate(&p, &[s; 4], &[sigma; 4], &cfg(100.0)).unwrap();
            assert_eq!(red.taus.len(), full.taus.len());
            for k in 0..full.len() {
                let st = &full.states[k];
                for i in 0..4 {
                    assert!((st.u[i] - red.u[k]).abs() < 1e-6);
                    assert!((full.prices[k][i] - red.p[k]).abs() < 1e-6);
                    assert!((st.v[(i, i)] - red.v[k]).abs() < 1e-6);
                    assert!((st.v[(i, (i + 1) % 4)] - red.c[k]).abs() < 1e-6);
                }
            }
            for k in 0..red.taus.len() {
                assert_relative_eq!(red.v[k] - red.c[k], sigma * sigma, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn nash_scalar_start_is_fixed() {
        let p = duopoly();
        let ne = p.nash_price();
        let red = symmetric_reduce(&p, ne, 0.01, &cfg(100.0)).unwrap();
        assert!(red.u.iter().all(|&u| (u - ne).abs() < 1e-14));
        assert!(red.c.iter().all(|&c| c.abs() < 1e-20));
    }

    #[test]
    fn closed_form_symmetric_limit() {
        let p = duopoly();
        assert_eq!(symmetric_limit(&p, 0.8), 0.8);
        assert_eq!(symmetric_limit(&p, 0.5), 1.0);
        let wide = p.with_bounds(p.p_min, 4.0 / 3.0).validate_fluid().unwrap();
        assert_eq!(symmetric_limit(&wide, 1.2), 1.0);
        assert_eq!(symmetric_limit(&p, p.nash_price()), p.nash_price());
    }

    #[test]
    fn cooper_states() {
        let p = duopoly();
        assert_relative_eq!(cooper_min_price(&p), 0.5, epsilon = 1e-15);
        let ne = cooper_steady_state(&p, p.nash_price(), 0.01).unwrap();
        assert!(ne.rho.abs() < 1e-14);
        let top = cooper_steady_state(&p, 1.0, 0.01).unwrap();
        assert_relative_eq!(top.rho, 1.0, epsilon = 1e-14);
        let bottom = cooper_steady_state(&p, 0.5, 0.01).unwrap();
        assert_relative_eq!(bottom.rho, -1.0, epsilon = 1e-14);
        assert!(matches!(
            cooper_steady_state(&p, 0.45, 0.01),
            Err(Error::Range(_))
        ));
        assert!(cooper_steady_state(&p, 1.01, 0.01).is_err());
    }

    #[test]
    fn cooper_state_is_stationary() {
        for n in [2, 3, 5] {
            let p = duopoly().with_n_firms(n);
            for &ps in &[0.6, 0.75, 0.9] {
                if ps < cooper_min_price(&p) {
                    continue;
                }
                let c = cooper_steady_state(&p, ps, 0.0025).unwrap();
                let (du, _) = ode_rhs(&p, &c.state);
                assert!(du.amax() < 1e-12);
                let traj = integrate_from(&p, &c.state, &cfg(100.0)).unwrap();
                for pr in &traj.prices {
                    assert!(pr.add_scalar(-ps).amax() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn equicorrelated_price_is_conduct_map() {
        let p = duopoly().with_n_firms(3);
        let (u, v) = (0.72, 0.004);
        for &rho in &[-0.4, 0.0, 0.3, 0.8] {
            let st = MomentState {
                tau: 1.0,
                u: DVector::from_element(3, u),
                v: DMatrix::from_fn(3, 3, |i, j| if i == j { v } else { rho * v }),
            };
            let expect = p.clip((p.a + p.c * (1.0 - rho) * u) / (2.0 * (p.b - p.c * rho)));
            assert!(posted_price(&p, &st).add_scalar(-expect).amax() < 1e-14);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let p = duopoly();
        let traj = integrate(&p, &[0.8, 0.7], &[0.02, 0.02], &cfg(1.0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("tau,firm,U,P,e"));
        assert_eq!(text.lines().count(), 3);
        let mut vbuf = Vec::new();
        traj.write_v_csv(&mut vbuf).unwrap();
        assert_eq!(String::from_utf8(vbuf).unwrap().lines().count(), 4);
    }
}
