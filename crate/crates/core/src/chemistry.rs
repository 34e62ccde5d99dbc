//! Precipitation/dissolution kinetics and the per-cell integrator for the
//! discontinuous reaction system
//!
//! ```text
//! d/dt [u, w] = [-r_w(u, w), r_w(u, w)]
//! r_w = lambda(theta) * ( max(r(u) - 1, 0) + H(w) * min(r(u) - 1, 0) )
//! ```
//!
//! The right-hand side jumps across `w = 0` whenever `u < u_e`. Integration
//! uses an explicit scheme on the smooth field of the current region, detects
//! a tentative step that would leave `w < 0`, locates the crossing on the
//! scheme's dense output and finishes the step with the sliding field, which
//! vanishes while `u < u_e`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionParams {
    /// Prefactor of the dissolution constant [1/s].
    pub lambda0: f64,
    /// Activation constant [K] in `lambda0 * exp(-act / theta)`.
    pub act: f64,
    /// Equilibrium concentration [mol/m^3].
    pub u_e: f64,
    /// Power `p` in `r(u) = (u / u_e)^p`; 2 for a 1:1 salt, 1 for a linear law.
    pub rate_exponent: f64,
}

impl Default for ReactionParams {
    fn default() -> Self {
        Self {
            lambda0: 10.0,
            act: 4.0,
            u_e: 1.0,
            rate_exponent: 2.0,
        }
    }
}

impl ReactionParams {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(("lambda0", format!("must be non-negative, got {}", self.lambda0)));
        }
        if !(self.act >= 0.0 && self.act.is_finite()) {
            return Err(("activation", format!("must be non-negative, got {}", self.act)));
        }
        if !(self.u_e > 0.0) {
            return Err(("u_e", format!("must be strictly positive, got {}", self.u_e)));
        }
        if !(self.rate_exponent >= 1.0) {
            return Err((
                "rate_exponent",
                format!("must be at least 1, got {}", self.rate_exponent),
            ));
        }
        Ok(())
    }

    /// `r(u) = (u / u_e)^p`.
    pub fn saturation(&self, u: f64) -> f64 {
        let s = u / self.u_e;
        if self.rate_exponent == 2.0 {
            s * s
        } else if self.rate_exponent == 1.0 {
            s
        } else {
            s.max(0.0).powf(self.rate_exponent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellChemState {
    pub u: f64,
    pub w: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReactionScheme {
    #[default]
    ExplicitEuler,
    Heun,
}

/// `lambda0 * exp(-act / theta)`.
pub fn lambda_minus(theta: f64, rp: &ReactionParams) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain {
            what: "lambda_minus",
            value: theta,
            constraint: "temperature must be positive",
        });
    }
    if rp.act == 0.0 {
        return Ok(rp.lambda0);
    }
    Ok(rp.lambda0 * (-rp.act / theta).exp())
}

/// Net precipitation rate with the Heaviside switch, `H(0) = 0`.
pub fn net_rate(state: &CellChemState, rp: &ReactionParams) -> Result<f64> {
    let lambda = lambda_minus(state.theta, rp)?;
    let excess = rp.saturation(state.u) - 1.0;
    let heaviside = if state.w > 0.0 { 1.0 } else { 0.0 };
    Ok(lambda * (excess.max(0.0) + heaviside * excess.min(0.0)))
}

/// Rate of the smooth field valid in the region `w > 0`, continued across
/// the surface for event location.
fn rate_plus(u: f64, lambda: f64, rp: &ReactionParams) -> f64 {
    lambda * (rp.saturation(u) - 1.0)
}

/// Sliding field on `w = 0`: only precipitation survives.
fn rate_sliding(u: f64, lambda: f64, rp: &ReactionParams) -> f64 {
    lambda * (rp.saturation(u) - 1.0).max(0.0)
}

/// Crossing fraction for an explicit Euler step with constant `rate`:
/// `w_start + xi * dt * rate = 0`.
pub fn locate_crossing(w_start: f64, rate: f64, dt: f64) -> Result<f64> {
    if !(w_start >= 0.0) || !(dt > 0.0) || !(w_start + dt * rate < 0.0) {
        return Err(Error::Logic(format!(
            "no crossing: w_start = {w_start}, rate = {rate}, dt = {dt}"
        )));
    }
    Ok(w_start / (-rate * dt))
}

/// Heun continuous extension for the precipitate component.
fn heun_dense(w_start: f64, k1: f64, k2: f64, dt: f64, xi: f64) -> f64 {
    w_start + dt * ((xi - 0.5 * xi * xi) * k1 + 0.5 * xi * xi * k2)
}

/// Crossing fraction on the quadratic dense output of a Heun step with stage
/// slopes `k1`, `k2`. Safeguarded Newton inside a shrinking bracket.
pub fn locate_crossing_heun(w_start: f64, k1: f64, k2: f64, dt: f64) -> Result<f64> {
    let end = heun_dense(w_start, k1, k2, dt, 1.0);
    if !(w_start >= 0.0) || !(dt > 0.0) || !(end < 0.0) {
        return Err(Error::Logic(format!(
            "no crossing: w_start = {w_start}, k1 = {k1}, k2 = {k2}, dt = {dt}"
        )));
    }
    if w_start == 0.0 {
        return Ok(0.0);
    }
    let tol = 1e-14 * w_start.max(1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut xi = w_start / (w_start - end);
    for _ in 0..200 {
        let f = heun_dense(w_start, k1, k2, dt, xi);
        if f.abs() < tol {
            return Ok(xi);
        }
        if f > 0.0 {
            lo = xi;
        } else {
            hi = xi;
        }
        let slope = dt * ((1.0 - xi) * k1 + xi * k2);
        let newton = if slope != 0.0 { xi - f / slope } else { f64::NAN };
        xi = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < f64::EPSILON {
            return Ok(xi);
        }
    }
    Ok(xi)
}

const MAX_SUBSTEPS: u32 = 1 << 20;

/// Result of one reaction step on a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactOutcome {
    pub state: CellChemState,
    /// The step hit `w = 0` and finished on the sliding field.
    pub crossed: bool,
    /// Number of sub-steps used to keep `u` non-negative (1 when none needed).
    pub substeps: u32,
}

/// Advances one cell by `dt` at fixed temperature.
pub fn react_cell(
    state: CellChemState,
    dt: f64,
    rp: &ReactionParams,
    scheme: ReactionScheme,
) -> Result<ReactOutcome> {
    if !(state.u.is_finite() && state.w.is_finite() && state.theta.is_finite()) {
        return Err(Error::Numeric(format!("non-finite chemistry state {state:?}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Logic(format!("reaction step needs dt > 0, got {dt}")));
    }
    if state.u < 0.0 || state.w < 0.0 {
        return Err(Error::Logic(format!("negative concentrations {state:?}")));
    }
    let lambda = lambda_minus(state.theta, rp)?;
    if lambda == 0.0 {
        return Ok(ReactOutcome {
            state,
            crossed: false,
            substeps: 1,
        });
    }

    // A step that would drive the solute negative is replaced by a sub-step
    // that at most halves it; only very large lambda * dt triggers this.
    let mut cur = state;
    let mut remaining = dt;
    let mut crossed = false;
    let mut substeps = 0u32;
    while remaining > 0.0 {
        substeps += 1;
        if substeps > MAX_SUBSTEPS {
            return Err(Error::Numeric(format!(
                "reaction step cannot keep solute non-negative: {state:?}, dt = {dt}"
            )));
        }
        let (next, hit) = single_step(cur, remaining, lambda, rp, scheme)?;
        if next.u >= 0.0 {
            return Ok(ReactOutcome { state: next, crossed: crossed || hit, substeps });
        }
        let consumption = rate_plus(cur.u, lambda, rp);
        let mut h = if consumption > 0.0 { (0.5 * cur.u / consumption).min(0.5 * remaining) } else { 0.5 * remaining };
        let (next, hit) = loop {
            let (next, hit) = single_step(cur, h, lambda, rp, scheme)?;
            if next.u >= 0.0 {
                break (next, hit);
            }
            substeps += 1;
            if substeps > MAX_SUBSTEPS || h == 0.0 {
                return Err(Error::Numeric(format!(
                    "reaction step cannot keep solute non-negative: {state:?}, dt = {dt}"
                )));
            }
            h *= 0.5;
        };
        crossed |= hit;
        cur = next;
        remaining -= h;
    }
    Ok(ReactOutcome { state: cur, crossed, substeps })
}

/// Applies a concentration increment with exact antisymmetry.
fn shift(state: CellChemState, delta: f64) -> CellChemState {
    CellChemState {
        u: state.u - delta,
        w: state.w + delta,
        theta: state.theta,
    }
}

fn single_step(
    state: CellChemState,
    dt: f64,
    lambda: f64,
    rp: &ReactionParams,
    scheme: ReactionScheme,
) -> Result<(CellChemState, bool)> {
    let on_surface = state.w == 0.0;
    if on_surface && rp.saturation(state.u) <= 1.0 {
        // sliding: the field pointing out of the admissible region is cut off
        return Ok((state, false));
    }

    // smooth field of the region w > 0 (it coincides with the precipitation
    // branch when starting on the surface with u > u_e)
    match scheme {
        ReactionScheme::ExplicitEuler => {
            let k1 = rate_plus(state.u, lambda, rp);
            let tentative = state.w + dt * k1;
            if tentative >= 0.0 {
                return Ok((shift(state, dt * k1), false));
            }
            let xi = locate_crossing(state.w, k1, dt)?;
            let at_event = CellChemState {
                u: state.u + state.w,
                w: 0.0,
                theta: state.theta,
            };
            Ok((finish_sliding(at_event, (1.0 - xi) * dt, lambda, rp, scheme), true))
        }
        ReactionScheme::Heun => {
            let k1 = rate_plus(state.u, lambda, rp);
            let k2 = rate_plus(state.u - dt * k1, lambda, rp);
            let delta = 0.5 * dt * (k1 + k2);
            if state.w + delta >= 0.0 {
                return Ok((shift(state, delta), false));
            }
            let xi = locate_crossing_heun(state.w, k1, k2, dt)?;
            let at_event = CellChemState {
                u: state.u + state.w,
                w: 0.0,
                theta: state.theta,
            };
            Ok((finish_sliding(at_event, (1.0 - xi) * dt, lambda, rp, scheme), true))
        }
    }
}

/// Integrates the remainder of a step on the sliding field.
fn finish_sliding(
    state: CellChemState,
    remaining: f64,
    lambda: f64,
    rp: &ReactionParams,
    scheme: ReactionScheme,
) -> CellChemState {
    if remaining <= 0.0 {
        return state;
    }
    // Zero while u < u_e. An explicit step that dissolves the whole
    // precipitate can overshoot the equilibrium, in which case the remainder
    // precipitates again on the smooth branch.
    let k1 = rate_sliding(state.u, lambda, rp);
    let delta = match scheme {
        ReactionScheme::ExplicitEuler => remaining * k1,
        ReactionScheme::Heun => {
            let k2 = rate_sliding(state.u - remaining * k1, lambda, rp);
            0.5 * remaining * (k1 + k2)
        }
    };
    shift(state, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_params() -> ReactionParams {
        ReactionParams::default()
    }

    #[test]
    fn lambda_examples() {
        let rp = table_params();
        assert_relative_eq!(lambda_minus(1.0, &rp).unwrap(), 10.0 * (-4.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(lambda_minus(1.0, &rp).unwrap(), 0.183156, max_relative = 1e-5);
        assert_relative_eq!(lambda_minus(4.0, &rp).unwrap(), 3.678794, max_relative = 1e-6);
        let flat = ReactionParams { act: 0.0, ..rp };
        assert_eq!(lambda_minus(0.3, &flat).unwrap(), 10.0);
        assert!(lambda_minus(0.0, &rp).is_err());
        assert!(lambda_minus(-1.0, &rp).is_err());
    }

    #[test]
    fn net_rate_examples() {
        let rp = table_params();
        let eq = CellChemState { u: 1.0, w: 0.4, theta: 2.0 };
        assert_eq!(net_rate(&eq, &rp).unwrap(), 0.0);
        let s = CellChemState { u: 2.0, w: 0.3, theta: 1.0 };
        assert_relative_eq!(net_rate(&s, &rp).unwrap(), 0.549469, max_relative = 2e-6);
        let dry = CellChemState { u: 0.5, w: 0.0, theta: 1.0 };
        assert_eq!(net_rate(&dry, &rp).unwrap(), 0.0);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let rp = table_params();
        for scheme in [ReactionScheme::ExplicitEuler, ReactionScheme::Heun] {
            for &w in &[0.0, 0.3, 5.0] {
                let s = CellChemState { u: 1.0, w, theta: 1.3 };
                let out = react_cell(s, 7.0, &rp, scheme).unwrap();
                assert_eq!(out.state, s);
            }
        }
    }

    #[test]
    fn linear_crossing_slides_at_half_step() {
        // act = 0 freezes lambda at 0.6; u/u_e = 0 would give -0.6 with a linear
        // law, so take u_e large enough that r(u) - 1 = -1 up to rounding
        let rp = ReactionParams { lambda0: 0.6, act: 0.0, u_e: 1e20, rate_exponent: 1.0 };
        let s = CellChemState { u: 0.5, w: 0.3, theta: 1.0 };
        assert_eq!(locate_crossing(0.3, -0.6, 1.0).unwrap(), 0.5);
        let out = react_cell(s, 1.0, &rp, ReactionScheme::ExplicitEuler).unwrap();
        assert!(out.crossed);
        assert_eq!(out.state.w, 0.0);
        assert!((out.state.u - 0.8).abs() <= 1e-14);
    }

    #[test]
    fn crossing_examples() {
        assert_eq!(locate_crossing(0.3, -0.6, 1.0).unwrap(), 0.5);
        assert_eq!(locate_crossing(0.0, -1.0, 1.0).unwrap(), 0.0);
        assert!(locate_crossing(0.3, -0.1, 1.0).is_err());
    }

    #[test]
    fn heun_root_matches_bisection() {
        let cases = [(0.3, -0.6, -0.9, 1.0), (1.0, -3.0, -0.5, 0.7), (0.05, -0.2, -1.5, 0.4)];
        for &(w0, k1, k2, dt) in &cases {
            let xi = locate_crossing_heun(w0, k1, k2, dt).unwrap();
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if heun_dense(w0, k1, k2, dt, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((xi - 0.5 * (lo + hi)).abs() < 1e-12, "{xi} vs {lo}");
        }
    }

    #[test]
    fn precipitation_from_empty_cell_has_no_discontinuity() {
        let rp = table_params();
        let s = CellChemState { u: 2.0, w: 0.0, theta: 1.0 };
        let dt = 1e-4;
        let out = react_cell(s, dt, &rp, ReactionScheme::ExplicitEuler).unwrap();
        assert!(!out.crossed);
        assert_relative_eq!(out.state.w, 0.549469 * dt, max_relative = 1e-5);

        // reference integration with dt/1000 sub-steps
        let mut r = s;
        for _ in 0..1000 {
            r = react_cell(r, dt / 1000.0, &rp, ReactionScheme::ExplicitEuler).unwrap().state;
        }
        assert!((out.state.w - r.w).abs() < 1e-3 * r.w);
    }

    #[test]
    fn sliding_state_is_invariant_below_equilibrium() {
        let rp = table_params();
        let s = CellChemState { u: 0.2, w: 0.1, theta: 1.5 };
        let first = react_cell(s, 10.0, &rp, ReactionScheme::ExplicitEuler).unwrap();
        assert!(first.crossed);
        assert_eq!(first.state.w, 0.0);
        let mut cur = first.state;
        for _ in 0..20 {
            let next = react_cell(cur, 0.37, &rp, ReactionScheme::Heun).unwrap();
            assert_eq!(next.state, cur);
            cur = next.state;
        }
    }

    #[test]
    fn large_steps_keep_solute_non_negative() {
        let rp = ReactionParams { lambda0: 50.0, act: 0.0, u_e: 1.0, rate_exponent: 2.0 };
        let s = CellChemState { u: 3.0, w: 0.0, theta: 1.0 };
        let out = react_cell(s, 1.0, &rp, ReactionScheme::ExplicitEuler).unwrap();
        assert!(out.substeps > 1);
        assert!(out.state.u >= 0.0);
    }

    fn smooth_error(scheme: ReactionScheme, dt: f64) -> f64 {
        // w stays far from zero: pure dissolution u0 = 0.5, w0 = 2 over [0, 1]
        let rp = ReactionParams { lambda0: 1.0, act: 0.0, u_e: 1.0, rate_exponent: 2.0 };
        let s0 = CellChemState { u: 0.5, w: 2.0, theta: 1.0 };
        let integrate = |h: f64, n: usize, sch| {
            let mut s = s0;
            for _ in 0..n {
                s = react_cell(s, h, &rp, sch).unwrap().state;
            }
            s
        };
        let n = (1.0 / dt).round() as usize;
        let coarse = integrate(dt, n, scheme);
        let fine = integrate(dt / 1000.0, n * 1000, ReactionScheme::Heun);
        (coarse.u - fine.u).abs()
    }

    #[test]
    fn convergence_orders() {
        for (scheme, expected) in [(ReactionScheme::ExplicitEuler, 1.0), (ReactionScheme::Heun, 2.0)] {
            let e1 = smooth_error(scheme, 0.1);
            let e2 = smooth_error(scheme, 0.05);
            let order = (e1 / e2).log2();
            assert!((order - expected).abs() < 0.15, "{scheme:?}: {order}");
        }
    }

    proptest! {
        #[test]
        fn conservation_and_positivity(
            u in 0.0f64..4.0, w in 0.0f64..3.0, theta in 0.2f64..3.0, dt in 1e-3f64..5.0,
            heun in proptest::bool::ANY
        ) {
            let rp = table_params();
            let scheme = if heun { ReactionScheme::Heun } else { ReactionScheme::ExplicitEuler };
            let s = CellChemState { u, w, theta };
            let out = react_cell(s, dt, &rp, scheme).unwrap().state;
            prop_assert!(out.u >= 0.0 && out.w >= 0.0);
            let total = u + w;
            prop_assert!((out.u + out.w - total).abs() <= 1e-14 * total.max(1e-300));
        }

        #[test]
        fn rate_sign_structure(u in 0.0f64..3.0, w in 0.0f64..2.0, theta in 0.5f64..3.0) {
            let rp = table_params();
            let r = net_rate(&CellChemState { u, w, theta }, &rp).unwrap();
            if u > rp.u_e {
                prop_assert!(r > 0.0);
            } else if u < rp.u_e && w > 0.0 {
                prop_assert!(r < 0.0);
            } else {
                prop_assert_eq!(r, 0.0);
            }
        }
    }
}
