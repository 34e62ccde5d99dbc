//! Sequential splitting time loop: pore-fraction prediction, flow, heat and
//! solute transport, reaction, and pore-fraction correction.

use rayon::prelude::*;

use crate::chemistry::{lambda_minus, react_cell, CellChemState, ReactionParams, ReactionScheme};
use crate::constitutive::{clamp_pore_fraction, update_pore_fraction, PhysParams};
use crate::discretize::{boundary_discharge, FluxTopology};
use crate::error::{Error, Result};
use crate::physics::{
    darcy_step, deposition_coefficient, heat_step, pore_bounds, solute_ad_step,
    solute_linear_reaction_step, BoundarySpec, FieldState, FluidSources,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(end: f64, steps: usize) -> Result<Self> {
        if !(end > 0.0 && end.is_finite()) {
            return Err(Error::Config(format!("end time must be positive, got {end}")));
        }
        if steps == 0 {
            return Err(Error::Config("at least one time step is needed".into()));
        }
        Ok(TimeGrid { end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.end / self.steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.steps {
            self.end
        } else {
            step as f64 * self.dt()
        }
    }
}

/// How the Darcy flux is obtained each step.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowModel {
    Darcy,
    /// Fixed flux per flux face, with the sources it implies.
    Prescribed { flux: Vec<f64>, sources: Option<FluidSources> },
}

/// Everything except the evolving fields.
#[derive(Debug, Clone)]
pub struct SimulationModel {
    pub topo: FluxTopology,
    pub params: PhysParams,
    pub reaction: ReactionParams,
    pub scheme: ReactionScheme,
    pub bc: BoundarySpec,
    pub flow: FlowModel,
}

impl SimulationModel {
    fn sources(&self) -> Option<&FluidSources> {
        match &self.flow {
            FlowModel::Darcy => None,
            FlowModel::Prescribed { sources, .. } => sources.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMass {
    pub name: String,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub masses: Vec<SubdomainMass>,
    /// Solute entering the domain per unit time during the step.
    pub influx: f64,
    /// Solute leaving the domain per unit time during the step.
    pub outflux: f64,
    /// `mass(n+1) - mass(n) + dt * (outflux - influx)`.
    pub delta_m: f64,
    /// Fluid volume leaving through outflow boundaries per unit time.
    pub fluid_outflow: f64,
    /// Pore fractions clamped in this step.
    pub clamp_events: usize,
    /// Cells whose reaction step hit `w = 0`.
    pub crossings: usize,
    /// Largest reaction sub-step count over all cells.
    pub max_substeps: u32,
}

impl StepReport {
    pub fn mass_u(&self) -> f64 {
        self.masses.iter().map(|m| m.u).sum()
    }

    pub fn mass_w(&self) -> f64 {
        self.masses.iter().map(|m| m.w).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_u() + self.mass_w()
    }
}

/// Pore-volume weighted inventories of `u` and `w` per subdomain.
pub fn inventory(topo: &FluxTopology, state: &FieldState) -> Vec<SubdomainMass> {
    topo.layout
        .subdomains()
        .into_iter()
        .map(|(name, range)| {
            let (mut u, mut w) = (0.0, 0.0);
            for k in range {
                let pv = state.pore[k] * topo.measure[k];
                u += pv * state.u[k];
                w += pv * state.w[k];
            }
            SubdomainMass { name, u, w }
        })
        .collect()
}

/// Report of the initial state.
pub fn initial_report(topo: &FluxTopology, state: &FieldState) -> StepReport {
    StepReport {
        step: 0,
        time: 0.0,
        masses: inventory(topo, state),
        influx: 0.0,
        outflux: 0.0,
        delta_m: 0.0,
        fluid_outflow: boundary_discharge(topo, &state.flux),
        clamp_events: 0,
        crossings: 0,
        max_substeps: 0,
    }
}

/// `2 w^n - w^{n-1}`.
pub fn extrapolate_precipitate(w_n: &[f64], w_prev: &[f64]) -> Result<Vec<f64>> {
    if w_n.len() != w_prev.len() {
        return Err(Error::Logic(format!("{} vs {} entries", w_n.len(), w_prev.len())));
    }
    Ok(w_n.iter().zip(w_prev).map(|(a, b)| 2.0 * a - b).collect())
}

/// Concentration after the pore fraction changes from `old` to `new` with
/// the dissolved amount kept fixed.
pub fn rescale_for_pore_change(value: f64, old_fraction: f64, new_fraction: f64) -> Result<f64> {
    if !(old_fraction > 0.0 && new_fraction > 0.0) {
        return Err(Error::Logic(format!(
            "pore fractions must be positive, got {old_fraction} and {new_fraction}"
        )));
    }
    Ok(value * (old_fraction / new_fraction))
}

/// Implicit pore-fraction update of every unknown, clamped to its bounds.
/// Where the precipitate drop is too large for the implicit law
/// (`1 + eta * dw <= 0`) the unknown takes its `fallback` value instead.
/// Both cases count as clamp events.
fn updated_pores(
    topo: &FluxTopology,
    params: &PhysParams,
    pore: &[f64],
    target_w: &[f64],
    w_n: &[f64],
    fallback: &[f64],
) -> Result<(Vec<f64>, usize)> {
    let mut clamps = 0;
    let mut out = Vec::with_capacity(pore.len());
    for k in 0..pore.len() {
        let eta = deposition_coefficient(topo, params, k);
        let raw = match update_pore_fraction(pore[k], target_w[k] - w_n[k], eta) {
            Ok(v) => v,
            Err(Error::SingularUpdate { denominator }) => {
                log::debug!("singular pore update at unknown {k} (1 + eta dw = {denominator:e}), value kept");
                clamps += 1;
                fallback[k]
            }
            Err(e) => return Err(e),
        };
        let (lo, hi) = pore_bounds(topo, k);
        let (value, clamped) = clamp_pore_fraction(raw, lo, hi);
        clamps += usize::from(clamped && raw != value);
        out.push(value);
    }
    Ok((out, clamps))
}

fn predicted_pores(topo: &FluxTopology, params: &PhysParams, state: &FieldState) -> Result<(Vec<f64>, usize)> {
    let w_star = extrapolate_precipitate(&state.w, &state.w_prev)?;
    updated_pores(topo, params, &state.pore, &w_star, &state.w, &state.pore)
}

/// Pore fractions the flow step of the next step sees.
pub fn predict_pore_fractions(model: &SimulationModel, state: &FieldState) -> Result<Vec<f64>> {
    Ok(predicted_pores(&model.topo, &model.params, state)?.0)
}

/// One step of the scheme from `t^n` to `t^n + dt`.
pub fn advance_step(model: &SimulationModel, state: &FieldState, dt: f64, step: usize) -> Result<(FieldState, StepReport)> {
    advance_inner(model, state, dt, step).map_err(|e| e.at_step(step))
}

fn advance_inner(model: &SimulationModel, state: &FieldState, dt: f64, step: usize) -> Result<(FieldState, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Logic(format!("time step must be positive, got {dt}")));
    }
    let topo = &model.topo;
    let params = &model.params;
    let n = topo.num_dofs();

    // predicted precipitate and pore fractions
    let (pore_star, clamps_star) = predicted_pores(topo, params, state)?;

    // flow
    let (p, flux) = match &model.flow {
        FlowModel::Darcy => darcy_step(topo, state, &pore_star, params, &model.bc, dt)?,
        FlowModel::Prescribed { flux, .. } => (vec![0.0; n], flux.clone()),
    };

    // heat and solute transport are independent given the flux
    let sources = model.sources();
    let (heat, solute) = rayon::join(
        || heat_step(topo, state, &flux, &pore_star, params, &model.bc, dt, sources),
        || solute_ad_step(topo, state, &flux, &pore_star, params, &model.bc, dt, sources),
    );
    let theta = heat?.values;
    let solute = solute?;
    let u_half = solute.values;

    // precipitate seen in the predicted pore space
    let w_half = (0..n)
        .map(|k| rescale_for_pore_change(state.w[k], state.pore[k], pore_star[k]))
        .collect::<Result<Vec<f64>>>()?;

    // reaction with the new temperature
    let outcomes = (0..n)
        .into_par_iter()
        .map(|k| {
            react_cell(
                CellChemState { u: u_half[k].max(0.0), w: w_half[k], theta: theta[k] },
                dt,
                &model.reaction,
                model.scheme,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let crossings = outcomes.iter().filter(|o| o.crossed).count();
    let max_substeps = outcomes.iter().map(|o| o.substeps).max().unwrap_or(0);
    let w_react: Vec<f64> = outcomes.iter().map(|o| o.state.w).collect();

    // corrected pore fractions and final rescaling
    let (pore_new, clamps_new) = updated_pores(topo, params, &state.pore, &w_react, &state.w, &pore_star)?;
    let mut u_new = Vec::with_capacity(n);
    let mut w_new = Vec::with_capacity(n);
    for k in 0..n {
        u_new.push(rescale_for_pore_change(outcomes[k].state.u, pore_star[k], pore_new[k])?);
        w_new.push(rescale_for_pore_change(w_react[k], pore_star[k], pore_new[k])?);
    }

    let next = FieldState {
        p,
        flux,
        theta,
        u: u_new,
        w: w_new,
        w_prev: state.w.clone(),
        pore: pore_new,
    };
    let before: f64 = inventory(topo, state).iter().map(|m| m.u + m.w).sum();
    let masses = inventory(topo, &next);
    let after: f64 = masses.iter().map(|m| m.u + m.w).sum();
    let delta_m = after - before + dt * (solute.outflux - solute.influx);
    let report = StepReport {
        step,
        time: 0.0,
        masses,
        influx: solute.influx,
        outflux: solute.outflux,
        delta_m,
        fluid_outflow: boundary_discharge(topo, &next.flux),
        clamp_events: clamps_star + clamps_new,
        crossings,
        max_substeps,
    };
    Ok((next, report))
}

/// Receives the initial state and every completed step.
pub trait OutputSink {
    fn record(&mut self, state: &FieldState, report: &StepReport) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: FieldState,
    /// Initial report followed by one report per step.
    pub reports: Vec<StepReport>,
}

/// Advances the model over the time grid, feeding every sink.
pub fn run(
    model: &SimulationModel,
    initial: FieldState,
    grid: &TimeGrid,
    sinks: &mut [&mut dyn OutputSink],
) -> Result<RunOutcome> {
    let mut state = initial;
    if let FlowModel::Prescribed { flux, .. } = &model.flow {
        state.flux = flux.clone();
    }
    let first = initial_report(&model.topo, &state);
    for sink in sinks.iter_mut() {
        sink.record(&state, &first).map_err(|e| e.at_step(0))?;
    }
    let mut reports = Vec::with_capacity(grid.steps + 1);
    reports.push(first);
    let dt = grid.dt();
    for step in 1..=grid.steps {
        let (next, mut report) = advance_step(model, &state, dt, step)?;
        report.time = grid.time(step);
        for sink in sinks.iter_mut() {
            sink.record(&next, &report).map_err(|e| e.at_step(step))?;
        }
        log::debug!("step {step}: total mass {:.6e}, delta_m {:.3e}", report.total_mass(), report.delta_m);
        reports.push(report);
        state = next;
    }
    Ok(RunOutcome { state, reports })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingErrorRow {
    pub steps: usize,
    pub dt: f64,
    /// Max-norm difference of the solute at the final time.
    pub error: f64,
}

/// Unsplit implicit reference for models with constant pore fractions, a
/// prescribed flux and a linear rate law.
pub fn monolithic_reference(model: &SimulationModel, initial: &FieldState, grid: &TimeGrid) -> Result<FieldState> {
    check_study_model(model)?;
    let FlowModel::Prescribed { flux, .. } = &model.flow else { unreachable!() };
    let topo = &model.topo;
    let lambda = initial
        .theta
        .iter()
        .map(|t| lambda_minus(*t, &model.reaction))
        .collect::<Result<Vec<f64>>>()?;
    let u_e = model.reaction.u_e;
    let dt = grid.dt();
    let mut state = initial.clone();
    state.flux = flux.clone();
    for step in 1..=grid.steps {
        let sol = solute_linear_reaction_step(
            topo,
            &state,
            flux,
            &model.params,
            &model.bc,
            dt,
            model.sources(),
            &lambda,
            u_e,
        )
        .map_err(|e| e.at_step(step))?;
        for k in 0..topo.num_dofs() {
            let rate = lambda[k] * (sol.values[k] / u_e - 1.0);
            state.w[k] += dt * rate;
            if !(state.w[k] > 0.0) {
                return Err(Error::Logic(format!(
                    "precipitate exhausted at unknown {k}; the reference needs w > 0 throughout"
                ))
                .at_step(step));
            }
        }
        state.u = sol.values;
    }
    Ok(state)
}

fn check_study_model(model: &SimulationModel) -> Result<()> {
    let p = &model.params;
    let layout = &model.topo.layout;
    let fractured = layout.num_fractures() > 0 && layout.intersection_offset() > layout.num_bulk;
    if p.eta_omega != 0.0
        || (fractured && p.eta_gamma != 0.0)
        || (layout.num_intersections > 0 && p.eta_iota != 0.0)
    {
        return Err(Error::Config("splitting study needs constant pore fractions (all eta = 0)".into()));
    }
    if !matches!(model.flow, FlowModel::Prescribed { .. }) {
        return Err(Error::Config("splitting study needs a prescribed flux".into()));
    }
    if model.reaction.rate_exponent != 1.0 {
        return Err(Error::Config("splitting study needs a linear rate law (rate_exponent = 1)".into()));
    }
    Ok(())
}

/// Split scheme against the unsplit reference for every step count.
pub fn splitting_error_study(
    model: &SimulationModel,
    initial: &FieldState,
    end: f64,
    step_counts: &[usize],
) -> Result<Vec<SplittingErrorRow>> {
    check_study_model(model)?;
    step_counts
        .iter()
        .map(|&steps| {
            let grid = TimeGrid::new(end, steps)?;
            let split = run(model, initial.clone(), &grid, &mut [])?;
            let reference = monolithic_reference(model, initial, &grid)?;
            let error = split
                .state
                .u
                .iter()
                .zip(&reference.u)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(SplittingErrorRow { steps, dt: grid.dt(), error })
        })
        .collect()
}

/// Least-squares slope of `log(error)` against `log(dt)`.
pub fn convergence_order(rows: &[SplittingErrorRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt.ln(), r.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::FluxKind;
    use crate::mesh::build_interval_mesh;
    use crate::physics::BoundaryCondition;
    use approx::assert_relative_eq;

    #[test]
    fn extrapolation_examples() {
        assert_eq!(extrapolate_precipitate(&[0.3], &[0.3]).unwrap(), vec![0.3]);
        let w = extrapolate_precipitate(&[0.4], &[0.3]).unwrap();
        assert_relative_eq!(w[0], 0.5, max_relative = 1e-15);
        assert!(extrapolate_precipitate(&[0.4, 1.0], &[0.3]).is_err());
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_for_pore_change(0.7, 0.3, 0.3).unwrap(), 0.7);
        assert_relative_eq!(rescale_for_pore_change(0.3, 0.2, 0.25).unwrap(), 0.24, max_relative = 1e-15);
        let half = rescale_for_pore_change(0.3, 0.2, 0.25).unwrap();
        assert_eq!(rescale_for_pore_change(half, 0.25, 0.25).unwrap(), half);
        assert!(rescale_for_pore_change(1.0, 0.0, 0.2).is_err());
        assert!(rescale_for_pore_change(1.0, 0.2, -0.1).is_err());
    }

    #[test]
    fn time_grid() {
        let g = TimeGrid::new(3.0, 60).unwrap();
        assert_relative_eq!(g.dt(), 0.05, max_relative = 1e-15);
        assert_eq!(g.time(60), 3.0);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 3).is_err());
    }

    fn pulse_model(eta: f64, lambda0: f64) -> (SimulationModel, FieldState) {
        let mesh = build_interval_mesh(1.0, 30).unwrap();
        let topo = FluxTopology::new(&mesh).unwrap();
        let mut bc = BoundarySpec::sealed(&mesh);
        bc.set("left", BoundaryCondition::essential(1.0), BoundaryCondition::essential(1.0), BoundaryCondition::essential(0.0))
            .unwrap();
        bc.set("right", BoundaryCondition::essential(0.0), BoundaryCondition::natural(0.0), BoundaryCondition::natural(0.0))
            .unwrap();
        let params = PhysParams { eta_omega: eta, d: 1e-2, ..PhysParams::reference() };
        let n = topo.num_dofs();
        let u: Vec<f64> = mesh
            .cells
            .iter()
            .map(|c| if (c.centroid[0] - 0.5).abs() < 0.15 { 2.0 } else { 0.0 })
            .collect();
        let state = FieldState::new(&topo, vec![1.0; n], u, vec![0.0; n], vec![0.2; n]).unwrap();
        let model = SimulationModel {
            topo,
            params,
            reaction: ReactionParams { lambda0, act: 0.0, ..ReactionParams::default() },
            scheme: ReactionScheme::ExplicitEuler,
            bc,
            flow: FlowModel::Darcy,
        };
        (model, state)
    }

    #[test]
    fn reacting_pulse_conserves_mass() {
        let (model, state) = pulse_model(1.0, 5.0);
        let grid = TimeGrid::new(0.3, 30).unwrap();
        let out = run(&model, state, &grid, &mut []).unwrap();
        let m0 = out.reports[0].total_mass();
        for r in &out.reports {
            assert!(r.delta_m.abs() <= 1e-10 * m0, "step {}: {}", r.step, r.delta_m);
        }
        assert!(out.reports.iter().any(|r| r.mass_w() > 0.0));
        assert!(out.state.u.iter().chain(&out.state.w).all(|x| *x >= 0.0));
    }

    #[test]
    fn no_reaction_matches_plain_transport() {
        let (model, state) = pulse_model(1.0, 0.0);
        let dt = 0.01;
        let (next, _) = advance_step(&model, &state, dt, 1).unwrap();
        let (_, q) = darcy_step(&model.topo, &state, &state.pore, &model.params, &model.bc, dt).unwrap();
        let direct = solute_ad_step(&model.topo, &state, &q, &state.pore, &model.params, &model.bc, dt, None).unwrap();
        assert_eq!(next.u, direct.values);
        assert_eq!(next.pore, state.pore);
        assert_eq!(next.w, state.w);
    }

    proptest::proptest! {
        #[test]
        fn rescaling_preserves_products(v in 0.0f64..10.0, old in 1e-6f64..1.0, new in 1e-6f64..1.0) {
            let r = rescale_for_pore_change(v, old, new).unwrap();
            proptest::prop_assert!((r * new - v * old).abs() <= 1e-14 * (v * old).max(1e-300));
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (mut model, mut state) = pulse_model(1.0, 5.0);
        for u in state.u.iter_mut() {
            *u = 1.0;
        }
        for w in state.w.iter_mut() {
            *w = 0.5;
        }
        state.w_prev = state.w.clone();
        model.bc.solute[0] = BoundaryCondition::essential(1.0);
        let (next, _) = advance_step(&model, &state, 0.01, 1).unwrap();
        for k in 0..next.u.len() {
            assert!((next.u[k] - 1.0).abs() < 1e-10);
            assert!((next.w[k] - 0.5).abs() < 1e-12);
            assert!((next.pore[k] - state.pore[k]).abs() < 1e-12);
        }
    }

    fn study_model(velocity: f64) -> (SimulationModel, FieldState) {
        let mesh = build_interval_mesh(1.0, 50).unwrap();
        let topo = FluxTopology::new(&mesh).unwrap();
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| match f.kind {
                FluxKind::Interior { face } | FluxKind::Boundary { face, .. } => velocity * mesh.faces[face].normal[0],
                _ => unreachable!(),
            })
            .collect();
        let mut bc = BoundarySpec::sealed(&mesh);
        bc.set("left", BoundaryCondition::no_flux(), BoundaryCondition::essential(1.0), BoundaryCondition::essential(0.0))
            .unwrap();
        let params = PhysParams { eta_omega: 0.0, d: 1e-3, ..PhysParams::reference() };
        let n = topo.num_dofs();
        let u: Vec<f64> = mesh
            .cells
            .iter()
            .map(|c| if (c.centroid[0] - 0.3).abs() < 0.1 { 2.0 } else { 0.0 })
            .collect();
        let state = FieldState::new(&topo, vec![1.0; n], u, vec![1.0; n], vec![0.2; n]).unwrap();
        let model = SimulationModel {
            topo,
            params,
            reaction: ReactionParams { lambda0: 1.0, act: 0.0, u_e: 1.0, rate_exponent: 1.0 },
            scheme: ReactionScheme::ExplicitEuler,
            bc,
            flow: FlowModel::Prescribed { flux, sources: None },
        };
        (model, state)
    }

    #[test]
    fn split_and_unsplit_agree_without_reaction() {
        let (mut model, state) = study_model(0.05);
        model.reaction.lambda0 = 0.0;
        let grid = TimeGrid::new(0.2, 20).unwrap();
        let split = run(&model, state.clone(), &grid, &mut []).unwrap();
        let reference = monolithic_reference(&model, &state, &grid).unwrap();
        for (a, b) in split.state.u.iter().zip(&reference.u) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn splitting_error_is_first_order() {
        let (model, state) = study_model(0.02);
        let rows = splitting_error_study(&model, &state, 0.2, &[20, 40, 80]).unwrap();
        assert!(rows[0].error > rows[1].error && rows[1].error > rows[2].error);
        let order = convergence_order(&rows);
        assert!(order > 0.8, "{order}");
    }

    #[test]
    fn study_rejects_unsupported_models() {
        let (model, state) = pulse_model(1.0, 1.0);
        assert!(splitting_error_study(&model, &state, 0.1, &[10]).is_err());
    }
}
