//! Implicit Euler sub-solvers for flow, heat and solute transport. Each one
//! assembles a single linear system over bulk, fracture and intersection
//! unknowns and solves it directly.

use crate::constitutive::{
    cubic_law, effective_conductivity, effective_heat_capacity, kozeny_permeability, PhysParams,
    EPS_MIN, PHI_MIN,
};
use crate::discretize::{
    assemble_mixed_divergence, transmissibilities, FaceCoefficients, FluxTopology, Subdomain,
};
use crate::error::{Error, Result};
use crate::linsolve::{assemble, solve, DEFAULT_TOLERANCE};
use crate::mesh::MixedDimMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    /// Value of the unknown is given.
    Essential,
    /// Outward normal flux per unit area is given.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub kind: BcKind,
    pub value: f64,
}

impl BoundaryCondition {
    pub fn essential(value: f64) -> Self {
        BoundaryCondition { kind: BcKind::Essential, value }
    }

    pub fn natural(value: f64) -> Self {
        BoundaryCondition { kind: BcKind::Natural, value }
    }

    pub fn no_flux() -> Self {
        Self::natural(0.0)
    }
}

/// Boundary conditions per named segment, for each equation. For heat and
/// solute a natural value is the total flux on inflow faces; on outflow
/// faces the advective outflow is added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub tags: Vec<String>,
    pub pressure: Vec<BoundaryCondition>,
    pub theta: Vec<BoundaryCondition>,
    pub solute: Vec<BoundaryCondition>,
}

impl BoundarySpec {
    /// Every segment closed for all equations.
    pub fn sealed(mesh: &MixedDimMesh) -> Self {
        let n = mesh.boundary_tags.len();
        BoundarySpec {
            tags: mesh.boundary_tags.clone(),
            pressure: vec![BoundaryCondition::no_flux(); n],
            theta: vec![BoundaryCondition::no_flux(); n],
            solute: vec![BoundaryCondition::no_flux(); n],
        }
    }

    pub fn set(
        &mut self,
        tag: &str,
        pressure: BoundaryCondition,
        theta: BoundaryCondition,
        solute: BoundaryCondition,
    ) -> Result<()> {
        let k = self
            .tags
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| Error::Config(format!("unknown boundary segment '{tag}'")))?;
        self.pressure[k] = pressure;
        self.theta[k] = theta;
        self.solute[k] = solute;
        Ok(())
    }

    pub fn validate(&self, mesh: &MixedDimMesh, needs_pressure_anchor: bool) -> Result<()> {
        if self.tags != mesh.boundary_tags {
            return Err(Error::Config(format!(
                "boundary segments {:?} do not match the mesh tags {:?}",
                self.tags, mesh.boundary_tags
            )));
        }
        let n = self.tags.len();
        if self.pressure.len() != n || self.theta.len() != n || self.solute.len() != n {
            return Err(Error::Config("every segment needs one condition per equation".into()));
        }
        for bc in self.pressure.iter().chain(&self.theta).chain(&self.solute) {
            if !bc.value.is_finite() {
                return Err(Error::Config(format!("non-finite boundary value {}", bc.value)));
            }
        }
        if needs_pressure_anchor && !self.pressure.iter().any(|b| b.kind == BcKind::Essential) {
            return Err(Error::WellPosedness(
                "flow needs at least one segment with given pressure".into(),
            ));
        }
        Ok(())
    }
}

/// Unknowns of all subdomains, stored in [`crate::discretize::DofLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub p: Vec<f64>,
    /// Darcy flux per flux face.
    pub flux: Vec<f64>,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    /// Precipitate of the previous step.
    pub w_prev: Vec<f64>,
    /// Porosity on bulk cells, aperture on fracture cells and intersections.
    pub pore: Vec<f64>,
}

impl FieldState {
    pub fn new(topo: &FluxTopology, theta: Vec<f64>, u: Vec<f64>, w: Vec<f64>, pore: Vec<f64>) -> Result<Self> {
        let n = topo.num_dofs();
        for (name, v) in [("theta", &theta), ("u", &u), ("w", &w), ("pore fraction", &pore)] {
            if v.len() != n {
                return Err(Error::Logic(format!("{name} has {} entries, expected {n}", v.len())));
            }
        }
        if let Some(x) = u.iter().chain(&w).find(|x| !(**x >= 0.0)) {
            return Err(Error::Config(format!("initial concentrations must be non-negative, got {x}")));
        }
        for (k, &f) in pore.iter().enumerate() {
            let ok = match topo.layout.subdomain_of(k) {
                Subdomain::Bulk => f > 0.0 && f <= 1.0,
                _ => f > 0.0 && f.is_finite(),
            };
            if !ok {
                return Err(Error::Config(format!("pore fraction {f} out of range at unknown {k}")));
            }
        }
        Ok(FieldState {
            p: vec![0.0; n],
            flux: vec![0.0; topo.faces.len()],
            theta,
            w_prev: w.clone(),
            u,
            w,
            pore,
        })
    }
}

/// Lower and upper clamp of the pore fraction of an unknown.
pub fn pore_bounds(topo: &FluxTopology, dof: usize) -> (f64, f64) {
    match topo.layout.subdomain_of(dof) {
        Subdomain::Bulk => (PHI_MIN, 1.0),
        _ => (EPS_MIN, f64::INFINITY),
    }
}

/// Deposition coefficient of an unknown.
pub fn deposition_coefficient(topo: &FluxTopology, params: &PhysParams, dof: usize) -> f64 {
    match topo.layout.subdomain_of(dof) {
        Subdomain::Bulk => params.eta_omega,
        Subdomain::Fracture(_) => params.eta_gamma,
        Subdomain::Intersection => params.eta_iota,
    }
}

/// Fracture and intersection unknowns at the aperture floor drop out of
/// every exchange. Bulk cells at the porosity floor keep their (tiny)
/// conductivities so the bulk systems stay solvable.
fn decoupled(topo: &FluxTopology, dof: usize, pore: f64) -> bool {
    topo.layout.subdomain_of(dof) != Subdomain::Bulk && pore <= pore_bounds(topo, dof).0
}

/// Fluid sources implied by a prescribed velocity field that is not
/// divergence free, with the composition of the injected fluid.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidSources {
    /// Net fluid outflow of every unknown; positive entries are injection.
    pub divergence: Vec<f64>,
    pub u: f64,
    pub theta: f64,
}

impl FluidSources {
    pub fn from_flux(topo: &FluxTopology, flux: &[f64], u: f64, theta: f64) -> Self {
        FluidSources { divergence: assemble_mixed_divergence(topo, flux), u, theta }
    }
}

/// Solution of one balance law together with its face fluxes and the
/// boundary exchange (rates, not integrated over the step).
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSolution {
    pub values: Vec<f64>,
    pub face_flux: Vec<f64>,
    pub influx: f64,
    pub outflux: f64,
}

/// `storage[i] * x[i] + dt * (sum of outgoing fluxes) = rhs[i]`.
struct Balance<'a> {
    topo: &'a FluxTopology,
    trans: &'a [f64],
    /// Darcy flux and the factor converting it into a flux of this quantity.
    advection: Option<(&'a [f64], f64)>,
    storage: Vec<f64>,
    rhs: Vec<f64>,
    bc: &'a [BoundaryCondition],
    sources: Option<(&'a [f64], f64)>,
    dt: f64,
}

impl Balance<'_> {
    fn solve(self) -> Result<BalanceSolution> {
        let topo = self.topo;
        let n = topo.num_dofs();
        let dt = self.dt;
        let mut triplets = Vec::with_capacity(n + 4 * topo.faces.len());
        let mut rhs = self.rhs.clone();
        let mut touched = vec![false; n];
        for i in 0..n {
            if self.storage[i] != 0.0 {
                triplets.push((i, i, self.storage[i]));
                touched[i] = true;
            }
        }
        let adv = |k: usize| self.advection.map_or(0.0, |(q, a)| a * q[k]);
        for (k, f) in topo.faces.iter().enumerate() {
            let t = self.trans[k];
            let q = adv(k);
            let i = f.inner;
            match f.outer {
                Some(o) => {
                    // flux = t (x_i - x_o) + q x_up
                    let (ci, co) = if q >= 0.0 { (t + q, -t) } else { (t, q - t) };
                    if ci != 0.0 || co != 0.0 {
                        triplets.push((i, i, dt * ci));
                        triplets.push((i, o, dt * co));
                        triplets.push((o, i, -dt * ci));
                        triplets.push((o, o, -dt * co));
                        touched[i] = true;
                        touched[o] = true;
                    }
                }
                None => {
                    let bc = self.bc[f.boundary_tag().expect("boundary face")];
                    match bc.kind {
                        BcKind::Essential => {
                            let ci = t + q.max(0.0);
                            let known = -t * bc.value + q.min(0.0) * bc.value;
                            if ci != 0.0 {
                                triplets.push((i, i, dt * ci));
                                touched[i] = true;
                            }
                            rhs[i] -= dt * known;
                        }
                        BcKind::Natural => {
                            if q > 0.0 {
                                triplets.push((i, i, dt * q));
                                touched[i] = true;
                            }
                            rhs[i] -= dt * bc.value * f.area;
                        }
                    }
                }
            }
        }
        if let Some((div, value)) = self.sources {
            let a = self.advection.map_or(1.0, |(_, a)| a);
            for i in 0..n {
                if div[i] > 0.0 {
                    rhs[i] += dt * a * div[i] * value;
                } else if div[i] < 0.0 {
                    triplets.push((i, i, -dt * a * div[i]));
                    touched[i] = true;
                }
            }
        }
        // unknowns cut off from everything (sealed cells) are pinned to zero
        for i in 0..n {
            if !touched[i] {
                triplets.push((i, i, 1.0));
                rhs[i] = 0.0;
            }
        }
        let matrix = assemble(&triplets, n)?;
        let values = solve(&matrix, &rhs, DEFAULT_TOLERANCE)?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite solution at unknown {k}")));
        }

        let mut face_flux = Vec::with_capacity(topo.faces.len());
        let (mut influx, mut outflux) = (0.0, 0.0);
        for (k, f) in topo.faces.iter().enumerate() {
            let t = self.trans[k];
            let q = adv(k);
            let xi = values[f.inner];
            let flux = match f.outer {
                Some(o) => {
                    let up = if q >= 0.0 { xi } else { values[o] };
                    t * (xi - values[o]) + q * up
                }
                None => {
                    let bc = self.bc[f.boundary_tag().expect("boundary face")];
                    let flux = match bc.kind {
                        BcKind::Essential => {
                            let up = if q >= 0.0 { xi } else { bc.value };
                            t * (xi - bc.value) + q * up
                        }
                        BcKind::Natural => bc.value * f.area + if q > 0.0 { q * xi } else { 0.0 },
                    };
                    if flux >= 0.0 {
                        outflux += flux;
                    } else {
                        influx -= flux;
                    }
                    flux
                }
            };
            face_flux.push(flux);
        }
        if let Some((div, value)) = self.sources {
            let a = self.advection.map_or(1.0, |(_, a)| a);
            for i in 0..n {
                if div[i] > 0.0 {
                    influx += a * div[i] * value;
                } else if div[i] < 0.0 {
                    outflux -= a * div[i] * values[i];
                }
            }
        }
        Ok(BalanceSolution { values, face_flux, influx, outflux })
    }
}

fn check_lengths(topo: &FluxTopology, state: &FieldState, pore_star: &[f64]) -> Result<()> {
    let n = topo.num_dofs();
    if pore_star.len() != n || state.pore.len() != n || state.u.len() != n || state.theta.len() != n {
        return Err(Error::Logic("field arrays do not match the mesh".into()));
    }
    if let Some(f) = pore_star.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::Logic(format!("pore fraction must be positive, got {f}")));
    }
    Ok(())
}

/// Flow coefficients from the predicted pore fractions.
pub fn flow_coefficients(topo: &FluxTopology, pore: &[f64], params: &PhysParams) -> Result<FaceCoefficients> {
    let n = topo.num_dofs();
    let mut tangential = vec![0.0; n];
    let mut normal = vec![0.0; n];
    for k in 0..n {
        if decoupled(topo, k, pore[k]) {
            continue;
        }
        match topo.layout.subdomain_of(k) {
            Subdomain::Bulk => tangential[k] = kozeny_permeability(pore[k], params)? / params.mu,
            Subdomain::Fracture(_) => {
                let eps = pore[k];
                tangential[k] = eps * cubic_law(eps, params.kgamma0, params.epsgamma0)? / params.mu;
                normal[k] = cubic_law(eps, params.kappagamma0, params.epsgamma0)? / (params.mu * eps);
            }
            Subdomain::Intersection => {
                let eps = pore[k];
                normal[k] = cubic_law(eps, params.kappaiota0, params.epsiota0)? / (params.mu * eps);
            }
        }
    }
    Ok(FaceCoefficients { tangential, normal })
}

/// Heat conduction coefficients from the predicted pore fractions.
pub fn heat_coefficients(topo: &FluxTopology, pore: &[f64], params: &PhysParams) -> Result<FaceCoefficients> {
    let n = topo.num_dofs();
    let mut tangential = vec![0.0; n];
    let mut normal = vec![0.0; n];
    for k in 0..n {
        match topo.layout.subdomain_of(k) {
            Subdomain::Bulk => tangential[k] = effective_conductivity(pore[k], params)?,
            _ if decoupled(topo, k, pore[k]) => {}
            Subdomain::Fracture(_) => {
                tangential[k] = pore[k] * params.lambda_w;
                normal[k] = params.lambda_w / pore[k];
            }
            Subdomain::Intersection => normal[k] = params.lambda_w / pore[k],
        }
    }
    Ok(FaceCoefficients { tangential, normal })
}

/// Solute diffusion coefficients from the predicted pore fractions.
pub fn solute_coefficients(topo: &FluxTopology, pore: &[f64], params: &PhysParams) -> FaceCoefficients {
    let n = topo.num_dofs();
    let mut tangential = vec![0.0; n];
    let mut normal = vec![0.0; n];
    for k in 0..n {
        if decoupled(topo, k, pore[k]) {
            continue;
        }
        match topo.layout.subdomain_of(k) {
            Subdomain::Bulk => tangential[k] = pore[k] * params.d,
            Subdomain::Fracture(_) => {
                tangential[k] = pore[k] * params.d_gamma;
                normal[k] = params.delta_gamma / pore[k];
            }
            // the intersection exchange reuses the fracture normal diffusivity
            Subdomain::Intersection => normal[k] = params.delta_gamma / pore[k],
        }
    }
    FaceCoefficients { tangential, normal }
}

/// Implicit flow step; returns cell pressures and Darcy fluxes.
pub fn darcy_step(
    topo: &FluxTopology,
    state: &FieldState,
    pore_star: &[f64],
    params: &PhysParams,
    bc: &BoundarySpec,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(topo, state, pore_star)?;
    if !bc.pressure.iter().any(|b| b.kind == BcKind::Essential) {
        return Err(Error::WellPosedness("flow needs at least one segment with given pressure".into()));
    }
    let coeff = flow_coefficients(topo, pore_star, params)?;
    let trans = transmissibilities(topo, &coeff);
    let n = topo.num_dofs();
    // the storage change acts as a volume source
    let rhs: Vec<f64> = (0..n)
        .map(|k| -(pore_star[k] - state.pore[k]) * topo.measure[k])
        .collect();
    let sol = Balance {
        topo,
        trans: &trans,
        advection: None,
        storage: vec![0.0; n],
        rhs,
        bc: &bc.pressure,
        sources: None,
        dt,
    }
    .solve()
    .map_err(|e| match e {
        Error::Singular { reason, residual } => Error::WellPosedness(format!(
            "flow system is singular ({reason}, residual {residual:e})"
        )),
        other => other,
    })?;
    Ok((sol.values, sol.face_flux))
}

/// Implicit heat step with upwind advection by `flux`.
#[allow(clippy::too_many_arguments)]
pub fn heat_step(
    topo: &FluxTopology,
    state: &FieldState,
    flux: &[f64],
    pore_star: &[f64],
    params: &PhysParams,
    bc: &BoundarySpec,
    dt: f64,
    sources: Option<&FluidSources>,
) -> Result<BalanceSolution> {
    check_lengths(topo, state, pore_star)?;
    let coeff = heat_coefficients(topo, pore_star, params)?;
    let trans = transmissibilities(topo, &coeff);
    let n = topo.num_dofs();
    let mut storage = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        let m = topo.measure[k];
        let (c_new, c_old) = match topo.layout.subdomain_of(k) {
            Subdomain::Bulk => (
                effective_heat_capacity(pore_star[k], params)?,
                effective_heat_capacity(state.pore[k], params)?,
            ),
            _ => (params.rhow_cw * pore_star[k], params.rhow_cw * state.pore[k]),
        };
        storage[k] = c_new * m;
        rhs[k] = c_old * m * state.theta[k];
    }
    Balance {
        topo,
        trans: &trans,
        advection: Some((flux, params.rhow_cw)),
        storage,
        rhs,
        bc: &bc.theta,
        sources: sources.map(|s| (s.divergence.as_slice(), s.theta)),
        dt,
    }
    .solve()
}

/// Implicit advection-diffusion step for the solute without reaction.
#[allow(clippy::too_many_arguments)]
pub fn solute_ad_step(
    topo: &FluxTopology,
    state: &FieldState,
    flux: &[f64],
    pore_star: &[f64],
    params: &PhysParams,
    bc: &BoundarySpec,
    dt: f64,
    sources: Option<&FluidSources>,
) -> Result<BalanceSolution> {
    check_lengths(topo, state, pore_star)?;
    let coeff = solute_coefficients(topo, pore_star, params);
    let trans = transmissibilities(topo, &coeff);
    let n = topo.num_dofs();
    let storage: Vec<f64> = (0..n).map(|k| pore_star[k] * topo.measure[k]).collect();
    let rhs: Vec<f64> = (0..n)
        .map(|k| state.pore[k] * topo.measure[k] * state.u[k])
        .collect();
    Balance {
        topo,
        trans: &trans,
        advection: Some((flux, 1.0)),
        storage,
        rhs,
        bc: &bc.solute,
        sources: sources.map(|s| (s.divergence.as_slice(), s.u)),
        dt,
    }
    .solve()
}

/// Implicit advection-diffusion-reaction step with the affine rate
/// `lambda[k] * (u / u_e - 1)` kept inside the matrix. Used as the unsplit
/// reference for splitting-error studies.
#[allow(clippy::too_many_arguments)]
pub fn solute_linear_reaction_step(
    topo: &FluxTopology,
    state: &FieldState,
    flux: &[f64],
    params: &PhysParams,
    bc: &BoundarySpec,
    dt: f64,
    sources: Option<&FluidSources>,
    lambda: &[f64],
    u_e: f64,
) -> Result<BalanceSolution> {
    check_lengths(topo, state, &state.pore)?;
    let coeff = solute_coefficients(topo, &state.pore, params);
    let trans = transmissibilities(topo, &coeff);
    let n = topo.num_dofs();
    let mut storage = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        let pv = state.pore[k] * topo.measure[k];
        storage[k] = pv * (1.0 + dt * lambda[k] / u_e);
        rhs[k] = pv * (state.u[k] + dt * lambda[k]);
    }
    Balance {
        topo,
        trans: &trans,
        advection: Some((flux, 1.0)),
        storage,
        rhs,
        bc: &bc.solute,
        sources: sources.map(|s| (s.divergence.as_slice(), s.u)),
        dt,
    }
    .solve()
}
