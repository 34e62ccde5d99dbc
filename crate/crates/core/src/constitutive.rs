//! Algebraic constitutive laws: permeability from porosity and aperture,
//! pore-fraction updates driven by precipitate changes, effective thermal
//! properties of the saturated medium, and the nondimensional groups.

use crate::error::{Error, Result};

/// Lower clamp for bulk porosity after every update.
pub const PHI_MIN: f64 = 1e-6;
/// Lower clamp for fracture and intersection apertures, in metres.
pub const EPS_MIN: f64 = 1e-12;

/// Physical constants and constitutive coefficients (SI units).
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Water viscosity [Pa s].
    pub mu: f64,
    /// Reference bulk permeability [m^2] at porosity `phi0`.
    pub k0: f64,
    pub phi0: f64,
    /// Fracture tangential reference permeability [m^2].
    pub kgamma0: f64,
    /// Fracture normal reference permeability [m^2].
    pub kappagamma0: f64,
    /// Initial (reference) fracture aperture [m].
    pub epsgamma0: f64,
    /// Reference permeability between a fracture tip and an intersection [m^2].
    pub kappaiota0: f64,
    /// Initial intersection measure.
    pub epsiota0: f64,
    /// Deposition coefficients; may be zero to freeze the pore fraction.
    pub eta_omega: f64,
    pub eta_gamma: f64,
    pub eta_iota: f64,
    /// Volumetric heat capacities [J/m^3/K].
    pub rhow_cw: f64,
    pub rhos_cs: f64,
    /// Thermal conductivities [W/m/K].
    pub lambda_w: f64,
    pub lambda_s: f64,
    /// Bulk solute diffusivity [m^2/s].
    pub d: f64,
    /// Fracture tangential diffusivity [m^2/s].
    pub d_gamma: f64,
    /// Fracture normal diffusivity [m^2/s], also used at intersections.
    pub delta_gamma: f64,
}

impl PhysParams {
    /// Common data of the fractured examples.
    pub fn reference() -> Self {
        Self {
            mu: 1.0,
            k0: 1.0,
            phi0: 0.2,
            kgamma0: 1e2,
            kappagamma0: 1e2,
            epsgamma0: 1e-2,
            kappaiota0: 1e2,
            epsiota0: 1e-2,
            eta_omega: 0.5,
            eta_gamma: 2.0,
            eta_iota: 2.0,
            rhow_cw: 1.0,
            rhos_cs: 1.0,
            lambda_w: 1.0,
            lambda_s: 1e-1,
            d: 1.0,
            d_gamma: 1e-1,
            delta_gamma: 1e-1,
        }
    }

    /// Checks positivity and ranges; returns the first offending field name.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = [
            ("mu", self.mu),
            ("k0", self.k0),
            ("kgamma0", self.kgamma0),
            ("kappagamma0", self.kappagamma0),
            ("epsgamma0", self.epsgamma0),
            ("kappaiota0", self.kappaiota0),
            ("epsiota0", self.epsiota0),
            ("rhow_cw", self.rhow_cw),
            ("rhos_cs", self.rhos_cs),
            ("lambda_w", self.lambda_w),
            ("lambda_s", self.lambda_s),
            ("d", self.d),
            ("d_gamma", self.d_gamma),
            ("delta_gamma", self.delta_gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, format!("must be strictly positive, got {v}")));
            }
        }
        for (name, v) in [
            ("eta_omega", self.eta_omega),
            ("eta_gamma", self.eta_gamma),
            ("eta_iota", self.eta_iota),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.phi0 > 0.0 && self.phi0 <= 1.0) {
            return Err(("phi0", format!("must lie in (0, 1], got {}", self.phi0)));
        }
        Ok(())
    }
}

fn check_unit_interval(phi: f64, what: &'static str) -> Result<()> {
    if (0.0..=1.0).contains(&phi) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: phi,
            constraint: "porosity must lie in [0, 1]",
        })
    }
}

/// Kozeny-type law `k0 * phi^2 / phi0^2`.
pub fn kozeny_permeability(phi: f64, params: &PhysParams) -> Result<f64> {
    check_unit_interval(phi, "kozeny_permeability")?;
    Ok(params.k0 * phi * phi / (params.phi0 * params.phi0))
}

/// Cubic law for fracture permeabilities, `ref_k * eps^2 / ref_eps^2`.
///
/// Used for the tangential and normal fracture permeabilities and for the
/// tip-to-intersection permeability alike.
pub fn cubic_law(eps: f64, ref_k: f64, ref_eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::Domain {
            what: "cubic_law",
            value: eps,
            constraint: "aperture must be non-negative",
        });
    }
    if !(ref_eps > 0.0) {
        return Err(Error::Domain {
            what: "cubic_law",
            value: ref_eps,
            constraint: "reference aperture must be positive",
        });
    }
    Ok(ref_k * eps * eps / (ref_eps * ref_eps))
}

/// Implicit update of a porosity or aperture after a precipitate change `dw`:
/// `prev / (1 + eta * dw)`.
pub fn update_pore_fraction(prev: f64, dw: f64, eta: f64) -> Result<f64> {
    let denominator = 1.0 + eta * dw;
    if !(denominator > 0.0) || !denominator.is_finite() {
        return Err(Error::SingularUpdate { denominator });
    }
    Ok(prev / denominator)
}

/// `phi * rho_w c_w + (1 - phi) * rho_s c_s`.
pub fn effective_heat_capacity(phi: f64, params: &PhysParams) -> Result<f64> {
    check_unit_interval(phi, "effective_heat_capacity")?;
    Ok(phi * params.rhow_cw + (1.0 - phi) * params.rhos_cs)
}

/// Geometric mean `lambda_w^phi * lambda_s^(1 - phi)`.
pub fn effective_conductivity(phi: f64, params: &PhysParams) -> Result<f64> {
    check_unit_interval(phi, "effective_conductivity")?;
    Ok(params.lambda_w.powf(phi) * params.lambda_s.powf(1.0 - phi))
}

/// `L * Q * phi0 / D`.
pub fn reynolds_number(length: f64, velocity: f64, phi0: f64, diffusivity: f64) -> f64 {
    length * velocity * phi0 / diffusivity
}

/// `L * lambda * phi0 / Q`; large values mean reaction outpaces advection.
pub fn damkohler_number(length: f64, rate: f64, phi0: f64, velocity: f64) -> f64 {
    length * rate * phi0 / velocity
}

/// Clamps a pore fraction into `[floor, ceil]`. Returns the clamped value and
/// whether clamping was active.
pub fn clamp_pore_fraction(value: f64, floor: f64, ceil: f64) -> (f64, bool) {
    if value < floor {
        (floor, true)
    } else if value > ceil {
        (ceil, true)
    } else {
        (value, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_params() -> PhysParams {
        PhysParams {
            k0: 1.0,
            phi0: 0.2,
            ..PhysParams::reference()
        }
    }

    #[test]
    fn kozeny_examples() {
        let p = unit_params();
        assert_eq!(kozeny_permeability(0.2, &p).unwrap(), 1.0);
        assert_eq!(kozeny_permeability(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(kozeny_permeability(0.1, &p).unwrap(), 0.25, max_relative = 1e-15);
        assert!(matches!(
            kozeny_permeability(1.2, &p),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn cubic_law_examples() {
        assert_eq!(cubic_law(1e-2, 100.0, 1e-2).unwrap(), 100.0);
        assert_eq!(cubic_law(0.0, 100.0, 1e-2).unwrap(), 0.0);
        assert_relative_eq!(cubic_law(5e-3, 100.0, 1e-2).unwrap(), 25.0, max_relative = 1e-15);
        assert!(cubic_law(-1e-3, 100.0, 1e-2).is_err());
    }

    #[test]
    fn pore_fraction_update_examples() {
        assert_eq!(update_pore_fraction(0.2, 0.0, 0.5).unwrap(), 0.2);
        assert_relative_eq!(
            update_pore_fraction(0.2, 1.0, 0.5).unwrap(),
            0.2 / 1.5,
            max_relative = 1e-15
        );
        assert!(matches!(
            update_pore_fraction(1e-2, -0.5, 2.0),
            Err(Error::SingularUpdate { .. })
        ));
    }

    #[test]
    fn heat_capacity_examples() {
        let mut p = unit_params();
        assert_eq!(effective_heat_capacity(0.37, &p).unwrap(), 1.0);
        p.rhos_cs = 3.0;
        assert_eq!(effective_heat_capacity(0.0, &p).unwrap(), 3.0);
        p.rhow_cw = 2.0;
        p.rhos_cs = 1.0;
        assert_eq!(effective_heat_capacity(0.5, &p).unwrap(), 1.5);
        assert!(effective_heat_capacity(-0.1, &p).is_err());
    }

    #[test]
    fn conductivity_examples() {
        let p = unit_params();
        assert_eq!(effective_conductivity(1.0, &p).unwrap(), p.lambda_w);
        assert_eq!(effective_conductivity(0.0, &p).unwrap(), p.lambda_s);
        assert_relative_eq!(
            effective_conductivity(0.5, &p).unwrap(),
            0.1f64.sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(effective_conductivity(0.5, &p).unwrap(), 0.316228, max_relative = 1e-6);
    }

    #[test]
    fn reynolds_examples() {
        assert_eq!(reynolds_number(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_relative_eq!(reynolds_number(1.0, 1e-8, 0.2, 1e-9), 2.0, max_relative = 1e-14);
        assert_eq!(
            reynolds_number(2.0, 0.3, 0.2, 0.7),
            2.0 * reynolds_number(1.0, 0.3, 0.2, 0.7)
        );
    }

    #[test]
    fn damkohler_examples() {
        assert_eq!(damkohler_number(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(
            damkohler_number(1.0, 3.31, 0.2, 0.5),
            2.0 * damkohler_number(1.0, 3.31, 0.2, 1.0)
        );
        // tenfold velocity sweep; values truncated to three decimals as in the
        // figure captions of the point-source experiments
        let das: Vec<f64> = [100.0, 10.0, 1.0, 0.1]
            .iter()
            .map(|&q| damkohler_number(1.0, 3.31, 0.2, q))
            .collect();
        let truncated: Vec<f64> = das.iter().map(|d| (d * 1000.0 + 1e-9).floor() / 1000.0).collect();
        assert_eq!(truncated, vec![0.006, 0.066, 0.662, 6.62]);
    }

    proptest! {
        #[test]
        fn laws_are_monotone_and_vanish_at_zero(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = unit_params();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(kozeny_permeability(lo, &p).unwrap() <= kozeny_permeability(hi, &p).unwrap());
            prop_assert!(cubic_law(lo, 100.0, 1e-2).unwrap() <= cubic_law(hi, 100.0, 1e-2).unwrap());
            prop_assert_eq!(kozeny_permeability(0.0, &p).unwrap(), 0.0);
            prop_assert_eq!(cubic_law(0.0, 100.0, 1e-2).unwrap(), 0.0);
        }

        #[test]
        fn update_is_algebraic_inverse(x in 1e-8f64..1.0, dw in -0.9f64..10.0, eta in 0.0f64..1.0) {
            let y = update_pore_fraction(x, dw, eta).unwrap();
            prop_assert!(y > 0.0);
            let back = y * (1.0 + eta * dw);
            prop_assert!((back - x).abs() <= 4.0 * f64::EPSILON * x);
        }

        #[test]
        fn conductivity_is_bracketed(phi in 0.0f64..=1.0, lw in 1e-3f64..1e3, ls in 1e-3f64..1e3) {
            let p = PhysParams { lambda_w: lw, lambda_s: ls, ..unit_params() };
            let l = effective_conductivity(phi, &p).unwrap();
            let tol = 1e-12 * lw.max(ls);
            prop_assert!(l >= lw.min(ls) - tol && l <= lw.max(ls) + tol);
        }
    }
}
