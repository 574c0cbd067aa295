//! One-dof needle/tissue/fixture contact physics.
//!
//! The tissue surface is a lumped mass on a spring-damper anchored at its rest
//! position. Depending on the contact phase the surface either relaxes freely,
//! is kinematically slaved to the needle tip, or is dragged viscously by a
//! needle that has pierced it. A forbidden-region fixture sits deeper along the
//! insertion axis and pushes back with a stiff one-sided spring.
//!
//! Coordinates grow with insertion depth. Forces are positive along +z.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TissueError {
    #[error("tissue state left the finite range (z_t = {surface_z}, v_t = {surface_v})")]
    NonFiniteState { surface_z: f64, surface_v: f64 },
}

/// Physical constants of the tissue and fixture, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueParams {
    /// Surface spring, N/m.
    pub tissue_stiffness: f64,
    /// Surface damper, N·s/m.
    pub tissue_damping: f64,
    /// Mass lumped at the contact point, kg.
    pub tissue_mass: f64,
    /// Viscous coupling between the pierced surface and the needle, N·s/m.
    pub subsurface_viscosity: f64,
    /// Fixture spring, N/m.
    pub fixture_stiffness: f64,
    /// Contact force magnitude at which the needle pierces the surface, N.
    pub penetration_threshold: f64,
    /// Rest position of the tissue surface, m.
    pub surface_rest: f64,
    /// Fixture position, m.
    pub fixture_depth: f64,
}

impl Default for TissueParams {
    fn default() -> Self {
        Self {
            tissue_stiffness: 2.0,
            tissue_damping: 5.0,
            tissue_mass: 1.0,
            subsurface_viscosity: 0.7,
            fixture_stiffness: 3000.0,
            penetration_threshold: 0.1,
            surface_rest: 0.020,
            fixture_depth: 0.123,
        }
    }
}

impl TissueParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("tissue_stiffness", self.tissue_stiffness),
            ("tissue_damping", self.tissue_damping),
            ("tissue_mass", self.tissue_mass),
            ("subsurface_viscosity", self.subsurface_viscosity),
            ("fixture_stiffness", self.fixture_stiffness),
            ("penetration_threshold", self.penetration_threshold),
            ("surface_rest", self.surface_rest),
            ("fixture_depth", self.fixture_depth),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and strictly positive"));
            }
        }
        if self.fixture_depth <= self.surface_rest {
            return Err(ConfigError::invalid(
                "fixture_depth",
                "must lie deeper than surface_rest",
            ));
        }
        Ok(())
    }

    /// Fixture-to-tissue stiffness ratio.
    pub fn stiffness_ratio(&self) -> f64 {
        self.fixture_stiffness / self.tissue_stiffness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactPhase {
    NoContact,
    ContactNoPenetration,
    Penetration,
}

impl ContactPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactPhase::NoContact => "no_contact",
            ContactPhase::ContactNoPenetration => "contact_no_penetration",
            ContactPhase::Penetration => "penetration",
        }
    }

    /// Whether `self -> next` is an edge of the phase machine (self-loops included).
    pub fn can_transition_to(self, next: ContactPhase) -> bool {
        use ContactPhase::*;
        matches!(
            (self, next),
            (NoContact, NoContact)
                | (NoContact, ContactNoPenetration)
                | (ContactNoPenetration, ContactNoPenetration)
                | (ContactNoPenetration, NoContact)
                | (ContactNoPenetration, Penetration)
                | (Penetration, Penetration)
                | (Penetration, NoContact)
        )
    }
}

impl std::str::FromStr for ContactPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_contact" => Ok(ContactPhase::NoContact),
            "contact_no_penetration" => Ok(ContactPhase::ContactNoPenetration),
            "penetration" => Ok(ContactPhase::Penetration),
            other => Err(format!("unknown contact phase `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueState {
    pub surface_z: f64,
    pub surface_v: f64,
    pub phase: ContactPhase,
    pub fixture_contact: bool,
}

impl TissueState {
    /// Surface at rest, nothing touching it.
    pub fn at_rest(params: &TissueParams) -> Self {
        Self {
            surface_z: params.surface_rest,
            surface_v: 0.0,
            phase: ContactPhase::NoContact,
            fixture_contact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeedleState {
    pub z: f64,
    pub v: f64,
}

/// Result of one tissue integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueStep {
    pub state: TissueState,
    /// Needle/tissue interaction force fed back to the operator, N.
    pub tissue_force: f64,
    /// Fixture force, N.
    pub fixture_force: f64,
}

impl TissueStep {
    pub fn total_force(&self) -> f64 {
        self.tissue_force + self.fixture_force
    }
}

/// Interaction force while the surface is held against the needle tip.
pub fn contact_force(surface_z: f64, surface_v: f64, params: &TissueParams) -> f64 {
    -params.tissue_stiffness * (surface_z - params.surface_rest) - params.tissue_damping * surface_v
}

/// Interaction force once the needle is inside the tissue.
pub fn penetration_force(surface_v: f64, needle_v: f64, params: &TissueParams) -> f64 {
    -params.subsurface_viscosity * (surface_v - needle_v)
}

/// One-sided fixture spring: zero until the needle reaches the fixture.
pub fn fixture_force(needle_z: f64, params: &TissueParams) -> f64 {
    if needle_z >= params.fixture_depth {
        -params.fixture_stiffness * (needle_z - params.fixture_depth)
    } else {
        0.0
    }
}

/// Needle excursion beyond the fixture surface, never negative.
pub fn fixture_penetration(needle_z: f64, fixture_depth: f64) -> f64 {
    (needle_z - fixture_depth).max(0.0)
}

/// Next contact phase for a tissue `state` and the current needle.
///
/// In contact the surface is slaved to the needle, so the decision uses the
/// force the slaved surface would produce: a tensile (positive) force releases
/// the surface, a compressive one larger than the threshold pierces it.
pub fn classify_phase(state: &TissueState, needle: &NeedleState, params: &TissueParams) -> ContactPhase {
    match state.phase {
        ContactPhase::NoContact => {
            if needle.z >= state.surface_z {
                ContactPhase::ContactNoPenetration
            } else {
                ContactPhase::NoContact
            }
        }
        ContactPhase::ContactNoPenetration => {
            let force = contact_force(needle.z, needle.v, params);
            if force > 0.0 {
                ContactPhase::NoContact
            } else if force.abs() > params.penetration_threshold {
                ContactPhase::Penetration
            } else {
                ContactPhase::ContactNoPenetration
            }
        }
        ContactPhase::Penetration => {
            if needle.z < state.surface_z {
                ContactPhase::NoContact
            } else {
                ContactPhase::Penetration
            }
        }
    }
}

/// Surface acceleration; `drag` is `Some(needle_v)` while pierced.
fn surface_accel(z: f64, v: f64, drag: Option<f64>, params: &TissueParams) -> f64 {
    let mut force = -params.tissue_stiffness * (z - params.surface_rest) - params.tissue_damping * v;
    if let Some(needle_v) = drag {
        force -= params.subsurface_viscosity * (v - needle_v);
    }
    force / params.tissue_mass
}

fn rk4(z: f64, v: f64, drag: Option<f64>, params: &TissueParams, dt: f64) -> (f64, f64) {
    let a1 = surface_accel(z, v, drag, params);
    let (z2, v2) = (z + 0.5 * dt * v, v + 0.5 * dt * a1);
    let a2 = surface_accel(z2, v2, drag, params);
    let (z3, v3) = (z + 0.5 * dt * v2, v + 0.5 * dt * a2);
    let a3 = surface_accel(z3, v3, drag, params);
    let (z4, v4) = (z + dt * v3, v + dt * a3);
    let a4 = surface_accel(z4, v4, drag, params);
    (
        z + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
        v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
    )
}

/// Advances the tissue one step with the dynamics of the current phase, then
/// re-classifies the phase against the new state.
///
/// The needle velocity is held constant across the step.
pub fn step(
    state: &TissueState,
    needle: &NeedleState,
    params: &TissueParams,
    dt: f64,
) -> Result<TissueStep, TissueError> {
    debug_assert!(dt > 0.0);
    let (mut surface_z, mut surface_v, tissue_force) = match state.phase {
        ContactPhase::NoContact => {
            let (z, v) = rk4(state.surface_z, state.surface_v, None, params, dt);
            (z, v, 0.0)
        }
        ContactPhase::ContactNoPenetration => {
            let force = contact_force(needle.z, needle.v, params);
            (needle.z, needle.v, force)
        }
        ContactPhase::Penetration => {
            let (z, v) = rk4(state.surface_z, state.surface_v, Some(needle.v), params, dt);
            (z, v, penetration_force(v, needle.v, params))
        }
    };
    if !(surface_z.is_finite() && surface_v.is_finite()) {
        return Err(TissueError::NonFiniteState { surface_z, surface_v });
    }

    let integrated = TissueState {
        surface_z,
        surface_v,
        phase: state.phase,
        fixture_contact: false,
    };
    let phase = classify_phase(&integrated, needle, params);
    if state.phase == ContactPhase::NoContact && phase == ContactPhase::ContactNoPenetration {
        surface_z = needle.z;
        surface_v = needle.v;
    }

    Ok(TissueStep {
        state: TissueState {
            surface_z,
            surface_v,
            phase,
            fixture_contact: needle.z >= params.fixture_depth,
        },
        tissue_force,
        fixture_force: fixture_force(needle.z, params),
    })
}
