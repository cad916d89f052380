//! Physical channel parameters and the derived one-step probabilities.
//!
//! A voxel random walk with reversible surface binding is parameterized by a
//! diffusion coefficient, voxel spacing, time step, and first-order binding
//! kinetics. Each sampling interval a molecule hops to a neighboring voxel
//! with probability `p_diff = D*dt/dx^2`, binds from a receiver-adjacent
//! voxel with probability `p_bind = k_on*c_p*dt`, and unbinds with
//! probability `p_unbind = k_off*dt`.

use crate::error::{Error, Result};

/// Physical parameters of the voxelized diffusion/binding channel.
///
/// Units: `d` in um^2/s, `dx` in um, `dt` in s, `k_on` in 1/(M*s),
/// `k_off` in 1/s, `c_p` in M. `n_free` is the number of free-diffusion
/// states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Diffusion coefficient (um^2/s).
    pub d: f64,
    /// Voxel spacing (um).
    pub dx: f64,
    /// Sampling interval (s).
    pub dt: f64,
    /// Number of free states.
    pub n_free: usize,
    /// Binding rate (1/(M*s)).
    pub k_on: f64,
    /// Unbinding rate (1/s).
    pub k_off: f64,
    /// Probe concentration (M).
    pub c_p: f64,
}

impl ChannelParams {
    /// Benchtop microarray defaults: D = 150 um^2/s, dx = 50 nm,
    /// dt = 8.25 us, 100 free states, k_on = 6e8 1/(M*s), k_off = 3 1/s,
    /// c_p = 1 uM.
    pub fn default_microarray() -> Self {
        ChannelParams {
            d: 150.0,
            dx: 0.05,
            dt: 8.25e-6,
            n_free: 100,
            k_on: 6e8,
            k_off: 3.0,
            c_p: 1e-6,
        }
    }

    /// Dissociation constant `K_D = k_off/k_on` (M).
    pub fn dissociation_constant(&self) -> f64 {
        self.k_off / self.k_on
    }

    /// Checks that spacings are positive, rates nonnegative, and all values
    /// finite. Rate constants may be zero here; ergodicity-requiring
    /// constructions reject zero kinetics separately.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("D", self.d),
            ("dx", self.dx),
            ("dt", self.dt),
            ("k_on", self.k_on),
            ("k_off", self.k_off),
            ("c_p", self.c_p),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Stability(format!(
                    "parameter {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if self.dx == 0.0 || self.dt == 0.0 {
            return Err(Error::Stability("dx and dt must be positive".into()));
        }
        if self.n_free < 1 {
            return Err(Error::Stability("n_free must be at least 1".into()));
        }
        Ok(())
    }

    /// Returns a copy with rescaled kinetics: `k_off` replaced and `k_on`
    /// chosen so the dissociation constant equals `k_d`.
    pub fn with_kinetics(&self, k_off: f64, k_d: f64) -> Self {
        ChannelParams {
            k_off,
            k_on: k_off / k_d,
            ..self.clone()
        }
    }
}

/// One-step transition probabilities derived from [`ChannelParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProbs {
    /// Per-step hop probability to one neighboring voxel.
    pub p_diff: f64,
    /// Per-step binding probability from a receiver-adjacent voxel.
    pub p_bind: f64,
    /// Per-step unbinding probability.
    pub p_unbind: f64,
}

impl StepProbs {
    /// Builds step probabilities directly; each must lie in [0,1].
    pub fn new(p_diff: f64, p_bind: f64, p_unbind: f64) -> Result<Self> {
        for (name, p) in [
            ("p_diff", p_diff),
            ("p_bind", p_bind),
            ("p_unbind", p_unbind),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Stability(format!(
                    "{name} = {p} outside [0,1]"
                )));
            }
        }
        Ok(StepProbs {
            p_diff,
            p_bind,
            p_unbind,
        })
    }
}

/// Derives `(p_diff, p_bind, p_unbind) = (D*dt/dx^2, k_on*c_p*dt, k_off*dt)`.
///
/// Fails with a stability error if any probability leaves [0,1].
pub fn derive_step_probabilities(params: &ChannelParams) -> Result<StepProbs> {
    params.validate()?;
    let p_diff = params.d * params.dt / (params.dx * params.dx);
    let p_bind = params.k_on * params.c_p * params.dt;
    let p_unbind = params.k_off * params.dt;
    StepProbs::new(p_diff, p_bind, p_unbind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_step_probabilities() {
        let sp = derive_step_probabilities(&ChannelParams::default_microarray()).unwrap();
        assert_relative_eq!(sp.p_diff, 0.495, max_relative = 1e-12);
        assert_relative_eq!(sp.p_bind, 4.95e-3, max_relative = 1e-12);
        assert_relative_eq!(sp.p_unbind, 2.475e-5, max_relative = 1e-12);
    }

    #[test]
    fn zero_diffusion_gives_zero_hop_probability() {
        let params = ChannelParams {
            d: 0.0,
            ..ChannelParams::default_microarray()
        };
        let sp = derive_step_probabilities(&params).unwrap();
        assert_eq!(sp.p_diff, 0.0);
    }

    #[test]
    fn zero_probe_concentration_gives_zero_binding() {
        let params = ChannelParams {
            c_p: 0.0,
            ..ChannelParams::default_microarray()
        };
        let sp = derive_step_probabilities(&params).unwrap();
        assert_eq!(sp.p_bind, 0.0);
    }

    #[test]
    fn oversized_time_step_is_rejected() {
        let params = ChannelParams {
            dt: 1.0,
            ..ChannelParams::default_microarray()
        };
        assert!(matches!(
            derive_step_probabilities(&params),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn dissociation_constant_matches_rate_ratio() {
        let params = ChannelParams::default_microarray();
        assert_relative_eq!(params.dissociation_constant(), 5e-9, max_relative = 1e-15);
    }
}
