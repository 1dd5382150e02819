//! Dimensional ocean-basin parameters and their nondimensional reduction.
//!
//! The solver itself works entirely in nondimensional variables. This module
//! maps a physical description of a wind-driven basin (wind stress, density,
//! depth, planetary vorticity gradient, basin width, eddy viscosity) onto the
//! two numbers the equations actually see: the Rossby number and the Reynolds
//! number. The characteristic velocity is the Sverdrup balance velocity
//! U = tau_0 / (rho * H * beta * L), which then fixes the advective time
//! scale L / U and the streamfunction scale U * L used to dimensionalize
//! output fields.

use crate::error::QgeError;

/// Dimensional description of a single-layer wind-driven basin.
///
/// All fields use SI units. `coriolis_f0` (the reference Coriolis frequency)
/// does not enter the reduced numbers below; it is carried so that a
/// dimensional configuration stays complete enough for extensions that need
/// it, such as deriving a Rossby deformation radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParameters {
    /// Wind stress amplitude tau_0 [N m^-2].
    pub wind_stress: f64,
    /// Mean water density rho [kg m^-3].
    pub density: f64,
    /// Layer depth H [m].
    pub depth: f64,
    /// Meridional gradient of planetary vorticity beta [m^-1 s^-1].
    pub beta: f64,
    /// Basin width L [m], also the length scale of the nondimensionalization.
    pub basin_width: f64,
    /// Lateral eddy viscosity A [m^2 s^-1].
    pub eddy_viscosity: f64,
    /// Reference Coriolis frequency f_0 [s^-1].
    pub coriolis_f0: f64,
}

/// Scales produced by [`PhysicalParameters::nondimensionalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimensionalParameters {
    /// Characteristic velocity U = tau_0 / (rho * H * beta * L) [m s^-1].
    pub velocity_scale: f64,
    /// Rossby number Ro = U / (beta * L^2).
    pub rossby: f64,
    /// Reynolds number Re = U * L / A.
    pub reynolds: f64,
    /// Advective time scale L / U [s].
    pub time_scale: f64,
    /// Streamfunction scale U * L [m^2 s^-1].
    pub streamfunction_scale: f64,
}

impl PhysicalParameters {
    /// Checks that every field is strictly positive.
    pub fn validate(&self) -> Result<(), QgeError> {
        let fields = [
            ("wind_stress", self.wind_stress),
            ("density", self.density),
            ("depth", self.depth),
            ("beta", self.beta),
            ("basin_width", self.basin_width),
            ("eddy_viscosity", self.eddy_viscosity),
            ("coriolis_f0", self.coriolis_f0),
        ];
        for (name, value) in fields {
            if !(value > 0.0) {
                return Err(QgeError::InvalidConfig(format!(
                    "physical parameter {name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Reduces the dimensional description to Rossby and Reynolds numbers.
    pub fn nondimensionalize(&self) -> Result<NondimensionalParameters, QgeError> {
        self.validate()?;
        let u = self.wind_stress / (self.density * self.depth * self.beta * self.basin_width);
        let rossby = u / (self.beta * self.basin_width * self.basin_width);
        let reynolds = u * self.basin_width / self.eddy_viscosity;
        Ok(NondimensionalParameters {
            velocity_scale: u,
            rossby,
            reynolds,
            time_scale: self.basin_width / u,
            streamfunction_scale: u * self.basin_width,
        })
    }
}
