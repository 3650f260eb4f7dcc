//! Ground states of attractive two-dimensional Bose gases in a rotating
//! quadratic-plus-quartic trap, and the tools to check their blow-up
//! asymptotics as the coupling approaches the critical value `a*`.

pub mod error;
pub mod expansion;
pub mod gpe;
pub mod grid;
pub mod kv;
pub mod rescale;
pub mod sweep;
pub mod townes;
pub mod vortex;

pub use error::{Error, Result};
pub use grid::{ComplexField2D, Grid2D, C64};
pub use gpe::{EnergyBreakdown, MinimizeOptions, MinimizerResult, TrapSpec};
pub use rescale::BlowupRecord;
pub use townes::{RadialProfile, Townes, TownesConstants};
