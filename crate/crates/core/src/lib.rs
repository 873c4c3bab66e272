//! Simulation and analysis of coherent population oscillations in an open
//! two-level system driven by two detuned fields.

pub mod analytics;
pub mod dressed;
pub mod error;
pub mod fit;
pub mod harmonic;
pub mod lm;
pub mod master;
pub mod model;
pub mod ode;
pub mod scan;
pub mod spectrum;
pub mod trajectory;

pub use error::{Error, Result};
pub use master::{derivative, integrate_full, steady_state_full, trace_flux, DensityRate, DensityState};
pub use model::{lorentz, ParamsConfig, ReducedParams, SystemParams, SystemParamsBuilder};
pub use ode::{Dopri5, OdeOptions};
pub use trajectory::{period_average, ParamsSnapshot, Populations, SteadyState, SteadyStateOptions, Tier, Trajectory};
pub use analytics::{first_harmonic_solve, fluorescence_signal, resonance_shape, FirstHarmonic, ResonanceShape};
pub use dressed::{eigen_frame, steady_state_dressed, steady_state_reduced, DressedFrame, PopulationState};
pub use fit::{auto_initial_guess, fit_composite, Background, CompositeFit, FitOptions, Lorentzian, ModelSpec};
pub use harmonic::{auto_truncation, solve_harmonic_balance, HarmonicSolution};
pub use scan::{scan_delta, sweep_power, ScanOptions, SweepOptions, SweepRow};
pub use spectrum::{linspace, Spectrum, SpectrumSource};
