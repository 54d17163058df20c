//! Least-squares estimators: Lorentzian peaks and doublets, weighted
//! polynomials and the probe-detuning fit.

pub mod detuning;
pub mod lm;
pub mod poly;
pub mod spectral;

pub use detuning::{fit_detuning, DetuningFit, RatioPoint};
pub use poly::{fit_weighted_polynomial, LineFit, WeightedPoint};
pub use spectral::{fit_lorentzian, fit_sideband_doublet, DoubletFit, DoubletWindow, LorentzianFit};
