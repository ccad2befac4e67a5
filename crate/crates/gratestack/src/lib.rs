//! Photonic mode gates from stacked volume Bragg gratings.
//!
//! A single photon carries a qudit in its transverse linear momentum: the
//! computational basis is a fan of N plane waves on a cone around the optic
//! axis (the "signal" modes), and each grating in a stack of thick
//! transmission holograms redirects one signal mode into one mode of a
//! second, steeper "reference" cone. Choosing which pairs get recorded, and
//! in which order the beam traverses them, realises permutation gates such
//! as CNOT entirely in passive glass.
//!
//! The crate is organised along the physical pipeline:
//!
//! * [`lm_basis`] - plane-wave cone bases and transverse-profile overlaps.
//! * [`grating`] - two-wave recording geometry and coupled-mode response of
//!   one volume grating (efficiency, angular detuning, selectivity).
//! * [`stack`] - mode-space operators, recipe synthesis for target
//!   permutations, composition and verification.
//! * [`tomography`] - intensity truth tables of a stack under an
//!   imperfection model, plus calibration fits against measured tables.
//! * [`recipe`] - the plain-text recipe file format.
//! * [`cli`] - the `gratestack` command-line front end.
//!
//! [`presets`] bundles the parameters of the reference experiment (532 nm,
//! 1.64 mm PTR glass, two grating pairs with 88% / 93% diffraction
//! efficiency) so the published CNOT stack can be reproduced directly.

pub mod cli;
pub mod grating;
pub mod lm_basis;
pub mod presets;
pub mod recipe;
pub mod stack;
pub mod tomography;
