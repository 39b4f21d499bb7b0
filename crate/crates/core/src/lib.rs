//! Verification toolkit for the heterogeneous Helmholtz equation
//! `div(A grad u) + k^2 n u = -f`.
//!
//! The crate checks nontrapping conditions on the coefficient pair `(A, n)`,
//! evaluates the explicit stability constants of the associated a priori
//! bounds, solves the impedance-truncated boundary-value problem with P1
//! finite elements, verifies the Morawetz-type integral identities to machine
//! precision, and classifies coefficient profiles as trapping or nontrapping
//! by integrating the geometric-optics ray system.
//!
//! The crate is `no_std` (with `alloc`); all file IO, configuration, and
//! parallel orchestration live in the companion `helmbound` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod coeff;
pub mod consts;
pub mod fem;
pub mod geom;
pub mod la;
pub mod morawetz;
pub mod quad;
pub mod rand;
pub mod rays;
pub mod sparse;

/// Complex double, the scalar type of the discrete Helmholtz systems.
pub type C64 = num_complex::Complex<f64>;

/// Shorthand constructor for [`C64`].
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
