//! Laboratory for linear wave equations whose propagation speed stays uniformly
//! hyperbolic but loses its modulus of regularity at a single instant.
//!
//! The object of study is the one-parameter family of Fourier modes of
//!
//! ```text
//!     u_tt - sum_{i,j} a_ij(t) d_i d_j u = 0,      0 < t <= T,
//! ```
//!
//! where the symmetric coefficient matrix `a_ij(t)` is continuous away from
//! `t = 0` and satisfies, for a modulus of continuity `mu` and a blow-up rate
//! `nu`,
//!
//! ```text
//!     |a(t + tau, xi) - a(t, xi)| <= C * mu(tau) / nu(t).
//! ```
//!
//! The crate provides the full experimental pipeline for that setting:
//!
//! * [`moduli`]: moduli of continuity, blow-up rates, and the scale functions
//!   that generate matched pairs of them, with validation of concavity,
//!   monotonicity, and doubling properties.
//! * [`coefficients`]: coefficient fields, their normalized symbols,
//!   hyperbolicity checks, empirical regularity certificates, and the bundled
//!   singular test families.
//! * [`mollify`]: compactly supported kernels, the clamped extension of a
//!   field past its time domain, convolution values and derivatives by
//!   certified quadrature, and the two-sided approximation bounds the energy
//!   argument consumes.
//! * [`energy`]: the mode integrator, approximate energies, the growth
//!   integrand and its time integral, and closed-form exponent models.
//! * [`analysis`]: growth-law fitting, spectral decay profiles, and the final
//!   classification verdicts.
//! * [`experiment`]: the configuration format, the deterministic sweep
//!   pipeline, and table emission; the `modewell` binary is a thin veneer over
//!   this module.
//!
//! Numerical building blocks (adaptive and oscillation-aware quadrature, an
//! embedded Runge-Kutta pair) live in [`quad`] and [`ode`].
//!
//! # Scalar genericity
//!
//! Every numerical type is generic over the scalar through the [`Real`]
//! trait. `f64` is the working precision of the shipped binaries and tests;
//! `f32` instantiates and is exercised by a smoke test, but the certified
//! tolerances quoted throughout the documentation assume `f64`. Concrete
//! aliases for the common types sit at the crate root
//! ([`ModulusSpec64`], [`CoefficientField64`], ...).

pub mod error;
pub mod quad;

pub mod moduli;

pub mod coefficients;

pub mod mollify;

pub mod ode;

pub mod energy;

pub mod analysis;

pub mod experiment;

pub use error::{Error, Result};

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the whole laboratory is generic over.
///
/// The bound set is the intersection of what the numerics actually use:
/// IEEE-style arithmetic with transcendentals (`Float`), the mathematical
/// constants (`FloatConst`), conversions for literal coefficients
/// (`FromPrimitive`/`ToPrimitive`), and thread-safety so sweeps can fan out
/// across a pool.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + std::fmt::LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar.
///
/// Panics only when the scalar type cannot represent ordinary finite
/// literals, which no `Float` implementation of interest does.
#[inline]
pub fn cst<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("floating literal must convert into the scalar type")
}

/// `f64` aliases for the main public types.
pub type ModulusSpec64 = moduli::ModulusSpec<f64>;
pub type BlowupSpec64 = moduli::BlowupSpec<f64>;
pub type PsiSpec64 = moduli::PsiSpec<f64>;
pub type CoefficientField64 = coefficients::CoefficientField<f64>;
pub type MollifierKernel64 = mollify::MollifierKernel<f64>;
pub type MollifiedCoefficient64<'a> = mollify::MollifiedCoefficient<'a, f64>;
pub type EnergyTrace64 = energy::EnergyTrace<f64>;
pub type ExponentModel64 = energy::ExponentModel<f64>;
pub type GrowthFit64 = analysis::GrowthFit<f64>;
pub type DecayProfile64 = analysis::DecayProfile<f64>;

/// `f32` aliases; the API instantiates at single precision, the quoted
/// tolerances do not.
pub type ModulusSpec32 = moduli::ModulusSpec<f32>;
pub type BlowupSpec32 = moduli::BlowupSpec<f32>;
pub type PsiSpec32 = moduli::PsiSpec<f32>;
pub type CoefficientField32 = coefficients::CoefficientField<f32>;
pub type MollifierKernel32 = mollify::MollifierKernel<f32>;
pub type EnergyTrace32 = energy::EnergyTrace<f32>;
