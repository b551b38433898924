//! Exact desk-scale calculus for noncommutative maximal operators: decreasing
//! rearrangements of step functions and of operators in weighted matrix
//! algebras, Calderon operators, weak-type witness generators, and certified
//! majorant constructions, together with an experiment harness.
//!
//! The crate is organized in five modules:
//!
//! * [`stepfn`] — nonincreasing step functions on `[0, inf)`, the
//!   Hardy-Littlewood operator, submajorization, Calderon operators and
//!   function-space norms (Lp / Lorentz / Orlicz).
//! * [`tracial`] — weighted direct sums of Hermitian matrix blocks with a
//!   trace: spectral calculus, projections, operator order, rearrangements.
//! * [`nets`] — finite maximal nets (conditional-expectation towers,
//!   pinchings) with weak-type witness generators, including the Cuculescu
//!   recursion.
//! * [`majorant`] — interpolation constants and the projection-ladder
//!   majorant constructions, with every inequality certified numerically.
//! * [`harness`] — random instance generation, verification campaigns,
//!   sweeps and deterministic CSV/JSON emission.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values; the
// un-negated comparison would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod majorant;
pub mod nets;
pub mod stepfn;
pub mod tracial;

pub use error::{Error, Result, Tolerance};

/// Serde helper for exponents that may be infinite; `inf` is accepted and
/// emitted as the JSON string `"inf"`.
pub mod exponent {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" || s == "Inf" || s == "infinity" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(de::Error::custom(format!("invalid exponent: {s:?}"))),
        }
    }
}
