//! Truncated path signatures and their inversion for piecewise-linear paths.
//!
//! The crate has three layers:
//!
//! * an algebra layer — [`tensor_algebra`] implements the truncated free
//!   tensor algebra over `R^d` (words, dense coefficient levels, the Chen
//!   product, group inverse, dilation, segment exponentials), and
//!   [`signature_engine`] computes signatures of piecewise-linear paths,
//!   checks them against a quadrature oracle, and strips known last segments;
//! * a geometry layer — [`hyperbolic`] develops rescaled paths onto the
//!   hyperboloid by three independent routes (exact segment matrices, a
//!   series evaluated from the signature alone, and an ODE integrator) and
//!   exposes `(eta, rho)` coordinates of the endpoint;
//! * an inversion layer — [`inversion`] reconstructs paths from signatures:
//!   exactly for axis paths, and iteratively (estimate the last piece from
//!   the large-`lambda` behaviour of the development, strip it, repeat) for
//!   general piecewise-linear paths.
//!
//! Extended-precision arithmetic (needed because developments grow like
//! `e^{lambda L}` while the signals of interest shrink like `e^{-lambda l}`)
//! lives in [`numerics`], and path storage, generators and JSON interchange
//! in [`path_model`].

pub mod hyperbolic;
pub mod inversion;
pub mod numerics;
pub mod path_model;
pub mod signature_engine;
pub mod tensor_algebra;
