pub mod coefficients;
pub mod ensemble;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod propagator;
pub mod reference;

// The guide's chapters run as doctests; the CLI chapter lives with the CLI crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    mod coefficients {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
}
