//! Steady 2D Euler vortices on bounded domains.
//!
//! The toolkit maximizes the penalized kinetic-energy functional
//! E(omega) - (1/eps^2) int F(eps^2 omega) over truncated admissible
//! vorticity classes, recovers the semilinear stream-function relation
//! omega = f(G omega - mu)/eps^2, and measures how the solutions
//! concentrate: multiplier and energy log-laws, support shrinkage toward
//! Robin/Kirchhoff-Routh minima, and convergence of the rescaled core to
//! the radial free-boundary profile.
//!
//! Modules follow the pipeline: [`domain`] (masked grids and the Green
//! operator), [`profiles`] (the nonlinearity f and the limiting radial
//! profile), [`landscape`] (Robin/Kirchhoff-Routh evaluation and
//! minimization), [`solver`] (the variational fixed point),
//! [`pointvortex`] (the Hamiltonian point-vortex model), [`asymptotics`]
//! (epsilon sweeps and law fits), and [`cli`] (subcommands and artifact
//! formats).

pub mod asymptotics;
pub mod cli;
pub mod domain;
pub mod geom;
pub mod landscape;
pub mod pointvortex;
pub mod profiles;
pub mod solver;

mod output;
mod poisson;

pub use geom::Point;
