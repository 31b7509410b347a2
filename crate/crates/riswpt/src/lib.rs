//! Joint UAV trajectory, hover/flight time and RIS phase-shift optimization
//! for wireless power transfer to ground sensors.
//!
//! The crate covers two broadcast protocols: fly-hover-broadcast, where the
//! UAV only radiates while hovering, and path discretization, where it
//! radiates continuously along a discretized path. Both are driven by an
//! alternating scheme that tunes the RIS phases with an accelerated
//! minorization-maximization step and the trajectory/time variables with a
//! successive convex approximation step solved as a cone program.

pub mod channel;
pub mod cone;
pub mod orchestrate;
pub mod phase_opt;
pub mod power;
pub mod sca;
pub mod scenario;
