//! Multi-hop receiver-receiver clock synchronization for infrastructure Wi-Fi.
//!
//! Stations timestamp beacons from every AP they hear; master stations
//! broadcast those timestamps in Follow_Up (FUP) messages; slaves pair them
//! with their own log on (AP, TSF) and discipline their clock. Stations that
//! hear several APs act as boundary clocks, so time spreads across overlapping
//! BSSs, and a quality-ordered election picks the grandmaster.
//!
//! - [`wire`]: identities, clock-quality descriptors, FUP codec.
//! - [`timebase`]: simulated oscillators and offset/rate discipline.
//! - [`engine`]: the sans-IO per-station state machine.
//! - [`simnet`]: deterministic discrete-event simulator of an ESS.
//! - [`analysis`]: trace analytics and CSV export.
//! - [`cli`]: the `domino` command-line front end.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod simnet;
pub mod timebase;
pub mod wire;
