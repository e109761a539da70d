//! Chinese Voting Process.
//!
//! Helpfulness votes as a two-phase self-reinforcing process: a user picks a
//! response with a probability that decays with its display rank (or writes
//! a new one), then votes on it with log-odds shifted by the response's latent
//! quality and Pólya-urn ratio features of its previous votes.

pub mod coefficients;
pub mod evaluation;
pub mod params_io;
pub mod selection;
pub mod simulator;
pub mod trajectory;
pub mod voting;

pub use trajectory::{Dataset, ItemTrajectory, UrnConfig};
