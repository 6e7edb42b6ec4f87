pub mod expert;
pub mod features;
pub mod gridworld;
pub mod harness;
pub mod imitation;
pub mod numnet;
pub mod policy;
pub mod selfexp;
