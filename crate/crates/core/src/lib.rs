pub mod acceptance;
pub mod data_gen;
pub mod envs;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod mdp;
pub mod reward;
pub mod rng;
pub mod soft_rl;
pub mod static_choice;
pub mod train;
