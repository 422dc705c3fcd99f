pub mod oracles;
pub mod scripted;
