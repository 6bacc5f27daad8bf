pub mod oracles;
pub mod corridor;
