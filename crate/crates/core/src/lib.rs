pub mod conic;
pub mod dd;
pub mod error;
pub mod lp;
pub mod numeric;
pub mod qp;
pub mod sets;
pub mod smooth;
pub mod system;
pub mod subderivative;
pub mod oracles;
pub mod gder;
pub mod optimality;
pub mod auglag;
pub mod problem;
pub mod commands;
