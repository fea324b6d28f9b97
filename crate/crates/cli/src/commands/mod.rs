pub mod eval;
pub mod extract;
pub mod gradcheck;
pub mod plotdata;
pub mod synth;
pub mod train;
