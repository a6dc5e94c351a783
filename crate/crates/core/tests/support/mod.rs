pub mod adjoint;
pub mod gradcheck;
pub mod mnist;
