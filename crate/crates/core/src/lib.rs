pub mod autodiff;
pub mod expr;
pub mod io;
pub mod model;
pub mod pde_zoo;
pub mod solvers;
pub mod train_eval;
