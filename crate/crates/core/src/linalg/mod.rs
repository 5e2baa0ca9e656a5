pub mod dense;
pub mod tridiag;

pub use dense::{
    cholesky, cholesky_solve, jacobi_eigen, lu_solve, solve_lower, solve_lower_transpose, Mat, Scalar,
    SymEigen,
};
pub use tridiag::{SpdTridiagFactor, SymTridiag};
