fn main() {
    // The PSD cone in the conic solver needs BLAS/LAPACK; link the system OpenBLAS.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
