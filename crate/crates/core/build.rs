fn main() {
    // Sparse direct factorization backend (system SuiteSparse).
    println!("cargo:rustc-link-lib=dylib=umfpack");
}
