fn main() {
    // LAPACK symbols for the `lapack` bindings come from the system OpenBLAS.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
