fn main() {
    // LAPACK symbols for lapack-sys come from the system OpenBLAS build.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
