fn main() {
    // zgeev_/zgemm_ come from the system OpenBLAS (which bundles LAPACK).
    println!("cargo:rustc-link-lib=dylib=openblas");
}
