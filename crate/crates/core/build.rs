fn main() {
    // Test binaries link against libtorch; embed an rpath so they run without
    // LD_LIBRARY_PATH gymnastics. LIBTORCH is the standard tch-rs location
    // variable (see README for setup).
    println!("cargo:rerun-if-env-changed=LIBTORCH");
    if let Ok(libtorch) = std::env::var("LIBTORCH") {
        println!("cargo:rustc-link-arg=-Wl,-rpath,{libtorch}/lib");
    }
}
