//! Builds the git mirror that the bundled NVD and OSS-Fuzz fixtures refer to.
//!
//! ```text
//! cargo run -p pbc-core --features testkit --example build_fixture_mirror -- /tmp/mirror
//! ```

use std::path::PathBuf;

use pbc_core::testkit::{build_nvd_mirror, build_ossfuzz_mirror};

fn main() {
    let Some(root) = std::env::args().nth(1).map(PathBuf::from) else {
        eprintln!("usage: build_fixture_mirror DIR");
        std::process::exit(2);
    };
    let mirror = build_nvd_mirror(&root);
    let (ffmpeg, minicalc) = build_ossfuzz_mirror(&root);
    println!("taglib fix          {}", mirror.taglib_fix);
    println!("taglib second fix   {}", mirror.taglib_second_fix);
    for (i, sha) in mirror.webkit_fixes.iter().enumerate() {
        println!("webkit-lite fix {}   {sha}", i + 1);
    }
    println!("ffmpeg repo         {}", ffmpeg.display());
    println!("minicalc repo       {}", minicalc.display());
}
