//! Regenerates the checked-in fixture maps. Run from anywhere:
//!
//!     cargo run -p ffg --example regen_fixtures
//!
//! Output is deterministic; a clean regeneration leaves git quiet.

use std::path::PathBuf;

use ffg::fixtures::{example1, example2, random_bl};
use ffg::textio::emit_map;

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(&dir).expect("create fixtures dir");

    let files = [
        ("example1.map", emit_map(&example1(8).unwrap())),
        ("example2_m2.map", emit_map(&example2(2, 4).unwrap().u)),
        ("example2_m4.map", emit_map(&example2(4, 6).unwrap().u)),
        ("bl_n2_s1.map", emit_map(&random_bl(2, 6, 1))),
        ("bl_n3_s2.map", emit_map(&random_bl(3, 6, 2))),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, &text).expect("write fixture");
        println!("wrote {}", path.display());
    }
}
