//! Regenerates the shipped template bundle under `assets/`.

use gcgrasp_core::hand::procedural_template;

fn main() -> gcgrasp_core::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    procedural_template().save(dir.join("hand_template.obj"))
}
