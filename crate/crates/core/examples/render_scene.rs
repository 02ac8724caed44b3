//! Renders the canonical scene (or the n-th generated scene) to a PNG.
//!
//!     cargo run --example render_scene -- out.png [scene-index]

use mirrorsim::assets::AssetPool;
use mirrorsim::generate::{canonical_scene, generate_scenes, SamplingPlan};
use mirrorsim::render::{render_frame, RenderConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "scene.png".into());
    let spec = match args.next() {
        Some(i) => {
            let scenes = generate_scenes(&AssetPool::default(), &SamplingPlan::default(), 0)
                .expect("generate");
            scenes[i.parse::<usize>().expect("index")].clone()
        }
        None => canonical_scene(),
    };
    let frame = render_frame(&spec, spec.hand_init, &RenderConfig::default()).expect("render");
    std::fs::write(&out, frame.encode_png()).expect("write");
    println!("{} -> {out}", spec.scene_id);
}
