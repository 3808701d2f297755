//! Fits the pristine NIQE model from a directory of PNG images.
//!
//!     cargo run --release -p pixelplan --example fit_niqe -- <dir> <out.json>
//!
//! Every image is used together with its mirror image so the fitted model
//! treats left/right orientation symmetrically.

use std::path::PathBuf;

use pixelplan::imagecore::load_image;
use pixelplan::metrics::fit_niqe_model;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 2 {
        eprintln!("usage: fit_niqe <pristine-dir> <out.json>");
        std::process::exit(1);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args[0])
        .expect("read pristine dir")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in &paths {
        let img = load_image(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        images.push(img.flip_horizontal());
        images.push(img);
    }
    let model = fit_niqe_model(&images, 96, 0.75).expect("fit");
    std::fs::write(&args[1], model.to_json() + "\n").expect("write model");
    eprintln!("fitted on {} images ({} with mirrors)", paths.len(), images.len());
}
