//! Renders a layered synthetic light field and writes it to disk with its
//! ground-truth flow.
//!
//!     cargo run --release --example synth_scene -- /tmp/scene

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use lfsr::flow::write_flow;
use lfsr::io::{read_lightfield, write_lightfield, ImageFormat};
use lfsr::synth::{synth, Layer, Region, SyntheticScene};
use lfsr::{Dims, Result};

fn main() -> Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "scene".into()).into();
    let dims = Dims::new(9, 9, 96, 96);
    let scene = SyntheticScene::new(
        dims,
        vec![
            Layer::new(1, -0.5, Region::Full),
            Layer::new(2, 1.0, Region::Disk { cx: 48.0, cy: 48.0, r: 20.0 }),
        ],
    );
    let out = synth(&scene, 0)?;
    println!("occluded pixels per view: {:.2}%", 100.0 * out.occluded.fraction());
    println!("max |flow| {:.2} px", out.flow.max_abs());

    write_lightfield(&out.lf, &dir, 16, ImageFormat::Png)?;
    write_flow(&out.flow, BufWriter::new(File::create(dir.join("flows.bin"))?))?;
    let back = read_lightfield(&dir)?;
    let worst = back
        .views()
        .iter()
        .zip(out.lf.views())
        .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    println!("wrote {} views to {}, 16-bit round-trip error {worst:.2e}", back.n_views(), dir.display());
    Ok(())
}
