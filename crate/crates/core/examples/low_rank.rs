//! Rank-k approximation of the view matrix before and after alignment, the
//! choice of independent views and the weights that rebuild the others.

use lfsr::flow::align;
use lfsr::lowrank::{lra, RankKModel};
use lfsr::synth::{synth, SyntheticScene};
use lfsr::{Dims, Result};

fn main() -> Result<()> {
    let out = synth(&SyntheticScene::random(Dims::new(9, 9, 64, 64), 2, (1.0, 1.5), 3), 0)?;
    let raw = out.lf.to_matrix();
    let aligned = align(&out.lf, &out.flow)?.to_matrix();

    println!("  k   RMSE raw   RMSE aligned");
    for k in [1, 2, 4, 8, 12, 16, 20] {
        println!("{k:3}   {:.5}    {:.5}", lra(&raw, k)?.rmse(), lra(&aligned, k)?.rmse());
    }

    let model = RankKModel::fit(&aligned, 4)?;
    println!("independent views (0-based): {:?}", model.indep_idx);
    let rebuilt = model.recombine(&model.embedding())?;
    println!(
        "recombining the untouched embedding reproduces the matrix to {:.1e}",
        (rebuilt.data - aligned.data).amax()
    );
    Ok(())
}
