//! Evaluates a freshly initialised FNO and ComFNO on the same inputs. The
//! block's dense output starts at zero, so its bias is set to one here to
//! show the untrained exponential profile the block adds near x = 1.

use comfno::grids::{uniform_mesh, Grid};
use comfno::neuralop::{assemble_inputs, init_params, ComFnoConfig, FnoConfig, LayerBlockSpec, Model, ModelConfig, Spatial};

fn main() -> comfno::Result<()> {
    let n = 201;
    let grid: Grid = uniform_mesh(n - 1, 0.0, 1.0)?.into();
    let base = FnoConfig {
        width: 16,
        modes: 8,
        depth: 2,
        in_channels: 2,
        out_channels: 1,
        proj_hidden: 32,
    };
    let com = ModelConfig::Comfno(ComFnoConfig {
        base: base.clone(),
        blocks: vec![LayerBlockSpec {
            x0: 1.0,
            axis: 0,
            extra: FnoConfig {
                in_channels: 4,
                width: 8,
                proj_hidden: 16,
                ..base.clone()
            },
            dense_hidden: vec![16],
            xi_cap: 20.0,
        }],
        eps_as_input: false,
    });
    let sp = Spatial::of(&grid);
    let mut params = init_params(&com, sp, 1)?;
    params.insert("block0.dense1.b".into(), comfno::autodiff::Tensor::new(vec![1], vec![1.0])?);
    let f = vec![(0..n).map(|i| (i as f64 / 40.0).sin()).collect::<Vec<_>>()];
    let x = assemble_inputs(&com, &grid, &f, &[1e-3])?;
    let with_block = Model::new(com.clone(), sp)?.forward(&params, &x)?;
    let plain = ModelConfig::Fno {
        net: base,
        eps_as_input: false,
    };
    let without = Model::new(plain.clone(), sp)?.forward(&params, &assemble_inputs(&plain, &grid, &f, &[1e-3])?)?;
    for k in [0, 100, 190, 198, 199, 200] {
        println!(
            "x = {:.3}: FNO_0 {:+.4}, block term {:+.4}",
            k as f64 / 200.0,
            without.real()[k],
            with_block.real()[k] - without.real()[k]
        );
    }
    Ok(())
}
