//! End to end at toy scale: generate a small dataset, train FNO and ComFNO
//! briefly and print the residual table.

use comfno::experiment::{preset_config, run_experiment, ExperimentId, Preset, RunPaths, Stage};
use comfno::metrics::format_table;

fn main() -> comfno::Result<()> {
    let mut cfg = preset_config(Preset::Desk, ExperimentId::Plain1d)?;
    cfg.data.train_functions = 40;
    cfg.data.test_functions = 20;
    for t in [&mut cfg.train.fno, &mut cfg.train.comfno] {
        t.epochs = 10;
    }
    let dir = std::env::temp_dir().join("comfno-train-small");
    let reports = run_experiment(&cfg, &RunPaths::new(&dir), Stage::All)?;
    print!("{}", format_table(&reports));
    println!("artifacts in {}", dir.display());
    Ok(())
}
