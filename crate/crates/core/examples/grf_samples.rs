//! Draws source functions from the squared-exponential Gaussian random
//! field and writes them as CSV columns on stdout.

use comfno::grf::GrfSampler;
use comfno::grids::uniform_mesh;

fn main() -> comfno::Result<()> {
    let mesh = uniform_mesh(200, 0.0, 1.0)?;
    let sampler = GrfSampler::new(&mesh.clone().into(), 1.0)?;
    let batch = sampler.sample_range(7, 0, 4);
    println!("x,f0,f1,f2,f3");
    for (k, x) in mesh.nodes().iter().enumerate() {
        let row: Vec<String> = batch.samples.iter().map(|s| format!("{:.6}", s[k])).collect();
        println!("{x},{}", row.join(","));
    }
    eprintln!("jitter used: {:e}", sampler.jitter());
    Ok(())
}
