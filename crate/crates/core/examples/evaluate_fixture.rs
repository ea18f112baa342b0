//! Baseline against TTAug on the bundled 20-question toy benchmark.

use std::path::Path;

use vlm_tts::cli::{run_eval, Method, RunConfig};

fn main() -> vlm_tts::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for file in ["baseline_run.json", "ttaug_run.json"] {
        let mut cfg = RunConfig::load(&fixtures.join(file))?;
        if cfg.method == Method::Baseline {
            cfg.output_dir = cfg.output_dir.with_extension("baseline");
        }
        let report = run_eval(&cfg)?;
        println!("{:<9} mean {:.2}", report.method, report.mean_score);
    }
    Ok(())
}
