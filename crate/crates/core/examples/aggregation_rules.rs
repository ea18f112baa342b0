//! The four per-step rules on one step matrix.

use vlm_tts::decoder::aggregate::entropy_weights;
use vlm_tts::decoder::{
    aggregate_average, aggregate_entropy_weighted, aggregate_majority, aggregate_most_confident, StepMatrix,
};

fn main() -> vlm_tts::Result<()> {
    let m = StepMatrix::from_probs(vec![
        vec![0.50, 0.45, 0.05],
        vec![0.20, 0.75, 0.05],
        vec![0.40, 0.35, 0.25],
    ])?;
    println!("average            {:?}", aggregate_average(&m)?.probs());
    println!("entropy weights    {:?}", entropy_weights(&m));
    println!("entropy-weighted   {:?}", aggregate_entropy_weighted(&m)?.probs());
    println!("majority vote      token {}", aggregate_majority(&m));
    println!("most confident     token {}", aggregate_most_confident(&m));
    Ok(())
}
