//! Selection gain and the token-level versus answer-level crossover.

use vlm_tts::theory::{self, SelectionModel};

fn main() -> vlm_tts::Result<()> {
    for n in [1, 2, 4, 16, 64] {
        let mc = theory::mc_k_n(n, 200_000, 0);
        println!("k_{n:<3} quadrature {:.5}   simulated {:.5} ± {:.5}", theory::k_n(n), mc.mean, mc.std_error);
    }
    let model = SelectionModel {
        mu_q: 0.5,
        mu_s: 0.0,
        sigma_q: 0.2,
        sigma_s: 1.0,
        rho: 0.6,
        n: 16,
    };
    println!("expected selected quality {:.4}", theory::expected_selected_quality(&model)?);

    let t = theory::theorem_check(0.8, 0.125, 4, 1.0, 30)?;
    println!("token-level selection wins from T = {t}");
    for len in [1, t - 1, t, 30] {
        let p = theory::chain_point(0.8, 0.125, 4, 1.0, len)?;
        println!("  T={len:<2} token {:.6}  answer {:.6}", p.p_token, p.p_answer);
    }
    Ok(())
}
