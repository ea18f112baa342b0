//! Serves the toy model over TCP and decodes through a remote client.

use std::net::TcpListener;
use std::path::Path;

use vlm_tts::decoder::ttaug_generate;
use vlm_tts::generator::remote::serve_tcp;
use vlm_tts::generator::{text::detokenize, Generator, RemoteConfig, RemoteGenerator, ToyModel};
use vlm_tts::inputs::build_inputs;
use vlm_tts::types::GenerationConfig;

fn main() -> vlm_tts::Result<()> {
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy_model.json");
    let model = ToyModel::from_spec_file(&spec)?;
    let vocab_path = std::env::temp_dir().join("vlm-tts-vocab.json");
    std::fs::write(&vocab_path, serde_json::to_string(model.vocab())?)?;

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let endpoint = format!("tcp://{}", listener.local_addr()?);
    let server = std::thread::spawn(move || serve_tcp(&model, &listener, 1));

    let remote = RemoteGenerator::connect(&RemoteConfig {
        endpoint,
        vocab_path,
        eos: "<eos>".into(),
        num_layers: 4,
        hidden_states: true,
        context_limit: 4096,
    })?;
    let cfg = GenerationConfig {
        n_aug: 4,
        max_tokens: 4,
        ..Default::default()
    };
    let inputs = build_inputs("q04", "What vehicle is parked by the curb? Answer with one word.", None, &cfg, None, 1)?;
    let t = ttaug_generate(&remote, &inputs, &cfg)?;
    println!("remote answer: {}", detokenize(remote.vocab(), &t.tokens, remote.eos_token()));
    drop(remote);
    server.join().expect("server thread")?;
    Ok(())
}
