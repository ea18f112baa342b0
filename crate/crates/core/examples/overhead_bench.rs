//! Wall time and peak heap of parallel and sequential branch decoding.

use vlm_tts::cli::{bench_model, bench_overhead, overhead_csv, BenchModes, BenchSettings, PeakAlloc};

#[global_allocator]
static ALLOC: PeakAlloc = PeakAlloc;

fn main() -> vlm_tts::Result<()> {
    let g = bench_model(512, 16)?;
    let reports = bench_overhead(&g, &[1, 2, 4, 8, 16], BenchModes::Both, &BenchSettings::default())?;
    print!("{}", overhead_csv(&reports));
    Ok(())
}
