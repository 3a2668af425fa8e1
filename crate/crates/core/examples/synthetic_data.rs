//! Generate synthetic rain sequences, cut them into filtered training
//! windows and write a dataset container.
//!
//! cargo run --example synthetic_data -- /tmp/synthetic

use nowcast::data::{
    downsample, generate_synthetic_sequence, window_dataset, Dataset, Sequence, Split,
    SyntheticConfig, WindowSpec, DEFAULT_RAIN_THRESHOLD,
};

fn main() -> nowcast::Result<()> {
    let spec = WindowSpec {
        n_inputs: 5,
        n_targets: 10,
        stride: 3,
    };
    let mut kept = 0;
    for seed in 0..5 {
        let native = generate_synthetic_sequence(&SyntheticConfig {
            seed,
            length: 90,
            ..SyntheticConfig::default()
        })?;
        // 5 min / 1 km native grid to 15 min / 2 km.
        let thinned = native.thin(3)?;
        let frames = thinned
            .frames
            .iter()
            .map(|f| downsample(f, 2))
            .collect::<nowcast::Result<Vec<_>>>()?;
        let seq = Sequence::new(frames, thinned.timestep_min)?;
        let samples = window_dataset(&seq, &spec, DEFAULT_RAIN_THRESHOLD)?;
        let peak = seq
            .frames
            .iter()
            .flat_map(|f| f.rates().unwrap().iter().copied())
            .fold(0.0, f64::max);
        println!(
            "sequence {seed}: {} frames of {:?}, peak {peak:.1} mm/h, {} of {} windows kept",
            seq.len(),
            seq.frames[0].dims(),
            samples.len(),
            spec.starts(seq.len()).len()
        );
        kept += samples.len();
    }
    println!("{kept} samples");

    // The same pipeline behind `nowcast gen-data`, written to disk.
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nowcast-synthetic"));
    let mut cfg = nowcast::config::RunConfig::desk();
    cfg.data.sequences = 20;
    let cfg = cfg.resolve()?;
    let ds = nowcast::cli::cmd_gen_data(&cfg, &out, true)?;
    println!(
        "wrote {} sequences to {}: {} train / {} test samples",
        ds.manifest.sequences.len(),
        out.join("data").display(),
        ds.samples(Split::Train)?.len(),
        ds.samples(Split::Test)?.len()
    );
    let reopened = Dataset::open(out.join("data"))?;
    assert_eq!(reopened.manifest, ds.manifest);
    Ok(())
}
