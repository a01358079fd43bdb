//! Writes a small synthetic dataset (annotations plus LMK1 video streams).
//!
//! ```text
//! cargo run --example synth_dataset -- <root> [classes] [trials_per_video]
//! ```

use std::path::PathBuf;

use signseq::synth::{write_dataset, SynthSpec};

fn main() -> signseq::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let classes = args.next().and_then(|v| v.parse().ok()).unwrap_or(5);
    let trials = args.next().and_then(|v| v.parse().ok()).unwrap_or(3);
    let spec = SynthSpec {
        trials_per_video: trials,
        ..SynthSpec::tiny(classes)
    };
    write_dataset(&spec, &root)?;
    println!(
        "{} trials written under {}",
        spec.trial_count(),
        root.display()
    );
    Ok(())
}
