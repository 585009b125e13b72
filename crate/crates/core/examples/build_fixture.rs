//! Regenerates the replay fixture under `tests/fixtures/`:
//! `cargo run -p lazylint-core --example build_fixture`.

#[path = "../tests/support/fixture.rs"]
mod fixture;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use lazylint_core::corpus::LabelRegistry;
use lazylint_core::gateway::{FnBackend, Gateway, RecordingBackend};

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    fs::create_dir_all(&dir)?;
    let registry = LabelRegistry::shipped();
    let detector = fixture::train_detector(&registry);
    let recorder = Arc::new(RecordingBackend::new(FnBackend::new(fixture::script)));
    let gateway = Gateway::new(recorder.clone(), 4);
    let result = fixture::run(&gateway, &detector);

    fs::write(dir.join("review.json"), serde_json::to_string_pretty(&fixture::review_input())? + "\n")?;
    fs::write(dir.join("detector.json"), detector.to_json() + "\n")?;
    fs::write(dir.join("replay.json"), recorder.to_replay_json() + "\n")?;
    fs::write(dir.join("golden.json"), result.to_json() + "\n")?;
    println!(
        "wrote {} replay entries, {} segments, {} feedback entries",
        recorder.recorded().len(),
        result.segments.len(),
        result.feedback.len()
    );
    Ok(())
}
