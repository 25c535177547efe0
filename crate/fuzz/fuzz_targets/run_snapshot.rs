#![no_main]

use libfuzzer_sys::fuzz_target;
use relex::harness::RunSnapshot;
use relex::learner::LearnerState;

fuzz_target!(|data: &[u8]| {
    let Ok(snapshot) = serde_json::from_slice::<RunSnapshot>(data) else {
        return;
    };
    if let Some(learner) = &snapshot.learner {
        let _ = LearnerState::restore(learner);
    }
});
