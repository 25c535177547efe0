#![no_main]

use libfuzzer_sys::fuzz_target;
use relex::cli::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json(text) {
        for alg in &config.algorithms {
            let _ = config.run_config(*alg, 0);
        }
    }
});
