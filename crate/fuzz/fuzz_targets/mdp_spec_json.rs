#![no_main]

use libfuzzer_sys::fuzz_target;
use relex::mdp::MdpSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<MdpSpec>(data) else {
        return;
    };
    if spec.validate().is_ok() && spec.num_pairs() * spec.horizon <= 4096 {
        let sol = spec.solve_optimal().unwrap();
        assert!(sol.gap_min > 0.0);
    }
});
