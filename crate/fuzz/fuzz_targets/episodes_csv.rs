#![no_main]

use libfuzzer_sys::fuzz_target;
use relex::cli::artifacts::parse_episodes_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_episodes_csv(text) {
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.episode, i + 1);
        }
    }
});
