//! Arbitrary text through the experiment config loader, validation included.
#![no_main]

use hedgefee_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_toml(s) {
            let _ = cfg.hash();
        }
    }
});
