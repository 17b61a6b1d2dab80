#![no_main]

use libfuzzer_sys::fuzz_target;
use nfmlab::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text) {
        let again = RunConfig::parse(&cfg.to_text()).expect("resolved config reparses");
        assert_eq!(again, cfg);
    }
});
