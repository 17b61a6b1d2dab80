#![no_main]

use libfuzzer_sys::fuzz_target;
use nfmlab::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let bytes = ckpt.encode();
        assert_eq!(Checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes"), ckpt);
        let _ = nfmlab::models::teacher_from_checkpoint(&ckpt, std::path::Path::new("fuzz"));
        let _ = nfmlab::models::student_from_checkpoint(&ckpt, std::path::Path::new("fuzz"));
    }
});
