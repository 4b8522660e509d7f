#![no_main]

use damformer::checkpoint;
use damformer::params::ParamStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    if let Ok(entries) = checkpoint::decode(bytes) {
        let mut store = ParamStore::<f32>::new();
        for (name, value) in &entries {
            store.add(name.clone(), value.clone());
        }
        let again = checkpoint::encode(&store);
        assert_eq!(checkpoint::decode(&again).expect("re-encoded checkpoint decodes").len(), entries.len());
    }
});
