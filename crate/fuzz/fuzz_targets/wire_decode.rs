#![no_main]
use std::sync::OnceLock;

use fgf_core::model::{nsa_model, ProtocolModel};
use fgf_core::sim::{decode, encode, BitString};
use libfuzzer_sys::fuzz_target;

fn model() -> &'static ProtocolModel {
    static M: OnceLock<ProtocolModel> = OnceLock::new();
    M.get_or_init(nsa_model)
}

// First byte picks the command, the second perturbs the bit length, the
// rest is the payload.
fuzz_target!(|data: &[u8]| {
    let [pick, skew, payload @ ..] = data else { return };
    let m = model();
    let cmd = &m.commands[*pick as usize % m.commands.len()];
    let len = (cmd.declared_length + u32::from(*skew % 3)).saturating_sub(1);
    if payload.len() * 8 < len as usize {
        return;
    }
    let bits = BitString::from_bytes(payload, len);
    if let Ok(values) = decode(m, &bits, &cmd.name) {
        let msg = encode(m, &cmd.name, &values).expect("decoded values re-encode");
        assert_eq!(msg.bits, bits);
    }
});
