//! Seal a synthetic dataset, open it again, and show that a flipped byte is rejected.
//!
//! cargo run --example vault_roundtrip [bundle.glds.enc]
//! With a path, decrypts that file with the key in GLLA_KEY and prints its bundle lines.

use glla::model::serialize;
use glla::synthgen::{generate, CohortSpec};
use glla::vault::{open_dataset, seal_dataset, VaultKey, DEFAULT_KEY_ENV};

fn main() {
    if let Some(path) = std::env::args().nth(1) {
        let key = VaultKey::from_env(DEFAULT_KEY_ENV).expect("key");
        let ds = open_dataset(&std::fs::read(path).expect("readable"), &key).expect("opens");
        print!("{}", String::from_utf8(serialize(&ds).unwrap()).unwrap());
        return;
    }

    let (ds, _) = generate(&CohortSpec { teams: 1, days: 5, ..CohortSpec::reference(1) });
    let key = VaultKey::from_slice(&[42; 32]).unwrap();
    let sealed = seal_dataset(&ds, &key).unwrap();
    println!("sealed {} bytes (plaintext {})", sealed.len(), serialize(&ds).unwrap().len());

    let opened = open_dataset(&sealed, &key).unwrap();
    assert_eq!(opened, ds);
    println!("round trip ok, content hash {}", opened.manifest.content_hash);

    let mut tampered = sealed.clone();
    tampered[sealed.len() / 2] ^= 0x01;
    println!("tampered: {}", open_dataset(&tampered, &key).unwrap_err());
    let other = VaultKey::from_slice(&[7; 32]).unwrap();
    println!("wrong key: {}", open_dataset(&sealed, &other).unwrap_err());
}
