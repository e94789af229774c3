use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polar_core::encoder::{cosine, fnv1a64, Encoder, EncoderConfig, EncoderMode};

fn random_text(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz      _-";
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect()
}

#[test]
fn fnv1a_matches_published_vectors() {
    assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
}

#[test]
fn appending_text_keeps_cosine_non_negative() {
    let enc = Encoder::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut non_negative = 0;
    for _ in 0..1000 {
        let base = random_text(&mut rng, 3, 60);
        let tail = random_text(&mut rng, 1, 60);
        let a = enc.encode(&base).unwrap();
        let b = enc.encode(&format!("{base}{tail}")).unwrap();
        if cosine(&a, &b).unwrap() >= 0.0 {
            non_negative += 1;
        }
    }
    assert!(non_negative >= 990, "only {non_negative} of 1000 pairs non-negative");
}

#[test]
fn remote_config_is_validated() {
    let bad = EncoderConfig {
        mode: EncoderMode::Remote {
            endpoint: String::new(),
            timeout_ms: 10,
        },
        ..EncoderConfig::default()
    };
    assert!(Encoder::new(bad).is_err());
    let tiny = EncoderConfig {
        dimension: 4,
        ..EncoderConfig::default()
    };
    assert!(Encoder::new(tiny).is_err());
}

proptest! {
    #[test]
    fn non_empty_text_encodes_to_unit_norm(text in "\\PC{1,80}") {
        let e = Encoder::builtin().encode(&text).unwrap();
        prop_assert_eq!(e.dimension(), 256);
        prop_assert!((e.norm() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn encoding_is_bitwise_deterministic(text in "\\PC{0,80}") {
        let a = Encoder::builtin().encode(&text).unwrap();
        let b = Encoder::builtin().encode_batch(&[text.as_str()]).unwrap().remove(0);
        let bits = |e: &polar_core::encoder::Embedding| e.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn cosine_is_symmetric_with_unit_self_similarity(a in "[a-z ]{1,40}", b in "[a-z ]{1,40}") {
        let enc = Encoder::builtin();
        let (x, y) = (enc.encode(&a).unwrap(), enc.encode(&b).unwrap());
        prop_assert_eq!(cosine(&x, &y).unwrap(), cosine(&y, &x).unwrap());
        prop_assert!((cosine(&x, &x).unwrap() - 1.0).abs() <= 1e-9);
        prop_assert!(cosine(&x, &y).unwrap().abs() <= 1.0);
    }
}

#[test]
fn empty_text_is_the_zero_vector() {
    assert!(Encoder::builtin().encode("").unwrap().is_zero());
}
